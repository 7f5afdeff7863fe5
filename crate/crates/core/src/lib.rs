pub mod dsp;
pub mod pipeline;
pub mod radar;
pub mod rng;
pub mod scene;
pub mod sync;
pub mod vitals;
