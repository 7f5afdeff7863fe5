//! Experiment harness: configuration, frame files, ground truth, single runs
//! and the scripted studies behind the `vitalsim` CLI.

pub mod commands;
pub mod config;
pub mod frames;
pub mod run;
pub mod scenario;
pub mod study;
pub mod truth;
