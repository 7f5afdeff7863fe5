//! Ground-truth physiology and kinematics.
//!
//! Subjects carry a [`ChestModel`] (respiration plus heartbeat displacement)
//! and a piecewise-linear [`Trajectory`]. The torso is reduced to four facet
//! scatterers so that radars looking from different sides see different
//! fractions of the chest motion. Obstacles are attenuating wall segments.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Radius of the torso facet ring, meters.
pub const TORSO_RADIUS_M: f64 = 0.15;
/// Fraction of the chest displacement seen by each facet: front, back, left, right.
pub const FACET_COUPLING: [f64; 4] = [1.0, 0.6, 0.3, 0.3];
/// Fraction of a heartbeat period occupied by the raised-cosine pulse.
pub const HEART_PULSE_DUTY: f64 = 0.3;
/// Per-cycle period jitter is clamped to this many standard deviations.
const JITTER_CLAMP: f64 = 2.5;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("scene has no subjects")]
    NoSubjects,
    #[error("subject {subject}: {reason}")]
    Chest { subject: usize, reason: String },
    #[error("subject {subject}: trajectory {reason}")]
    Trajectory { subject: usize, reason: String },
    #[error("obstacle {0}: attenuation must be non-negative")]
    Obstacle(usize),
    #[error("room dimensions must be positive")]
    Room,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Unit vector at `angle` radians from the +x axis.
    pub fn from_angle(angle: f64) -> Point {
        Point::new(angle.cos(), angle.sin())
    }
}

/// Axis-aligned room `[0, width] x [0, depth]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub width: f64,
    pub depth: f64,
}

impl Room {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.depth).contains(&p.y)
    }

    pub fn center(&self) -> Point {
        Point::new(self.width / 2.0, self.depth / 2.0)
    }
}

impl Default for Room {
    /// Roughly a 13 x 18 ft lab.
    fn default() -> Self {
        Self { width: 4.0, depth: 5.5 }
    }
}

/// Chest-wall displacement model for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChestModel {
    /// breaths/min
    pub resp_rate: f64,
    /// meters
    pub resp_amp: f64,
    /// fractional std of the breathing cycle period
    pub resp_variability: f64,
    /// beats/min
    pub heart_rate: f64,
    /// meters; zero disables the heartbeat
    pub heart_amp: f64,
    pub resp_phase: f64,
    pub heart_phase: f64,
}

impl Default for ChestModel {
    fn default() -> Self {
        Self {
            resp_rate: 15.0,
            resp_amp: 0.005,
            resp_variability: 0.03,
            heart_rate: 72.0,
            heart_amp: 0.0003,
            resp_phase: 0.0,
            heart_phase: 0.0,
        }
    }
}

impl ChestModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(6.0..=30.0).contains(&self.resp_rate) {
            return Err(format!("resp_rate {} outside [6, 30] bpm", self.resp_rate));
        }
        if !(40.0..=180.0).contains(&self.heart_rate) {
            return Err(format!("heart_rate {} outside [40, 180] bpm", self.heart_rate));
        }
        if !(self.resp_amp > 0.0 && self.resp_amp < 0.02) {
            return Err(format!("resp_amp {} outside (0, 0.02) m", self.resp_amp));
        }
        if !(self.heart_amp >= 0.0 && self.heart_amp < self.resp_amp) {
            return Err(format!("heart_amp {} must be in [0, resp_amp)", self.heart_amp));
        }
        if !(0.0..0.5).contains(&self.resp_variability) {
            return Err(format!("resp_variability {} outside [0, 0.5)", self.resp_variability));
        }
        Ok(())
    }

    fn resp_period(&self) -> f64 {
        60.0 / self.resp_rate
    }

    fn cycle_period(&self, jitter_key: u64, cycle: u64) -> f64 {
        let p = self.resp_period();
        if self.resp_variability == 0.0 {
            return p;
        }
        let z = rng::normal(rng::key(&[jitter_key, rng::tag::RESP_CYCLE, cycle]))
            .clamp(-JITTER_CLAMP, JITTER_CLAMP);
        p * (1.0 + self.resp_variability * z)
    }

    /// Breathing phase in cycles elapsed at time `t` (integer part = cycle index).
    pub fn resp_cycles(&self, jitter_key: u64, t: f64) -> f64 {
        let t = t.max(0.0);
        if self.resp_variability == 0.0 {
            return t / self.resp_period();
        }
        let mut start = 0.0;
        let mut k = 0u64;
        loop {
            let p = self.cycle_period(jitter_key, k);
            if t < start + p {
                return k as f64 + (t - start) / p;
            }
            start += p;
            k += 1;
        }
    }

    /// Respiration component, meters.
    pub fn respiration(&self, jitter_key: u64, t: f64) -> f64 {
        let frac = self.resp_cycles(jitter_key, t).fract();
        self.resp_amp * (TAU * frac + self.resp_phase).sin()
    }

    /// Heartbeat component: raised-cosine pulse train, meters.
    pub fn heartbeat(&self, t: f64) -> f64 {
        if self.heart_amp == 0.0 {
            return 0.0;
        }
        let u = (t.max(0.0) * self.heart_rate / 60.0 + self.heart_phase / TAU).rem_euclid(1.0);
        if u < HEART_PULSE_DUTY {
            self.heart_amp * 0.5 * (1.0 - (TAU * u / HEART_PULSE_DUTY).cos())
        } else {
            0.0
        }
    }

    /// Mean breathing rate realized over `[0, duration]`, breaths/min.
    pub fn realized_resp_rate(&self, jitter_key: u64, duration: f64) -> f64 {
        60.0 * self.resp_cycles(jitter_key, duration) / duration
    }
}

/// Total chest displacement at `t` seconds. `jitter_key` selects the
/// per-cycle period jitter realization (see [`Scene::jitter_key`]).
pub fn chest_displacement(model: &ChestModel, jitter_key: u64, t: f64) -> f64 {
    model.respiration(jitter_key, t) + model.heartbeat(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// radians from +x
    pub facing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

impl Trajectory {
    pub fn stationary(pos: Point, facing: f64, duration: f64) -> Self {
        Self {
            waypoints: vec![
                Waypoint { t: 0.0, x: pos.x, y: pos.y, facing },
                Waypoint { t: duration, x: pos.x, y: pos.y, facing },
            ],
        }
    }

    fn validate(&self, room: &Room) -> Result<(), String> {
        let w = &self.waypoints;
        if w.len() < 2 {
            return Err("needs at least two waypoints".into());
        }
        if w.windows(2).any(|p| p[1].t <= p[0].t) {
            return Err("times must be strictly increasing".into());
        }
        if let Some(p) = w.iter().find(|p| !room.contains(Point::new(p.x, p.y))) {
            return Err(format!("waypoint ({}, {}) outside room", p.x, p.y));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match (self.waypoints.first(), self.waypoints.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Position and facing at time `t`. Times outside the waypoint span clamp
/// to the first/last waypoint.
pub fn subject_pose(traj: &Trajectory, t: f64) -> (f64, f64, f64) {
    let w = &traj.waypoints;
    let first = w[0];
    let last = w[w.len() - 1];
    if t <= first.t {
        return (first.x, first.y, first.facing);
    }
    if t >= last.t {
        return (last.x, last.y, last.facing);
    }
    // index of the first waypoint strictly after t
    let hi = w.partition_point(|p| p.t <= t);
    let (a, b) = (w[hi - 1], w[hi]);
    let s = (t - a.t) / (b.t - a.t);
    let dtheta = wrap_angle(b.facing - a.facing);
    (
        a.x + s * (b.x - a.x),
        a.y + s * (b.y - a.y),
        wrap_angle(a.facing + s * dtheta),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub a: Point,
    pub b: Point,
    /// dB per one-way traversal
    pub attenuation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subject {
    pub chest: ChestModel,
    pub trajectory: Trajectory,
}

/// One torso scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub position: Point,
    /// outward unit normal
    pub normal: Point,
    pub coupling: f64,
}

impl Subject {
    /// Front, back, left and right facets at time `t`.
    pub fn facets(&self, t: f64) -> [Facet; 4] {
        let (x, y, facing) = subject_pose(&self.trajectory, t);
        let c = Point::new(x, y);
        let offsets = [0.0, PI, PI / 2.0, -PI / 2.0];
        std::array::from_fn(|i| {
            let n = Point::from_angle(facing + offsets[i]);
            Facet { position: c.add(n.scale(TORSO_RADIUS_M)), normal: n, coupling: FACET_COUPLING[i] }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub room: Room,
    pub subjects: Vec<Subject>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub seed: u64,
}

impl Scene {
    pub fn new(
        room: Room,
        subjects: Vec<Subject>,
        obstacles: Vec<Obstacle>,
        seed: u64,
    ) -> Result<Self, SceneError> {
        let s = Self { room, subjects, obstacles, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.room.width > 0.0 && self.room.depth > 0.0) {
            return Err(SceneError::Room);
        }
        if self.subjects.is_empty() {
            return Err(SceneError::NoSubjects);
        }
        for (i, s) in self.subjects.iter().enumerate() {
            s.chest.validate().map_err(|reason| SceneError::Chest { subject: i, reason })?;
            s.trajectory
                .validate(&self.room)
                .map_err(|reason| SceneError::Trajectory { subject: i, reason })?;
        }
        if let Some(i) = self.obstacles.iter().position(|o| !(o.attenuation_db >= 0.0)) {
            return Err(SceneError::Obstacle(i));
        }
        Ok(())
    }

    /// Key for subject `id`'s breathing-jitter realization.
    pub fn jitter_key(&self, id: usize) -> u64 {
        rng::key(&[self.seed, id as u64])
    }

    pub fn displacement(&self, id: usize, t: f64) -> f64 {
        chest_displacement(&self.subjects[id].chest, self.jitter_key(id), t)
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// True when the open segments cross at a single interior point.
/// Touching endpoints and collinear overlap do not count.
pub fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Total one-way attenuation in dB along the path `a -> b`.
pub fn occlusion_loss(scene: &Scene, a: Point, b: Point) -> f64 {
    occlusion_loss_in(&scene.obstacles, a, b)
}

pub fn occlusion_loss_in(obstacles: &[Obstacle], a: Point, b: Point) -> f64 {
    obstacles
        .iter()
        .filter(|o| segments_cross(a, b, o.a, o.b))
        .map(|o| o.attenuation_db)
        .sum()
}
