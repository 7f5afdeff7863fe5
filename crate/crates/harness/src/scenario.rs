//! Scene builders shared by the studies and the acceptance tests.

use vitalsim_core::radar::ArrayLayout;
use vitalsim_core::scene::{ChestModel, Obstacle, Point, Room, Scene, SceneError, Subject, Trajectory, Waypoint};

pub const RECORD_S: f64 = 60.0;
/// Screen placed in front of a covered board.
const SCREEN_OFFSET_M: f64 = 0.3;
const SCREEN_HALF_WIDTH_M: f64 = 0.6;
pub const NLOS_DISTANCE_M: f64 = 5.0;
pub const NLOS_ATTENUATION_DB: f64 = 20.0;
/// Corners covered in the NLoS study: SA-1 and SA-4.
pub const NLOS_COVERED: [usize; 2] = [0, 3];
pub const BLOCK_ATTENUATION_DB: f64 = 30.0;

fn unit(p: Point) -> Point {
    p.scale(1.0 / p.norm())
}

fn angle_to(from: Point, to: Point) -> f64 {
    let d = to.sub(from);
    d.y.atan2(d.x)
}

/// Point `d` meters from corner SA-1 along the room diagonal, kept inside the room.
pub fn diagonal_point(room: &Room, d: f64) -> Point {
    let c = ArrayLayout::corners(room);
    let p = c[0].add(unit(c[3].sub(c[0])).scale(d));
    Point::new(p.x.clamp(0.2, room.width - 0.2), p.y.clamp(0.2, room.depth - 0.2))
}

/// Attenuating screen in front of the corner board `corner`, facing the room center.
pub fn cover(room: &Room, corner: usize, attenuation_db: f64) -> Obstacle {
    let c = ArrayLayout::corners(room)[corner];
    let look = unit(room.center().sub(c));
    let mid = c.add(look.scale(SCREEN_OFFSET_M));
    let t = Point::new(-look.y, look.x).scale(SCREEN_HALF_WIDTH_M);
    Obstacle { a: mid.sub(t), b: mid.add(t), attenuation_db }
}

/// Breathing parameters varied per seed so studies do not all see 15 bpm.
pub fn chest_for(seed: u64, subject: usize) -> ChestModel {
    let base = [14.0, 19.0, 11.0][subject % 3];
    let r = vitalsim_core::rng::unit_open(vitalsim_core::rng::key(&[seed, subject as u64, 0x5eed]));
    ChestModel {
        resp_rate: base + 2.0 * (r - 0.5),
        resp_phase: std::f64::consts::TAU * r,
        heart_rate: 66.0 + 12.0 * r + 6.0 * subject as f64,
        ..ChestModel::default()
    }
}

pub fn static_subject(pos: Point, facing_to: Point, chest: ChestModel) -> Subject {
    Subject { chest, trajectory: Trajectory::stationary(pos, angle_to(pos, facing_to), RECORD_S) }
}

/// One static subject `d` meters from SA-1, facing it.
pub fn los_at(d: f64, seed: u64) -> Result<Scene, SceneError> {
    let room = Room::default();
    let pos = diagonal_point(&room, d);
    let corner = ArrayLayout::corners(&room)[0];
    Scene::new(room, vec![static_subject(pos, corner, chest_for(seed, 0))], vec![], seed)
}

/// Subject at the NLoS distance with two corner boards covered.
pub fn nlos(seed: u64) -> Result<Scene, SceneError> {
    let mut s = los_at(NLOS_DISTANCE_M, seed)?;
    s.obstacles = NLOS_COVERED.iter().map(|&c| cover(&s.room, c, NLOS_ATTENUATION_DB)).collect();
    Ok(s)
}

/// Subject at the room center facing the west wall, so boards pair up
/// symmetrically, with board `blocked` covered.
pub fn blocked(blocked: usize, seed: u64) -> Result<Scene, SceneError> {
    let room = Room::default();
    let pos = room.center();
    let facing = Point::new(0.0, room.depth / 2.0);
    let obstacles = vec![cover(&room, blocked, BLOCK_ATTENUATION_DB)];
    Scene::new(room, vec![static_subject(pos, facing, chest_for(seed, 0))], obstacles, seed)
}

/// Seats at least 1.5 m apart.
pub const SEATS: [(f64, f64); 3] = [(1.2, 1.7), (2.8, 3.9), (1.0, 4.3)];

/// `n` static subjects (at most three) facing the room center.
pub fn multi(n: usize, seed: u64) -> Result<Scene, SceneError> {
    let room = Room::default();
    let subjects = SEATS
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, &(x, y))| static_subject(Point::new(x, y), room.center(), chest_for(seed, i)))
        .collect();
    Scene::new(room, subjects, vec![], seed)
}

/// Subject pacing slowly back and forth while turning, around `center`.
pub fn pacing(seed: u64) -> Result<Scene, SceneError> {
    let room = Room::default();
    let c = Point::new(1.6, 2.4);
    let mut waypoints = Vec::new();
    let legs = 6;
    for k in 0..=legs {
        let t = RECORD_S * k as f64 / legs as f64;
        let off = if k % 2 == 0 { -0.2 } else { 0.2 };
        waypoints.push(Waypoint { t, x: c.x + off, y: c.y + 0.5 * off, facing: -2.2 + 0.6 * (k as f64 / legs as f64) });
    }
    let subject = Subject { chest: chest_for(seed, 0), trajectory: Trajectory { waypoints } };
    Scene::new(room, vec![subject], vec![], seed)
}

/// Held-out environment: bigger room, a partition, subject elsewhere.
pub fn unseen(seed: u64) -> Result<Scene, SceneError> {
    let room = Room { width: 5.0, depth: 6.0 };
    let pos = Point::new(3.3, 2.2);
    let corner = ArrayLayout::corners(&room)[1];
    let obstacles = vec![Obstacle { a: Point::new(0.8, 3.4), b: Point::new(2.2, 3.4), attenuation_db: 10.0 }];
    Scene::new(room, vec![static_subject(pos, corner, chest_for(seed, 0))], obstacles, seed)
}
