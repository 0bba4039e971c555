//! UAV and user geometry: motion updates, separation and coverage tests.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A point in the simulator's Cartesian frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dist_sq(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        dx * dx + dy * dy + dz * dz
    }

    pub fn dist(&self, other: &Position) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn horizontal_dist(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-task workload: size in bits and CPU density in cycles per bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub size_bits: f64,
    pub density: f64,
}

/// Heading in radians, `[0, 2π)`, and speed in m/s, `[0, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UavControl {
    pub heading: f64,
    pub speed: f64,
}

impl UavControl {
    pub const HOVER: UavControl = UavControl { heading: 0.0, speed: 0.0 };
}

/// Ground truth of the simulator at the start of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub uav_pos: Vec<Position>,
    pub user_pos: Vec<Position>,
    /// 1-based slot index; `num_slots + 1` once the episode has ended.
    pub slot: usize,
    pub tasks: Vec<TaskSpec>,
    /// Seed of the per-slot task stream for this episode.
    pub task_seed: u64,
}

/// Move a UAV for one slot. The new position is clamped to the area; the
/// second value is the Euclidean distance between the unclamped and clamped
/// positions (zero when the UAV stays inside).
pub fn advance_uav(pos: Position, ctrl: UavControl, slot_dur: f64, area: (f64, f64)) -> (Position, f64) {
    let nx = pos.x + slot_dur * ctrl.speed * ctrl.heading.cos();
    let ny = pos.y + slot_dur * ctrl.speed * ctrl.heading.sin();
    let cx = nx.clamp(0.0, area.0);
    let cy = ny.clamp(0.0, area.1);
    let violation = (nx - cx).hypot(ny - cy);
    (Position::new(cx, cy, pos.z), violation)
}

/// Minimum separation over all unordered pairs with the lowest-index pair
/// winning ties. A single UAV yields `(INFINITY, None)`.
pub fn pairwise_min_distance(uav_pos: &[Position]) -> (f64, Option<(usize, usize)>) {
    let mut best = (f64::INFINITY, None);
    for i in 0..uav_pos.len() {
        for j in (i + 1)..uav_pos.len() {
            let d = uav_pos[i].dist(&uav_pos[j]);
            if d < best.0 {
                best = (d, Some((i, j)));
            }
        }
    }
    best
}

/// Coverage test `‖w − v‖² ≤ r_max² + H²`; also returns the squared slant
/// distance.
pub fn in_coverage(uav: &Position, user: &Position, r_max: f64, altitude: f64) -> (bool, f64) {
    let d2 = uav.dist_sq(user);
    (d2 <= r_max * r_max + altitude * altitude, d2)
}

/// Uniform i.i.d. ground positions over the area.
pub fn sample_users<R: Rng + ?Sized>(rng: &mut R, count: usize, area: (f64, f64)) -> Vec<Position> {
    (0..count)
        .map(|_| {
            let x = rng.random::<f64>() * area.0;
            let y = rng.random::<f64>() * area.1;
            Position::new(x, y, 0.0)
        })
        .collect()
}

/// One row of a trajectory export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub episode: usize,
    pub slot: usize,
    pub uav_id: usize,
    pub x: f64,
    pub y: f64,
}

pub const TRAJECTORY_HEADER: &str = "episode,slot,uav_id,x,y";

pub fn write_trajectory_csv<W: Write>(mut w: W, points: &[TrajectoryPoint]) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.episode, p.slot, p.uav_id, p.x, p.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const H: f64 = 100.0;

    #[test]
    fn axis_aligned_motion() {
        let (p, v) = advance_uav(Position::new(0.0, 0.0, H), UavControl { heading: 0.0, speed: 10.0 }, 1.0, (1000.0, 1000.0));
        assert_eq!((p.x, p.y, p.z, v), (10.0, 0.0, H, 0.0));
    }

    #[test]
    fn exit_is_clamped_with_overshoot() {
        let (p, v) = advance_uav(Position::new(995.0, 500.0, H), UavControl { heading: 0.0, speed: 60.0 }, 1.0, (1000.0, 1000.0));
        assert_eq!((p.x, p.y), (1000.0, 500.0));
        assert!((v - 55.0).abs() < 1e-12);
    }

    #[test]
    fn hover_is_stationary() {
        let start = Position::new(123.0, 456.0, H);
        let (p, v) = advance_uav(start, UavControl { heading: 1.3, speed: 0.0 }, 1.0, (1000.0, 1000.0));
        assert_eq!((p, v), (start, 0.0));
    }

    #[test]
    fn min_distance_cases() {
        let d = pairwise_min_distance(&[Position::new(0.0, 0.0, H), Position::new(3.0, 4.0, H)]);
        assert_eq!(d, (5.0, Some((0, 1))));
        let d = pairwise_min_distance(&[Position::new(0.0, 0.0, H), Position::new(0.0, 0.0, H)]);
        assert_eq!(d.0, 0.0);
        let three = [Position::new(0.0, 0.0, H), Position::new(10.0, 0.0, H), Position::new(4.0, 3.0, H)];
        assert_eq!(pairwise_min_distance(&three), (5.0, Some((0, 2))));
        assert_eq!(pairwise_min_distance(&three[..1]), (f64::INFINITY, None));
    }

    #[test]
    fn tie_goes_to_lowest_pair() {
        let pts = [Position::new(0.0, 0.0, H), Position::new(5.0, 0.0, H), Position::new(10.0, 0.0, H)];
        assert_eq!(pairwise_min_distance(&pts).1, Some((0, 1)));
    }

    #[test]
    fn coverage_boundaries() {
        let uav = Position::new(0.0, 0.0, H);
        assert!(in_coverage(&uav, &Position::new(100.0, 0.0, 0.0), 100.0, H).0);
        assert!(!in_coverage(&uav, &Position::new(100.1, 0.0, 0.0), 100.0, H).0);
        let (ok, d2) = in_coverage(&uav, &Position::new(0.0, 0.0, 0.0), 100.0, H);
        assert!(ok);
        assert_eq!(d2, H * H);
    }

    #[test]
    fn user_sampling_is_seeded() {
        let a = sample_users(&mut ChaCha8Rng::seed_from_u64(7), 10, (1000.0, 1000.0));
        let b = sample_users(&mut ChaCha8Rng::seed_from_u64(7), 10, (1000.0, 1000.0));
        assert_eq!(a, b);
        assert!(sample_users(&mut ChaCha8Rng::seed_from_u64(7), 0, (1000.0, 1000.0)).is_empty());
    }

    #[test]
    fn user_sampling_mean() {
        let pts = sample_users(&mut ChaCha8Rng::seed_from_u64(11), 100_000, (1000.0, 1000.0));
        let mean_x = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        assert!((mean_x - 500.0).abs() < 5.0, "mean x {mean_x}");
        assert!(pts.iter().all(|p| (0.0..=1000.0).contains(&p.x) && (0.0..=1000.0).contains(&p.y) && p.z == 0.0));
    }

    #[test]
    fn trajectory_csv_layout() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[TrajectoryPoint { episode: 0, slot: 1, uav_id: 1, x: 2.5, y: 3.0 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "episode,slot,uav_id,x,y\n0,1,1,2.5,3\n");
    }

    proptest! {
        #[test]
        fn motion_respects_speed_and_area(
            x in 0.0f64..1000.0, y in 0.0f64..1000.0,
            heading in 0.0f64..(2.0 * PI), speed in 0.0f64..=60.0, dt in 0.1f64..2.0,
        ) {
            let p = Position::new(x, y, H);
            let ctrl = UavControl { heading, speed };
            let (q, viol) = advance_uav(p, ctrl, dt, (1000.0, 1000.0));
            prop_assert!(q.dist(&p) <= dt * 60.0 + 1e-9);
            prop_assert!((0.0..=1000.0).contains(&q.x) && (0.0..=1000.0).contains(&q.y));
            prop_assert_eq!(q.z, H);
            if viol == 0.0 {
                let ux = x + dt * speed * heading.cos();
                let uy = y + dt * speed * heading.sin();
                prop_assert_eq!((q.x, q.y), (ux, uy));
            }
        }

        #[test]
        fn coverage_is_monotone_in_offset(off in 0.0f64..300.0, shrink in 0.0f64..1.0) {
            let uav = Position::new(0.0, 0.0, H);
            let far = in_coverage(&uav, &Position::new(off, 0.0, 0.0), 100.0, H).0;
            let near = in_coverage(&uav, &Position::new(off * shrink, 0.0, 0.0), 100.0, H).0;
            prop_assert!(!far || near);
        }
    }
}
