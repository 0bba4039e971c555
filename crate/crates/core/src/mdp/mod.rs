//! The simulator as an episodic MDP.
//!
//! State layout (length `3M + 2K`): `(x, y, H)` for every UAV followed by
//! `(D_k, C_k)` for every user. User positions are not observed.
//!
//! Action layout (length `2M + K(M + 1)`), every entry in `[-1, 1]`:
//! `K` offload selectors, `K·M` CPU fractions (user-major), `M` speeds,
//! `M` headings.

mod buffer;

pub use buffer::{ReplayBuffer, Transition};

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{assigned_links, carbon, slot_energy, EnergyError, SlotEnergyReport};
use crate::kinematics::{advance_uav, in_coverage, sample_users, Position, TaskSpec, UavControl, WorldState};
use crate::scenario::Scenario;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("action has length {got}, expected {expected}")]
    ActionLength { got: usize, expected: usize },
    #[error("step called after the episode finished")]
    StepAfterDone,
    #[error("step called before reset")]
    NotReset,
    #[error("cannot sample {wanted} transitions from a buffer holding {held}")]
    BufferTooSmall { wanted: usize, held: usize },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

pub type ActionVec = Vec<f64>;

pub fn state_dim(num_uavs: usize, num_users: usize) -> usize {
    3 * num_uavs + 2 * num_users
}

pub fn action_dim(num_uavs: usize, num_users: usize) -> usize {
    2 * num_uavs + num_users * (num_uavs + 1)
}

/// Observation with its `[0, 1]`-normalized copy for the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl StateVec {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

pub fn encode_state(world: &WorldState, scenario: &Scenario) -> StateVec {
    let c = &scenario.config;
    let cp = &scenario.compute;
    let (d_lo, d_hi) = (cp.task_size_range.0 * cp.bits_per_mb, cp.task_size_range.1 * cp.bits_per_mb);
    let (c_lo, c_hi) = cp.task_density_range;
    let unit = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };

    let n = state_dim(world.uav_pos.len(), world.user_pos.len());
    let mut raw = Vec::with_capacity(n);
    let mut normalized = Vec::with_capacity(n);
    for p in &world.uav_pos {
        raw.extend([p.x, p.y, p.z]);
        normalized.extend([p.x / c.area_x, p.y / c.area_y, p.z / c.altitude]);
    }
    for t in &world.tasks {
        raw.extend([t.size_bits, t.density]);
        normalized.extend([unit(t.size_bits, d_lo, d_hi), unit(t.density, c_lo, c_hi)]);
    }
    StateVec { raw, normalized }
}

/// Executable form of a raw action.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedAction {
    /// 0-based UAV index per user.
    pub assignment: Vec<usize>,
    /// `K × M` CPU rates in cycles/s, user-major.
    pub f_matrix: Vec<f64>,
    pub controls: Vec<UavControl>,
}

impl DecodedAction {
    /// The CPU rate each user actually receives, `f[k][assignment[k]]`.
    pub fn consumed_f(&self) -> Vec<f64> {
        let m = self.controls.len();
        self.assignment.iter().enumerate().map(|(k, &u)| self.f_matrix[k * m + u]).collect()
    }
}

/// Map `u ∈ [-1, 1]` to `[0, 1]`.
fn unit(u: f64) -> f64 {
    (u.clamp(-1.0, 1.0) + 1.0) / 2.0
}

/// Equal-width bin of a selector; `u = 1` falls in the last bin and bin
/// boundaries round up.
pub fn selector_to_uav(u: f64, num_uavs: usize) -> usize {
    ((unit(u) * num_uavs as f64).floor() as usize).min(num_uavs - 1)
}

pub fn decode_action(raw: &[f64], scenario: &Scenario) -> Result<DecodedAction, MdpError> {
    let c = &scenario.config;
    let (m, k) = (c.num_uavs, c.num_users);
    let expected = action_dim(m, k);
    if raw.len() != expected {
        return Err(MdpError::ActionLength { got: raw.len(), expected });
    }
    let assignment = raw[..k].iter().map(|&u| selector_to_uav(u, m)).collect();
    let f_matrix = raw[k..k + k * m].iter().map(|&u| unit(u) * scenario.compute.f_max).collect();
    let speeds = &raw[k + k * m..k + k * m + m];
    let headings = &raw[k + k * m + m..];
    let controls = speeds
        .iter()
        .zip(headings)
        .map(|(&v, &h)| {
            let mut heading = unit(h) * 2.0 * PI;
            if heading >= 2.0 * PI {
                heading -= 2.0 * PI;
            }
            UavControl { heading, speed: unit(v) * c.v_max }
        })
        .collect();
    Ok(DecodedAction { assignment, f_matrix, controls })
}

/// Per-unit-violation penalty weights and the overall reward scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyWeights {
    pub area: f64,
    pub collision: f64,
    pub coverage: f64,
    pub capacity: f64,
    pub reward_scale: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self { area: 1.0, collision: 1.0, coverage: 1.0, capacity: 1.0, reward_scale: 100.0 }
    }
}

impl PenaltyWeights {
    pub fn zero_penalties(reward_scale: f64) -> Self {
        Self { area: 0.0, collision: 0.0, coverage: 0.0, capacity: 0.0, reward_scale }
    }
}

/// Magnitudes of the four shaped constraints for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Violations {
    /// Summed boundary overshoot in meters.
    pub area_overshoot: f64,
    /// Summed `max(0, d_min − dist)` over UAV pairs, meters.
    pub collision_deficit: f64,
    /// Number of assigned links outside coverage.
    pub coverage_count: usize,
    /// Summed relative CPU over-subscription.
    pub cpu_excess: f64,
    /// Summed users beyond the per-UAV cap.
    pub user_excess: f64,
}

impl Violations {
    pub fn area_violated(&self) -> bool {
        self.area_overshoot > 0.0
    }
    pub fn collision_violated(&self) -> bool {
        self.collision_deficit > 0.0
    }
    pub fn coverage_violated(&self) -> bool {
        self.coverage_count > 0
    }
    pub fn capacity_violated(&self) -> bool {
        self.cpu_excess > 0.0 || self.user_excess > 0.0
    }

    /// Weighted penalty before reward scaling.
    pub fn penalty(&self, w: &PenaltyWeights) -> f64 {
        w.area * self.area_overshoot
            + w.collision * self.collision_deficit
            + w.coverage * self.coverage_count as f64
            + w.capacity * (self.cpu_excess + self.user_excess)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_world: WorldState,
    pub next_state: StateVec,
    pub reward: f64,
    pub done: bool,
    pub energy: SlotEnergyReport,
    pub violations: Violations,
}

/// Tasks of slot `slot` for an episode with task stream `task_seed`.
pub fn draw_tasks(scenario: &Scenario, task_seed: u64, slot: usize) -> Vec<TaskSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
    rng.set_stream(slot as u64);
    let cp = &scenario.compute;
    let (d_lo, d_hi) = cp.task_size_range;
    let (c_lo, c_hi) = cp.task_density_range;
    (0..scenario.config.num_users)
        .map(|_| {
            let mb = d_lo + (d_hi - d_lo) * rng.random::<f64>();
            let density = c_lo + (c_hi - c_lo) * rng.random::<f64>();
            TaskSpec { size_bits: mb * cp.bits_per_mb, density }
        })
        .collect()
}

/// Fresh episode: UAVs at their configured starts, users and tasks drawn from `seed`.
pub fn reset_world(scenario: &Scenario, seed: u64) -> WorldState {
    let c = &scenario.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let user_pos = sample_users(&mut rng, c.num_users, (c.area_x, c.area_y));
    let task_seed = rng.random::<u64>();
    WorldState {
        uav_pos: c.uav_init_positions.iter().map(|&(x, y)| Position::new(x, y, c.altitude)).collect(),
        user_pos,
        slot: 1,
        tasks: draw_tasks(scenario, task_seed, 1),
        task_seed,
    }
}

/// Constraint magnitudes for a decoded action taken in `world`, given the
/// UAV positions after the move and the summed boundary overshoot.
pub fn measure_violations(
    world: &WorldState,
    decoded: &DecodedAction,
    moved: &[Position],
    area_overshoot: f64,
    scenario: &Scenario,
) -> Violations {
    let c = &scenario.config;
    let mut collision_deficit = 0.0;
    for i in 0..moved.len() {
        for j in (i + 1)..moved.len() {
            collision_deficit += (c.d_min - moved[i].dist(&moved[j])).max(0.0);
        }
    }
    let coverage_count = decoded
        .assignment
        .iter()
        .enumerate()
        .filter(|&(k, &m)| !in_coverage(&world.uav_pos[m], &world.user_pos[k], c.r_max, c.altitude).0)
        .count();
    let f = decoded.consumed_f();
    let f_max = scenario.compute.f_max;
    let mut cpu_excess = 0.0;
    let mut user_excess = 0.0;
    for m in 0..c.num_uavs {
        let (load, users) = decoded
            .assignment
            .iter()
            .zip(&f)
            .filter(|(&u, _)| u == m)
            .fold((0.0, 0usize), |(s, n), (_, &fk)| (s + fk, n + 1));
        cpu_excess += (load - f_max).max(0.0) / f_max;
        user_excess += users.saturating_sub(c.user_cap_per_uav) as f64;
    }
    Violations { area_overshoot, collision_deficit, coverage_count, cpu_excess, user_excess }
}

/// One slot of the MDP. Pure: the outcome depends only on the inputs.
pub fn step_world(
    scenario: &Scenario,
    weights: &PenaltyWeights,
    world: &WorldState,
    raw_action: &[f64],
) -> Result<StepOutcome, MdpError> {
    let c = &scenario.config;
    if world.slot > c.num_slots {
        return Err(MdpError::StepAfterDone);
    }
    let clipped: Vec<f64> = raw_action.iter().map(|u| u.clamp(-1.0, 1.0)).collect();
    let decoded = decode_action(&clipped, scenario)?;

    let links = assigned_links(world, &decoded.assignment, scenario)?;
    let energy = slot_energy(world, &decoded.assignment, &decoded.consumed_f(), &decoded.controls, &links, scenario)?;

    let mut overshoot = 0.0;
    let moved: Vec<Position> = world
        .uav_pos
        .iter()
        .zip(&decoded.controls)
        .map(|(&p, &ctrl)| {
            let (q, v) = advance_uav(p, ctrl, c.slot_dur, (c.area_x, c.area_y));
            overshoot += v;
            q
        })
        .collect();
    let violations = measure_violations(world, &decoded, &moved, overshoot, scenario);
    let reward = weights.reward_scale * (-energy.carbon - violations.penalty(weights));

    let done = world.slot == c.num_slots;
    let next_slot = world.slot + 1;
    let tasks = if done { world.tasks.clone() } else { draw_tasks(scenario, world.task_seed, next_slot) };
    let next_world = WorldState {
        uav_pos: moved,
        user_pos: world.user_pos.clone(),
        slot: next_slot,
        tasks,
        task_seed: world.task_seed,
    };
    let next_state = encode_state(&next_world, scenario);
    Ok(StepOutcome { next_world, next_state, reward, done, energy, violations })
}

/// Stateful wrapper around [`step_world`].
#[derive(Debug, Clone)]
pub struct CarbonEnv {
    pub scenario: Scenario,
    pub weights: PenaltyWeights,
    world: Option<WorldState>,
}

impl CarbonEnv {
    pub fn new(scenario: Scenario, weights: PenaltyWeights) -> Self {
        Self { scenario, weights, world: None }
    }

    pub fn state_dim(&self) -> usize {
        state_dim(self.scenario.config.num_uavs, self.scenario.config.num_users)
    }

    pub fn action_dim(&self) -> usize {
        action_dim(self.scenario.config.num_uavs, self.scenario.config.num_users)
    }

    pub fn reset(&mut self, seed: u64) -> (WorldState, StateVec) {
        let world = reset_world(&self.scenario, seed);
        let state = encode_state(&world, &self.scenario);
        self.world = Some(world.clone());
        (world, state)
    }

    pub fn world(&self) -> Option<&WorldState> {
        self.world.as_ref()
    }

    pub fn step(&mut self, raw_action: &[f64]) -> Result<StepOutcome, MdpError> {
        let world = self.world.as_ref().ok_or(MdpError::NotReset)?;
        let out = step_world(&self.scenario, &self.weights, world, raw_action)?;
        self.world = Some(out.next_world.clone());
        Ok(out)
    }

    pub fn carbon_of(&self, joules: f64) -> f64 {
        carbon(joules, &self.scenario.carbon)
    }
}

/// One line of the JSON-lines episode log.
#[derive(Debug, Clone, Serialize)]
pub struct SlotLog {
    pub slot: usize,
    pub reward: f64,
    pub energy_j: f64,
    pub carbon_kg: f64,
    pub violations: Violations,
}

pub fn write_episode_log<W: Write>(mut w: W, rows: &[SlotLog]) -> std::io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}
