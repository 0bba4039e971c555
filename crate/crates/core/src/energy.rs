//! Transmission, computation and propulsion energy, and carbon conversion.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{allocate_bandwidth, link_budget, ChannelError, LinkBudget};
use crate::kinematics::{UavControl, WorldState};
use crate::scenario::{CarbonParams, PropulsionParams, Scenario};

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("zero rate with nonzero task")]
    ZeroRate,
    #[error("negative radicand {0} in propulsion model")]
    NegativeRadicand(f64),
    #[error("assignment has {got} entries, expected {expected}")]
    AssignmentLength { got: usize, expected: usize },
    #[error("user {user} assigned to unknown UAV {uav}")]
    UnknownUav { user: usize, uav: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Energy in joules to push `bits` over a link at `rate` bits/s with `power` watts.
pub fn tx_energy(power: f64, bits: f64, rate: f64) -> Result<f64, EnergyError> {
    if rate <= 0.0 {
        if bits == 0.0 {
            return Ok(0.0);
        }
        return Err(EnergyError::ZeroRate);
    }
    Ok(power * bits / rate)
}

/// Dynamic CPU energy `ε·D·C·f²`.
pub fn compute_energy(switch_cap: f64, bits: f64, density: f64, f_alloc: f64) -> f64 {
    switch_cap * bits * density * f_alloc * f_alloc
}

/// Rotary-wing propulsion energy over `slot_dur` seconds at speed `v`.
pub fn propulsion_energy(v: f64, slot_dur: f64, p: &PropulsionParams) -> Result<f64, EnergyError> {
    let blade = p.p0 * (1.0 + 3.0 * v * v / (p.tip_speed * p.tip_speed));
    let parasite = 0.5 * p.drag_ratio * p.air_density * p.rotor_solidity * p.disk_area * v.powi(3);
    let v0_sq = p.induced_speed * p.induced_speed;
    let radicand = (1.0 + v.powi(4) / (4.0 * v0_sq * v0_sq)).sqrt() - v * v / (2.0 * v0_sq);
    // Algebraically positive; guard against rounding at very high speed.
    if radicand < -1e-12 {
        return Err(EnergyError::NegativeRadicand(radicand));
    }
    let induced = p.p1 * radicand.max(0.0).sqrt();
    Ok(slot_dur * (blade + parasite + induced))
}

/// Kilograms of CO₂ for `joules` of consumed energy.
pub fn carbon(joules: f64, params: &CarbonParams) -> f64 {
    params.kg_per_wh * (params.wh_per_joule * joules)
}

/// Energy accounting for one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotEnergyReport {
    /// Per-user transmission energy on the assigned link.
    pub tx: Vec<f64>,
    /// Per-user computation energy on the assigned UAV.
    pub compute: Vec<f64>,
    /// Per-UAV propulsion energy.
    pub flight: Vec<f64>,
    pub total: f64,
    pub carbon: f64,
}

impl SlotEnergyReport {
    pub fn tx_total(&self) -> f64 {
        self.tx.iter().sum()
    }

    pub fn compute_total(&self) -> f64 {
        self.compute.iter().sum()
    }

    pub fn flight_total(&self) -> f64 {
        self.flight.iter().sum()
    }
}

/// Link budgets of every user's assigned link at the slot's start positions.
pub fn assigned_links(world: &WorldState, assignment: &[usize], scenario: &Scenario) -> Result<Vec<LinkBudget>, EnergyError> {
    check_assignment(world, assignment)?;
    let bw = allocate_bandwidth(assignment, world.uav_pos.len(), scenario.channel.b_max);
    assignment
        .iter()
        .enumerate()
        .map(|(k, &m)| Ok(link_budget(&world.uav_pos[m], &world.user_pos[k], bw[k], &scenario.channel)?))
        .collect()
}

fn check_assignment(world: &WorldState, assignment: &[usize]) -> Result<(), EnergyError> {
    if assignment.len() != world.user_pos.len() {
        return Err(EnergyError::AssignmentLength { got: assignment.len(), expected: world.user_pos.len() });
    }
    if let Some((user, &uav)) = assignment.iter().enumerate().find(|(_, &m)| m >= world.uav_pos.len()) {
        return Err(EnergyError::UnknownUav { user, uav });
    }
    Ok(())
}

/// Slot energy: transmission and computation over every assigned link plus
/// propulsion of every UAV.
///
/// `f_alloc[k]` is the CPU rate UAV `assignment[k]` grants user `k`;
/// `links[k]` is the budget of that same link.
pub fn slot_energy(
    world: &WorldState,
    assignment: &[usize],
    f_alloc: &[f64],
    controls: &[UavControl],
    links: &[LinkBudget],
    scenario: &Scenario,
) -> Result<SlotEnergyReport, EnergyError> {
    check_assignment(world, assignment)?;
    let mut tx = Vec::with_capacity(assignment.len());
    let mut compute = Vec::with_capacity(assignment.len());
    for (k, task) in world.tasks.iter().enumerate() {
        tx.push(tx_energy(scenario.channel.tx_power, task.size_bits, links[k].rate)?);
        compute.push(compute_energy(scenario.compute.switch_cap, task.size_bits, task.density, f_alloc[k]));
    }
    let flight = controls
        .iter()
        .map(|c| propulsion_energy(c.speed, scenario.config.slot_dur, &scenario.propulsion))
        .collect::<Result<Vec<_>, _>>()?;
    let total = tx.iter().sum::<f64>() + compute.iter().sum::<f64>() + flight.iter().sum::<f64>();
    Ok(SlotEnergyReport { carbon: carbon(total, &scenario.carbon), tx, compute, flight, total })
}

/// One row of the per-episode energy ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub slot: usize,
    pub tx: f64,
    pub compute: f64,
    pub flight: f64,
    pub total: f64,
    pub carbon: f64,
}

impl From<(usize, &SlotEnergyReport)> for LedgerRow {
    fn from((slot, r): (usize, &SlotEnergyReport)) -> Self {
        LedgerRow {
            slot,
            tx: r.tx_total(),
            compute: r.compute_total(),
            flight: r.flight_total(),
            total: r.total,
            carbon: r.carbon,
        }
    }
}

pub fn write_ledger_csv<W: Write>(mut w: W, rows: &[LedgerRow]) -> std::io::Result<()> {
    writeln!(w, "slot,tx_j,compute_j,flight_j,total_j,carbon_kg")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.slot, r.tx, r.compute, r.flight, r.total, r.carbon)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{Position, TaskSpec};
    use crate::scenario::default_scenario;
    use proptest::prelude::*;

    #[test]
    fn tx_energy_cases() {
        assert_eq!(tx_energy(1.0, 1e6, 1e6).unwrap(), 1.0);
        let e = tx_energy(0.19953, 8e8, 5.785e7).unwrap();
        assert!(((e - 2.759) / 2.759).abs() < 0.01);
        assert_eq!(tx_energy(0.2, 2e6, 1e6).unwrap(), 2.0 * tx_energy(0.2, 1e6, 1e6).unwrap());
        assert_eq!(tx_energy(0.2, 1e6, 0.0), Err(EnergyError::ZeroRate));
    }

    #[test]
    fn compute_energy_cases() {
        assert_eq!(compute_energy(1e-27, 1e6, 100.0, 0.0), 0.0);
        assert!((compute_energy(1e-27, 1e6, 100.0, 1e9) - 0.1).abs() < 1e-15);
        assert!(((compute_energy(1e-27, 8e8, 150.0, 5e9) - 3000.0) / 3000.0).abs() < 1e-6);
    }

    #[test]
    fn propulsion_cases() {
        let p = default_scenario().propulsion;
        assert!((propulsion_energy(0.0, 1.0, &p).unwrap() - 168.4842).abs() < 1e-3);
        assert_eq!(propulsion_energy(17.0, 0.0, &p).unwrap(), 0.0);
        // At v = v0 the induced radical is sqrt(sqrt(1.25) - 0.5).
        let v = p.induced_speed;
        let blade = p.p0 * (1.0 + 3.0 * v * v / (p.tip_speed * p.tip_speed));
        let parasite = 0.5 * p.drag_ratio * p.air_density * p.rotor_solidity * p.disk_area * v.powi(3);
        let induced = propulsion_energy(v, 1.0, &p).unwrap() - blade - parasite;
        assert!((induced / p.p1 - 0.78615).abs() < 1e-5);
    }

    #[test]
    fn carbon_cases() {
        let c = default_scenario().carbon;
        assert!((carbon(3600.0, &c) - 3.773e-4).abs() < 1e-18);
        assert_eq!(carbon(0.0, &c), 0.0);
    }

    fn one_user_world() -> WorldState {
        WorldState {
            uav_pos: vec![Position::new(0.0, 0.0, 100.0)],
            user_pos: vec![Position::new(0.0, 0.0, 0.0)],
            slot: 1,
            tasks: vec![TaskSpec { size_bits: 8e8, density: 150.0 }],
            task_seed: 0,
        }
    }

    #[test]
    fn hovering_single_link() {
        let s = default_scenario();
        let w = one_user_world();
        let links = assigned_links(&w, &[0], &s).unwrap();
        let r = slot_energy(&w, &[0], &[1e9], &[UavControl::HOVER], &links, &s).unwrap();
        let etx = tx_energy(s.channel.tx_power, 8e8, links[0].rate).unwrap();
        let ecal = compute_energy(1e-27, 8e8, 150.0, 1e9);
        assert!((r.total - (etx + ecal + 168.4842)).abs() < 1e-3);
        assert_eq!(r.carbon, carbon(r.total, &s.carbon));
    }

    #[test]
    fn no_users_means_propulsion_only() {
        let s = default_scenario();
        let w = WorldState { user_pos: vec![], tasks: vec![], ..one_user_world() };
        let ctrl = [UavControl { heading: 0.0, speed: 12.0 }];
        let r = slot_energy(&w, &[], &[], &ctrl, &[], &s).unwrap();
        assert_eq!(r.total, propulsion_energy(12.0, 1.0, &s.propulsion).unwrap());
    }

    #[test]
    fn bad_assignment_rejected() {
        let s = default_scenario();
        let w = one_user_world();
        assert!(matches!(assigned_links(&w, &[3], &s), Err(EnergyError::UnknownUav { .. })));
        assert!(matches!(assigned_links(&w, &[], &s), Err(EnergyError::AssignmentLength { .. })));
    }

    proptest! {
        #[test]
        fn propulsion_is_positive_and_continuous(v in 0.0f64..80.0) {
            let p = default_scenario().propulsion;
            let e = propulsion_energy(v, 1.0, &p).unwrap();
            prop_assert!(e > 0.0);
            let e2 = propulsion_energy(v + 1e-7, 1.0, &p).unwrap();
            prop_assert!((e2 - e).abs() < 1e-3);
        }

        #[test]
        fn carbon_is_linear(a in 0.0f64..1e7, b in 0.0f64..1e7) {
            let c = default_scenario().carbon;
            let lhs = carbon(a, &c) + carbon(b, &c);
            let rhs = carbon(a + b, &c);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }
    }
}
