//! Probabilistic line-of-sight path loss and uplink rates.

use thiserror::Error;

use crate::kinematics::Position;
use crate::scenario::ChannelParams;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("coincident endpoints")]
    CoincidentEndpoints,
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
}

/// Per-link quantities for one user/UAV pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Elevation angle in degrees.
    pub elevation: f64,
    pub p_los: f64,
    pub fspl: f64,
    pub avg_pl: f64,
    pub bandwidth: f64,
    pub rate: f64,
}

/// Elevation of the UAV as seen from the user, in degrees.
pub fn elevation_deg(uav: &Position, user: &Position) -> Result<f64, ChannelError> {
    let d = uav.dist(user);
    if d <= 0.0 {
        return Err(ChannelError::CoincidentEndpoints);
    }
    let ratio = ((uav.z - user.z) / d).clamp(0.0, 1.0);
    Ok(ratio.asin().to_degrees())
}

/// Sigmoid LoS probability `1 / (1 + a·exp(−b(θ − a)))` at elevation `θ` (degrees).
pub fn los_probability_at(elevation: f64, params: &ChannelParams) -> f64 {
    1.0 / (1.0 + params.a * (-params.b * (elevation - params.a)).exp())
}

pub fn los_probability(uav: &Position, user: &Position, params: &ChannelParams) -> Result<f64, ChannelError> {
    Ok(los_probability_at(elevation_deg(uav, user)?, params))
}

/// Free-space path loss in dB.
pub fn free_space_path_loss(distance: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    if distance.is_nan() || distance <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(distance));
    }
    let four_pi_over_c = 4.0 * std::f64::consts::PI / params.light_speed;
    Ok(20.0 * (distance.log10() + params.carrier_freq.log10() + four_pi_over_c.log10()))
}

/// LoS/NLoS-weighted mean path loss in dB.
pub fn average_path_loss(uav: &Position, user: &Position, params: &ChannelParams) -> Result<f64, ChannelError> {
    let p = los_probability(uav, user, params)?;
    let fspl = free_space_path_loss(uav.dist(user), params)?;
    Ok(mix_path_loss(fspl, p, params))
}

fn mix_path_loss(fspl: f64, p_los: f64, params: &ChannelParams) -> f64 {
    p_los * (fspl + params.eta_los) + (1.0 - p_los) * (fspl + params.eta_nlos)
}

/// Shannon rate in bits/s. The dB path loss is converted to a linear
/// attenuation before forming the SNR.
pub fn uplink_rate(avg_pl_db: f64, bandwidth: f64, params: &ChannelParams) -> f64 {
    let pl_linear = 10f64.powf(avg_pl_db / 10.0);
    let snr = params.tx_power / (pl_linear * params.noise_power);
    bandwidth * (1.0 + snr).log2()
}

/// Full link budget for one pair at a given bandwidth.
pub fn link_budget(uav: &Position, user: &Position, bandwidth: f64, params: &ChannelParams) -> Result<LinkBudget, ChannelError> {
    let elevation = elevation_deg(uav, user)?;
    let p_los = los_probability_at(elevation, params);
    let fspl = free_space_path_loss(uav.dist(user), params)?;
    let avg_pl = mix_path_loss(fspl, p_los, params);
    Ok(LinkBudget { elevation, p_los, fspl, avg_pl, bandwidth, rate: uplink_rate(avg_pl, bandwidth, params) })
}

/// Equal split of `b_max` among the users assigned to each UAV.
///
/// The last user on a UAV receives `b_max` minus what its peers got, so the
/// left-to-right per-UAV sum is exactly `b_max`.
pub fn allocate_bandwidth(assignment: &[usize], num_uavs: usize, b_max: f64) -> Vec<f64> {
    let mut counts = vec![0usize; num_uavs];
    for &m in assignment {
        counts[m] += 1;
    }
    let mut given = vec![0.0f64; num_uavs];
    let mut seen = vec![0usize; num_uavs];
    assignment
        .iter()
        .map(|&m| {
            seen[m] += 1;
            let share = if seen[m] == counts[m] { b_max - given[m] } else { b_max / counts[m] as f64 };
            given[m] += share;
            share
        })
        .collect()
}
