//! System-model constants and the scenario file format.
//!
//! A scenario file is a flat `key = value` document, one key per line. Units
//! are part of the key name. Blank lines and lines starting with `#` are
//! ignored. Power levels may be given either in dBm (`*_dbm`) or in watts
//! (`*_w`); they are always stored in watts.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Geometry, timing and fleet layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_uavs: usize,
    pub num_users: usize,
    pub num_slots: usize,
    /// Slot duration in seconds.
    pub slot_dur: f64,
    pub area_x: f64,
    pub area_y: f64,
    /// Fixed flight altitude in meters.
    pub altitude: f64,
    pub v_max: f64,
    /// Minimum UAV separation in meters.
    pub d_min: f64,
    /// Coverage radius in meters.
    pub r_max: f64,
    pub uav_init_positions: Vec<(f64, f64)>,
    pub user_cap_per_uav: usize,
}

/// Air-to-ground channel constants. Powers are linear watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub a: f64,
    pub b: f64,
    pub carrier_freq: f64,
    pub light_speed: f64,
    pub eta_los: f64,
    pub eta_nlos: f64,
    pub b_max: f64,
    pub tx_power: f64,
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeParams {
    /// Effective switching capacitance.
    pub switch_cap: f64,
    /// Per-UAV CPU capacity in cycles/s.
    pub f_max: f64,
    /// Task size range in megabytes.
    pub task_size_range: (f64, f64),
    /// Task density range in cycles/bit.
    pub task_density_range: (f64, f64),
    pub bits_per_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropulsionParams {
    pub p0: f64,
    pub p1: f64,
    pub tip_speed: f64,
    pub drag_ratio: f64,
    pub air_density: f64,
    pub rotor_solidity: f64,
    pub disk_area: f64,
    pub induced_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonParams {
    pub kg_per_wh: f64,
    pub wh_per_joule: f64,
}

/// Everything needed to instantiate the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub channel: ChannelParams,
    pub compute: ComputeParams,
    pub propulsion: PropulsionParams,
    pub carbon: CarbonParams,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl Default for Scenario {
    fn default() -> Self {
        default_scenario()
    }
}

/// Two UAVs serving ten users over a 1 km square for 100 one-second slots.
pub fn default_scenario() -> Scenario {
    Scenario {
        config: ScenarioConfig {
            num_uavs: 2,
            num_users: 10,
            num_slots: 100,
            slot_dur: 1.0,
            area_x: 1000.0,
            area_y: 1000.0,
            altitude: 100.0,
            v_max: 60.0,
            d_min: 10.0,
            r_max: 100.0,
            uav_init_positions: vec![(400.0, 400.0), (600.0, 600.0)],
            user_cap_per_uav: 5,
        },
        channel: ChannelParams {
            a: 9.61,
            b: 0.16,
            carrier_freq: 2e9,
            light_speed: 3e8,
            eta_los: 1.0,
            eta_nlos: 20.0,
            b_max: 20e6,
            tx_power: dbm_to_watts(23.0),
            noise_power: dbm_to_watts(-100.0),
        },
        compute: ComputeParams {
            switch_cap: 1e-27,
            f_max: 5e9,
            task_size_range: (100.0, 300.0),
            task_density_range: (100.0, 200.0),
            bits_per_mb: 8e6,
        },
        propulsion: PropulsionParams {
            p0: 79.8563,
            p1: 88.6279,
            tip_speed: 120.0,
            drag_ratio: 0.6,
            air_density: 1.225,
            rotor_solidity: 0.05,
            disk_area: 0.503,
            induced_speed: 4.03,
        },
        carbon: CarbonParams {
            kg_per_wh: 3.773e-4,
            wh_per_joule: 1.0 / 3600.0,
        },
    }
}

impl Scenario {
    /// Same physics, different fleet size and horizon. UAV starts are laid
    /// out on the main diagonal, spaced evenly.
    pub fn with_dims(mut self, num_uavs: usize, num_users: usize, num_slots: usize) -> Self {
        let c = &mut self.config;
        if num_uavs != c.uav_init_positions.len() {
            c.uav_init_positions = (0..num_uavs)
                .map(|m| {
                    let frac = (m as f64 + 1.0) / (num_uavs as f64 + 1.0);
                    (frac * c.area_x, frac * c.area_y)
                })
                .collect();
        }
        c.num_uavs = num_uavs;
        c.num_users = num_users;
        c.num_slots = num_slots;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let c = &self.config;
        if c.num_uavs < 1 {
            return Err(invalid("num_uavs must be ≥ 1"));
        }
        if c.num_users < 1 {
            return Err(invalid("num_users must be ≥ 1"));
        }
        if c.num_slots < 1 {
            return Err(invalid("num_slots must be ≥ 1"));
        }
        positive("slot_duration_s", c.slot_dur)?;
        positive("area_x_m", c.area_x)?;
        positive("area_y_m", c.area_y)?;
        positive("altitude_m", c.altitude)?;
        positive("v_max_mps", c.v_max)?;
        positive("d_min_m", c.d_min)?;
        positive("r_max_m", c.r_max)?;
        if c.uav_init_positions.len() != c.num_uavs {
            return Err(invalid(format!(
                "uav_init_positions_m has {} entries, expected num_uavs = {}",
                c.uav_init_positions.len(),
                c.num_uavs
            )));
        }
        for (i, &(x, y)) in c.uav_init_positions.iter().enumerate() {
            if !(x.is_finite() && y.is_finite() && (0.0..=c.area_x).contains(&x) && (0.0..=c.area_y).contains(&y)) {
                return Err(invalid(format!("uav_init_positions_m entry {i} lies outside the area")));
            }
        }
        for i in 0..c.num_uavs {
            for j in (i + 1)..c.num_uavs {
                let (a, b) = (c.uav_init_positions[i], c.uav_init_positions[j]);
                if (a.0 - b.0).hypot(a.1 - b.1) < c.d_min {
                    return Err(invalid(format!(
                        "uav_init_positions_m entries {i} and {j} are closer than d_min_m"
                    )));
                }
            }
        }

        let ch = &self.channel;
        positive("los_a", ch.a)?;
        positive("los_b", ch.b)?;
        positive("carrier_freq_hz", ch.carrier_freq)?;
        positive("light_speed_mps", ch.light_speed)?;
        positive("bandwidth_max_hz", ch.b_max)?;
        positive("tx_power", ch.tx_power)?;
        positive("noise_power", ch.noise_power)?;
        if !(ch.eta_los >= 0.0 && ch.eta_nlos >= ch.eta_los) {
            return Err(invalid("eta_nlos_db must be ≥ eta_los_db ≥ 0"));
        }

        let cp = &self.compute;
        positive("switch_capacitance", cp.switch_cap)?;
        positive("cpu_freq_max_hz", cp.f_max)?;
        positive("bits_per_mb", cp.bits_per_mb)?;
        let (lo, hi) = cp.task_size_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid("task_size_min_mb must satisfy 0 < min ≤ task_size_max_mb"));
        }
        let (lo, hi) = cp.task_density_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(invalid(
                "task_density_min_cycles_per_bit must satisfy 0 < min ≤ task_density_max_cycles_per_bit",
            ));
        }

        let p = &self.propulsion;
        for (name, v) in [
            ("blade_profile_power_w", p.p0),
            ("induced_power_w", p.p1),
            ("tip_speed_mps", p.tip_speed),
            ("drag_ratio", p.drag_ratio),
            ("air_density_kg_per_m3", p.air_density),
            ("rotor_solidity", p.rotor_solidity),
            ("rotor_disk_area_m2", p.disk_area),
            ("induced_speed_mps", p.induced_speed),
        ] {
            positive(name, v)?;
        }

        positive("carbon_kg_per_wh", self.carbon.kg_per_wh)?;
        positive("wh_per_joule", self.carbon.wh_per_joule)?;
        Ok(())
    }

    /// Parse and validate a scenario document. Keys absent from the document
    /// are an error; every key must be known.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut kv = std::collections::BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
                line: idx + 1,
                msg: "expected `key = value`".into(),
            })?;
            let key = k.trim().to_string();
            if kv.insert(key.clone(), (idx + 1, v.trim().to_string())).is_some() {
                return Err(ScenarioError::Parse { line: idx + 1, msg: format!("duplicate key `{key}`") });
            }
        }
        let mut r = Reader { kv };

        let config = ScenarioConfig {
            num_uavs: r.count("num_uavs")?,
            num_users: r.count("num_users")?,
            num_slots: r.count("num_slots")?,
            slot_dur: r.num("slot_duration_s")?,
            area_x: r.num("area_x_m")?,
            area_y: r.num("area_y_m")?,
            altitude: r.num("altitude_m")?,
            v_max: r.num("v_max_mps")?,
            d_min: r.num("d_min_m")?,
            r_max: r.num("r_max_m")?,
            uav_init_positions: r.points("uav_init_positions_m")?,
            user_cap_per_uav: r.count("user_cap_per_uav")?,
        };
        let channel = ChannelParams {
            a: r.num("los_a")?,
            b: r.num("los_b")?,
            carrier_freq: r.num("carrier_freq_hz")?,
            light_speed: r.num("light_speed_mps")?,
            eta_los: r.num("eta_los_db")?,
            eta_nlos: r.num("eta_nlos_db")?,
            b_max: r.num("bandwidth_max_hz")?,
            tx_power: r.power("tx_power")?,
            noise_power: r.power("noise_power")?,
        };
        let compute = ComputeParams {
            switch_cap: r.num("switch_capacitance")?,
            f_max: r.num("cpu_freq_max_hz")?,
            task_size_range: (r.num("task_size_min_mb")?, r.num("task_size_max_mb")?),
            task_density_range: (
                r.num("task_density_min_cycles_per_bit")?,
                r.num("task_density_max_cycles_per_bit")?,
            ),
            bits_per_mb: r.num("bits_per_mb")?,
        };
        let propulsion = PropulsionParams {
            p0: r.num("blade_profile_power_w")?,
            p1: r.num("induced_power_w")?,
            tip_speed: r.num("tip_speed_mps")?,
            drag_ratio: r.num("drag_ratio")?,
            air_density: r.num("air_density_kg_per_m3")?,
            rotor_solidity: r.num("rotor_solidity")?,
            disk_area: r.num("rotor_disk_area_m2")?,
            induced_speed: r.num("induced_speed_mps")?,
        };
        let carbon = CarbonParams {
            kg_per_wh: r.num("carbon_kg_per_wh")?,
            wh_per_joule: r.num("wh_per_joule")?,
        };
        if let Some((key, (line, _))) = r.kv.into_iter().next() {
            return Err(ScenarioError::Parse { line, msg: format!("unknown key `{key}`") });
        }
        let s = Scenario { config, channel, compute, propulsion, carbon };
        s.validate()?;
        Ok(s)
    }

    /// Serialize to the scenario document format. Floats are written in their
    /// shortest round-trip form so `parse(to_text(s)) == s` bit for bit.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("num_uavs", c.num_uavs.to_string());
        put("num_users", c.num_users.to_string());
        put("num_slots", c.num_slots.to_string());
        put("slot_duration_s", fmt(c.slot_dur));
        put("area_x_m", fmt(c.area_x));
        put("area_y_m", fmt(c.area_y));
        put("altitude_m", fmt(c.altitude));
        put("v_max_mps", fmt(c.v_max));
        put("d_min_m", fmt(c.d_min));
        put("r_max_m", fmt(c.r_max));
        put(
            "uav_init_positions_m",
            c.uav_init_positions
                .iter()
                .map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y)))
                .collect::<Vec<_>>()
                .join("; "),
        );
        put("user_cap_per_uav", c.user_cap_per_uav.to_string());
        let ch = &self.channel;
        put("los_a", fmt(ch.a));
        put("los_b", fmt(ch.b));
        put("carrier_freq_hz", fmt(ch.carrier_freq));
        put("light_speed_mps", fmt(ch.light_speed));
        put("eta_los_db", fmt(ch.eta_los));
        put("eta_nlos_db", fmt(ch.eta_nlos));
        put("bandwidth_max_hz", fmt(ch.b_max));
        put("tx_power_w", fmt(ch.tx_power));
        put("noise_power_w", fmt(ch.noise_power));
        let cp = &self.compute;
        put("switch_capacitance", fmt(cp.switch_cap));
        put("cpu_freq_max_hz", fmt(cp.f_max));
        put("task_size_min_mb", fmt(cp.task_size_range.0));
        put("task_size_max_mb", fmt(cp.task_size_range.1));
        put("task_density_min_cycles_per_bit", fmt(cp.task_density_range.0));
        put("task_density_max_cycles_per_bit", fmt(cp.task_density_range.1));
        put("bits_per_mb", fmt(cp.bits_per_mb));
        let p = &self.propulsion;
        put("blade_profile_power_w", fmt(p.p0));
        put("induced_power_w", fmt(p.p1));
        put("tip_speed_mps", fmt(p.tip_speed));
        put("drag_ratio", fmt(p.drag_ratio));
        put("air_density_kg_per_m3", fmt(p.air_density));
        put("rotor_solidity", fmt(p.rotor_solidity));
        put("rotor_disk_area_m2", fmt(p.disk_area));
        put("induced_speed_mps", fmt(p.induced_speed));
        put("carbon_kg_per_wh", fmt(self.carbon.kg_per_wh));
        put("wh_per_joule", fmt(self.carbon.wh_per_joule));
        out
    }
}

/// Read and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Scenario::parse(&text)
}

fn fmt(v: f64) -> String {
    // `{:?}` is the shortest representation that parses back to the same bits.
    format!("{v:?}")
}

fn positive(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be > 0 (got {v})")))
    }
}

struct Reader {
    kv: std::collections::BTreeMap<String, (usize, String)>,
}

impl Reader {
    fn take(&mut self, key: &'static str) -> Result<(usize, String), ScenarioError> {
        self.kv.remove(key).ok_or(ScenarioError::Missing(key))
    }

    fn num(&mut self, key: &'static str) -> Result<f64, ScenarioError> {
        let (line, v) = self.take(key)?;
        parse_f64(line, key, &v)
    }

    fn count(&mut self, key: &'static str) -> Result<usize, ScenarioError> {
        let (line, v) = self.take(key)?;
        v.parse::<usize>().map_err(|_| ScenarioError::Parse {
            line,
            msg: format!("`{key}` expects a non-negative integer, got `{v}`"),
        })
    }

    /// `<base>_dbm` or `<base>_w`, exactly one of them.
    fn power(&mut self, base: &'static str) -> Result<f64, ScenarioError> {
        let dbm_key = format!("{base}_dbm");
        let w_key = format!("{base}_w");
        match (self.kv.remove(&dbm_key), self.kv.remove(&w_key)) {
            (Some((line, v)), None) => Ok(dbm_to_watts(parse_f64(line, &dbm_key, &v)?)),
            (None, Some((line, v))) => parse_f64(line, &w_key, &v),
            (Some((line, _)), Some(_)) => Err(ScenarioError::Parse {
                line,
                msg: format!("give either `{dbm_key}` or `{w_key}`, not both"),
            }),
            (None, None) => Err(ScenarioError::Invalid(format!("missing key `{dbm_key}` (or `{w_key}`)"))),
        }
    }

    fn points(&mut self, key: &'static str) -> Result<Vec<(f64, f64)>, ScenarioError> {
        let (line, v) = self.take(key)?;
        v.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (x, y) = pair.split_once(',').ok_or_else(|| ScenarioError::Parse {
                    line,
                    msg: format!("`{key}` expects `x,y; x,y; ...`"),
                })?;
                Ok((parse_f64(line, key, x.trim())?, parse_f64(line, key, y.trim())?))
            })
            .collect()
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ScenarioError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ScenarioError::Parse { line, msg: format!("`{key}` expects a finite number, got `{v}`") })
}
