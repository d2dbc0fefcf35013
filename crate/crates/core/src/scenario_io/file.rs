//! TOML scenario documents.
//!
//! Every key is optional; missing keys take the built-in defaults. Lengths
//! are meters, durations seconds, powers watts, rates bps/Hz and battery
//! levels kilojoules. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assign_power::{RateConstraintParams, SolverConfig};
use crate::channel::{ChannelParams, Point, UserEquipment};
use crate::energy::{BatteryParams, EnergyParams, TimeGrid};
use crate::error::{Error, Result, ValidationErrors};
use crate::orchestrator::{random_users, DepletionPolicy, Scenario, DEFAULT_SEED, DEFAULT_USERS};
use crate::placement::{Area, SearchConfig, SearchMode};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: Option<u64>,
    pub drones: Option<usize>,
    pub pd_pool: Option<usize>,
    pub subchannels: Option<usize>,
    /// Random users to draw when no explicit list is given.
    pub num_users: Option<usize>,
    /// Explicit user coordinates, `[[x, y], ...]`.
    pub users: Option<Vec<[f64; 2]>>,
    pub depletion_policy: Option<DepletionPolicy>,
    pub transit_distance: Option<f64>,
    pub pd_dock: Option<[f64; 2]>,
    pub area: Option<AreaSection>,
    pub channel: Option<ChannelSection>,
    pub energy: Option<EnergySection>,
    /// Powering-drone airframe; unset keys inherit from `energy` with the
    /// mass doubled.
    pub pd_energy: Option<EnergySection>,
    pub battery: Option<BatterySection>,
    pub time: Option<TimeSection>,
    pub rate: Option<RateSection>,
    pub search: Option<SearchSection>,
    pub solver: Option<SolverSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaSection {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub rho_o: Option<f64>,
    pub ref_distance: Option<f64>,
    pub noise_power: Option<f64>,
    pub altitude: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub mass: Option<f64>,
    pub gravity: Option<f64>,
    pub air_density: Option<f64>,
    pub propeller_radius: Option<f64>,
    pub propeller_count: Option<u32>,
    pub power_full: Option<f64>,
    pub power_idle: Option<f64>,
    pub max_speed: Option<f64>,
    pub move_time: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySection {
    pub cdbs_initial_kj: Option<f64>,
    pub pd_initial_kj: Option<f64>,
    pub cdbs_threshold_kj: Option<f64>,
    pub pd_threshold_kj: Option<f64>,
    pub charge_per_block_kj: Option<f64>,
    pub big_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub blocks: Option<usize>,
    pub block_duration: Option<f64>,
    /// Defaults to `blocks * block_duration`.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub min_rate: Option<f64>,
    pub backhaul_rate: Option<f64>,
    pub max_power: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub particles: Option<usize>,
    pub shrink_factor: Option<f64>,
    pub max_refines: Option<usize>,
    pub init_radius: Option<f64>,
    pub tolerance: Option<f64>,
    pub mode: Option<SearchMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub sca_tolerance: Option<f64>,
    pub max_sca_iters: Option<usize>,
    pub inner_tolerance: Option<f64>,
    pub initial_power: Option<f64>,
    pub local_search_passes: Option<usize>,
    pub exhaustive_limit: Option<usize>,
}

const KJ: f64 = 1e3;

impl EnergySection {
    fn resolve(&self, base: EnergyParams) -> EnergyParams {
        EnergyParams {
            mass: self.mass.unwrap_or(base.mass),
            gravity: self.gravity.unwrap_or(base.gravity),
            air_density: self.air_density.unwrap_or(base.air_density),
            propeller_radius: self.propeller_radius.unwrap_or(base.propeller_radius),
            propeller_count: self.propeller_count.unwrap_or(base.propeller_count),
            power_full: self.power_full.unwrap_or(base.power_full),
            power_idle: self.power_idle.unwrap_or(base.power_idle),
            max_speed: self.max_speed.unwrap_or(base.max_speed),
            move_time: self.move_time.unwrap_or(base.move_time),
        }
    }

    fn from_params(ep: &EnergyParams) -> Self {
        Self {
            mass: Some(ep.mass),
            gravity: Some(ep.gravity),
            air_density: Some(ep.air_density),
            propeller_radius: Some(ep.propeller_radius),
            propeller_count: Some(ep.propeller_count),
            power_full: Some(ep.power_full),
            power_idle: Some(ep.power_idle),
            max_speed: Some(ep.max_speed),
            move_time: Some(ep.move_time),
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario documents always serialize")
    }

    /// Fills defaults and validates.
    pub fn build(&self) -> Result<Scenario> {
        let d = Scenario::default();
        let seed = self.seed.unwrap_or(DEFAULT_SEED);

        let a = self.area.clone().unwrap_or_default();
        let area = Area {
            x_min: a.x_min.unwrap_or(d.area.x_min),
            x_max: a.x_max.unwrap_or(d.area.x_max),
            y_min: a.y_min.unwrap_or(d.area.y_min),
            y_max: a.y_max.unwrap_or(d.area.y_max),
        };

        let mut pre = ValidationErrors(Vec::new());
        let users = match &self.users {
            Some(list) => {
                if let Some(n) = self.num_users {
                    pre.check(n == list.len(), || {
                        format!("num_users ({n}) disagrees with the {} listed users", list.len())
                    });
                }
                list.iter()
                    .enumerate()
                    .map(|(id, &[x, y])| UserEquipment { id, position: Point::new(x, y) })
                    .collect()
            }
            None => random_users(self.num_users.unwrap_or(DEFAULT_USERS), &area, seed),
        };

        let c = self.channel.clone().unwrap_or_default();
        let channel = ChannelParams {
            rho_o: c.rho_o.unwrap_or(d.channel.rho_o),
            ref_distance: c.ref_distance.unwrap_or(d.channel.ref_distance),
            noise_power: c.noise_power.unwrap_or(d.channel.noise_power),
            altitude: c.altitude.unwrap_or(d.channel.altitude),
        };

        let cdbs_energy = self.energy.clone().unwrap_or_default().resolve(d.cdbs_energy);
        let pd_energy = self.pd_energy.clone().unwrap_or_default().resolve(cdbs_energy.powering_drone());

        let b = self.battery.clone().unwrap_or_default();
        let kj = |v: Option<f64>, default: f64| v.map_or(default, |x| x * KJ);
        let battery = BatteryParams {
            cdbs_initial: kj(b.cdbs_initial_kj, d.battery.cdbs_initial),
            pd_initial: kj(b.pd_initial_kj, d.battery.pd_initial),
            cdbs_threshold: kj(b.cdbs_threshold_kj, d.battery.cdbs_threshold),
            pd_threshold: kj(b.pd_threshold_kj, d.battery.pd_threshold),
            charge_per_block: kj(b.charge_per_block_kj, d.battery.charge_per_block),
            big_m: b.big_m.unwrap_or(d.battery.big_m),
        };

        let t = self.time.clone().unwrap_or_default();
        let blocks = t.blocks.unwrap_or(d.time.blocks);
        let block_duration = t.block_duration.unwrap_or(d.time.block_duration);
        let time = TimeGrid {
            blocks,
            block_duration,
            horizon: t.horizon.unwrap_or(blocks as f64 * block_duration),
        };

        let r = self.rate.clone().unwrap_or_default();
        let rate = RateConstraintParams {
            min_rate: r.min_rate.unwrap_or(d.rate.min_rate),
            backhaul_rate: r.backhaul_rate.unwrap_or(d.rate.backhaul_rate),
            subchannels: self.subchannels.unwrap_or(d.rate.subchannels),
            max_power: r.max_power.unwrap_or(d.rate.max_power),
        };

        let s = self.search.clone().unwrap_or_default();
        let search = SearchConfig {
            particles: s.particles.unwrap_or(d.search.particles),
            shrink_factor: s.shrink_factor.unwrap_or(d.search.shrink_factor),
            max_refines: s.max_refines.unwrap_or(d.search.max_refines),
            init_radius: s.init_radius.or(d.search.init_radius),
            tolerance: s.tolerance.unwrap_or(d.search.tolerance),
            mode: s.mode.unwrap_or(d.search.mode),
        };

        let v = self.solver.clone().unwrap_or_default();
        let solver = SolverConfig {
            sca_tolerance: v.sca_tolerance.unwrap_or(d.solver.sca_tolerance),
            max_sca_iters: v.max_sca_iters.unwrap_or(d.solver.max_sca_iters),
            inner_tolerance: v.inner_tolerance.unwrap_or(d.solver.inner_tolerance),
            initial_power: v.initial_power.unwrap_or(d.solver.initial_power),
            local_search_passes: v.local_search_passes.unwrap_or(d.solver.local_search_passes),
            exhaustive_limit: v.exhaustive_limit.unwrap_or(d.solver.exhaustive_limit),
        };

        let sc = Scenario {
            area,
            users,
            drones: self.drones.unwrap_or(d.drones),
            pd_pool: self.pd_pool.unwrap_or(d.pd_pool),
            channel,
            cdbs_energy,
            pd_energy,
            battery,
            time,
            rate,
            search,
            solver,
            transit_distance: self.transit_distance.unwrap_or(d.transit_distance),
            pd_dock: self.pd_dock.map_or(d.pd_dock, |[x, y]| Point::new(x, y)),
            depletion_policy: self.depletion_policy.unwrap_or(d.depletion_policy),
            seed,
        };
        if let Err(mut errs) = sc.validate() {
            pre.0.append(&mut errs.0);
        }
        pre.into_result()?;
        Ok(sc)
    }

    /// Fully explicit document describing `sc`.
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            seed: Some(sc.seed),
            drones: Some(sc.drones),
            pd_pool: Some(sc.pd_pool),
            subchannels: Some(sc.rate.subchannels),
            num_users: Some(sc.users.len()),
            users: Some(sc.users.iter().map(|u| [u.position.x, u.position.y]).collect()),
            depletion_policy: Some(sc.depletion_policy),
            transit_distance: Some(sc.transit_distance),
            pd_dock: Some([sc.pd_dock.x, sc.pd_dock.y]),
            area: Some(AreaSection {
                x_min: Some(sc.area.x_min),
                x_max: Some(sc.area.x_max),
                y_min: Some(sc.area.y_min),
                y_max: Some(sc.area.y_max),
            }),
            channel: Some(ChannelSection {
                rho_o: Some(sc.channel.rho_o),
                ref_distance: Some(sc.channel.ref_distance),
                noise_power: Some(sc.channel.noise_power),
                altitude: Some(sc.channel.altitude),
            }),
            energy: Some(EnergySection::from_params(&sc.cdbs_energy)),
            pd_energy: Some(EnergySection::from_params(&sc.pd_energy)),
            battery: Some(BatterySection {
                cdbs_initial_kj: Some(sc.battery.cdbs_initial / KJ),
                pd_initial_kj: Some(sc.battery.pd_initial / KJ),
                cdbs_threshold_kj: Some(sc.battery.cdbs_threshold / KJ),
                pd_threshold_kj: Some(sc.battery.pd_threshold / KJ),
                charge_per_block_kj: Some(sc.battery.charge_per_block / KJ),
                big_m: Some(sc.battery.big_m),
            }),
            time: Some(TimeSection {
                blocks: Some(sc.time.blocks),
                block_duration: Some(sc.time.block_duration),
                horizon: Some(sc.time.horizon),
            }),
            rate: Some(RateSection {
                min_rate: Some(sc.rate.min_rate),
                backhaul_rate: Some(sc.rate.backhaul_rate),
                max_power: Some(sc.rate.max_power),
            }),
            search: Some(SearchSection {
                particles: Some(sc.search.particles),
                shrink_factor: Some(sc.search.shrink_factor),
                max_refines: Some(sc.search.max_refines),
                init_radius: sc.search.init_radius,
                tolerance: Some(sc.search.tolerance),
                mode: Some(sc.search.mode),
            }),
            solver: Some(SolverSection {
                sca_tolerance: Some(sc.solver.sca_tolerance),
                max_sca_iters: Some(sc.solver.max_sca_iters),
                inner_tolerance: Some(sc.solver.inner_tolerance),
                initial_power: Some(sc.solver.initial_power),
                local_search_passes: Some(sc.solver.local_search_passes),
                exhaustive_limit: Some(sc.solver.exhaustive_limit),
            }),
        }
    }
}

/// Parses and builds a scenario from TOML text.
pub fn load_scenario_str(text: &str) -> Result<Scenario> {
    ScenarioFile::parse(text)?.build()
}

/// Reads, parses and builds a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    ScenarioFile::read(path)?.build()
}

/// TOML text that loads back to `sc`.
pub fn save_scenario(sc: &Scenario) -> String {
    ScenarioFile::from_scenario(sc).to_toml()
}
