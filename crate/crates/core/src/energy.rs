//! Drone energy consumption and battery recursions.
//!
//! All energies are joules and all durations seconds. Hover and transmit
//! terms are charged per time block: hover for `T_n - T_move`, transmit for
//! the full `T_n`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::error::{Error, Result, ValidationErrors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Total take-off mass (kg).
    pub mass: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Air density (kg/m³).
    pub air_density: f64,
    /// Propeller radius (m).
    pub propeller_radius: f64,
    pub propeller_count: u32,
    /// Hardware power at full speed (W).
    pub power_full: f64,
    /// Hardware power when idle (W).
    pub power_idle: f64,
    /// Maximum horizontal speed (m/s).
    pub max_speed: f64,
    /// Time spent moving within a block (s).
    pub move_time: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            mass: 1.25,
            gravity: 9.81,
            air_density: 1.225,
            propeller_radius: 0.127,
            propeller_count: 4,
            power_full: 5.0,
            power_idle: 0.0,
            max_speed: 20.0,
            move_time: 30.0,
        }
    }
}

impl EnergyParams {
    /// Powering-drone variant: same airframe constants, twice the mass.
    pub fn powering_drone(&self) -> Self {
        Self { mass: 2.0 * self.mass, ..*self }
    }

    /// Distance a drone can cover within one block (m).
    pub fn reach(&self) -> f64 {
        self.max_speed * self.move_time
    }

    pub(crate) fn validate_into(&self, name: &str, tg: &TimeGrid, errs: &mut ValidationErrors) {
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("air_density", self.air_density),
            ("propeller_radius", self.propeller_radius),
            ("power_full", self.power_full),
            ("max_speed", self.max_speed),
            ("move_time", self.move_time),
        ];
        for (field, v) in positive {
            errs.check(v > 0.0 && v.is_finite(), || format!("{name}.{field} must be > 0 (got {v})"));
        }
        errs.check(self.propeller_count > 0, || format!("{name}.propeller_count must be > 0"));
        errs.check(self.power_idle >= 0.0, || {
            format!("{name}.power_idle must be >= 0 (got {})", self.power_idle)
        });
        errs.check(self.power_full >= self.power_idle, || {
            format!(
                "{name}.power_full ({}) must be >= power_idle ({})",
                self.power_full, self.power_idle
            )
        });
        errs.check(self.move_time <= tg.block_duration, || {
            format!(
                "{name}.move_time ({} s) exceeds the block duration ({} s)",
                self.move_time, tg.block_duration
            )
        });
    }
}

/// Battery capacities and thresholds (J), plus the big-M constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub cdbs_initial: f64,
    pub pd_initial: f64,
    pub cdbs_threshold: f64,
    pub pd_threshold: f64,
    pub charge_per_block: f64,
    /// Big-M constant of the charging indicator constraints, expressed
    /// against battery levels in kJ.
    pub big_m: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            cdbs_initial: 200e3,
            pd_initial: 400e3,
            cdbs_threshold: 100e3,
            pd_threshold: 100e3,
            charge_per_block: 50e3,
            big_m: 1e6,
        }
    }
}

impl BatteryParams {
    pub(crate) fn validate_into(&self, errs: &mut ValidationErrors) {
        errs.check(self.cdbs_threshold > 0.0 && self.cdbs_threshold < self.cdbs_initial, || {
            format!(
                "battery: need 0 < cdbs threshold ({} J) < cdbs initial ({} J)",
                self.cdbs_threshold, self.cdbs_initial
            )
        });
        errs.check(self.pd_threshold > 0.0 && self.pd_threshold < self.pd_initial, || {
            format!(
                "battery: need 0 < pd threshold ({} J) < pd initial ({} J)",
                self.pd_threshold, self.pd_initial
            )
        });
        errs.check(self.charge_per_block > 0.0, || {
            format!("battery: charge per block must be > 0 (got {} J)", self.charge_per_block)
        });
        let th_kj = self.cdbs_threshold / 1e3;
        errs.check(self.big_m >= 1e3 * th_kj, || {
            format!(
                "battery: big_m ({}) must be at least 1000x the cdbs threshold in kJ ({th_kj})",
                self.big_m
            )
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub blocks: usize,
    /// Duration of one block (s).
    pub block_duration: f64,
    /// Total horizon (s).
    pub horizon: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { blocks: 6, block_duration: 480.0, horizon: 2880.0 }
    }
}

impl TimeGrid {
    /// Grid of `blocks` blocks of `block_duration` seconds.
    pub fn new(blocks: usize, block_duration: f64) -> Self {
        Self { blocks, block_duration, horizon: blocks as f64 * block_duration }
    }

    pub(crate) fn validate_into(&self, errs: &mut ValidationErrors) {
        errs.check(self.blocks >= 1, || "time.blocks must be >= 1".into());
        errs.check(self.block_duration > 0.0, || {
            format!("time.block_duration must be > 0 (got {})", self.block_duration)
        });
        let expect = self.blocks as f64 * self.block_duration;
        errs.check((self.horizon - expect).abs() <= 1e-9 * expect.abs().max(1.0), || {
            format!(
                "time: horizon ({} s) must equal blocks x block_duration ({} x {} = {} s)",
                self.horizon, self.blocks, self.block_duration, expect
            )
        });
    }
}

/// Hardware energy for one block at speed `v`.
pub fn hardware_energy(v: f64, ep: &EnergyParams) -> Result<f64> {
    // Velocities come from displacement / T_move and can overshoot by an ulp.
    let slack = 1e-9 * ep.max_speed;
    if !(v >= -slack && v <= ep.max_speed + slack) {
        return Err(Error::SpeedOutOfRange { speed: v, max: ep.max_speed });
    }
    let v = v.clamp(0.0, ep.max_speed);
    Ok(((ep.power_full - ep.power_idle) / ep.max_speed * v + ep.power_idle) * ep.move_time)
}

/// Induced hover power (W).
pub fn hover_power(ep: &EnergyParams) -> f64 {
    let weight = ep.mass * ep.gravity;
    let disc = 2.0 * PI * ep.propeller_radius * ep.propeller_radius * ep.propeller_count as f64 * ep.air_density;
    (weight * weight * weight / disc).sqrt()
}

/// Hover energy for one block.
pub fn hover_energy(ep: &EnergyParams, tg: &TimeGrid) -> f64 {
    hover_power(ep) * (tg.block_duration - ep.move_time)
}

/// Transmit energy spent by drone `d` over one block.
pub fn transmit_energy(alloc: &Allocation, d: usize, tg: &TimeGrid) -> f64 {
    alloc.drone_power(d) * tg.block_duration
}

/// Energy consumed by one drone in one block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockEnergy {
    pub hardware: f64,
    pub hover: f64,
    pub transmit: f64,
}

impl BlockEnergy {
    pub fn total(&self) -> f64 {
        self.hardware + self.hover + self.transmit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryStep {
    /// New level, floored at zero.
    pub level: f64,
    /// The unfloored level went negative.
    pub depleted: bool,
}

impl BatteryStep {
    fn floored(raw: f64) -> Self {
        if raw < 0.0 {
            Self { level: 0.0, depleted: true }
        } else {
            Self { level: raw, depleted: false }
        }
    }
}

/// Communication-drone battery after one block.
pub fn cdbs_battery_step(prev: f64, used: &BlockEnergy, charged: bool, bp: &BatteryParams) -> BatteryStep {
    let gain = if charged { bp.charge_per_block } else { 0.0 };
    BatteryStep::floored(prev - used.total() + gain)
}

/// Powering-drone battery after one block in which it delivered
/// `charges` charging sessions.
pub fn pd_battery_step(prev: f64, used: &BlockEnergy, charges: usize, bp: &BatteryParams) -> BatteryStep {
    BatteryStep::floored(prev - used.total() - charges as f64 * bp.charge_per_block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Airframe used by the worked examples: 1.5 kg quadcopter.
    fn quad_1500g() -> EnergyParams {
        EnergyParams { mass: 1.5, ..EnergyParams::default() }
    }

    #[test]
    fn hardware_energy_examples() {
        let ep = EnergyParams { power_idle: 0.0, ..quad_1500g() };
        assert_eq!(hardware_energy(0.0, &ep).unwrap(), 0.0);
        assert_relative_eq!(hardware_energy(20.0, &ep).unwrap(), 5.0 * 30.0, max_relative = 1e-15);
        assert_relative_eq!(hardware_energy(10.0, &ep).unwrap(), 75.0, max_relative = 1e-15);
        assert!(matches!(hardware_energy(20.5, &ep), Err(Error::SpeedOutOfRange { .. })));
        assert!(hardware_energy(-1.0, &ep).is_err());
    }

    #[test]
    fn hover_power_examples() {
        let ep = quad_1500g();
        // sqrt((1.5*9.81)^3 / (2*pi*0.127^2*4*1.225))
        assert_relative_eq!(hover_power(&ep), 80.10298580032313, max_relative = 1e-12);
        let heavy = EnergyParams { mass: 3.0, ..ep };
        assert_relative_eq!(hover_power(&heavy) / hover_power(&ep), 2f64.powf(1.5), max_relative = 1e-12);
        let big = EnergyParams { propeller_radius: 2.0 * ep.propeller_radius, ..ep };
        assert_relative_eq!(hover_power(&big) / hover_power(&ep), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn hover_energy_examples() {
        let ep = quad_1500g();
        let tg = TimeGrid::default();
        assert_relative_eq!(hover_energy(&ep, &tg), 36046.343610145406, max_relative = 1e-12);
        let still = EnergyParams { move_time: 480.0, ..ep };
        assert_eq!(hover_energy(&still, &tg), 0.0);
        let half = TimeGrid::new(6, 255.0);
        assert_relative_eq!(hover_energy(&ep, &half) * 2.0, hover_energy(&ep, &tg), max_relative = 1e-12);
    }

    #[test]
    fn transmit_energy_examples() {
        let tg = TimeGrid::default();
        let mut a = Allocation::new(1, 1, 2);
        assert_eq!(transmit_energy(&a, 0, &tg), 0.0);
        a.set_power(0, 0, 0, 0.1);
        assert_relative_eq!(transmit_energy(&a, 0, &tg), 48.0, max_relative = 1e-12);
        a.set_power(0, 0, 1, 0.1);
        assert_relative_eq!(transmit_energy(&a, 0, &tg), 96.0, max_relative = 1e-12);
    }

    #[test]
    fn cdbs_step_examples() {
        let bp = BatteryParams::default();
        let ep = quad_1500g();
        let tg = TimeGrid::default();
        let used = BlockEnergy { hardware: 0.0, hover: hover_energy(&ep, &tg), transmit: 0.0 };
        let s = cdbs_battery_step(200e3, &used, false, &bp);
        assert_relative_eq!(s.level, 163953.6563898546, max_relative = 1e-12);
        let c = cdbs_battery_step(200e3, &used, true, &bp);
        assert_relative_eq!(c.level - s.level, 50e3, max_relative = 1e-12);
        let idle = cdbs_battery_step(123.0, &BlockEnergy::default(), false, &bp);
        assert_eq!(idle, BatteryStep { level: 123.0, depleted: false });
        let dead = cdbs_battery_step(10.0, &used, false, &bp);
        assert_eq!(dead, BatteryStep { level: 0.0, depleted: true });
    }

    #[test]
    fn pd_step_examples() {
        let bp = BatteryParams::default();
        let pd = quad_1500g().powering_drone();
        let tg = TimeGrid::default();
        let used = BlockEnergy { hardware: 0.0, hover: hover_energy(&pd, &tg), transmit: 0.0 };
        assert_relative_eq!(used.hover, 101954.45601485678, max_relative = 1e-12);
        let s = pd_battery_step(400e3, &used, 1, &bp);
        assert_relative_eq!(s.level, 248045.5439851432, max_relative = 1e-12);
        assert_eq!(pd_battery_step(400e3, &BlockEnergy::default(), 0, &bp).level, 400e3);
        let two = pd_battery_step(400e3, &used, 2, &bp);
        assert_relative_eq!(s.level - two.level, bp.charge_per_block, max_relative = 1e-12);
    }

    #[test]
    fn time_grid_invariant() {
        let mut errs = ValidationErrors(vec![]);
        TimeGrid { blocks: 6, block_duration: 480.0, horizon: 2000.0 }.validate_into(&mut errs);
        assert_eq!(errs.0.len(), 1);
    }
}
