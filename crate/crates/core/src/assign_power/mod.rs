//! Association, subchannel, charging and power decisions for fixed drone
//! positions.

mod binaries;
mod charge;
mod power;
mod sca;

use serde::{Deserialize, Serialize};

pub use binaries::{assign_binaries, greedy_binaries, AssignMode, Assignment};
pub use charge::{charge_decisions, charge_indicator_admissible};
pub use power::{achieved_rates, solve_power_given_binaries, Infeasibility, PowerSolution, ScaState};
pub use sca::{rate_split, sca_upper_bound_r2};

use crate::error::ValidationErrors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstraintParams {
    /// Minimum per-user rate (bps/Hz).
    pub min_rate: f64,
    /// Backhaul sum-rate cap (bps/Hz); diagnostic only.
    pub backhaul_rate: f64,
    pub subchannels: usize,
    /// Per-drone transmit power cap (W).
    pub max_power: f64,
}

impl Default for RateConstraintParams {
    fn default() -> Self {
        Self { min_rate: 0.5, backhaul_rate: 10.0, subchannels: 12, max_power: 1.0 }
    }
}

impl RateConstraintParams {
    pub(crate) fn validate_into(&self, users: usize, drones: usize, errs: &mut ValidationErrors) {
        errs.check(self.min_rate > 0.0, || format!("rate.min_rate must be > 0 (got {})", self.min_rate));
        errs.check(self.max_power > 0.0, || format!("rate.max_power must be > 0 (got {})", self.max_power));
        errs.check(self.backhaul_rate >= 0.0, || {
            format!("rate.backhaul_rate must be >= 0 (got {})", self.backhaul_rate)
        });
        if drones > 0 {
            let need = users.div_ceil(drones);
            errs.check(self.subchannels >= need, || {
                format!(
                    "subchannels ({}) < ceil(users / drones) = {need}: not every user can get its own subchannel",
                    self.subchannels
                )
            });
        }
    }
}

/// Tuning of the allocation solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative objective improvement that ends the convexification loop.
    pub sca_tolerance: f64,
    pub max_sca_iters: usize,
    /// Relative duality-gap target of each convex subproblem.
    pub inner_tolerance: f64,
    /// Per-stream starting power (W).
    pub initial_power: f64,
    /// Improvement passes over association/subchannel moves.
    pub local_search_passes: usize,
    /// Enumerate binaries outright when the candidate count is at most this.
    pub exhaustive_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sca_tolerance: 1e-4,
            max_sca_iters: 50,
            inner_tolerance: 1e-6,
            initial_power: 0.1,
            local_search_passes: 2,
            exhaustive_limit: 256,
        }
    }
}

impl SolverConfig {
    pub(crate) fn validate_into(&self, errs: &mut ValidationErrors) {
        errs.check(self.sca_tolerance > 0.0, || "solver.sca_tolerance must be > 0".into());
        errs.check(self.max_sca_iters >= 1, || "solver.max_sca_iters must be >= 1".into());
        errs.check(self.inner_tolerance > 0.0, || "solver.inner_tolerance must be > 0".into());
        errs.check(self.initial_power > 0.0, || "solver.initial_power must be > 0".into());
    }
}

/// Product variable standing in for `psi * phi` in the linear model.
pub fn linearized_product(psi: bool, phi: bool) -> f64 {
    if psi && phi {
        1.0
    } else {
        0.0
    }
}

/// Envelope of the binary product `w = psi * phi`:
/// `w <= psi`, `w <= phi`, `w >= psi + phi - 1`, `0 <= w <= 1`.
pub fn product_envelope_admits(psi: bool, phi: bool, w: f64) -> bool {
    let (a, b) = (psi as u8 as f64, phi as u8 as f64);
    (0.0..=1.0).contains(&w) && w <= a && w <= b && w >= a + b - 1.0
}

/// Linear form of the power coupling: envelope on `w`, then
/// `0 <= p <= w * p_max`.
pub fn linearized_admits(psi: bool, phi: bool, w: f64, p: f64, max_power: f64) -> bool {
    product_envelope_admits(psi, phi, w) && p >= 0.0 && p <= w * max_power
}

/// Whether some product variable `w` makes `p` admissible in the linear
/// model. For binary inputs the envelope pins `w` to `psi * phi`.
pub fn linearized_feasible(psi: bool, phi: bool, p: f64, max_power: f64) -> bool {
    let (a, b) = (psi as u8 as f64, phi as u8 as f64);
    let lo = (a + b - 1.0).max(0.0);
    let hi = a.min(b);
    lo <= hi && linearized_admits(psi, phi, hi, p, max_power)
}

/// Bilinear coupling `0 <= p <= psi * phi * p_max`.
pub fn product_bound_admits(psi: bool, phi: bool, p: f64, max_power: f64) -> bool {
    let w = (psi as u8 * phi as u8) as f64;
    p >= 0.0 && p <= w * max_power
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackhaulCheck {
    pub within_cap: bool,
    pub sum_rate: f64,
}

/// Sum-rate diagnostic against the backhaul cap. Never constrains the solve.
pub fn check_backhaul(user_rates: &[f64], rcp: &RateConstraintParams) -> BackhaulCheck {
    let sum_rate: f64 = user_rates.iter().sum();
    BackhaulCheck { within_cap: sum_rate <= rcp.backhaul_rate, sum_rate }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_pins_product_variable() {
        for psi in [false, true] {
            for phi in [false, true] {
                let w = linearized_product(psi, phi);
                assert!(product_envelope_admits(psi, phi, w));
                let other = 1.0 - w;
                assert!(!product_envelope_admits(psi, phi, other));
            }
        }
    }

    /// The three inequalities applied to `p` itself, without a product
    /// variable, pin `p` to `p_max` whenever both binaries are set.
    #[test]
    fn direct_inequalities_on_power_are_not_equivalent() {
        let direct = |psi: f64, phi: f64, p: f64| p <= psi && p <= phi && p >= psi + phi - 1.0;
        assert!(product_bound_admits(true, true, 0.3, 1.0));
        assert!(!direct(1.0, 1.0, 0.3));
        assert!(linearized_feasible(true, true, 0.3, 1.0));
    }

    #[test]
    fn backhaul_examples() {
        let r = RateConstraintParams::default();
        assert_eq!(check_backhaul(&[], &r), BackhaulCheck { within_cap: true, sum_rate: 0.0 });
        let eight = check_backhaul(&[0.5; 8], &r);
        assert!(eight.within_cap);
        assert_eq!(eight.sum_rate, 4.0);
        assert!(!check_backhaul(&[6.0, 6.0], &r).within_cap);
    }

    #[test]
    fn subchannel_count_validation() {
        let mut errs = ValidationErrors(vec![]);
        RateConstraintParams { subchannels: 2, ..Default::default() }.validate_into(12, 4, &mut errs);
        assert_eq!(errs.0.len(), 1);
        assert!(errs.0[0].contains("subchannels"));
    }
}
