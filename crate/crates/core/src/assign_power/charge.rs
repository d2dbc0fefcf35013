use rand::Rng;

use crate::energy::BatteryParams;

/// Charging indicators for one block.
///
/// A drone qualifies when its battery is at or below the threshold. The
/// powering drone serves one drone per block, so when several qualify one
/// is drawn uniformly from `rng`.
pub fn charge_decisions<R: Rng + ?Sized>(batteries: &[f64], bp: &BatteryParams, rng: &mut R) -> Vec<bool> {
    let qualifying: Vec<usize> = batteries
        .iter()
        .enumerate()
        .filter(|(_, &b)| b <= bp.cdbs_threshold)
        .map(|(d, _)| d)
        .collect();
    let mut beta = vec![false; batteries.len()];
    match qualifying.len() {
        0 => {}
        1 => beta[qualifying[0]] = true,
        n => beta[qualifying[rng.gen_range(0..n)]] = true,
    }
    beta
}

/// Big-M pair on a charging indicator, battery in joules:
/// `beta >= (B_th - B) / Q` and `beta <= B_th / B`, both in kJ.
pub fn charge_indicator_admissible(beta: bool, battery: f64, bp: &BatteryParams) -> bool {
    let b = if beta { 1.0 } else { 0.0 };
    let (level, th) = (battery / 1e3, bp.cdbs_threshold / 1e3);
    let lower = b >= (th - level) / bp.big_m;
    let upper = b * level <= th;
    lower && upper
}
