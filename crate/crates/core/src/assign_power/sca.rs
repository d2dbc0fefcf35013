//! Difference-of-concave split of the per-subchannel rate and the
//! first-order upper bound on its subtracted term.

use std::f64::consts::LN_2;

use crate::allocation::{Allocation, GainTable};

/// Received power at user `u` on subchannel `m`, optionally skipping the
/// user's own streams.
fn received(u: usize, m: usize, powers: &Allocation, gains: &GainTable, include_own: bool) -> f64 {
    let mut acc = 0.0;
    for i in 0..powers.users() {
        if i == u && !include_own {
            continue;
        }
        for j in 0..powers.drones() {
            let p = powers.power(i, j, m);
            if p != 0.0 {
                acc += p * gains.get(u, j);
            }
        }
    }
    acc
}

/// `(R1, R2)` with `R1 - R2` the rate of user `u` on subchannel `m`.
///
/// `R1 = log2(total received + noise)`, `R2 = log2(interference + noise)`.
pub fn rate_split(u: usize, m: usize, powers: &Allocation, gains: &GainTable, noise: f64) -> (f64, f64) {
    let r1 = (received(u, m, powers, gains, true) + noise).log2();
    let r2 = (received(u, m, powers, gains, false) + noise).log2();
    (r1, r2)
}

/// Tangent-plane upper bound of `R2` taken at `p_ref`, evaluated at `powers`.
///
/// `R2` is concave in the powers, so the bound is tight at `p_ref` and
/// never below `R2` anywhere in the nonnegative orthant.
pub fn sca_upper_bound_r2(
    u: usize,
    m: usize,
    powers: &Allocation,
    p_ref: &Allocation,
    gains: &GainTable,
    noise: f64,
) -> f64 {
    let base = received(u, m, p_ref, gains, false) + noise;
    let scale = 1.0 / (LN_2 * base);
    let mut lin = 0.0;
    for i in (0..powers.users()).filter(|&i| i != u) {
        for j in 0..powers.drones() {
            let g = gains.get(u, j);
            lin += g * scale * (powers.power(i, j, m) - p_ref.power(i, j, m));
        }
    }
    base.log2() + lin
}
