//! Line-of-sight air-to-ground channel: distances, free-space gains, SINR
//! and per-subchannel rates.

use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, GainTable};
use crate::error::ValidationErrors;

/// Horizontal coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist_sq(other).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub id: usize,
    pub position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Unitless gain at the reference distance.
    pub rho_o: f64,
    /// Reference distance (m).
    pub ref_distance: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
    /// Flight altitude shared by all drones (m).
    pub altitude: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            rho_o: 0.01,
            ref_distance: 1.0,
            noise_power: 1e-10,
            altitude: 100.0,
        }
    }
}

impl ChannelParams {
    pub(crate) fn validate_into(&self, errs: &mut ValidationErrors) {
        errs.check(self.rho_o > 0.0, || format!("channel.rho_o must be > 0 (got {})", self.rho_o));
        errs.check(self.ref_distance > 0.0, || {
            format!("channel.ref_distance must be > 0 (got {})", self.ref_distance)
        });
        errs.check(self.noise_power > 0.0, || {
            format!("channel.noise_power must be > 0 (got {})", self.noise_power)
        });
        errs.check(self.altitude > 0.0, || {
            format!("channel.altitude must be > 0 (got {})", self.altitude)
        });
    }
}

/// Slant range from a drone at `drone` to a user at `user` (m).
pub fn distance(drone: Point, user: Point, cp: &ChannelParams) -> f64 {
    (cp.altitude * cp.altitude + drone.dist_sq(user)).sqrt()
}

/// Free-space power gain. `ref_distance` is 1 m in the model, so the
/// squared reference distance cancels.
pub fn path_gain(drone: Point, user: Point, cp: &ChannelParams) -> f64 {
    let d2 = cp.altitude * cp.altitude + drone.dist_sq(user);
    cp.rho_o * cp.ref_distance * cp.ref_distance / d2
}

/// Gains for every (user, drone) pair at the given drone positions.
pub fn gain_table(drones: &[Point], users: &[UserEquipment], cp: &ChannelParams) -> GainTable {
    GainTable::from_fn(users.len(), drones.len(), |u, d| {
        path_gain(drones[d], users[u].position, cp)
    })
}

/// Co-channel interference seen by user `u` on subchannel `m`: power sent
/// to every other user on `m` from every drone, weighted by the gain of
/// the transmitting drone towards `u`.
pub fn interference(u: usize, m: usize, alloc: &Allocation, gains: &GainTable) -> f64 {
    let mut acc = 0.0;
    for i in (0..alloc.users()).filter(|&i| i != u) {
        for j in 0..alloc.drones() {
            let p = alloc.power(i, j, m);
            if p != 0.0 {
                acc += p * gains.get(u, j);
            }
        }
    }
    acc
}

pub fn sinr(
    u: usize,
    d: usize,
    m: usize,
    alloc: &Allocation,
    gains: &GainTable,
    cp: &ChannelParams,
) -> f64 {
    let signal = alloc.power(u, d, m) * gains.get(u, d);
    if signal == 0.0 {
        return 0.0;
    }
    signal / (interference(u, m, alloc, gains) + cp.noise_power)
}

/// Spectral efficiency of one subchannel (bps/Hz).
pub fn subchannel_rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Rate table R[u][d][m] for an allocation, flattened like the allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    drones: usize,
    subchannels: usize,
    rate: Vec<f64>,
}

impl RateTable {
    pub fn compute(alloc: &Allocation, gains: &GainTable, cp: &ChannelParams) -> Self {
        let (nu, nd, nm) = (alloc.users(), alloc.drones(), alloc.subchannels());
        let mut rate = vec![0.0; nu * nd * nm];
        for u in 0..nu {
            for d in 0..nd {
                for m in 0..nm {
                    if alloc.power(u, d, m) > 0.0 {
                        rate[(u * nd + d) * nm + m] = subchannel_rate(sinr(u, d, m, alloc, gains, cp));
                    }
                }
            }
        }
        Self { drones: nd, subchannels: nm, rate }
    }

    /// Builds a table from explicit values, indexed `[u][d][m]`.
    pub fn from_fn(
        users: usize,
        drones: usize,
        subchannels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut rate = Vec::with_capacity(users * drones * subchannels);
        for u in 0..users {
            for d in 0..drones {
                for m in 0..subchannels {
                    rate.push(f(u, d, m));
                }
            }
        }
        Self { drones, subchannels, rate }
    }

    pub fn get(&self, u: usize, d: usize, m: usize) -> f64 {
        self.rate[(u * self.drones + d) * self.subchannels + m]
    }
}

/// Rate delivered to `u`: sum of R over pairs selected by both association
/// and subchannel allocation.
pub fn user_rate(u: usize, alloc: &Allocation, rates: &RateTable) -> f64 {
    alloc.assigned(u).map(|(d, m)| rates.get(u, d, m)).sum()
}

/// Same quantity summed over entries carrying positive power. Agrees with
/// [`user_rate`] whenever powers respect the binary coupling.
pub fn user_rate_by_power(u: usize, alloc: &Allocation, rates: &RateTable) -> f64 {
    let mut acc = 0.0;
    for d in 0..alloc.drones() {
        for m in 0..alloc.subchannels() {
            if alloc.power(u, d, m) > 0.0 {
                acc += rates.get(u, d, m);
            }
        }
    }
    acc
}

/// Per-user delivered rates under the SINR model.
pub fn user_rates(alloc: &Allocation, gains: &GainTable, cp: &ChannelParams) -> Vec<f64> {
    let rates = RateTable::compute(alloc, gains, cp);
    (0..alloc.users()).map(|u| user_rate(u, alloc, &rates)).collect()
}
