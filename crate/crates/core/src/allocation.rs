//! Per-block decision variables: association, subchannel allocation,
//! charging indicators and transmit powers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    users: usize,
    drones: usize,
    subchannels: usize,
    psi: Vec<bool>,
    phi: Vec<bool>,
    beta: Vec<bool>,
    power: Vec<f64>,
}

impl Allocation {
    /// All-zero allocation.
    pub fn new(users: usize, drones: usize, subchannels: usize) -> Self {
        Self {
            users,
            drones,
            subchannels,
            psi: vec![false; users * drones],
            phi: vec![false; users * drones * subchannels],
            beta: vec![false; drones],
            power: vec![0.0; users * drones * subchannels],
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn drones(&self) -> usize {
        self.drones
    }

    pub fn subchannels(&self) -> usize {
        self.subchannels
    }

    #[inline]
    fn ud(&self, u: usize, d: usize) -> usize {
        debug_assert!(u < self.users && d < self.drones);
        u * self.drones + d
    }

    #[inline]
    fn udm(&self, u: usize, d: usize, m: usize) -> usize {
        debug_assert!(m < self.subchannels);
        self.ud(u, d) * self.subchannels + m
    }

    pub fn psi(&self, u: usize, d: usize) -> bool {
        self.psi[self.ud(u, d)]
    }

    pub fn set_psi(&mut self, u: usize, d: usize, v: bool) {
        let i = self.ud(u, d);
        self.psi[i] = v;
    }

    pub fn phi(&self, u: usize, d: usize, m: usize) -> bool {
        self.phi[self.udm(u, d, m)]
    }

    pub fn set_phi(&mut self, u: usize, d: usize, m: usize, v: bool) {
        let i = self.udm(u, d, m);
        self.phi[i] = v;
    }

    pub fn power(&self, u: usize, d: usize, m: usize) -> f64 {
        self.power[self.udm(u, d, m)]
    }

    pub fn set_power(&mut self, u: usize, d: usize, m: usize, p: f64) {
        let i = self.udm(u, d, m);
        self.power[i] = p;
    }

    pub fn beta(&self, d: usize) -> bool {
        self.beta[d]
    }

    pub fn betas(&self) -> &[bool] {
        &self.beta
    }

    pub fn set_betas(&mut self, beta: &[bool]) {
        assert_eq!(beta.len(), self.drones);
        self.beta.copy_from_slice(beta);
    }

    pub fn clear_powers(&mut self) {
        self.power.iter_mut().for_each(|p| *p = 0.0);
    }

    /// The drone `u` is associated with, if any (lowest index if several).
    pub fn serving_drone(&self, u: usize) -> Option<usize> {
        (0..self.drones).find(|&d| self.psi(u, d))
    }

    /// `(d, m)` pairs with both association and subchannel set.
    pub fn assigned(&self, u: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.drones)
            .filter(move |&d| self.psi(u, d))
            .flat_map(move |d| (0..self.subchannels).map(move |m| (d, m)))
            .filter(move |&(d, m)| self.phi(u, d, m))
    }

    pub fn subchannels_of(&self, u: usize) -> Vec<usize> {
        self.assigned(u).map(|(_, m)| m).collect()
    }

    /// Total transmit power of drone `d` (W).
    pub fn drone_power(&self, d: usize) -> f64 {
        (0..self.users)
            .flat_map(|u| (0..self.subchannels).map(move |m| (u, m)))
            .map(|(u, m)| self.power(u, d, m))
            .sum()
    }

    /// Transmit power of user `u` summed over drones and subchannels (W).
    pub fn user_power(&self, u: usize) -> f64 {
        (0..self.drones)
            .flat_map(|d| (0..self.subchannels).map(move |m| (d, m)))
            .map(|(d, m)| self.power(u, d, m))
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Users associated with drone `d`.
    pub fn users_of(&self, d: usize) -> Vec<usize> {
        (0..self.users).filter(|&u| self.psi(u, d)).collect()
    }

    /// Checks single association, at least one resource block per user,
    /// power bounds, per-drone caps and the power/binary coupling.
    /// Returns a human-readable list of violations.
    pub fn violations(&self, max_power: f64) -> Vec<String> {
        const TOL: f64 = 1e-12;
        let mut out = Vec::new();
        for u in 0..self.users {
            let assoc = (0..self.drones).filter(|&d| self.psi(u, d)).count();
            if assoc != 1 {
                out.push(format!("user {u} associated with {assoc} drones"));
            }
            let blocks = (0..self.drones)
                .flat_map(|d| (0..self.subchannels).map(move |m| (d, m)))
                .filter(|&(d, m)| self.phi(u, d, m))
                .count();
            if blocks == 0 {
                out.push(format!("user {u} has no subchannel"));
            }
            for d in 0..self.drones {
                for m in 0..self.subchannels {
                    let p = self.power(u, d, m);
                    if !p.is_finite() || p < 0.0 {
                        out.push(format!("negative power {p} at user {u} drone {d} sub {m}"));
                    }
                    let w = crate::assign_power::linearized_product(self.psi(u, d), self.phi(u, d, m));
                    if !crate::assign_power::linearized_admits(
                        self.psi(u, d),
                        self.phi(u, d, m),
                        w,
                        p,
                        max_power,
                    ) {
                        out.push(format!(
                            "power {p} at user {u} drone {d} sub {m} not admitted by its binaries"
                        ));
                    }
                }
            }
        }
        for d in 0..self.drones {
            let total = self.drone_power(d);
            if total > max_power * (1.0 + TOL) {
                out.push(format!("drone {d} power {total} exceeds cap {max_power}"));
            }
        }
        if self.beta.iter().filter(|&&b| b).count() > 1 {
            out.push("more than one drone charged in the block".into());
        }
        out
    }
}

/// Channel gains indexed by (user, drone) for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    users: usize,
    drones: usize,
    gain: Vec<f64>,
}

impl GainTable {
    pub fn from_fn(users: usize, drones: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut gain = Vec::with_capacity(users * drones);
        for u in 0..users {
            for d in 0..drones {
                gain.push(f(u, d));
            }
        }
        Self { users, drones, gain }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn drones(&self) -> usize {
        self.drones
    }

    #[inline]
    pub fn get(&self, u: usize, d: usize) -> f64 {
        self.gain[u * self.drones + d]
    }
}
