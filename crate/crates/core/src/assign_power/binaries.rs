//! Association and subchannel choice.
//!
//! Greedy max-gain association with interference-aware subchannel picks,
//! improved by best-improvement local search (relocate, add/drop a
//! subchannel, pairwise association swap). Small instances are enumerated
//! outright. A subchannel is never given to two users of the same drone.

use rayon::prelude::*;

use super::power::{solve_power_given_binaries, PowerSolution};
use super::{RateConstraintParams, SolverConfig};
use crate::allocation::{Allocation, GainTable};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignMode {
    /// Greedy construction only.
    Greedy,
    /// Greedy construction followed by local search, or full enumeration
    /// when the instance is small enough.
    Full,
}

/// Outcome of a binary assignment with its power solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Binaries and (when feasible) optimized powers.
    pub allocation: Allocation,
    /// Power solve of the returned binaries; `None` when the rate floor
    /// could not be met.
    pub solution: Option<PowerSolution>,
    /// Users left below the floor when `solution` is `None`.
    pub infeasible_users: Vec<usize>,
    /// Number of power solves performed.
    pub evaluations: usize,
}

impl Assignment {
    /// Transmit energy (J), infinite when infeasible.
    pub fn objective(&self) -> f64 {
        self.solution.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Plan {
    /// `(drone, subchannels)` per user.
    users: Vec<(usize, Vec<usize>)>,
}

struct Ctx<'a> {
    gains: &'a GainTable,
    cp: &'a ChannelParams,
    rcp: &'a RateConstraintParams,
    block_duration: f64,
    cfg: &'a SolverConfig,
    available: &'a [bool],
}

impl Ctx<'_> {
    fn drones(&self) -> usize {
        self.gains.drones()
    }

    fn to_allocation(&self, plan: &Plan) -> Allocation {
        let mut a = Allocation::new(self.gains.users(), self.drones(), self.rcp.subchannels);
        for (u, (d, subs)) in plan.users.iter().enumerate() {
            a.set_psi(u, *d, true);
            for &m in subs {
                a.set_phi(u, *d, m, true);
            }
        }
        a
    }

    fn evaluate(&self, plan: &Plan) -> (Allocation, std::result::Result<PowerSolution, Vec<usize>>) {
        let a = self.to_allocation(plan);
        let r = solve_power_given_binaries(&a, self.gains, self.cp, self.rcp, self.block_duration, self.cfg)
            .map_err(|e| e.users);
        (a, r)
    }

    fn used_at(&self, plan: &Plan, d: usize, skip: Option<usize>) -> Vec<bool> {
        let mut used = vec![false; self.rcp.subchannels];
        for (u, (du, subs)) in plan.users.iter().enumerate() {
            if *du == d && Some(u) != skip {
                for &m in subs {
                    used[m] = true;
                }
            }
        }
        used
    }

    /// Normalized cross-coupling of user `u` at drone `d` with the streams
    /// already on subchannel `m` at other drones.
    fn coupling(&self, plan: &Plan, u: usize, d: usize, m: usize) -> f64 {
        let g = self.gains;
        let mut c = 0.0;
        for (v, (dv, subs)) in plan.users.iter().enumerate() {
            if v == u || *dv == d || !subs.contains(&m) {
                continue;
            }
            c += ratio(g.get(u, *dv), g.get(u, d)) + ratio(g.get(v, d), g.get(v, *dv));
        }
        c
    }

    fn best_free_sub(&self, plan: &Plan, u: usize, d: usize) -> Option<usize> {
        let used = self.used_at(plan, d, Some(u));
        let own: &[usize] = if plan.users[u].0 == d { &plan.users[u].1 } else { &[] };
        (0..self.rcp.subchannels)
            .filter(|&m| !used[m] && !own.contains(&m))
            .map(|m| (self.coupling(plan, u, d, m), m))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, m)| m)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn greedy_plan(ctx: &Ctx<'_>) -> Plan {
    let nu = ctx.gains.users();
    let nd = ctx.drones();
    let mut plan = Plan { users: Vec::with_capacity(nu) };
    let mut load = vec![0usize; nd];
    for u in 0..nu {
        let mut best: Option<usize> = None;
        for d in (0..nd).filter(|&d| ctx.available[d] && load[d] < ctx.rcp.subchannels) {
            best = match best {
                None => Some(d),
                Some(b) => {
                    let (gd, gb) = (ctx.gains.get(u, d), ctx.gains.get(u, b));
                    let tie = (gd - gb).abs() <= 1e-12 * gd.abs().max(gb.abs());
                    if (!tie && gd > gb) || (tie && load[d] < load[b]) {
                        Some(d)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let d = best.expect("capacity checked by caller");
        plan.users.push((d, Vec::new()));
        let m = ctx.best_free_sub(&plan, u, d).expect("drone has a free subchannel");
        plan.users[u].1.push(m);
        load[d] += 1;
    }
    plan
}

fn neighbours(ctx: &Ctx<'_>, plan: &Plan) -> Vec<Plan> {
    let nd = ctx.drones();
    let mut out = Vec::new();
    for u in 0..plan.users.len() {
        let (d, subs) = plan.users[u].clone();
        for d2 in (0..nd).filter(|&x| x != d && ctx.available[x]) {
            let mut p = plan.clone();
            p.users[u] = (d2, Vec::new());
            if let Some(m) = ctx.best_free_sub(&p, u, d2) {
                p.users[u].1.push(m);
                out.push(p);
            }
        }
        if let Some(m) = ctx.best_free_sub(plan, u, d) {
            let mut p = plan.clone();
            p.users[u].1.push(m);
            p.users[u].1.sort_unstable();
            out.push(p);
        }
        if subs.len() >= 2 {
            for i in 0..subs.len() {
                let mut p = plan.clone();
                p.users[u].1.remove(i);
                out.push(p);
            }
        }
    }
    for u in 0..plan.users.len() {
        for v in u + 1..plan.users.len() {
            if plan.users[u].0 != plan.users[v].0 {
                let mut p = plan.clone();
                p.users.swap(u, v);
                out.push(p);
            }
        }
    }
    out
}

/// Nonempty subchannel subsets per user for every available drone, with no
/// subchannel shared inside a drone.
fn enumerate(ctx: &Ctx<'_>) -> Vec<Plan> {
    let nu = ctx.gains.users();
    let nm = ctx.rcp.subchannels;
    let options: Vec<(usize, u64)> = (0..ctx.drones())
        .filter(|&d| ctx.available[d])
        .flat_map(|d| (1u64..(1u64 << nm)).map(move |mask| (d, mask)))
        .collect();
    let mut out = Vec::new();
    let mut used = vec![0u64; ctx.drones()];
    let mut cur = Vec::with_capacity(nu);
    fn rec(
        u: usize,
        nu: usize,
        nm: usize,
        options: &[(usize, u64)],
        used: &mut [u64],
        cur: &mut Vec<(usize, u64)>,
        out: &mut Vec<Plan>,
    ) {
        if u == nu {
            out.push(Plan {
                users: cur
                    .iter()
                    .map(|&(d, mask)| (d, (0..nm).filter(|m| mask >> m & 1 == 1).collect()))
                    .collect(),
            });
            return;
        }
        for &(d, mask) in options {
            if used[d] & mask != 0 {
                continue;
            }
            used[d] |= mask;
            cur.push((d, mask));
            rec(u + 1, nu, nm, options, used, cur, out);
            cur.pop();
            used[d] &= !mask;
        }
    }
    rec(0, nu, nm, &options, &mut used, &mut cur, &mut out);
    out
}

fn enumeration_size(ctx: &Ctx<'_>) -> Option<usize> {
    let nm = ctx.rcp.subchannels;
    if nm >= 20 {
        return None;
    }
    let per_user = ctx.available.iter().filter(|&&a| a).count().checked_mul((1usize << nm) - 1)?;
    per_user.checked_pow(ctx.gains.users() as u32)
}

fn strictly_better(a: f64, b: f64) -> bool {
    a < b && (b - a) > 1e-9 * a.abs().max(1e-300)
}

/// Greedy construction only, no power solve.
pub fn greedy_binaries(
    gains: &GainTable,
    cp: &ChannelParams,
    rcp: &RateConstraintParams,
    available: &[bool],
) -> Result<Allocation> {
    let cfg = SolverConfig::default();
    let ctx = Ctx { gains, cp, rcp, block_duration: 1.0, cfg: &cfg, available };
    check_capacity(&ctx)?;
    Ok(ctx.to_allocation(&greedy_plan(&ctx)))
}

fn check_capacity(ctx: &Ctx<'_>) -> Result<()> {
    let drones = ctx.available.iter().filter(|&&a| a).count();
    let users = ctx.gains.users();
    if users > drones * ctx.rcp.subchannels {
        return Err(Error::Allocation(format!(
            "{users} users exceed the {} (drone, subchannel) slots of {drones} drones",
            drones * ctx.rcp.subchannels
        )));
    }
    Ok(())
}

/// Chooses association and subchannels, then powers.
///
/// `available` masks drones that may serve users.
pub fn assign_binaries(
    gains: &GainTable,
    cp: &ChannelParams,
    rcp: &RateConstraintParams,
    block_duration: f64,
    cfg: &SolverConfig,
    mode: AssignMode,
    available: &[bool],
) -> Result<Assignment> {
    assert_eq!(available.len(), gains.drones());
    let ctx = Ctx { gains, cp, rcp, block_duration, cfg, available };
    check_capacity(&ctx)?;

    let mut plan = greedy_plan(&ctx);
    let (mut alloc, mut result) = ctx.evaluate(&plan);
    let mut evaluations = 1;
    let score = |r: &std::result::Result<PowerSolution, Vec<usize>>| r.as_ref().map_or(f64::INFINITY, |s| s.objective);

    if mode == AssignMode::Full && gains.users() > 0 {
        match enumeration_size(&ctx) {
            Some(n) if n <= cfg.exhaustive_limit => {
                let evaluated: Vec<_> = enumerate(&ctx).par_iter().map(|p| ctx.evaluate(p)).collect();
                evaluations += evaluated.len();
                for (a, r) in evaluated {
                    if strictly_better(score(&r), score(&result)) {
                        alloc = a;
                        result = r;
                    }
                }
            }
            _ => {
                for _ in 0..cfg.local_search_passes {
                    let cands = neighbours(&ctx, &plan);
                    let evaluated: Vec<_> = cands.par_iter().map(|p| ctx.evaluate(p)).collect();
                    evaluations += evaluated.len();
                    let mut best: Option<usize> = None;
                    for (i, (_, r)) in evaluated.iter().enumerate() {
                        let incumbent = best.map_or(score(&result), |b| score(&evaluated[b].1));
                        if strictly_better(score(r), incumbent) {
                            best = Some(i);
                        }
                    }
                    let Some(b) = best else { break };
                    plan = cands[b].clone();
                    (alloc, result) = evaluated.into_iter().nth(b).expect("index in range");
                }
            }
        }
    }

    Ok(match result {
        Ok(sol) => Assignment {
            allocation: sol.allocation.clone(),
            solution: Some(sol),
            infeasible_users: Vec::new(),
            evaluations,
        },
        Err(users) => Assignment { allocation: alloc, solution: None, infeasible_users: users, evaluations },
    })
}
