//! Minimum-energy transmit powers for fixed association and subchannel
//! allocation.
//!
//! The rate floor is a difference of concave functions in the powers. Each
//! outer iteration replaces the subtracted term by its tangent plane at the
//! current iterate, which leaves a convex program (linear objective, convex
//! constraints) solved with a log-barrier Newton method.

// Negated comparisons below are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::{RateConstraintParams, SolverConfig};
use crate::allocation::{Allocation, GainTable};
use crate::channel::user_rates;
use crate::channel::ChannelParams;

/// Outer-loop bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    /// Expansion point of the last accepted iteration.
    pub p_ref: Allocation,
    pub iterations: usize,
    /// Transmit energy (J) of every accepted iterate.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution {
    /// Input binaries with optimized powers.
    pub allocation: Allocation,
    pub state: ScaState,
    /// Transmit energy over the block (J).
    pub objective: f64,
}

/// Users whose rate floor could not be met.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Infeasibility {
    pub users: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Var {
    user: usize,
    drone: usize,
    sub: usize,
}

/// One (user, subchannel) rate term: every active stream on the
/// subchannel with its gain towards the user.
#[derive(Debug, Clone)]
struct Term {
    streams: Vec<(usize, f64)>,
    /// `own[i]` is true when `streams[i]` carries the user's own data.
    own: Vec<bool>,
}

#[derive(Debug, Clone)]
struct Problem {
    vars: Vec<Var>,
    terms: Vec<Vec<Term>>,
    by_drone: Vec<Vec<usize>>,
    noise: f64,
    min_rate: f64,
    max_power: f64,
}

impl Problem {
    fn new(alloc: &Allocation, gains: &GainTable, noise: f64, rcp: &RateConstraintParams) -> Self {
        let mut vars = Vec::new();
        for u in 0..alloc.users() {
            for (d, m) in alloc.assigned(u) {
                vars.push(Var { user: u, drone: d, sub: m });
            }
        }
        let mut terms = vec![Vec::new(); alloc.users()];
        for (u, user_terms) in terms.iter_mut().enumerate() {
            let mut subs: Vec<usize> = vars.iter().filter(|v| v.user == u).map(|v| v.sub).collect();
            subs.sort_unstable();
            subs.dedup();
            for m in subs {
                let mut streams = Vec::new();
                let mut own = Vec::new();
                for (k, v) in vars.iter().enumerate().filter(|(_, v)| v.sub == m) {
                    streams.push((k, gains.get(u, v.drone)));
                    own.push(v.user == u);
                }
                user_terms.push(Term { streams, own });
            }
        }
        let mut by_drone = vec![Vec::new(); alloc.drones()];
        for (k, v) in vars.iter().enumerate() {
            by_drone[v.drone].push(k);
        }
        Self {
            vars,
            terms,
            by_drone,
            noise,
            min_rate: rcp.min_rate,
            max_power: rcp.max_power,
        }
    }

    fn n(&self) -> usize {
        self.vars.len()
    }

    /// Exact per-user rates at `x`.
    fn rates(&self, x: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|ts| {
                ts.iter()
                    .map(|t| {
                        let (mut all, mut interf) = (self.noise, self.noise);
                        for (&(k, g), &own) in t.streams.iter().zip(&t.own) {
                            all += x[k] * g;
                            if !own {
                                interf += x[k] * g;
                            }
                        }
                        (all / interf).log2()
                    })
                    .sum()
            })
            .collect()
    }

    fn drone_loads(&self, x: &[f64]) -> Vec<f64> {
        self.by_drone.iter().map(|ks| ks.iter().map(|&k| x[k]).sum()).collect()
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v > 0.0)
            && self.drone_loads(x).iter().all(|&l| l < self.max_power)
            && self.rates(x).iter().enumerate().all(|(u, &r)| self.terms[u].is_empty() || r > self.min_rate)
    }

    fn write(&self, x: &[f64], into: &mut Allocation) {
        into.clear_powers();
        for (k, v) in self.vars.iter().enumerate() {
            into.set_power(v.user, v.drone, v.sub, x[k]);
        }
    }

    /// Iterates the minimal-power fixed point with each user's target rate
    /// split evenly over its subchannels. Returns a point meeting every
    /// floor with a small margin, or the users that could not be served.
    fn fixed_point_start(&self, margin: f64) -> Result<Vec<f64>, Infeasibility> {
        let n = self.n();
        let mut target = vec![0.0; n];
        for (k, v) in self.vars.iter().enumerate() {
            let share = self.terms[v.user].len() as f64;
            target[k] = 2f64.powf((self.min_rate + margin) / share) - 1.0;
        }
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut converged = false;
        for _ in 0..5000 {
            for (k, v) in self.vars.iter().enumerate() {
                let term = self.terms[v.user]
                    .iter()
                    .find(|t| t.streams.iter().any(|&(s, _)| s == k))
                    .expect("variable belongs to one of its user's terms");
                let mut interf = self.noise;
                let mut direct = 0.0;
                for (&(s, g), &own) in term.streams.iter().zip(&term.own) {
                    if s == k {
                        direct = g;
                    } else if !own {
                        interf += x[s] * g;
                    }
                }
                next[k] = if direct > 0.0 { target[k] * interf / direct } else { f64::INFINITY };
            }
            let change = x
                .iter()
                .zip(&next)
                .map(|(a, b)| if *b == 0.0 { 0.0 } else { (b - a).abs() / b })
                .fold(0.0, f64::max);
            std::mem::swap(&mut x, &mut next);
            let loads = self.drone_loads(&x);
            if loads.iter().any(|&l| !(l < self.max_power)) {
                break;
            }
            if change < 1e-13 {
                converged = true;
                break;
            }
        }
        let loads = self.drone_loads(&x);
        if converged && loads.iter().all(|&l| l < self.max_power) {
            let rates = self.rates(&x);
            if rates
                .iter()
                .enumerate()
                .all(|(u, &r)| self.terms[u].is_empty() || r > self.min_rate)
            {
                return Ok(x);
            }
        }
        let mut users: Vec<usize> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(k, v)| !x[*k].is_finite() || !(loads[v.drone] < self.max_power) || !converged)
            .map(|(_, v)| v.user)
            .collect();
        users.sort_unstable();
        users.dedup();
        Err(Infeasibility { users })
    }
}

/// Tangent-plane data for the interference terms at an expansion point.
struct Linearization {
    /// Per user, per term: `(constant, coefficient per stream)`; own
    /// streams carry a zero coefficient.
    terms: Vec<Vec<(f64, Vec<f64>)>>,
}

impl Linearization {
    fn at(problem: &Problem, x_ref: &[f64]) -> Self {
        let terms = problem
            .terms
            .iter()
            .map(|ts| {
                ts.iter()
                    .map(|t| {
                        let mut base = problem.noise;
                        for (&(k, g), &own) in t.streams.iter().zip(&t.own) {
                            if !own {
                                base += x_ref[k] * g;
                            }
                        }
                        let scale = 1.0 / (LN_2 * base);
                        let mut constant = base.log2();
                        let coef: Vec<f64> = t
                            .streams
                            .iter()
                            .zip(&t.own)
                            .map(|(&(k, g), &own)| {
                                if own {
                                    0.0
                                } else {
                                    constant -= g * scale * x_ref[k];
                                    g * scale
                                }
                            })
                            .collect();
                        (constant, coef)
                    })
                    .collect()
            })
            .collect();
        Self { terms }
    }
}

/// Log-barrier solver for one convexified subproblem.
struct Barrier<'a> {
    problem: &'a Problem,
    lin: &'a Linearization,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<'a> Barrier<'a> {
    /// Approximated rate slack of user `u` with its gradient and the
    /// curvature pieces `(weight, stream gains)` of each log term.
    fn slack(&self, u: usize, x: &[f64], grad: Option<&mut DVector<f64>>, curv: Option<&mut Vec<(f64, usize)>>) -> f64 {
        let p = self.problem;
        let mut s = -p.min_rate;
        let mut grad = grad;
        let mut curv = curv;
        for (ti, t) in p.terms[u].iter().enumerate() {
            let (constant, coef) = &self.lin.terms[u][ti];
            let mut total = p.noise;
            let mut lin = *constant;
            for (si, &(k, g)) in t.streams.iter().enumerate() {
                total += x[k] * g;
                lin += coef[si] * x[k];
            }
            s += total.log2() - lin;
            if let Some(gr) = grad.as_deref_mut() {
                for (si, &(k, g)) in t.streams.iter().enumerate() {
                    gr[k] += g / (LN_2 * total) - coef[si];
                }
            }
            if let Some(c) = curv.as_deref_mut() {
                c.push((1.0 / (LN_2 * total * total), ti));
            }
        }
        s
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        let p = self.problem;
        x.iter().all(|&v| v > 0.0)
            && p.drone_loads(x).iter().all(|&l| l < p.max_power)
            && (0..p.terms.len()).all(|u| p.terms[u].is_empty() || self.slack(u, x, None, None) > 0.0)
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let p = self.problem;
        let mut f = t * x.iter().sum::<f64>();
        for &v in x {
            f -= v.ln();
        }
        for l in p.drone_loads(x) {
            f -= (p.max_power - l).ln();
        }
        for u in 0..p.terms.len() {
            if !p.terms[u].is_empty() {
                f -= self.slack(u, x, None, None).ln();
            }
        }
        f
    }

    fn eval(&self, t: f64, x: &[f64]) -> Eval {
        let p = self.problem;
        let n = p.n();
        let mut grad = DVector::from_element(n, t);
        let mut hess = DMatrix::zeros(n, n);
        for (k, &v) in x.iter().enumerate() {
            grad[k] -= 1.0 / v;
            hess[(k, k)] += 1.0 / (v * v);
        }
        for (d, ks) in p.by_drone.iter().enumerate() {
            if ks.is_empty() {
                continue;
            }
            let c = p.max_power - ks.iter().map(|&k| x[k]).sum::<f64>();
            debug_assert!(c > 0.0, "drone {d} outside barrier domain");
            for &a in ks {
                grad[a] += 1.0 / c;
                for &b in ks {
                    hess[(a, b)] += 1.0 / (c * c);
                }
            }
        }
        let mut gs = DVector::zeros(n);
        let mut curv = Vec::new();
        for u in 0..p.terms.len() {
            if p.terms[u].is_empty() {
                continue;
            }
            gs.fill(0.0);
            curv.clear();
            let s = self.slack(u, x, Some(&mut gs), Some(&mut curv));
            grad.axpy(-1.0 / s, &gs, 1.0);
            hess.ger(1.0 / (s * s), &gs, &gs, 1.0);
            for &(w, ti) in &curv {
                let t = &p.terms[u][ti];
                let w = w / s;
                for &(a, ga) in &t.streams {
                    for &(b, gb) in &t.streams {
                        hess[(a, b)] += w * ga * gb;
                    }
                }
            }
        }
        Eval { value: self.value(t, x), grad, hess }
    }

    /// Damped Newton minimization of the barrier function at fixed `t`.
    fn centre(&self, t: f64, x: &mut [f64]) {
        let n = x.len();
        for _ in 0..200 {
            let Eval { value, grad, hess } = self.eval(t, x);
            // Symmetric diagonal scaling keeps the system well conditioned
            // when powers span many orders of magnitude.
            let scale: DVector<f64> = hess.diagonal().map(|h| 1.0 / h.max(f64::MIN_POSITIVE).sqrt());
            let mut scaled = hess.clone();
            for a in 0..n {
                for b in 0..n {
                    scaled[(a, b)] *= scale[a] * scale[b];
                }
            }
            let rhs = -grad.component_mul(&scale);
            let step = match scaled.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    let mut reg = scaled;
                    for a in 0..n {
                        reg[(a, a)] += 1e-10;
                    }
                    match reg.cholesky() {
                        Some(ch) => ch.solve(&rhs),
                        None => return,
                    }
                }
            };
            let dx = step.component_mul(&scale);
            let decrement = -grad.dot(&dx);
            if !(decrement > 1e-14) {
                return;
            }
            let mut alpha = 1.0;
            let mut trial = vec![0.0; n];
            loop {
                for k in 0..n {
                    trial[k] = x[k] + alpha * dx[k];
                }
                if self.in_domain(&trial) && self.value(t, &trial) <= value - 0.25 * alpha * decrement {
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-16 {
                    return;
                }
            }
            x.copy_from_slice(&trial);
            if decrement / 2.0 < 1e-12 {
                return;
            }
        }
    }

    /// Path-following from a strictly feasible start until the duality gap
    /// bound falls below `tol` relative to the objective.
    fn solve(&self, x0: &[f64], tol: f64) -> Vec<f64> {
        let p = self.problem;
        let barriers = p.n()
            + p.by_drone.iter().filter(|k| !k.is_empty()).count()
            + p.terms.iter().filter(|t| !t.is_empty()).count();
        let mut x = x0.to_vec();
        let f0: f64 = x.iter().sum();
        let mut t = barriers as f64 / f0.max(f64::MIN_POSITIVE);
        for _ in 0..80 {
            self.centre(t, &mut x);
            let obj: f64 = x.iter().sum();
            if barriers as f64 / t <= tol * obj {
                break;
            }
            t *= 10.0;
        }
        x
    }
}

/// Minimizes transmit energy for the binaries in `binaries`.
///
/// `block_duration` converts power into energy. Powers of pairs not
/// selected by both binaries are fixed at zero.
pub fn solve_power_given_binaries(
    binaries: &Allocation,
    gains: &GainTable,
    cp: &ChannelParams,
    rcp: &RateConstraintParams,
    block_duration: f64,
    cfg: &SolverConfig,
) -> Result<PowerSolution, Infeasibility> {
    let problem = Problem::new(binaries, gains, cp.noise_power, rcp);
    let mut allocation = binaries.clone();
    allocation.clear_powers();

    if problem.n() == 0 || rcp.min_rate <= 0.0 {
        let unserved: Vec<usize> = (0..binaries.users())
            .filter(|&u| problem.terms[u].is_empty() && rcp.min_rate > 0.0)
            .collect();
        if !unserved.is_empty() {
            return Err(Infeasibility { users: unserved });
        }
        return Ok(PowerSolution {
            state: ScaState { p_ref: allocation.clone(), iterations: 0, objective_trace: vec![0.0] },
            allocation,
            objective: 0.0,
        });
    }
    let unserved: Vec<usize> = (0..binaries.users()).filter(|&u| problem.terms[u].is_empty()).collect();
    if !unserved.is_empty() {
        return Err(Infeasibility { users: unserved });
    }

    // Preferred start: the configured initial power on every active
    // stream, scaled under the per-drone caps. Fall back to the
    // fixed-point start when that point misses a rate floor.
    let loads: Vec<usize> = problem.by_drone.iter().map(|k| k.len()).collect();
    let table: Vec<f64> = problem
        .vars
        .iter()
        .map(|v| cfg.initial_power.min(0.99 * rcp.max_power / loads[v.drone] as f64))
        .collect();
    let margin = 1e-6 * rcp.min_rate.max(1.0);
    let start = if problem.strictly_feasible(&table) {
        table
    } else {
        problem.fixed_point_start(margin)?
    };

    let mut x_ref = start;
    let mut best_obj = f64::INFINITY;
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_sca_iters.max(1) {
        let lin = Linearization::at(&problem, &x_ref);
        let barrier = Barrier { problem: &problem, lin: &lin };
        let x = barrier.solve(&x_ref, cfg.inner_tolerance);
        iterations += 1;
        let obj: f64 = x.iter().sum::<f64>() * block_duration;
        if !(obj <= best_obj) || !problem.strictly_feasible(&x) {
            break;
        }
        let improvement = best_obj - obj;
        x_ref = x;
        trace.push(obj);
        let done = improvement.is_finite() && improvement <= cfg.sca_tolerance * obj;
        best_obj = obj;
        if done {
            break;
        }
    }
    if trace.is_empty() {
        // The start point itself is feasible; report it unimproved.
        trace.push(x_ref.iter().sum::<f64>() * block_duration);
    }
    problem.write(&x_ref, &mut allocation);
    let objective = *trace.last().expect("trace is nonempty");
    Ok(PowerSolution {
        state: ScaState { p_ref: allocation.clone(), iterations, objective_trace: trace },
        allocation,
        objective,
    })
}

/// True per-user rates of a solved allocation.
pub fn achieved_rates(alloc: &Allocation, gains: &GainTable, cp: &ChannelParams) -> Vec<f64> {
    user_rates(alloc, gains, cp)
}
