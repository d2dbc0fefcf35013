//! Drone placement by sector-seeded particle sampling with shrinking
//! resampling around the incumbent.
//!
//! A particle holds one candidate position for every drone. Drones are
//! evaluated jointly because interference couples their objectives.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assign_power::{assign_binaries, AssignMode, Assignment, RateConstraintParams, SolverConfig};
use crate::channel::{gain_table, ChannelParams, Point, UserEquipment};
use crate::energy::{hardware_energy, hover_energy, EnergyParams, TimeGrid};
use crate::error::ValidationErrors;

/// Axis-aligned rectangle (m), closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Area {
    fn default() -> Self {
        Self { x_min: -400.0, x_max: 400.0, y_min: -400.0, y_max: 400.0 }
    }
}

impl Area {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn centroid(&self) -> Point {
        Point::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub(crate) fn validate_into(&self, errs: &mut ValidationErrors) {
        errs.check(self.x_min < self.x_max && self.y_min < self.y_max, || {
            format!(
                "area: need x_min < x_max and y_min < y_max (got x [{}, {}], y [{}, {}])",
                self.x_min, self.x_max, self.y_min, self.y_max
            )
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Each particle moves every drone.
    Joint,
    /// Refinement rounds move one drone at a time.
    PerDrone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Particles per generation.
    pub particles: usize,
    /// Radius multiplier applied at each refinement round.
    pub shrink_factor: f64,
    pub max_refines: usize,
    /// Sampling radius of the first generation (m); half the sector
    /// diagonal when unset.
    pub init_radius: Option<f64>,
    /// Relative improvement below which refinement stops.
    pub tolerance: f64,
    pub mode: SearchMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            particles: 20,
            shrink_factor: 0.5,
            max_refines: 4,
            init_radius: None,
            tolerance: 1e-3,
            mode: SearchMode::Joint,
        }
    }
}

impl SearchConfig {
    pub(crate) fn validate_into(&self, errs: &mut ValidationErrors) {
        errs.check(self.particles >= 1, || "search.particles must be >= 1".into());
        errs.check(self.shrink_factor > 0.0 && self.shrink_factor < 1.0, || {
            format!("search.shrink_factor must be in (0, 1) (got {})", self.shrink_factor)
        });
        if let Some(r) = self.init_radius {
            errs.check(r > 0.0, || format!("search.init_radius must be > 0 (got {r})"));
        }
        errs.check(self.tolerance >= 0.0, || "search.tolerance must be >= 0".into());
    }
}

/// `drones` equal-area rectangles tiling `area`, row-major from
/// `(x_min, y_min)`.
///
/// Drones are laid out on a `ceil(sqrt(D))`-column grid. A short last row
/// absorbs its empty cells: its sectors widen and the row height shrinks
/// so every sector keeps the same area.
pub fn sector_partition(area: &Area, drones: usize) -> Vec<Area> {
    assert!(drones >= 1, "at least one drone");
    let cols = (drones as f64).sqrt().ceil() as usize;
    let rows = drones.div_ceil(cols);
    let mut out = Vec::with_capacity(drones);
    let mut y = area.y_min;
    for r in 0..rows {
        let in_row = if r + 1 == rows { drones - cols * (rows - 1) } else { cols };
        let h = area.height() * in_row as f64 / drones as f64;
        let y_top = if r + 1 == rows { area.y_max } else { y + h };
        let w = area.width() / in_row as f64;
        for c in 0..in_row {
            let x0 = area.x_min + w * c as f64;
            let x1 = if c + 1 == in_row { area.x_max } else { x0 + w };
            out.push(Area { x_min: x0, x_max: x1, y_min: y, y_max: y_top });
        }
        y = y_top;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub positions: Vec<Point>,
    /// Block objective (J); infinite when the rate floor cannot be met.
    pub objective: f64,
}

impl Particle {
    pub fn new(positions: Vec<Point>) -> Self {
        Self { positions, objective: f64::INFINITY }
    }
}

/// Everything fixed while placing drones for one block.
#[derive(Debug, Clone, Copy)]
pub struct PlacementProblem<'a> {
    pub users: &'a [UserEquipment],
    pub channel: &'a ChannelParams,
    pub energy: &'a EnergyParams,
    pub rate: &'a RateConstraintParams,
    pub time: &'a TimeGrid,
    pub solver: &'a SolverConfig,
    pub area: &'a Area,
    /// Positions at the end of the previous block.
    pub previous: &'a [Point],
    /// Drones still flying.
    pub available: &'a [bool],
    /// Assignment effort spent on each particle.
    pub assign_mode: AssignMode,
}

impl PlacementProblem<'_> {
    pub fn drones(&self) -> usize {
        self.previous.len()
    }

    fn reach(&self) -> f64 {
        self.energy.reach()
    }

    /// Whether `p` is a legal position for drone `d` this block.
    pub fn admissible(&self, d: usize, p: Point) -> bool {
        self.area.contains(p) && p.dist(self.previous[d]) <= self.reach() * (1.0 + 1e-12)
    }

    /// Hover energy of all flying drones, common to every particle.
    pub fn hover_total(&self) -> f64 {
        let per = hover_energy(self.energy, self.time);
        self.available.iter().filter(|&&a| a).count() as f64 * per
    }
}

/// Objective breakdown for one candidate placement.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    /// Implied speeds (m/s).
    pub speeds: Vec<f64>,
    /// Hardware energy per drone (J).
    pub hardware: Vec<f64>,
    pub assignment: Option<Assignment>,
}

/// Block objective at `positions`: transmit energy of the allocation
/// solved there plus hardware and hover energy of every flying drone.
pub fn evaluate_particle(positions: &[Point], prob: &PlacementProblem<'_>) -> Evaluation {
    let nd = prob.drones();
    let mut speeds = vec![0.0; nd];
    let mut hardware = vec![0.0; nd];
    let infeasible = |speeds, hardware| Evaluation { objective: f64::INFINITY, speeds, hardware, assignment: None };
    for d in 0..nd {
        if !prob.available[d] {
            continue;
        }
        if !prob.admissible(d, positions[d]) {
            return infeasible(speeds, hardware);
        }
        let v = (positions[d].dist(prob.previous[d]) / prob.energy.move_time).min(prob.energy.max_speed);
        speeds[d] = v;
        hardware[d] = hardware_energy(v, prob.energy).expect("speed clamped to the limit");
    }
    let gains = gain_table(positions, prob.users, prob.channel);
    let assignment = match assign_binaries(
        &gains,
        prob.channel,
        prob.rate,
        prob.time.block_duration,
        prob.solver,
        prob.assign_mode,
        prob.available,
    ) {
        Ok(a) => a,
        Err(_) => return infeasible(speeds, hardware),
    };
    let tx = assignment.objective();
    let objective = tx + hardware.iter().sum::<f64>() + prob.hover_total();
    Evaluation { objective, speeds, hardware, assignment: Some(assignment) }
}

/// Uniform point in the disc of `radius` around `center`.
fn sample_disc<R: Rng + ?Sized>(center: Point, radius: f64, rng: &mut R) -> Point {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
}

const SAMPLE_TRIES: usize = 64;

fn sample_position<R: Rng + ?Sized>(
    d: usize,
    center: Point,
    radius: f64,
    prob: &PlacementProblem<'_>,
    rng: &mut R,
) -> Point {
    for _ in 0..SAMPLE_TRIES {
        let p = sample_disc(center, radius, rng);
        if prob.admissible(d, p) {
            return p;
        }
    }
    prob.previous[d]
}

/// `count` particles, drone `d` sampled around `centers[d]` within
/// `radius`, the area and its reachable disc. Drones whose intersection
/// turns up empty stay where they were.
pub fn generate_particles<R: Rng + ?Sized>(
    centers: &[Point],
    radius: f64,
    count: usize,
    prob: &PlacementProblem<'_>,
    rng: &mut R,
) -> Vec<Particle> {
    (0..count)
        .map(|_| {
            Particle::new(
                (0..prob.drones())
                    .map(|d| {
                        if prob.available[d] {
                            sample_position(d, centers[d], radius, prob, rng)
                        } else {
                            prob.previous[d]
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

fn evaluate_all(particles: &mut [Particle], prob: &PlacementProblem<'_>) -> Vec<Evaluation> {
    let evals: Vec<Evaluation> = particles.par_iter().map(|p| evaluate_particle(&p.positions, prob)).collect();
    for (p, e) in particles.iter_mut().zip(&evals) {
        p.objective = e.objective;
    }
    evals
}

/// Lowest objective, earliest index on ties.
fn argmin(particles: &[Particle]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in particles.iter().enumerate() {
        if best.is_none_or(|b| p.objective < particles[b].objective) {
            best = Some(i);
        }
    }
    best
}

/// One refinement round: resample around the incumbent with the radius
/// shrunk once, keeping the incumbent unless a candidate beats it.
pub fn shrink_and_realign<R: Rng + ?Sized>(
    best: &Particle,
    best_eval: &Evaluation,
    radius: f64,
    cfg: &SearchConfig,
    prob: &PlacementProblem<'_>,
    rng: &mut R,
) -> (Particle, Evaluation, f64, usize) {
    let radius = radius * cfg.shrink_factor;
    let mut cands = match cfg.mode {
        SearchMode::Joint => generate_particles(&best.positions, radius, cfg.particles, prob, rng),
        SearchMode::PerDrone => {
            let flying: Vec<usize> = (0..prob.drones()).filter(|&d| prob.available[d]).collect();
            let per = (cfg.particles / flying.len().max(1)).max(1);
            let mut out = Vec::new();
            for &d in &flying {
                for _ in 0..per {
                    let mut pos = best.positions.clone();
                    pos[d] = sample_position(d, best.positions[d], radius, prob, rng);
                    out.push(Particle::new(pos));
                }
            }
            out
        }
    };
    let evals = evaluate_all(&mut cands, prob);
    let n = cands.len();
    match argmin(&cands) {
        Some(i) if cands[i].objective < best.objective => {
            let eval = evals.into_iter().nth(i).expect("index in range");
            (cands.swap_remove(i), eval, radius, n)
        }
        _ => (best.clone(), best_eval.clone(), radius, n),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Particle,
    pub evaluation: Evaluation,
    /// Best objective after the initial generation and each refinement.
    pub best_trace: Vec<f64>,
    /// Sampling radius used by each generation.
    pub radius_trace: Vec<f64>,
    pub evaluated: usize,
}

/// Full placement search for one block.
///
/// The zero-motion placement is always evaluated first and competes with
/// the sampled particles.
pub fn search<R: Rng + ?Sized>(
    sector_centers: &[Point],
    sector_diagonal: f64,
    cfg: &SearchConfig,
    prob: &PlacementProblem<'_>,
    rng: &mut R,
) -> SearchOutcome {
    let radius0 = cfg.init_radius.unwrap_or(0.5 * sector_diagonal);
    let mut population = vec![Particle::new(prob.previous.to_vec())];
    population.extend(generate_particles(sector_centers, radius0, cfg.particles, prob, rng));
    let evals = evaluate_all(&mut population, prob);
    let mut evaluated = population.len();
    let i = argmin(&population).expect("population is nonempty");
    let mut best = population.swap_remove(i);
    let mut best_eval = evals.into_iter().nth(i).expect("index in range");
    let mut best_trace = vec![best.objective];
    let mut radius_trace = vec![radius0];
    let hover = prob.hover_total();
    let mut radius = radius0;
    for _ in 0..cfg.max_refines {
        let prev = best.objective;
        let (b, e, r, n) = shrink_and_realign(&best, &best_eval, radius, cfg, prob, rng);
        best = b;
        best_eval = e;
        radius = r;
        evaluated += n;
        best_trace.push(best.objective);
        radius_trace.push(radius);
        let variable = (prev - hover).abs().max(f64::MIN_POSITIVE);
        if prev.is_finite() && (prev - best.objective) < cfg.tolerance * variable {
            break;
        }
    }
    SearchOutcome { best, evaluation: best_eval, best_trace, radius_trace, evaluated }
}
