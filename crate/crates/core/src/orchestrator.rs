//! Block-by-block simulation: powering-drone replacement, charging
//! decisions, placement with nested allocation, and battery bookkeeping.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::Allocation;
use crate::assign_power::{
    achieved_rates, assign_binaries, charge_decisions, check_backhaul, linearized_feasible, product_bound_admits,
    AssignMode, BackhaulCheck, RateConstraintParams, SolverConfig,
};
use crate::channel::{gain_table, ChannelParams, Point, UserEquipment};
use crate::energy::{
    cdbs_battery_step, hardware_energy, hover_energy, pd_battery_step, transmit_energy, BatteryParams, BlockEnergy,
    EnergyParams, TimeGrid,
};
use crate::error::ValidationErrors;
use crate::placement::{evaluate_particle, search, sector_partition, Area, PlacementProblem, SearchConfig};

/// What happens when a communication drone runs its battery flat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepletionPolicy {
    /// Stop the run and report the drone and block.
    #[default]
    Abort,
    /// Ground the drone and re-associate its users to the rest.
    Drop,
}

/// A complete problem instance. Energies are joules throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub area: Area,
    pub users: Vec<UserEquipment>,
    /// Communication drones.
    pub drones: usize,
    /// Powering drones available for rotation; zero disables charging.
    pub pd_pool: usize,
    pub channel: ChannelParams,
    pub cdbs_energy: EnergyParams,
    pub pd_energy: EnergyParams,
    pub battery: BatteryParams,
    pub time: TimeGrid,
    pub rate: RateConstraintParams,
    pub search: SearchConfig,
    pub solver: SolverConfig,
    /// Distance flown at full speed to reach the area before the first
    /// block (m).
    pub transit_distance: f64,
    /// Where standby powering drones wait and recharge.
    pub pd_dock: Point,
    pub depletion_policy: DepletionPolicy,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_USERS: usize = 12;

impl Default for Scenario {
    fn default() -> Self {
        let area = Area::default();
        let cdbs_energy = EnergyParams::default();
        Self {
            users: random_users(DEFAULT_USERS, &area, DEFAULT_SEED),
            area,
            drones: 4,
            pd_pool: 2,
            channel: ChannelParams::default(),
            pd_energy: cdbs_energy.powering_drone(),
            cdbs_energy,
            battery: BatteryParams::default(),
            time: TimeGrid::default(),
            rate: RateConstraintParams::default(),
            search: SearchConfig::default(),
            solver: SolverConfig::default(),
            transit_distance: 600.0,
            pd_dock: Point::new(0.0, -400.0),
            depletion_policy: DepletionPolicy::Abort,
            seed: DEFAULT_SEED,
        }
    }
}

/// `n` users uniform over `area`, reproducible from `seed`.
pub fn random_users(n: usize, area: &Area, seed: u64) -> Vec<UserEquipment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| UserEquipment {
            id,
            position: Point::new(
                rng.gen_range(area.x_min..=area.x_max),
                rng.gen_range(area.y_min..=area.y_max),
            ),
        })
        .collect()
}

impl Scenario {
    /// Collects every invariant violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut errs = ValidationErrors(Vec::new());
        self.area.validate_into(&mut errs);
        errs.check(self.drones >= 1, || "drones must be >= 1".into());
        for (i, u) in self.users.iter().enumerate() {
            errs.check(u.id == i, || format!("user ids must be 0..U in order (user {i} has id {})", u.id));
            errs.check(self.area.contains(u.position), || {
                format!("user {i} at ({}, {}) lies outside the area", u.position.x, u.position.y)
            });
        }
        self.channel.validate_into(&mut errs);
        self.cdbs_energy.validate_into("energy", &self.time, &mut errs);
        self.pd_energy.validate_into("pd_energy", &self.time, &mut errs);
        self.battery.validate_into(&mut errs);
        self.time.validate_into(&mut errs);
        self.rate.validate_into(self.users.len(), self.drones, &mut errs);
        self.search.validate_into(&mut errs);
        self.solver.validate_into(&mut errs);
        errs.check(self.transit_distance >= 0.0 && self.transit_distance.is_finite(), || {
            format!("transit_distance must be >= 0 (got {})", self.transit_distance)
        });
        errs.into_result()
    }

    pub fn sectors(&self) -> Vec<Area> {
        sector_partition(&self.area, self.drones)
    }

    /// Energy spent reaching the area at full speed.
    pub fn transit_energy(&self) -> f64 {
        self.cdbs_energy.power_full * self.transit_distance / self.cdbs_energy.max_speed
    }

    /// Most a powering drone can use in one charging block, including the
    /// energy it hands over.
    pub fn pd_worst_case_block(&self) -> f64 {
        let ep = &self.pd_energy;
        hover_energy(ep, &self.time) + ep.power_full * ep.move_time + self.battery.charge_per_block
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdState {
    /// Index within the pool of the drone currently on duty.
    pub active_id: usize,
    pub battery: f64,
    pub position: Point,
    pub swaps: usize,
    /// Docked drones draw nothing; the active one launches at its first
    /// charging session and stays up until replaced.
    pub airborne: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entity {
    Cdbs(usize),
    Pd(usize),
    User(usize),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Cdbs(d) => write!(f, "cdbs{d}"),
            Entity::Pd(p) => write!(f, "pd{p}"),
            Entity::User(u) => write!(f, "user{u}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// The powering drone charges this drone for the block.
    Charge,
    /// The active powering drone is replaced.
    Swap,
    /// At or below threshold but not charged this block.
    LowBattery,
    /// Battery ran flat during the block.
    Depleted,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Charge => "charge",
            EventKind::Swap => "swap",
            EventKind::LowBattery => "low_battery",
            EventKind::Depleted => "depleted",
        }
    }
}

/// A discrete occurrence. `battery` is the entity's level (J) when it
/// happened: at block start for charges, swaps and warnings, floored at
/// zero for depletion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub block: usize,
    pub kind: EventKind,
    pub entity: Entity,
    pub battery: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Block objective: transmit, hardware and hover energy (J).
    pub objective: f64,
    pub particles_evaluated: usize,
    pub refine_rounds: usize,
    /// Power solves spent on the final allocation.
    pub assign_evaluations: usize,
    /// Convexification rounds of the final power solve.
    pub sca_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdReport {
    pub active_id: usize,
    /// Level at block start, after any replacement (J).
    pub start_battery: f64,
    /// Level at block end (J).
    pub battery: f64,
    pub position: Point,
    pub swaps: usize,
    pub airborne: bool,
    pub swapped: bool,
    pub charges: usize,
    /// Self-consumption over the block.
    pub energy: BlockEnergy,
}

/// Everything that happened in one block. Block 0 is the arrival state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub block: usize,
    pub positions: Vec<Point>,
    /// Implied speeds (m/s).
    pub speeds: Vec<f64>,
    pub energy: Vec<BlockEnergy>,
    /// Levels at block end (J).
    pub batteries: Vec<f64>,
    pub beta: Vec<bool>,
    /// Drones still in service during the block.
    pub flying: Vec<bool>,
    pub allocation: Allocation,
    pub user_rates: Vec<f64>,
    pub backhaul: BackhaulCheck,
    pub pd: Option<PdReport>,
    pub events: Vec<Event>,
    pub diagnostics: Diagnostics,
}

impl BlockResult {
    pub fn depleted(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match (e.kind, e.entity) {
                (EventKind::Depleted, Entity::Cdbs(d)) => Some(d),
                _ => None,
            })
            .collect()
    }

    fn pd_depleted(&self) -> bool {
        self.events.iter().any(|e| e.kind == EventKind::Depleted && matches!(e.entity, Entity::Pd(_)))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("block {block}: rate floor cannot be met for user(s) {users:?}")]
    Infeasible { block: usize, users: Vec<usize> },

    #[error("block {block}: battery of drone(s) {drones:?} depleted")]
    Depleted { block: usize, drones: Vec<usize> },

    #[error("block {block}: powering drone {id} depleted")]
    PdDepleted { block: usize, id: usize },

    #[error("block {block}: {message}")]
    Allocation { block: usize, message: String },
}

/// A failed run with every block completed before (and including) the
/// failure.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFailure {
    pub error: SimError,
    pub partial: Vec<BlockResult>,
}

impl fmt::Display for SimFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} block(s) completed)", self.error, self.partial.len())
    }
}

impl std::error::Error for SimFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Mutable state carried from block to block.
#[derive(Debug, Clone)]
pub struct SimState {
    /// Last completed block.
    pub block: usize,
    pub positions: Vec<Point>,
    pub batteries: Vec<f64>,
    pub flying: Vec<bool>,
    pub pd: PdState,
    rng: ChaCha8Rng,
}

impl SimState {
    /// State after arrival, with the block-0 record.
    pub fn initial(sc: &Scenario) -> Result<(Self, BlockResult), SimError> {
        let nd = sc.drones;
        let positions: Vec<Point> = sc.sectors().iter().map(Area::centroid).collect();
        let transit = sc.transit_energy();
        let energy = vec![BlockEnergy { hardware: transit, hover: 0.0, transmit: 0.0 }; nd];
        let batteries = vec![sc.battery.cdbs_initial - transit; nd];
        let flying = vec![true; nd];
        let pd = PdState {
            active_id: 0,
            battery: sc.battery.pd_initial,
            position: sc.pd_dock,
            swaps: 0,
            airborne: false,
        };

        let gains = gain_table(&positions, &sc.users, &sc.channel);
        let a = assign_binaries(
            &gains,
            &sc.channel,
            &sc.rate,
            sc.time.block_duration,
            &sc.solver,
            AssignMode::Full,
            &flying,
        )
        .map_err(|e| SimError::Allocation { block: 0, message: e.to_string() })?;
        let Some(sol) = a.solution else {
            return Err(SimError::Infeasible { block: 0, users: a.infeasible_users });
        };
        let mut allocation = sol.allocation;
        allocation.set_betas(&vec![false; nd]);
        let user_rates = achieved_rates(&allocation, &gains, &sc.channel);
        let result = BlockResult {
            block: 0,
            speeds: vec![0.0; nd],
            energy,
            batteries: batteries.clone(),
            beta: vec![false; nd],
            flying: flying.clone(),
            backhaul: check_backhaul(&user_rates, &sc.rate),
            user_rates,
            allocation,
            pd: (sc.pd_pool > 0).then(|| PdReport {
                active_id: pd.active_id,
                start_battery: pd.battery,
                battery: pd.battery,
                position: pd.position,
                swaps: 0,
                airborne: false,
                swapped: false,
                charges: 0,
                energy: BlockEnergy::default(),
            }),
            events: Vec::new(),
            diagnostics: Diagnostics {
                objective: 0.0,
                assign_evaluations: a.evaluations,
                sca_iterations: sol.state.iterations,
                ..Default::default()
            },
            positions: positions.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        rng.set_stream(1);
        Ok((Self { block: 0, positions, batteries, flying, pd, rng }, result))
    }
}

/// Powering-drone replacement at block start. Swaps at the threshold, or
/// earlier when the active drone could not survive a charging block.
fn replace_pd(sc: &Scenario, pd: &mut PdState, block: usize, events: &mut Vec<Event>) -> bool {
    if sc.pd_pool == 0 {
        return false;
    }
    let low = pd.battery <= sc.battery.pd_threshold;
    let short = pd.battery < sc.pd_worst_case_block();
    if !(low || short) {
        return false;
    }
    events.push(Event { block, kind: EventKind::Swap, entity: Entity::Pd(pd.active_id), battery: pd.battery });
    pd.swaps += 1;
    pd.active_id = pd.swaps % sc.pd_pool;
    pd.battery = sc.battery.pd_initial;
    pd.position = sc.pd_dock;
    pd.airborne = false;
    true
}

/// Runs the next block and advances `state`.
///
/// Depletion is reported through `Depleted` events rather than an error so
/// the caller can keep the block in its trace.
pub fn run_block(sc: &Scenario, state: &mut SimState) -> Result<BlockResult, SimError> {
    let n = state.block + 1;
    let nd = sc.drones;
    let mut events = Vec::new();

    // (i) powering-drone replacement
    let swapped = replace_pd(sc, &mut state.pd, n, &mut events);

    // (ii) charging decisions on start-of-block levels
    let beta = if sc.pd_pool > 0 {
        let eligible: Vec<f64> = (0..nd)
            .map(|d| if state.flying[d] { state.batteries[d] } else { f64::INFINITY })
            .collect();
        charge_decisions(&eligible, &sc.battery, &mut state.rng)
    } else {
        vec![false; nd]
    };
    for d in 0..nd {
        let level = state.batteries[d];
        if beta[d] {
            events.push(Event { block: n, kind: EventKind::Charge, entity: Entity::Cdbs(d), battery: level });
        } else if state.flying[d] && level <= sc.battery.cdbs_threshold {
            events.push(Event { block: n, kind: EventKind::LowBattery, entity: Entity::Cdbs(d), battery: level });
        }
    }

    // (iii) placement with nested allocation
    let centers: Vec<Point> = sc.sectors().iter().map(Area::centroid).collect();
    let diagonal = sc.sectors()[0].diagonal();
    let mut prob = PlacementProblem {
        users: &sc.users,
        channel: &sc.channel,
        energy: &sc.cdbs_energy,
        rate: &sc.rate,
        time: &sc.time,
        solver: &sc.solver,
        area: &sc.area,
        previous: &state.positions,
        available: &state.flying,
        assign_mode: AssignMode::Greedy,
    };
    let outcome = search(&centers, diagonal, &sc.search, &prob, &mut state.rng);
    prob.assign_mode = AssignMode::Full;
    let refined = evaluate_particle(&outcome.best.positions, &prob);
    let positions = outcome.best.positions.clone();
    let eval = if refined.objective <= outcome.evaluation.objective { refined } else { outcome.evaluation };
    let assignment = match eval.assignment {
        Some(a) if a.solution.is_some() => a,
        _ => {
            let gains = gain_table(&positions, &sc.users, &sc.channel);
            let a = assign_binaries(
                &gains,
                &sc.channel,
                &sc.rate,
                sc.time.block_duration,
                &sc.solver,
                AssignMode::Full,
                &state.flying,
            )
            .map_err(|e| SimError::Allocation { block: n, message: e.to_string() })?;
            return Err(SimError::Infeasible { block: n, users: a.infeasible_users });
        }
    };
    let sol = assignment.solution.expect("checked above");
    let mut allocation = sol.allocation;
    allocation.set_betas(&beta);
    let gains = gain_table(&positions, &sc.users, &sc.channel);
    let user_rates = achieved_rates(&allocation, &gains, &sc.channel);

    // (iv) battery recursions
    let hover = hover_energy(&sc.cdbs_energy, &sc.time);
    let mut energy = vec![BlockEnergy::default(); nd];
    let mut batteries = state.batteries.clone();
    let flying = state.flying.clone();
    for d in 0..nd {
        if !flying[d] {
            continue;
        }
        energy[d] = BlockEnergy {
            hardware: eval.hardware[d],
            hover,
            transmit: transmit_energy(&allocation, d, &sc.time),
        };
        let step = cdbs_battery_step(state.batteries[d], &energy[d], beta[d], &sc.battery);
        batteries[d] = step.level;
        if step.depleted {
            events.push(Event { block: n, kind: EventKind::Depleted, entity: Entity::Cdbs(d), battery: 0.0 });
            if sc.depletion_policy == DepletionPolicy::Drop {
                state.flying[d] = false;
            }
        }
    }

    let pd = (sc.pd_pool > 0).then(|| {
        let pd = &mut state.pd;
        let charges = beta.iter().filter(|&&b| b).count();
        let ep = &sc.pd_energy;
        let used = if let Some(target) = beta.iter().position(|&b| b).map(|d| positions[d]) {
            let v = (pd.position.dist(target) / ep.move_time).min(ep.max_speed);
            pd.position = target;
            pd.airborne = true;
            BlockEnergy {
                hardware: hardware_energy(v, ep).expect("speed clamped to the limit"),
                hover: hover_energy(ep, &sc.time),
                transmit: 0.0,
            }
        } else if pd.airborne {
            BlockEnergy {
                hardware: hardware_energy(0.0, ep).expect("zero speed"),
                hover: hover_energy(ep, &sc.time),
                transmit: 0.0,
            }
        } else {
            BlockEnergy::default()
        };
        let start_battery = pd.battery;
        let step = pd_battery_step(start_battery, &used, charges, &sc.battery);
        pd.battery = step.level;
        if step.depleted {
            events.push(Event { block: n, kind: EventKind::Depleted, entity: Entity::Pd(pd.active_id), battery: 0.0 });
        }
        PdReport {
            active_id: pd.active_id,
            start_battery,
            battery: pd.battery,
            position: pd.position,
            swaps: pd.swaps,
            airborne: pd.airborne,
            swapped,
            charges,
            energy: used,
        }
    });

    let result = BlockResult {
        block: n,
        speeds: eval.speeds,
        energy,
        batteries: batteries.clone(),
        beta,
        flying,
        backhaul: check_backhaul(&user_rates, &sc.rate),
        user_rates,
        allocation,
        pd,
        events,
        diagnostics: Diagnostics {
            objective: eval.objective,
            particles_evaluated: outcome.evaluated,
            refine_rounds: outcome.best_trace.len() - 1,
            assign_evaluations: assignment.evaluations,
            sca_iterations: sol.state.iterations,
        },
        positions: positions.clone(),
    };
    state.block = n;
    state.positions = positions;
    state.batteries = batteries;
    Ok(result)
}

/// Runs blocks `0..=N`. On failure the trace up to and including the
/// failing block (when it completed) comes back with the error.
pub fn run_simulation(sc: &Scenario) -> Result<Vec<BlockResult>, SimFailure> {
    let fail = |error, partial| SimFailure { error, partial };
    let (mut state, first) = SimState::initial(sc).map_err(|e| fail(e, Vec::new()))?;
    let mut trace = vec![first];
    for _ in 0..sc.time.blocks {
        let r = match run_block(sc, &mut state) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, trace)),
        };
        let block = r.block;
        let depleted = r.depleted();
        let pd_out = r.pd_depleted().then_some(state.pd.active_id);
        trace.push(r);
        if let Some(id) = pd_out {
            return Err(fail(SimError::PdDepleted { block, id }, trace));
        }
        if !depleted.is_empty() && sc.depletion_policy == DepletionPolicy::Abort {
            return Err(fail(SimError::Depleted { block, drones: depleted }, trace));
        }
        if !state.flying.iter().any(|&f| f) {
            return Err(fail(SimError::Depleted { block, drones: depleted }, trace));
        }
    }
    Ok(trace)
}

const KINEMATIC_TOL: f64 = 1e-9;

/// Bounds and reachability of a position history (one entry per block).
/// Returns every violation found.
pub fn kinematics_check(history: &[Vec<Point>], area: &Area, ep: &EnergyParams) -> Vec<String> {
    let mut out = Vec::new();
    let reach = ep.reach();
    for (n, positions) in history.iter().enumerate() {
        for (d, &p) in positions.iter().enumerate() {
            if !area.contains(p) {
                out.push(format!("block {n}: drone {d} at ({}, {}) outside the area", p.x, p.y));
            }
            if n > 0 {
                let step = p.dist(history[n - 1][d]);
                let v = step / ep.move_time;
                if step > reach * (1.0 + KINEMATIC_TOL) || v > ep.max_speed * (1.0 + KINEMATIC_TOL) {
                    out.push(format!(
                        "block {n}: drone {d} moved {step} m (speed {v} m/s) beyond {reach} m per block"
                    ));
                }
            }
        }
    }
    out
}

/// Exhaustive check that the linear power coupling and the bilinear one
/// admit the same powers on a grid of probe values.
pub fn linearization_self_test(max_power: f64) -> Vec<String> {
    let mut out = Vec::new();
    for psi in [false, true] {
        for phi in [false, true] {
            for k in -4..=204 {
                let p = max_power * k as f64 / 200.0;
                if linearized_feasible(psi, phi, p, max_power) != product_bound_admits(psi, phi, p, max_power) {
                    out.push(format!("linearization disagrees at psi={psi} phi={phi} p={p}"));
                }
            }
        }
    }
    out
}

/// Post-run audit of a trace: kinematics, implied speeds, allocation
/// constraints, rate floors, charging rules and battery accounting.
pub fn audit(sc: &Scenario, trace: &[BlockResult]) -> Vec<String> {
    let mut out = Vec::new();
    let history: Vec<Vec<Point>> = trace.iter().map(|r| r.positions.clone()).collect();
    out.extend(kinematics_check(&history, &sc.area, &sc.cdbs_energy));
    out.extend(linearization_self_test(sc.rate.max_power));

    for (i, r) in trace.iter().enumerate() {
        let n = r.block;
        for v in r.allocation.violations(sc.rate.max_power) {
            out.push(format!("block {n}: {v}"));
        }
        for (u, &rate) in r.user_rates.iter().enumerate() {
            if rate < sc.rate.min_rate - 1e-9 {
                out.push(format!("block {n}: user {u} rate {rate} below floor {}", sc.rate.min_rate));
            }
        }
        let charged = r.beta.iter().filter(|&&b| b).count();
        if charged > 1 {
            out.push(format!("block {n}: {charged} drones charged"));
        }
        if i == 0 {
            continue;
        }
        let prev = &trace[i - 1];
        for d in 0..sc.drones {
            if !r.flying[d] {
                continue;
            }
            let step = r.positions[d].dist(prev.positions[d]) / sc.cdbs_energy.move_time;
            if (step - r.speeds[d]).abs() > KINEMATIC_TOL * sc.cdbs_energy.max_speed {
                out.push(format!("block {n}: drone {d} speed {} != displacement rate {step}", r.speeds[d]));
            }
            if r.beta[d] && prev.batteries[d] > sc.battery.cdbs_threshold {
                out.push(format!(
                    "block {n}: drone {d} charged at {} J, above threshold {} J",
                    prev.batteries[d], sc.battery.cdbs_threshold
                ));
            }
            let expect = cdbs_battery_step(prev.batteries[d], &r.energy[d], r.beta[d], &sc.battery).level;
            if (expect - r.batteries[d]).abs() > 1e-9 * sc.battery.cdbs_initial {
                out.push(format!("block {n}: drone {d} battery {} != recursion {expect}", r.batteries[d]));
            }
        }
    }
    out
}
