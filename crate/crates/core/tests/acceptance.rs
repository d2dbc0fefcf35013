//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so every verdict is printed even when all pass.
//! Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dbsgrid::allocation::{Allocation, GainTable};
use dbsgrid::assign_power::{
    achieved_rates, assign_binaries, linearized_admits, linearized_feasible, product_bound_admits, rate_split,
    sca_upper_bound_r2, AssignMode, RateConstraintParams, SolverConfig,
};
use dbsgrid::channel::{path_gain, subchannel_rate, ChannelParams, Point};
use dbsgrid::energy::{hardware_energy, hover_power, EnergyParams, TimeGrid};
use dbsgrid::orchestrator::{run_simulation, BlockResult, DepletionPolicy, EventKind, Scenario};
use dbsgrid::scenario_io::{cli_main, load_scenario, TRACE_FILES};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped_scenarios() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .expect("scenarios directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    out.sort();
    out
}

fn default_scenario() -> Scenario {
    load_scenario(&scenarios_dir().join("default.toml")).expect("default scenario loads")
}

fn simulate(sc: &Scenario) -> Result<Vec<BlockResult>, String> {
    run_simulation(sc).map_err(|f| f.to_string())
}

/// The default run, shared by the battery and powering-drone checks.
fn default_trace() -> Result<&'static [BlockResult], String> {
    static TRACE: OnceLock<Result<Vec<BlockResult>, String>> = OnceLock::new();
    TRACE.get_or_init(|| simulate(&default_scenario())).as_deref().map_err(Clone::clone)
}

/// Output directory of the audited CLI runs, one subdirectory per scenario.
fn audit_dir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temporary directory")).path()
}

// ---------------------------------------------------------------------------
// Closed-form model evaluations
// ---------------------------------------------------------------------------

fn formula_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let cp = ChannelParams {
            rho_o: rng.gen_range(1e-4..1.0),
            altitude: rng.gen_range(10.0..500.0),
            ..ChannelParams::default()
        };
        let (dx, dy) = (rng.gen_range(-800.0..800.0), rng.gen_range(-800.0..800.0));
        let (ux, uy) = (rng.gen_range(-400.0..400.0), rng.gen_range(-400.0..400.0));
        let got = path_gain(Point::new(ux + dx, uy + dy), Point::new(ux, uy), &cp);
        let want = cp.rho_o / (cp.altitude.powi(2) + dx * dx + dy * dy);
        worst = worst.max(rel_err(got, want));

        let ep = EnergyParams {
            mass: rng.gen_range(0.2..10.0),
            gravity: rng.gen_range(9.7..9.9),
            air_density: rng.gen_range(0.9..1.3),
            propeller_radius: rng.gen_range(0.05..0.5),
            propeller_count: rng.gen_range(2..9),
            power_full: rng.gen_range(1.0..50.0),
            max_speed: rng.gen_range(5.0..40.0),
            move_time: rng.gen_range(1.0..120.0),
            ..EnergyParams::default()
        };
        let ep = EnergyParams { power_idle: rng.gen_range(0.0..ep.power_full), ..ep };
        let weight = ep.mass * ep.gravity;
        let area = PI * ep.propeller_radius.powi(2) * ep.propeller_count as f64;
        let want = weight.powf(1.5) / (2.0 * ep.air_density * area).sqrt();
        worst = worst.max(rel_err(hover_power(&ep), want));

        let v = rng.gen_range(0.0..=ep.max_speed);
        let frac = v / ep.max_speed;
        let want = ep.move_time * (ep.power_idle + frac * (ep.power_full - ep.power_idle));
        let got = hardware_energy(v, &ep).map_err(|e| e.to_string())?;
        worst = worst.max(rel_err(got, want));

        let s: f64 = 10f64.powf(rng.gen_range(-6.0..6.0));
        worst = worst.max(rel_err(subchannel_rate(s), s.ln_1p() / 2f64.ln()));
    }
    ensure(worst <= 1e-9, || format!("worst relative error {worst:e} > 1e-9"))?;
    Ok(format!("400 evaluations, worst relative error {worst:.2e}"))
}

fn linearization_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let pmax = 1.0;
    let mut checked = 0;
    for psi in [false, true] {
        for phi in [false, true] {
            for _ in 0..1000 {
                let p = rng.gen_range(-0.5 * pmax..1.5 * pmax);
                let bilinear = product_bound_admits(psi, phi, p, pmax);
                let linear = linearized_feasible(psi, phi, p, pmax);
                // Independent existence check over the product variable.
                let any_w = (0..=100).any(|k| linearized_admits(psi, phi, k as f64 / 100.0, p, pmax));
                ensure(bilinear == linear && linear == any_w, || {
                    format!("psi={psi} phi={phi} p={p}: bilinear {bilinear}, linear {linear}, scan {any_w}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (psi, phi, p) points agree"))
}

fn sca_bound_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (nu, nd, nm) = (3, 2, 2);
    let mut worst_tight = 0.0f64;
    let mut worst_gap = f64::INFINITY;
    let random_powers = |rng: &mut ChaCha8Rng| {
        let mut a = Allocation::new(nu, nd, nm);
        for u in 0..nu {
            for d in 0..nd {
                for m in 0..nm {
                    let p = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) };
                    a.set_power(u, d, m, p);
                }
            }
        }
        a
    };
    for _ in 0..100 {
        let g: Vec<f64> = (0..nu * nd).map(|_| 10f64.powf(rng.gen_range(-10.0..-6.0))).collect();
        let gains = GainTable::from_fn(nu, nd, |u, d| g[u * nd + d]);
        let noise = 10f64.powf(rng.gen_range(-12.0..-9.0));
        let (u, m) = (rng.gen_range(0..nu), rng.gen_range(0..nm));
        let p_ref = random_powers(&mut rng);
        let (_, r2) = rate_split(u, m, &p_ref, &gains, noise);
        let at_ref = sca_upper_bound_r2(u, m, &p_ref, &p_ref, &gains, noise);
        worst_tight = worst_tight.max(rel_err(at_ref, r2));
        for _ in 0..100 {
            let p = random_powers(&mut rng);
            let (_, r2) = rate_split(u, m, &p, &gains, noise);
            let bound = sca_upper_bound_r2(u, m, &p, &p_ref, &gains, noise);
            worst_gap = worst_gap.min((bound - r2) / r2.abs().max(1.0));
        }
    }
    ensure(worst_tight <= 1e-12, || format!("tightness error {worst_tight:e} > 1e-12"))?;
    ensure(worst_gap >= -1e-12, || format!("bound below the function by {:e}", -worst_gap))?;
    Ok(format!("tightness {worst_tight:.1e}, smallest normalized margin {worst_gap:.2e} over 10000 points"))
}

// ---------------------------------------------------------------------------
// Brute-force allocation oracle
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
struct Stream {
    user: usize,
    drone: usize,
    sub: usize,
}

struct Oracle<'a> {
    gains: &'a [[f64; 2]; 2],
    noise: f64,
    min_rate: f64,
    steps: u32,
    step: f64,
}

impl Oracle<'_> {
    fn rates(&self, streams: &[Stream], k: &[u32]) -> [f64; 2] {
        let mut r = [0.0; 2];
        for (s, st) in streams.iter().enumerate() {
            let signal = k[s] as f64 * self.step * self.gains[st.user][st.drone];
            let interference: f64 = streams
                .iter()
                .zip(k)
                .filter(|(o, _)| o.sub == st.sub && o.user != st.user)
                .map(|(o, &ko)| ko as f64 * self.step * self.gains[st.user][o.drone])
                .sum();
            r[st.user] += (signal / (interference + self.noise)).ln_1p() / 2f64.ln();
        }
        r
    }

    fn caps_ok(&self, streams: &[Stream], k: &[u32]) -> bool {
        (0..2).all(|d| streams.iter().zip(k).filter(|(s, _)| s.drone == d).map(|(_, &k)| k).sum::<u32>() <= self.steps)
    }

    /// Smallest grid power on the last stream meeting its user's floor.
    fn last_step(&self, streams: &[Stream], k: &mut [u32]) -> Option<u32> {
        let last = streams.len() - 1;
        let st = streams[last];
        k[last] = 0;
        let have = self.rates(streams, k)[st.user];
        let need = self.min_rate - have;
        if need <= 0.0 {
            return Some(0);
        }
        let interference: f64 = streams[..last]
            .iter()
            .zip(&k[..last])
            .filter(|(o, _)| o.sub == st.sub && o.user != st.user)
            .map(|(o, &ko)| ko as f64 * self.step * self.gains[st.user][o.drone])
            .sum();
        let p = (2f64.powf(need) - 1.0) * (interference + self.noise) / self.gains[st.user][st.drone];
        let mut kl = (p / self.step).ceil().max(0.0);
        if kl > self.steps as f64 {
            return None;
        }
        for _ in 0..2 {
            k[last] = kl as u32;
            if self.rates(streams, k)[st.user] >= self.min_rate {
                return Some(kl as u32);
            }
            kl += 1.0;
            if kl > self.steps as f64 {
                return None;
            }
        }
        None
    }

    fn search(&self, streams: &[Stream], k: &mut Vec<u32>, depth: usize, sum: u32, best: &mut u32) {
        if depth + 1 == streams.len() {
            if let Some(kl) = self.last_step(streams, k) {
                k[depth] = kl;
                let total = sum + kl;
                if total < *best && self.caps_ok(streams, k) && self.rates(streams, k).iter().all(|&r| r >= self.min_rate) {
                    *best = total;
                }
            }
            return;
        }
        for v in 0..=self.steps {
            if sum + v >= *best {
                break;
            }
            k[depth] = v;
            self.search(streams, k, depth + 1, sum + v, best);
        }
    }

    /// Minimum total grid power over every association and subchannel
    /// choice, or `None` if nothing on the grid meets both floors.
    fn solve(&self) -> Option<f64> {
        let subsets: [&[usize]; 3] = [&[0], &[1], &[0, 1]];
        let mut configs: Vec<Vec<Stream>> = Vec::new();
        for d0 in 0..2 {
            for d1 in 0..2 {
                for s0 in subsets {
                    for s1 in subsets {
                        let mut v = Vec::new();
                        for (user, drone, subs) in [(0, d0, s0), (1, d1, s1)] {
                            v.extend(subs.iter().map(|&sub| Stream { user, drone, sub }));
                        }
                        configs.push(v);
                    }
                }
            }
        }
        // Small configurations first so the bound tightens early.
        configs.sort_by_key(Vec::len);
        let mut best = u32::MAX;
        for streams in &configs {
            let mut k = vec![0; streams.len()];
            self.search(streams, &mut k, 0, 0, &mut best);
        }
        (best != u32::MAX).then_some(best as f64 * self.step)
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cp = ChannelParams::default();
    let rcp = RateConstraintParams { min_rate: 1.0, subchannels: 2, max_power: 1.0, ..RateConstraintParams::default() };
    let cfg = SolverConfig::default();
    let block = TimeGrid::default().block_duration;
    let mut worst_ratio = 0.0f64;
    let mut instances = 0;
    let mut attempts = 0;
    while instances < 20 {
        attempts += 1;
        ensure(attempts <= 200, || "could not draw 20 feasible instances".into())?;
        let mut g = [[0.0; 2]; 2];
        for row in &mut g {
            for x in row.iter_mut() {
                *x = rng.gen_range(1.5e-10..6e-10);
            }
        }
        let oracle = Oracle { gains: &g, noise: cp.noise_power, min_rate: rcp.min_rate, steps: 200, step: rcp.max_power / 200.0 };
        let Some(best) = oracle.solve() else { continue };
        instances += 1;

        let gains = GainTable::from_fn(2, 2, |u, d| g[u][d]);
        let a = assign_binaries(&gains, &cp, &rcp, block, &cfg, AssignMode::Full, &[true, true])
            .map_err(|e| format!("instance {instances}: {e}"))?;
        let sol = a.solution.ok_or_else(|| format!("instance {instances}: solver found no allocation (oracle {best} W)"))?;
        let power = sol.allocation.total_power();
        let ratio = power / best;
        worst_ratio = worst_ratio.max(ratio);
        ensure(ratio <= 1.05, || format!("instance {instances}: solver {power} W vs oracle {best} W"))?;
        let rates = achieved_rates(&sol.allocation, &gains, &cp);
        ensure(rates.iter().all(|&r| r >= rcp.min_rate - 1e-9), || {
            format!("instance {instances}: rates {rates:?} below the floor")
        })?;
        let v = sol.allocation.violations(rcp.max_power);
        ensure(v.is_empty(), || format!("instance {instances}: {v:?}"))?;
    }
    Ok(format!("{instances} instances, worst solver/oracle power ratio {worst_ratio:.4}"))
}

// ---------------------------------------------------------------------------
// Full runs
// ---------------------------------------------------------------------------

fn battery_trajectories() -> Outcome {
    let sc = default_scenario();
    let th = sc.battery.cdbs_threshold;
    let trace = default_trace()?;
    ensure(trace.len() == sc.time.blocks + 1, || format!("{} blocks recorded", trace.len()))?;
    for r in trace {
        ensure(r.batteries.iter().all(|&b| b > 0.0), || format!("block {}: batteries {:?}", r.block, r.batteries))?;
    }
    let mut charges = 0;
    for w in trace.windows(2) {
        for (d, &charged) in w[1].beta.iter().enumerate() {
            if charged {
                charges += 1;
                ensure(w[0].batteries[d] <= th, || {
                    format!("block {}: drone {d} charged at {} J", w[1].block, w[0].batteries[d])
                })?;
            }
        }
        for e in w[1].events.iter().filter(|e| e.kind == EventKind::Charge) {
            ensure(e.battery <= th, || format!("charge event above threshold: {e:?}"))?;
        }
    }
    let min_with = trace.last().unwrap().batteries.iter().cloned().fold(f64::INFINITY, f64::min);

    let no_pd = load_scenario(&scenarios_dir().join("no_pd.toml")).map_err(|e| e.to_string())?;
    let dry = simulate(&no_pd)?;
    let last = dry.last().unwrap();
    ensure(last.block == sc.time.blocks, || format!("no-PD run stopped at block {}", last.block))?;
    let min_without = last.batteries.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(min_without <= th, || format!("no-PD run ends with every battery above threshold ({min_without} J)"))?;
    Ok(format!(
        "with PD: {charges} charge(s), lowest final battery {:.1} kJ; without PD: lowest final battery {:.1} kJ",
        min_with / 1e3,
        min_without / 1e3
    ))
}

/// Checks the powering drone's accounting over a trace. Returns the number
/// of charge blocks and swaps seen.
fn pd_accounting(sc: &Scenario, trace: &[BlockResult]) -> Result<(usize, usize), String> {
    let b = &sc.battery;
    let (mut charges, mut swaps) = (0, 0);
    for w in trace.windows(2) {
        let (prev, cur) = (w[0].pd.as_ref().unwrap(), w[1].pd.as_ref().unwrap());
        let n = w[1].block;
        if cur.swapped {
            swaps += 1;
            ensure(cur.start_battery == b.pd_initial, || format!("block {n}: successor starts at {}", cur.start_battery))?;
            let out = w[1].events.iter().find(|e| e.kind == EventKind::Swap).ok_or("swap without an event")?;
            ensure(out.battery <= b.pd_threshold, || format!("block {n}: swapped at {} J", out.battery))?;
        } else {
            ensure(cur.start_battery == prev.battery, || format!("block {n}: start level does not carry over"))?;
            ensure(prev.battery > b.pd_threshold, || format!("block {n}: no swap at {} J", prev.battery))?;
        }
        let expect = cur.start_battery - cur.energy.total() - cur.charges as f64 * b.charge_per_block;
        ensure((cur.battery - expect).abs() <= 1e-9 * b.pd_initial, || {
            format!("block {n}: level {} vs recursion {expect}", cur.battery)
        })?;
        let spent = cur.start_battery - cur.battery - cur.energy.total();
        ensure((spent - cur.charges as f64 * b.charge_per_block).abs() <= 1e-6, || {
            format!("block {n}: handed over {spent} J for {} charge(s)", cur.charges)
        })?;
        charges += cur.charges;
    }
    Ok((charges, swaps))
}

fn pd_trajectory() -> Outcome {
    let sc = default_scenario();
    let (charges, swaps) = pd_accounting(&sc, default_trace()?)?;
    ensure(charges > 0, || "default run never charges".into())?;

    // Longer horizon so the powering drone crosses its threshold. Drones
    // that run flat are grounded instead of ending the run.
    let blocks = 8;
    let long = Scenario {
        time: TimeGrid::new(blocks, sc.time.block_duration),
        depletion_policy: DepletionPolicy::Drop,
        ..sc.clone()
    };
    let trace = simulate(&long)?;
    let (long_charges, long_swaps) = pd_accounting(&long, &trace)?;
    ensure(long_swaps > 0, || "extended run never crossed the powering-drone threshold".into())?;
    Ok(format!(
        "{charges} charge(s), {swaps} swap(s) over 6 blocks; {long_charges} charge(s), {long_swaps} swap(s) over {blocks} blocks"
    ))
}

fn run_cli(scenario: &Path, out: &Path) -> i32 {
    cli_main([
        "dbsgrid".as_ref(),
        "--scenario".as_ref(),
        scenario.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
        "--audit".as_ref(),
        "--quiet".as_ref(),
    ] as [&std::ffi::OsStr; 7])
}

fn constraint_audit() -> Outcome {
    let mut names = Vec::new();
    for path in shipped_scenarios() {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let code = run_cli(&path, &audit_dir().join(&name));
        ensure(code == 0, || format!("{name}: exit status {code}"))?;
        names.push(name);
    }
    ensure(names.len() >= 3, || format!("only {} shipped scenarios", names.len()))?;
    Ok(format!("audit clean on {}", names.join(", ")))
}

fn determinism() -> Outcome {
    let path = scenarios_dir().join("default.toml");
    let (a, b) = (audit_dir().join("default"), audit_dir().join("default-rerun"));
    for dir in [&a, &b] {
        if !dir.join(TRACE_FILES[0]).exists() {
            let code = run_cli(&path, dir);
            ensure(code == 0, || format!("exit status {code}"))?;
        }
    }
    let mut bytes = 0;
    for name in TRACE_FILES {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{name} differs between runs"))?;
        bytes += x.len();
    }
    let rows = std::fs::read_to_string(a.join("cdbs_battery.csv")).unwrap().lines().count() - 1;
    ensure(rows == 28, || format!("cdbs_battery.csv has {rows} rows"))?;
    Ok(format!("{} files, {bytes} bytes identical", TRACE_FILES.len()))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 8] = [
        ("AC1", "formula fidelity", formula_fidelity),
        ("AC2", "linearization exactness", linearization_exactness),
        ("AC3", "convexification bound", sca_bound_properties),
        ("AC4", "brute-force oracle equivalence", oracle_equivalence),
        ("AC5", "battery trajectories with and without charging", battery_trajectories),
        ("AC6", "powering-drone accounting and replacement", pd_trajectory),
        ("AC7", "constraint audit on shipped scenarios", constraint_audit),
        ("AC8", "byte-identical reruns", determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| Err(panic_message(p)));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("{id} FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
