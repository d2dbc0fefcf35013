//! Command-line entry point.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use super::file::{ScenarioFile, TimeSection};
use super::traces::emit_traces;
use crate::error::Error;
use crate::orchestrator::{audit, run_simulation, BlockResult, EventKind, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Simulate a drone base-station grid with in-flight recharging and write
/// per-block CSV traces.
#[derive(Debug, Parser)]
#[command(name = "dbsgrid", version)]
struct Args {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Output directory for the CSV traces.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Random seed for users, sampling and tie-breaks.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Run without a powering drone.
    #[arg(long)]
    no_pd: bool,
    /// Number of randomly placed users (replaces any listed users).
    #[arg(long, value_name = "N")]
    users: Option<usize>,
    /// Number of communication drones.
    #[arg(long, value_name = "N")]
    drones: Option<usize>,
    /// Number of time blocks; the horizon follows.
    #[arg(long, value_name = "N")]
    blocks: Option<usize>,
    /// Audit constraints after the run; violations exit with status 2.
    #[arg(long)]
    audit: bool,
    /// Suppress the run summary.
    #[arg(long)]
    quiet: bool,
}

impl Args {
    fn apply(&self, file: &mut ScenarioFile) {
        if let Some(seed) = self.seed {
            file.seed = Some(seed);
        }
        if self.no_pd {
            file.pd_pool = Some(0);
        }
        if let Some(n) = self.users {
            file.num_users = Some(n);
            file.users = None;
        }
        if let Some(d) = self.drones {
            file.drones = Some(d);
        }
        if let Some(n) = self.blocks {
            let t = file.time.get_or_insert_with(TimeSection::default);
            t.blocks = Some(n);
            t.horizon = t.block_duration.map(|dur| n as f64 * dur);
        }
    }
}

fn summary(sc: &Scenario, trace: &[BlockResult]) -> String {
    let mut out = format!(
        "{} drones, {} users, {} blocks{}\n",
        sc.drones,
        sc.users.len(),
        sc.time.blocks,
        if sc.pd_pool == 0 { ", no powering drone" } else { "" }
    );
    for r in trace {
        let levels: Vec<String> = r.batteries.iter().map(|b| format!("{:7.1}", b / 1e3)).collect();
        out += &format!("block {}: cdbs kJ [{}]", r.block, levels.join(" "));
        if let Some(p) = &r.pd {
            out += &format!("  pd{} {:.1} kJ", p.active_id, p.battery / 1e3);
        }
        for e in &r.events {
            out += &format!("  {}:{}", e.kind.name(), e.entity);
        }
        out.push('\n');
    }
    let warnings = trace.iter().flat_map(|r| &r.events).filter(|e| e.kind == EventKind::LowBattery).count();
    if warnings > 0 {
        out += &format!("{warnings} low-battery warning(s) without charging\n");
    }
    out
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit status.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };

    let mut file = match &args.scenario {
        Some(path) => match ScenarioFile::read(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INVALID;
            }
        },
        None => ScenarioFile::default(),
    };
    args.apply(&mut file);
    let sc = match file.build() {
        Ok(sc) => sc,
        Err(e @ (Error::Validation(_) | Error::Parse(_) | Error::Io { .. })) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };

    let (trace, failure) = match run_simulation(&sc) {
        Ok(t) => (t, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    if !trace.is_empty() {
        if let Err(e) = emit_traces(&trace, &args.out) {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    }
    if !args.quiet {
        print!("{}", summary(&sc, &trace));
    }
    if let Some(e) = failure {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    if args.audit {
        let problems = audit(&sc, &trace);
        if !problems.is_empty() {
            for p in &problems {
                eprintln!("audit: {p}");
            }
            return EXIT_RUNTIME;
        }
        if !args.quiet {
            println!("audit passed");
        }
    }
    EXIT_OK
}
