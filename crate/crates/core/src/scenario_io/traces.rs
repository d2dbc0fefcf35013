//! CSV traces of a simulation run.
//!
//! Every file shares the columns `block,entity,metric,value,unit`, one row
//! per (block, entity, metric), blocks ascending from 0. Batteries and
//! energies are written in kJ.
//!
//! | file                   | entity            | metrics |
//! |------------------------|-------------------|---------|
//! | `cdbs_battery.csv`     | `cdbs<d>`         | `battery` |
//! | `pd_battery.csv`       | `pd`              | `battery_start`, `battery`, `active_id`, `swaps`, `airborne`, `charges`, `e_har`, `e_hov`, `x`, `y` |
//! | `user_rates.csv`       | `user<u>`, `network` | `rate`, `drone`, `subchannels`, `power`; `sum_rate`, `backhaul_ok` |
//! | `energy_breakdown.csv` | `cdbs<d>`, `solver` | `e_har`, `e_hov`, `e_tx`, `x`, `y`, `speed`, `flying`; `objective`, `particles`, `refine_rounds`, `assign_evals`, `sca_iters` |
//! | `events.csv`           | `cdbs<d>`, `pd<k>` | `charge`, `swap`, `low_battery`, `depleted` (value: battery level) |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::orchestrator::{BlockResult, Entity};

pub const TRACE_FILES: [&str; 5] =
    ["cdbs_battery.csv", "pd_battery.csv", "user_rates.csv", "energy_breakdown.csv", "events.csv"];

const HEADER: &str = "block,entity,metric,value,unit\n";

struct Table(String);

impl Table {
    fn new() -> Self {
        Self(HEADER.to_string())
    }

    fn row(&mut self, block: usize, entity: impl std::fmt::Display, metric: &str, value: impl std::fmt::Display, unit: &str) {
        writeln!(self.0, "{block},{entity},{metric},{value},{unit}").expect("writing to a String");
    }
}

fn kj(j: f64) -> f64 {
    j / 1e3
}

/// The five trace files as `(name, contents)`.
pub fn render_traces(trace: &[BlockResult]) -> Vec<(&'static str, String)> {
    let mut cdbs = Table::new();
    let mut pd = Table::new();
    let mut rates = Table::new();
    let mut energy = Table::new();
    let mut events = Table::new();

    for r in trace {
        let n = r.block;
        for (d, &b) in r.batteries.iter().enumerate() {
            cdbs.row(n, Entity::Cdbs(d), "battery", kj(b), "kJ");
        }

        if let Some(p) = &r.pd {
            pd.row(n, "pd", "battery_start", kj(p.start_battery), "kJ");
            pd.row(n, "pd", "battery", kj(p.battery), "kJ");
            pd.row(n, "pd", "active_id", p.active_id, "index");
            pd.row(n, "pd", "swaps", p.swaps, "count");
            pd.row(n, "pd", "airborne", p.airborne as u8, "bool");
            pd.row(n, "pd", "charges", p.charges, "count");
            pd.row(n, "pd", "e_har", kj(p.energy.hardware), "kJ");
            pd.row(n, "pd", "e_hov", kj(p.energy.hover), "kJ");
            pd.row(n, "pd", "x", p.position.x, "m");
            pd.row(n, "pd", "y", p.position.y, "m");
        }

        for (u, &rate) in r.user_rates.iter().enumerate() {
            let e = Entity::User(u);
            rates.row(n, e, "rate", rate, "bps/Hz");
            let drone = r.allocation.serving_drone(u).map_or_else(|| "none".to_string(), |d| d.to_string());
            rates.row(n, e, "drone", drone, "index");
            let subs: Vec<String> = r.allocation.subchannels_of(u).iter().map(usize::to_string).collect();
            rates.row(n, e, "subchannels", subs.join(";"), "index");
            rates.row(n, e, "power", r.allocation.user_power(u), "W");
        }
        rates.row(n, "network", "sum_rate", r.backhaul.sum_rate, "bps/Hz");
        rates.row(n, "network", "backhaul_ok", r.backhaul.within_cap as u8, "bool");

        for (d, e) in r.energy.iter().enumerate() {
            let ent = Entity::Cdbs(d);
            energy.row(n, ent, "e_har", kj(e.hardware), "kJ");
            energy.row(n, ent, "e_hov", kj(e.hover), "kJ");
            energy.row(n, ent, "e_tx", kj(e.transmit), "kJ");
            energy.row(n, ent, "x", r.positions[d].x, "m");
            energy.row(n, ent, "y", r.positions[d].y, "m");
            energy.row(n, ent, "speed", r.speeds[d], "m/s");
            energy.row(n, ent, "flying", r.flying[d] as u8, "bool");
        }
        let g = &r.diagnostics;
        energy.row(n, "solver", "objective", kj(g.objective), "kJ");
        energy.row(n, "solver", "particles", g.particles_evaluated, "count");
        energy.row(n, "solver", "refine_rounds", g.refine_rounds, "count");
        energy.row(n, "solver", "assign_evals", g.assign_evaluations, "count");
        energy.row(n, "solver", "sca_iters", g.sca_iterations, "count");

        for e in &r.events {
            events.row(e.block, e.entity, e.kind.name(), kj(e.battery), "kJ");
        }
    }

    let [a, b, c, d, e] = TRACE_FILES;
    vec![(a, cdbs.0), (b, pd.0), (c, rates.0), (d, energy.0), (e, events.0)]
}

/// Writes the trace files into `dir`, creating it if needed.
pub fn emit_traces(trace: &[BlockResult], dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for (name, body) in render_traces(trace) {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
