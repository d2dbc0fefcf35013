use std::collections::BTreeSet;

use dbsgrid::error::Error;
use dbsgrid::orchestrator::{run_simulation, EventKind, Scenario};
use dbsgrid::scenario_io::{emit_traces, load_scenario, load_scenario_str, render_traces, save_scenario, TRACE_FILES};

fn small(extra: &str) -> Scenario {
    load_scenario_str(&format!("num_users = 6\n[search]\nparticles = 4\nmax_refines = 1\n{extra}")).unwrap()
}

#[test]
fn every_file_has_the_shared_schema() {
    let sc = small("[time]\nblocks = 2\n");
    let trace = run_simulation(&sc).unwrap();
    let files = render_traces(&trace);
    assert_eq!(files.iter().map(|(n, _)| *n).collect::<Vec<_>>(), TRACE_FILES);
    for (name, body) in &files {
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("block,entity,metric,value,unit"), "{name}");
        let mut seen = BTreeSet::new();
        let mut last_block = 0;
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 5, "{name}: {line}");
            let block: usize = cols[0].parse().unwrap();
            assert!(block >= last_block, "{name}: blocks out of order");
            last_block = block;
            if *name != "events.csv" {
                assert!(seen.insert((block, cols[1].to_string(), cols[2].to_string())), "{name}: duplicate {line}");
            }
        }
    }
    let battery = &files[0].1;
    assert_eq!(battery.lines().count() - 1, 3 * 4);
    assert!(battery.lines().nth(1).unwrap().ends_with(",kJ"));
}

#[test]
fn charge_rows_match_charge_events() {
    let sc = small("[battery]\ncdbs_initial_kj = 120\n[time]\nblocks = 3\n");
    let trace = run_simulation(&sc).unwrap();
    let charges: Vec<(usize, usize)> = trace
        .iter()
        .flat_map(|r| r.beta.iter().enumerate().filter(|(_, &b)| b).map(move |(d, _)| (r.block, d)))
        .collect();
    assert_eq!(charges.len(), 2, "{charges:?}");
    let events = &render_traces(&trace)[4].1;
    let rows: Vec<(usize, String)> = events
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some(EventKind::Charge.name()))
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].parse().unwrap(), c[1].to_string())
        })
        .collect();
    let want: Vec<(usize, String)> = charges.iter().map(|&(n, d)| (n, format!("cdbs{d}"))).collect();
    assert_eq!(rows, want);
}

#[test]
fn unwritable_destination_names_the_path() {
    let sc = small("[time]\nblocks = 1\n");
    let trace = run_simulation(&sc).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let err = emit_traces(&trace, &blocker.join("out")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("blocker"), "{err}");
}

#[test]
fn saved_scenarios_reload_from_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = Scenario::default();
    let path = tmp.path().join("s.toml");
    std::fs::write(&path, save_scenario(&sc)).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), sc);
}
