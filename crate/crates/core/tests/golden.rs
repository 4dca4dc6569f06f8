//! Committed fixture files and golden outputs. Run with `UPDATE_FIXTURES=1`
//! to rewrite them after an intended change.

use std::fs;
use std::path::PathBuf;

use scenario_core::exec::TickConfig;
use scenario_core::model::{parse, serialize};
use scenario_core::registry::Registry;
use scenario_core::xosc::{export, verify_structure, ExportOptions};
use scenario_core::{fixtures, sweep};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn updating() -> bool {
    std::env::var_os("UPDATE_FIXTURES").is_some()
}

fn check(path: PathBuf, actual: &str) {
    if updating() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_FIXTURES=1", path.display()));
    assert!(expected == actual, "{} differs from the generated output", path.display());
}

#[test]
fn fixture_files_match_builders() {
    let reg = Registry::builtin();
    for (name, graph) in fixtures::catalog(&reg) {
        let text = serialize(&graph);
        check(fixture_dir().join(format!("{name}.json")), &text);
        assert_eq!(parse(&text, &reg).unwrap(), graph, "{name}");
    }
}

#[test]
fn xosc_goldens() {
    let reg = Registry::builtin();
    for (name, graph) in [("uis1", fixtures::uis1(&reg)), ("uis2", fixtures::uis2(&reg))] {
        let xml = export(&graph, &reg, &ExportOptions::default()).unwrap();
        let report = verify_structure(&xml);
        assert!(report.ok, "{name}: {:?}", report.problems);
        check(fixture_dir().join("golden").join(format!("{name}.xosc")), &xml);
    }
}

#[test]
fn logical_sweep_oracle() {
    let reg = Registry::builtin();
    let report = sweep::sweep(&fixtures::uis1_logical(&reg), &reg, &TickConfig::default()).unwrap();
    check(fixture_dir().join("golden/uis1_logical_sweep.csv"), &report.to_table());
}

#[test]
fn sequential_sweep_matches_default_sweep() {
    let reg = Registry::builtin();
    let g = fixtures::uis1_logical(&reg);
    let cfg = TickConfig::default();
    let a = sweep::sweep(&g, &reg, &cfg).unwrap();
    let b = sweep::sweep_sequential(&g, &reg, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}
