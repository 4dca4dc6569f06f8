mod common;

use proptest::prelude::*;
use scenario_core::exec::{run, EventKind, TickConfig};
use scenario_core::fixtures;
use scenario_core::model::{parse, serialize, NodeKind, ParamValue};
use scenario_core::modules::{flatten, library_load, library_save, Catalog, CatalogError};
use scenario_core::registry::Registry;

use common::{modular_graph, modular_spec};

fn strip_prefix(id: &str) -> &str {
    id.rsplit('/').next().unwrap()
}

#[test]
fn modular_uis1_runs_like_the_flat_one() {
    let reg = Registry::builtin();
    let cfg = TickConfig::default();
    let flat = run(&fixtures::uis1(&reg), &reg, &cfg).unwrap();
    let modular = run(&fixtures::uis1_modular(&reg), &reg, &cfg).unwrap();
    assert_eq!(flat.outcome, modular.outcome);
    assert_eq!(flat.states, modular.states);
    // Module elements carry their own names; the flat fixture names them
    // after the synchronisation points.
    let rename = |id: &str| match strip_prefix(id) {
        "start_signal" => "sync2",
        "cross" => "bike_accelerate",
        "arrived" => "sync3",
        other => other,
    }
    .to_string();
    let a: Vec<_> = flat.events.iter().map(|e| (e.tick, e.node.to_string(), e.kind)).collect();
    let b: Vec<_> = modular.events.iter().map(|e| (e.tick, rename(e.node.as_str()), e.kind)).collect();
    let mut a_sorted = a.clone();
    let mut b_sorted = b.clone();
    a_sorted.sort();
    b_sorted.sort();
    assert_eq!(a_sorted, b_sorted);
}

#[test]
fn flattened_uis2_trace_is_identical() {
    let reg = Registry::builtin();
    let cfg = TickConfig::default();
    let g = fixtures::uis2(&reg);
    let flat = flatten(&g).unwrap();
    assert_eq!(flat.count_kind(NodeKind::ModuleInstance), 0);
    let a = run(&g, &reg, &cfg).unwrap();
    let b = run(&flat, &reg, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.event_time("pedestrian_crossing/arrived", EventKind::Succeeded).is_some());
}

#[test]
fn flatten_is_idempotent() {
    let reg = Registry::builtin();
    for g in [fixtures::uis1_modular(&reg), fixtures::uis2(&reg)] {
        let once = flatten(&g).unwrap();
        assert_eq!(flatten(&once).unwrap(), once);
    }
}

#[test]
fn instance_overrides_reach_the_copies() {
    let reg = Registry::builtin();
    let flat = flatten(&fixtures::uis2(&reg)).unwrap();
    let cross = flat
        .node(&"pedestrian_crossing/cross".into())
        .and_then(|n| n.action())
        .unwrap();
    assert_eq!(cross.param("target_velocity").as_f64(), Some(1.5));
    assert_eq!(cross.reference_actor.as_str(), "pedestrian");
    let signal = flat
        .node(&"pedestrian_crossing/start_signal".into())
        .and_then(|n| n.action())
        .unwrap();
    assert_eq!(signal.target_actor.as_ref().map(|a| a.as_str()), Some("car"));
}

#[test]
fn catalog_round_trip_and_history() {
    let reg = Registry::builtin();
    let dir = tempfile::tempdir().unwrap();
    let catalog = Catalog::new(dir.path());
    let def = fixtures::crossing_maneuver(&reg);
    let rev = catalog.save(&def).unwrap();
    assert_eq!(rev, def.revision);
    assert_eq!(catalog.save(&def).unwrap(), rev);
    let loaded = catalog.load("CrossingManeuver", None, &reg).unwrap();
    assert_eq!(loaded, def);

    let other = fixtures::overtaking_maneuver(&reg);
    catalog.save(&other).unwrap();
    let names: Vec<String> = catalog.list().unwrap().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["CrossingManeuver", "OvertakingManeuver"]);

    let missing = catalog.load("Nope", None, &reg).unwrap_err();
    assert!(matches!(missing, CatalogError::NotFound(_)), "{missing:?}");
}

#[test]
fn library_file_round_trip() {
    let reg = Registry::builtin();
    let dir = tempfile::tempdir().unwrap();
    let def = fixtures::overtaking_maneuver(&reg);
    let rev = library_save(&def, dir.path()).unwrap();
    assert_eq!(rev, def.revision);
    let path = dir.path().join("modules/OvertakingManeuver").join(&rev);
    assert_eq!(library_load(&path, &reg).unwrap(), def);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parse_inverts_serialize(spec in modular_spec(), range_at in 0usize..12) {
        let reg = Registry::builtin();
        let mut g = modular_graph(&reg, &spec);
        let ids: Vec<_> = g
            .nodes()
            .iter()
            .filter(|n| n.action().is_some())
            .map(|n| n.id.clone())
            .collect();
        if let Some(id) = ids.get(range_at) {
            let value = if range_at % 2 == 0 {
                ParamValue::range(0.5, 2.0, 0.25, "s").unwrap()
            } else {
                ParamValue::set(vec![1.0.into(), 2.5.into()], "s").unwrap()
            };
            g.set_parameter(&reg, id, "duration", value).unwrap();
        }
        let text = serialize(&g);
        let back = parse(&text, &reg).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize(&back), text);
    }

    #[test]
    fn flatten_removes_every_instance(spec in modular_spec()) {
        let reg = Registry::builtin();
        let g = modular_graph(&reg, &spec);
        let flat = flatten(&g).unwrap();
        prop_assert_eq!(flat.count_kind(NodeKind::ModuleInstance), 0);
        prop_assert_eq!(flatten(&flat).unwrap(), flat);
    }
}
