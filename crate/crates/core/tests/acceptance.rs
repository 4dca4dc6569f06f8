//! One line per acceptance criterion, `PASS` or `FAIL` with the measured
//! values. The test fails if any criterion does.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use scenario_core::concretize::{classify_level, enumerate, plan};
use scenario_core::exec::{run, EventKind, OutcomeKind, TickConfig};
use scenario_core::fixtures;
use scenario_core::model::{parse, serialize, AbstractionLevel, ActorCategory, NodeKind};
use scenario_core::modules::flatten;
use scenario_core::registry::{ActionKind, Registry};
use scenario_core::sweep::sweep;
use scenario_core::validation::{validate, RuleId};
use scenario_core::xosc::{export, verify_structure, ExportError, ExportOptions};

const UIS1_BUDGET: Duration = Duration::from_secs(5);
const SWEEP_BUDGET: Duration = Duration::from_secs(60);
const SWEEP_MIN_VARIANTS: u64 = 10;
const SWEEP_MAX_VARIANTS: u64 = 50;
const DT_COARSE: f64 = 0.05;
const DT_FINE: f64 = 0.025;
const DT_COMPLETION_TOLERANCE: f64 = 0.1;
const JOIN_EXPECTED_TIME: f64 = 1.0;
const GATE_CASES: u32 = 200;
const GATE_MAX_NODES: usize = 12;
const ROUND_TRIP_CASES: u32 = 500;
const ENUMERATION_EXPECTED: u64 = 12;

type Verdict = Result<String, String>;

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn deterministic_runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn uis1_structure() -> Verdict {
    let reg = Registry::builtin();
    let started = Instant::now();
    let g = fixtures::uis1(&reg);
    let categories: Vec<_> = g.actors().iter().map(|a| (a.id.to_string(), a.category)).collect();
    check(
        categories
            == [
                ("ego".to_string(), ActorCategory::FourWheeler),
                ("bike".to_string(), ActorCategory::TwoWheeler),
            ],
        format!("actors {categories:?}"),
    )?;
    let kinds: Vec<ActionKind> = g
        .nodes()
        .iter()
        .filter(|n| n.kind() == NodeKind::Condition)
        .map(|n| reg.action(&n.action().unwrap().action_type).unwrap().kind)
        .collect();
    let location = kinds.iter().filter(|k| **k == ActionKind::InLocationRadius).count();
    let vehicle = kinds.iter().filter(|k| **k == ActionKind::InVehicleRadius).count();
    check(
        kinds.len() == 3 && location == 2 && vehicle == 1,
        format!("conditions {kinds:?}"),
    )?;
    let report = validate(&g, &reg);
    check(report.is_valid, format!("findings {:?}", report.findings))?;
    let xml = export(&g, &reg, &ExportOptions::default()).map_err(|e| e.to_string())?;
    check(xml == golden("uis1.xosc"), "export differs from golden uis1.xosc")?;
    let trace = run(&g, &reg, &TickConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    check(
        trace.outcome.kind() == OutcomeKind::Completed,
        format!("outcome {:?}", trace.outcome),
    )?;
    check(elapsed < UIS1_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "2 actors, 3 conditions, valid, golden match, Completed at {:.2} s, min distance {:.3} m, {elapsed:.2?}",
        trace.end_time(),
        trace.min_distance.unwrap_or(f64::NAN)
    ))
}

fn uis2_flatten_equivalence() -> Verdict {
    let reg = Registry::builtin();
    let g = fixtures::uis2(&reg);
    check(g.actors().len() == 3, format!("{} actors", g.actors().len()))?;
    let instances: Vec<_> = g.nodes().iter().filter_map(|n| n.instance()).collect();
    check(
        instances.len() == 1 && instances[0].module == "CrossingManeuver",
        "expected one CrossingManeuver instance",
    )?;
    let flat = flatten(&g).map_err(|e| e.to_string())?;
    let conditions = flat.count_kind(NodeKind::Condition);
    check(conditions == 4, format!("{conditions} sync conditions"))?;
    let cfg = TickConfig::default();
    let a = run(&g, &reg, &cfg).map_err(|e| e.to_string())?;
    let b = run(&flat, &reg, &cfg).map_err(|e| e.to_string())?;
    check(a.events == b.events, "event lists differ")?;
    check(a == b, "traces differ")?;
    check(
        export(&g, &reg, &ExportOptions::default()).map_err(|e| e.to_string())? == golden("uis2.xosc"),
        "export differs from golden uis2.xosc",
    )?;
    Ok(format!(
        "3 actors, 1 instance, 4 conditions, {} events identical, {:?} at {:.2} s",
        a.events.len(),
        a.outcome.kind(),
        a.end_time()
    ))
}

fn outcome_variability() -> Verdict {
    let reg = Registry::builtin();
    let g = fixtures::uis1_logical(&reg);
    let started = Instant::now();
    let report = sweep(&g, &reg, &TickConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let total = report.plan.total_count;
    check(
        (SWEEP_MIN_VARIANTS..=SWEEP_MAX_VARIANTS).contains(&total),
        format!("{total} variants"),
    )?;
    let ego_bike = report
        .rows
        .iter()
        .filter(|r| {
            r.collision
                .as_ref()
                .is_some_and(|[a, b]| a.as_str() == "ego" && b.as_str() == "bike")
        })
        .count();
    let completed = report.count(OutcomeKind::Completed);
    check(ego_bike >= 1, "no ego/bike collision")?;
    check(completed >= 1, "no completed variant")?;
    check(report.to_table() == golden("uis1_logical_sweep.csv"), "table differs from oracle")?;
    let again = sweep(&g, &reg, &TickConfig::default()).map_err(|e| e.to_string())?;
    check(again == report, "second sweep differs")?;
    check(elapsed < SWEEP_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{total} variants: {completed} Completed, {ego_bike} Collision(ego, bike), oracle match, {elapsed:.2?}"
    ))
}

fn rule_suite() -> Verdict {
    let reg = Registry::builtin();
    let mut covered = BTreeSet::new();
    for case in fixtures::rule_cases(&reg) {
        let fail = validate(&case.failing, &reg);
        let pass = validate(&case.passing, &reg);
        check(fail.count(case.rule) >= 1, format!("{} failing fixture not flagged", case.rule))?;
        check(
            pass.findings.is_empty(),
            format!("{} passing fixture has {:?}", case.rule, pass.findings),
        )?;
        covered.insert(case.rule);
    }
    check(covered.len() == RuleId::ALL.len(), format!("covered {covered:?}"))?;
    let ped = validate(&fixtures::pedestrian_50kmh(&reg), &reg);
    let rules: Vec<RuleId> = ped.findings.iter().map(|f| f.rule_id).collect();
    check(rules == [RuleId::R8], format!("pedestrian fixture gives {rules:?}"))?;
    Ok("R1-R10 each fail and pass; pedestrian at 13.9 m/s gives exactly R8".into())
}

fn level_restriction() -> Verdict {
    let reg = Registry::builtin();
    let opts = ExportOptions::default();
    for (g, level) in [
        (fixtures::uis1_functional(&reg), AbstractionLevel::Functional),
        (fixtures::uis1_logical(&reg), AbstractionLevel::Logical),
    ] {
        let got = export(&g, &reg, &opts);
        check(
            got == Err(ExportError::LevelError { found: level }),
            format!("{} export gave {:?}", g.name(), got.map(|_| "a document")),
        )?;
    }
    let mut verified = 0;
    for g in [fixtures::uis1(&reg), fixtures::uis2(&reg), fixtures::minimal(&reg)] {
        let xml = export(&g, &reg, &opts).map_err(|e| e.to_string())?;
        let report = verify_structure(&xml);
        check(report.ok, format!("{}: {:?}", g.name(), report.problems))?;
        verified += 1;
    }
    Ok(format!("functional and logical give LevelError; {verified} concrete exports verified"))
}

fn concretizer_counting() -> Verdict {
    let reg = Registry::builtin();
    let g = fixtures::uis1_logical(&reg);
    let p = plan(&g, &reg).map_err(|e| e.to_string())?;
    check(p.total_count == ENUMERATION_EXPECTED, format!("plan count {}", p.total_count))?;
    // Independent oracle: every (speed, radius) pair of the grid.
    let mut oracle = BTreeSet::new();
    for v in 3..=8 {
        for r in [5, 10] {
            oracle.insert((v, r));
        }
    }
    let mut got = BTreeSet::new();
    for index in 0..p.total_count {
        let v = enumerate(&g, &p, index).map_err(|e| e.to_string())?;
        check(classify_level(&v, &reg) == AbstractionLevel::Concrete, format!("variant {index} not concrete"))?;
        check(validate(&v, &reg).is_valid, format!("variant {index} invalid"))?;
        let param = |node: &str, key: &str| {
            v.node(&node.into()).unwrap().action().unwrap().param(key).as_f64().unwrap() as i64
        };
        got.insert((param("bike_accelerate", "target_velocity"), param("sync2", "radius")));
    }
    check(got.len() as u64 == p.total_count, "duplicate variants")?;
    check(got == oracle, format!("variants {got:?}"))?;
    Ok(format!("Range(3, 8, 1) x Set{{5, 10}} = {} distinct valid concrete variants, oracle match", got.len()))
}

fn join_semantics() -> Verdict {
    let reg = Registry::builtin();
    let cfg = TickConfig::default();
    let trace = run(&fixtures::one_finished(&reg), &reg, &cfg).map_err(|e| e.to_string())?;
    let t = trace.end_time();
    check(
        trace.outcome.kind() == OutcomeKind::Completed && (t - JOIN_EXPECTED_TIME).abs() <= cfg.dt + 1e-9,
        format!("one-finished completed {:?} at {t}", trace.outcome.kind()),
    )?;

    let mut runner = deterministic_runner(GATE_CASES);
    runner
        .run(&common::dag_spec(GATE_MAX_NODES), |spec| {
            let reg = Registry::builtin();
            let g = common::gate_graph(&reg, &spec);
            let trace = run(&g, &reg, &TickConfig::default()).unwrap();
            proptest::prop_assert_eq!(trace.outcome.kind(), OutcomeKind::Completed);
            for node in g.nodes().iter().filter(|n| matches!(n.kind(), NodeKind::Join | NodeKind::End)) {
                let last = g
                    .predecessors(&node.id)
                    .map(|e| trace.event_time(e.from.node.as_str(), EventKind::Succeeded).unwrap())
                    .fold(0.0, f64::max);
                let done = trace.event_time(node.id.as_str(), EventKind::Succeeded).unwrap();
                proptest::prop_assert_eq!(done, last, "{}", node.id);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("one-finished completes at {t:.2} s; all-finished gate holds on {GATE_CASES} random graphs"))
}

fn round_trip() -> Verdict {
    let mut runner = deterministic_runner(ROUND_TRIP_CASES);
    let depths = std::cell::RefCell::new(BTreeSet::new());
    runner
        .run(&common::modular_spec(), |spec| {
            let reg = Registry::builtin();
            let g = common::modular_graph(&reg, &spec);
            if g.has_module_instances() {
                depths.borrow_mut().insert(spec.depth);
            }
            let back = parse(&serialize(&g), &reg).unwrap();
            proptest::prop_assert_eq!(back, g);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let depths = depths.into_inner();
    check(depths.contains(&3), format!("nesting depths seen {depths:?}"))?;
    Ok(format!("{ROUND_TRIP_CASES} graphs, module nesting depths {depths:?}"))
}

fn dt_refinement() -> Verdict {
    let reg = Registry::builtin();
    let g = fixtures::uis1(&reg);
    let coarse = run(&g, &reg, &TickConfig::with_dt(DT_COARSE)).map_err(|e| e.to_string())?;
    let fine = run(&g, &reg, &TickConfig::with_dt(DT_FINE)).map_err(|e| e.to_string())?;
    check(
        coarse.outcome.kind() == fine.outcome.kind(),
        format!("{:?} vs {:?}", coarse.outcome, fine.outcome),
    )?;
    let delta = (coarse.end_time() - fine.end_time()).abs();
    check(delta <= DT_COMPLETION_TOLERANCE + 1e-9, format!("completion moved {delta:.3} s"))?;
    Ok(format!(
        "{} at {:.3} s (dt {DT_COARSE}) vs {:.3} s (dt {DT_FINE}), delta {delta:.3} s",
        coarse.outcome.kind(),
        coarse.end_time(),
        fine.end_time()
    ))
}

type Criterion = (&'static str, fn() -> Verdict);

// Runs without the libtest harness so the report is never captured.
fn main() {
    let criteria: [Criterion; 9] = [
        ("uis1_structure_and_completion", uis1_structure),
        ("uis2_flatten_trace_equivalence", uis2_flatten_equivalence),
        ("logical_uis1_outcome_variability", outcome_variability),
        ("validation_rule_suite", rule_suite),
        ("export_level_restriction", level_restriction),
        ("concretizer_counting", concretizer_counting),
        ("join_semantics", join_semantics),
        ("serialize_round_trip", round_trip),
        ("dt_refinement", dt_refinement),
    ];
    let mut failed = Vec::new();
    for (name, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {name}: {detail}");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
