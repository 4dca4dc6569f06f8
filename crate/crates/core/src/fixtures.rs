//! Shipped scenarios: the two urban-intersection examples, their module
//! definitions and small graphs exercising single validation rules.
//!
//! Coordinates: the intersection centre is the origin, x points east, y
//! north. The ego vehicle starts west of the intersection in the eastbound
//! lane (y = -2).

use crate::model::{
    build_action, AbstractionLevel, Actor, ActorCategory, ActorId, Edge, Endpoint, GraphNode,
    JoinPolicy, NodeId, NodePayload, ParamValue, Pose2D, ScenarioGraph, END_ID, ROOT_ID,
};
use crate::modules::{define_module, ModuleDef, Port};
use crate::registry::Registry;
use crate::validation::RuleId;

fn ms(v: f64) -> ParamValue {
    ParamValue::scalar(v, "m/s")
}

fn m(v: f64) -> ParamValue {
    ParamValue::scalar(v, "m")
}

fn ratio(v: f64) -> ParamValue {
    ParamValue::scalar(v, "ratio")
}

fn s(v: f64) -> ParamValue {
    ParamValue::scalar(v, "s")
}

fn rad(v: f64) -> ParamValue {
    ParamValue::scalar(v, "rad")
}

fn root() -> NodeId {
    NodeId::from(ROOT_ID)
}

fn end() -> NodeId {
    NodeId::from(END_ID)
}

/// Connects consecutive nodes of `chain`.
fn chain(g: &mut ScenarioGraph, chain: &[NodeId]) {
    for w in chain.windows(2) {
        g.connect(&w[0], &w[1]).expect("fixture edge");
    }
}

/// Module element with actor references naming roles.
fn element(
    reg: &Registry,
    id: &str,
    action_type: &str,
    role: &str,
    target: Option<&str>,
    params: &[(&str, ParamValue)],
) -> GraphNode {
    let action = build_action(reg, action_type, role, target, params).expect("fixture action");
    let payload = if action.category.is_condition() {
        NodePayload::Condition(action)
    } else {
        NodePayload::Maneuver(action)
    };
    GraphNode {
        id: NodeId::from(id),
        payload,
    }
}

fn edge(from: &str, to: &str) -> Edge {
    Edge {
        from: Endpoint::node(from),
        to: Endpoint::node(to),
    }
}

/// Wait until the trigger actor is near, cross, arrive. Defaults are the
/// bike crossing of UIS1.
pub fn crossing_maneuver(reg: &Registry) -> ModuleDef {
    define_module(
        "CrossingManeuver",
        vec![
            element(
                reg,
                "start_signal",
                "InVehicleRadius",
                "crosser",
                Some("trigger"),
                &[("radius", m(UIS1_TRIGGER_RADIUS))],
            ),
            element(
                reg,
                "cross",
                "Accelerate",
                "crosser",
                None,
                &[
                    ("target_velocity", ms(UIS1_BIKE_SPEED)),
                    ("throttle", ratio(BIKE_THROTTLE)),
                ],
            ),
            element(
                reg,
                "arrived",
                "InLocationRadius",
                "crosser",
                None,
                &[("x", m(10.0)), ("y", m(-5.0)), ("radius", m(2.0))],
            ),
        ],
        vec![edge("start_signal", "cross"), edge("cross", "arrived")],
        vec![Port::new("in", "start_signal")],
        vec![Port::new("out", "arrived")],
        vec!["crosser".into(), "trigger".into()],
    )
    .expect("CrossingManeuver is well formed")
}

/// Pull out, pass, pull back in.
pub fn overtaking_maneuver(reg: &Registry) -> ModuleDef {
    define_module(
        "OvertakingManeuver",
        vec![
            element(
                reg,
                "pull_out",
                "LaneChangeLeft",
                "overtaker",
                None,
                &[("lane_width", m(3.5)), ("duration", s(3.0))],
            ),
            element(
                reg,
                "pass",
                "FollowVehicle",
                "overtaker",
                Some("overtaken"),
                &[("gap", m(-10.0)), ("duration", s(5.0))],
            ),
            element(
                reg,
                "pull_in",
                "LaneChangeRight",
                "overtaker",
                None,
                &[("lane_width", m(3.5)), ("duration", s(3.0))],
            ),
        ],
        vec![edge("pull_out", "pass"), edge("pass", "pull_in")],
        vec![Port::new("in", "pull_out")],
        vec![Port::new("out", "pull_in")],
        vec!["overtaker".into(), "overtaken".into()],
    )
    .expect("OvertakingManeuver is well formed")
}

// UIS1 parameters. The ego accelerates to 8 m/s, drives up to the
// intersection and turns right (radius 6 m) into the southbound road; the
// bike waits on the cycle lane (y = -5) until the ego is within the trigger
// radius, then crosses the road the ego turns into.
const EGO_START: (f64, f64) = (-40.0, -2.0);
const EGO_SPEED: f64 = 8.0;
const EGO_APPROACH: f64 = 24.9;
const BIKE_START: (f64, f64) = (-12.0, -5.0);
pub const UIS1_BIKE_SPEED: f64 = 3.0;
pub const UIS1_TRIGGER_RADIUS: f64 = 5.0;
const BIKE_THROTTLE: f64 = 0.75;

fn uis1_actors(g: &mut ScenarioGraph) {
    g.add_actor(
        Actor::new("ego", ActorCategory::FourWheeler, "sedan")
            .ego()
            .starting_at(Pose2D::at(EGO_START.0, EGO_START.1, 0.0), ms(0.0)),
    )
    .unwrap();
    g.add_actor(
        Actor::new("bike", ActorCategory::TwoWheeler, "bike")
            .starting_at(Pose2D::at(BIKE_START.0, BIKE_START.1, 0.0), ms(0.0)),
    )
    .unwrap();
}

fn ego_right_turn(reg: &Registry, g: &mut ScenarioGraph) -> Vec<NodeId> {
    let acc = g
        .add_action(
            reg,
            Some("ego_accelerate"),
            "Accelerate",
            "ego",
            None,
            &[("target_velocity", ms(EGO_SPEED)), ("throttle", ratio(0.5))],
        )
        .unwrap();
    let drive = g
        .add_action(
            reg,
            Some("ego_drive"),
            "DriveDistance",
            "ego",
            None,
            &[("distance", m(EGO_APPROACH))],
        )
        .unwrap();
    let turn = g
        .add_action(
            reg,
            Some("ego_turn_right"),
            "TurnRight",
            "ego",
            None,
            &[
                ("radius", m(6.0)),
                ("angle", rad(std::f64::consts::FRAC_PI_2)),
            ],
        )
        .unwrap();
    let sync1 = g
        .add_action(
            reg,
            Some("sync1"),
            "InLocationRadius",
            "ego",
            None,
            &[("x", m(-2.0)), ("y", m(-25.0)), ("radius", m(3.0))],
        )
        .unwrap();
    vec![root(), acc, drive, turn, sync1, end()]
}

/// Right-turning ego vehicle and crossing cyclist with three
/// synchronization conditions.
pub fn uis1(reg: &Registry) -> ScenarioGraph {
    uis1_with(reg, ms(UIS1_BIKE_SPEED), m(UIS1_TRIGGER_RADIUS))
}

fn uis1_with(reg: &Registry, bike_speed: ParamValue, radius: ParamValue) -> ScenarioGraph {
    let level = if bike_speed.level() == AbstractionLevel::Logical
        || radius.level() == AbstractionLevel::Logical
    {
        AbstractionLevel::Logical
    } else {
        AbstractionLevel::Concrete
    };
    let mut g = ScenarioGraph::new("UIS1", "urban_intersection", level).unwrap();
    uis1_actors(&mut g);
    let ego = ego_right_turn(reg, &mut g);
    chain(&mut g, &ego);
    let sync2 = g
        .add_action(
            reg,
            Some("sync2"),
            "InVehicleRadius",
            "bike",
            Some("ego"),
            &[("radius", radius)],
        )
        .unwrap();
    let bike_acc = g
        .add_action(
            reg,
            Some("bike_accelerate"),
            "Accelerate",
            "bike",
            None,
            &[("target_velocity", bike_speed), ("throttle", ratio(BIKE_THROTTLE))],
        )
        .unwrap();
    let sync3 = g
        .add_action(
            reg,
            Some("sync3"),
            "InLocationRadius",
            "bike",
            None,
            &[("x", m(10.0)), ("y", m(-5.0)), ("radius", m(2.0))],
        )
        .unwrap();
    chain(&mut g, &[root(), sync2, bike_acc, sync3, end()]);
    g
}

/// UIS1 with the bike speed as a 3..8 m/s range and the trigger radius as
/// the set {5, 10} m: 12 variants.
pub fn uis1_logical(reg: &Registry) -> ScenarioGraph {
    uis1_with(
        reg,
        ParamValue::range(3.0, 8.0, 1.0, "m/s").unwrap(),
        ParamValue::set(vec![5.0.into(), 10.0.into()], "m").unwrap(),
    )
}

/// UIS1 as a sketch: structure and actors only, no action parameters.
pub fn uis1_functional(reg: &Registry) -> ScenarioGraph {
    let mut g = uis1(reg);
    g.set_level(AbstractionLevel::Functional);
    for node in &mut g.nodes {
        if let Some(a) = node.action_mut() {
            a.params.clear();
        }
    }
    g
}

/// UIS1 with the bike's sequence taken from the CrossingManeuver module.
pub fn uis1_modular(reg: &Registry) -> ScenarioGraph {
    let mut g = ScenarioGraph::new("UIS1", "urban_intersection", AbstractionLevel::Concrete).unwrap();
    uis1_actors(&mut g);
    let ego = ego_right_turn(reg, &mut g);
    chain(&mut g, &ego);
    let def = crossing_maneuver(reg);
    let inst = g
        .instantiate(
            reg,
            &def,
            Some("bike_crossing"),
            &[("crosser", "bike"), ("trigger", "ego")],
            &[],
        )
        .unwrap();
    g.connect(root(), Endpoint::port(inst.clone(), "in")).unwrap();
    g.connect(Endpoint::port(inst, "out"), end()).unwrap();
    g
}

/// Left-turning ego vehicle, oncoming car released by the ego entering the
/// intersection, and a pedestrian crossing via CrossingManeuver once the
/// car is close.
pub fn uis2(reg: &Registry) -> ScenarioGraph {
    let mut g = ScenarioGraph::new("UIS2", "urban_intersection", AbstractionLevel::Concrete).unwrap();
    g.add_actor(
        Actor::new("ego", ActorCategory::FourWheeler, "sedan")
            .ego()
            .starting_at(Pose2D::at(EGO_START.0, EGO_START.1, 0.0), ms(0.0)),
    )
    .unwrap();
    g.add_actor(
        Actor::new("car", ActorCategory::FourWheeler, "hatchback").starting_at(
            Pose2D::at(40.0, 2.0, std::f64::consts::PI),
            ms(0.0),
        ),
    )
    .unwrap();
    g.add_actor(
        Actor::new("pedestrian", ActorCategory::Pedestrian, "adult")
            .starting_at(Pose2D::at(-12.0, 6.0, 0.0), ms(0.0)),
    )
    .unwrap();

    let acc = g
        .add_action(
            reg,
            Some("ego_accelerate"),
            "Accelerate",
            "ego",
            None,
            &[("target_velocity", ms(EGO_SPEED)), ("throttle", ratio(0.5))],
        )
        .unwrap();
    let drive = g
        .add_action(
            reg,
            Some("ego_drive"),
            "DriveDistance",
            "ego",
            None,
            &[("distance", m(EGO_APPROACH))],
        )
        .unwrap();
    let turn = g
        .add_action(
            reg,
            Some("ego_turn_left"),
            "TurnLeft",
            "ego",
            None,
            &[
                ("radius", m(10.0)),
                ("angle", rad(std::f64::consts::FRAC_PI_2)),
            ],
        )
        .unwrap();
    let sync1 = g
        .add_action(
            reg,
            Some("sync1"),
            "InLocationRadius",
            "ego",
            None,
            &[("x", m(2.0)), ("y", m(25.0)), ("radius", m(3.0))],
        )
        .unwrap();
    chain(&mut g, &[root(), acc, drive, turn, sync1, end()]);

    let sync2 = g
        .add_action(
            reg,
            Some("sync2"),
            "InLocationRadius",
            "ego",
            None,
            &[("x", m(-10.0)), ("y", m(-2.0)), ("radius", m(3.0))],
        )
        .unwrap();
    let car_acc = g
        .add_action(
            reg,
            Some("car_accelerate"),
            "Accelerate",
            "car",
            None,
            &[("target_velocity", ms(12.0)), ("throttle", ratio(0.5))],
        )
        .unwrap();
    let car_drive = g
        .add_action(
            reg,
            Some("car_drive"),
            "DriveDistance",
            "car",
            None,
            &[("distance", m(60.0))],
        )
        .unwrap();
    chain(&mut g, &[root(), sync2, car_acc, car_drive, end()]);

    let def = crossing_maneuver(reg);
    let inst = g
        .instantiate(
            reg,
            &def,
            Some("pedestrian_crossing"),
            &[("crosser", "pedestrian"), ("trigger", "car")],
            &[
                ("cross", "target_velocity", ms(1.5)),
                ("arrived", "x", m(10.0)),
                ("arrived", "y", m(6.0)),
            ],
        )
        .unwrap();
    g.connect(root(), Endpoint::port(inst.clone(), "in")).unwrap();
    g.connect(Endpoint::port(inst, "out"), end()).unwrap();
    g
}

/// Root straight to end with one parked actor.
pub fn minimal(_reg: &Registry) -> ScenarioGraph {
    let mut g = ScenarioGraph::new("minimal", "urban_intersection", AbstractionLevel::Concrete).unwrap();
    g.add_actor(
        Actor::new("ego", ActorCategory::FourWheeler, "sedan")
            .ego()
            .starting_at(Pose2D::at(0.0, 0.0, 0.0), ms(0.0)),
    )
    .unwrap();
    g.connect(root(), end()).unwrap();
    g
}

/// Two timers racing into a one-finished join.
pub fn one_finished(reg: &Registry) -> ScenarioGraph {
    let mut g = minimal(reg);
    g.name = "one_finished".into();
    g.edges.clear();
    let short = g
        .add_action(reg, Some("after_1s"), "TimeElapsed", "ego", None, &[("duration", s(1.0))])
        .unwrap();
    let long = g
        .add_action(reg, Some("after_5s"), "TimeElapsed", "ego", None, &[("duration", s(5.0))])
        .unwrap();
    let join = g.add_join(Some("first_timer"), JoinPolicy::OneFinished).unwrap();
    chain(&mut g, &[root(), short, join.clone(), end()]);
    chain(&mut g, &[root(), long, join]);
    g
}

/// Valid concrete base for the rule fixtures: the ego brakes to a stop.
fn rule_base(reg: &Registry, name: &str) -> ScenarioGraph {
    let mut g = ScenarioGraph::new(name, "urban_intersection", AbstractionLevel::Concrete).unwrap();
    g.add_actor(
        Actor::new("ego", ActorCategory::FourWheeler, "sedan")
            .ego()
            .starting_at(Pose2D::at(0.0, 0.0, 0.0), ms(5.0)),
    )
    .unwrap();
    let stop = g
        .add_action(reg, Some("stop"), "Stop", "ego", None, &[("brake", ratio(0.5))])
        .unwrap();
    chain(&mut g, &[root(), stop, end()]);
    g
}

fn push_node(g: &mut ScenarioGraph, id: &str, payload: NodePayload) -> NodeId {
    g.nodes.push(GraphNode {
        id: NodeId::from(id),
        payload,
    });
    NodeId::from(id)
}

/// A join with a single incoming sequence.
pub fn bad_join(reg: &Registry) -> ScenarioGraph {
    let mut g = rule_base(reg, "bad_join");
    g.edges.retain(|e| e.to.node != END_ID);
    let join = g.add_join(Some("join"), JoinPolicy::AllFinished).unwrap();
    chain(&mut g, &[NodeId::from("stop"), join, end()]);
    g
}

/// A pedestrian starting at 13.9 m/s (50 km/h).
pub fn pedestrian_50kmh(reg: &Registry) -> ScenarioGraph {
    let mut g = rule_base(reg, "pedestrian_50kmh");
    g.add_actor(
        Actor::new("walker", ActorCategory::Pedestrian, "adult")
            .starting_at(Pose2D::at(-20.0, 10.0, 0.0), ms(13.9)),
    )
    .unwrap();
    g
}

/// One failing and one passing graph for a rule.
pub struct RuleCase {
    pub rule: RuleId,
    pub failing: ScenarioGraph,
    pub passing: ScenarioGraph,
}

/// Minimal fixtures per validation rule. Each failing graph triggers its
/// rule and no other; each passing graph triggers nothing.
pub fn rule_cases(reg: &Registry) -> Vec<RuleCase> {
    let mut cases = Vec::new();
    let pass = |name: &str| rule_base(reg, name);

    // R1: a second root.
    let mut fail = rule_base(reg, "r1_fail");
    let extra = push_node(&mut fail, "root2", NodePayload::Root);
    fail.connect(extra, end()).unwrap();
    cases.push(RuleCase {
        rule: RuleId::R1,
        failing: fail,
        passing: pass("r1_pass"),
    });

    // R2: a second end.
    let mut fail = rule_base(reg, "r2_fail");
    let extra = push_node(&mut fail, "end2", NodePayload::End);
    fail.connect(NodeId::from("stop"), extra).unwrap();
    cases.push(RuleCase {
        rule: RuleId::R2,
        failing: fail,
        passing: pass("r2_pass"),
    });

    // R3: the end feeds a join.
    let mut fail = rule_base(reg, "r3_fail");
    let join = fail.add_join(Some("join"), JoinPolicy::AllFinished).unwrap();
    fail.connect(root(), join.clone()).unwrap();
    fail.connect(end(), join).unwrap();
    let mut ok = rule_base(reg, "r3_pass");
    let join = ok.add_join(Some("join"), JoinPolicy::AllFinished).unwrap();
    ok.edges.retain(|e| e.to.node != END_ID);
    ok.connect(root(), join.clone()).unwrap();
    ok.connect(NodeId::from("stop"), join.clone()).unwrap();
    ok.connect(join, end()).unwrap();
    cases.push(RuleCase {
        rule: RuleId::R3,
        failing: fail,
        passing: ok,
    });

    // R4: a maneuver off every root-end path.
    let mut fail = rule_base(reg, "r4_fail");
    fail.add_action(reg, Some("orphan"), "KeepVelocity", "ego", None, &[("duration", s(1.0))])
        .unwrap();
    let mut ok = rule_base(reg, "r4_pass");
    let keep = ok
        .add_action(reg, Some("orphan"), "KeepVelocity", "ego", None, &[("duration", s(1.0))])
        .unwrap();
    ok.edges.retain(|e| e.from.node != ROOT_ID);
    chain(&mut ok, &[root(), keep, NodeId::from("stop")]);
    cases.push(RuleCase {
        rule: RuleId::R4,
        failing: fail,
        passing: ok,
    });

    // R5: join with one incoming sequence.
    let mut ok = rule_base(reg, "r5_pass");
    ok.edges.retain(|e| e.to.node != END_ID);
    let join = ok.add_join(Some("join"), JoinPolicy::AllFinished).unwrap();
    ok.connect(root(), join.clone()).unwrap();
    chain(&mut ok, &[NodeId::from("stop"), join, end()]);
    cases.push(RuleCase {
        rule: RuleId::R5,
        failing: bad_join(reg),
        passing: ok,
    });

    // R6: unset required parameter at the concrete level.
    let mut fail = rule_base(reg, "r6_fail");
    fail.set_parameter(reg, &NodeId::from("stop"), "brake", ParamValue::Unset)
        .unwrap();
    let mut ok = fail.clone();
    ok.name = "r6_pass".into();
    ok.set_level(AbstractionLevel::Functional);
    cases.push(RuleCase {
        rule: RuleId::R6,
        failing: fail,
        passing: ok,
    });

    // R7: accelerate and decelerate in parallel.
    let parallel = |name: &str, second: &str| {
        let mut g = rule_base(reg, name);
        g.edges.clear();
        let acc = g
            .add_action(
                reg,
                Some("speed_up"),
                "Accelerate",
                "ego",
                None,
                &[("target_velocity", ms(8.0)), ("throttle", ratio(0.5))],
            )
            .unwrap();
        let other = match second {
            "Decelerate" => g.add_action(
                reg,
                Some("slow_down"),
                "Decelerate",
                "ego",
                None,
                &[("target_velocity", ms(2.0)), ("brake", ratio(0.5))],
            ),
            _ => g.add_action(reg, Some("slow_down"), "KeepVelocity", "ego", None, &[("duration", s(2.0))]),
        }
        .unwrap();
        let join = g.add_join(Some("join"), JoinPolicy::AllFinished).unwrap();
        chain(&mut g, &[root(), acc, join.clone()]);
        chain(&mut g, &[root(), other, join.clone()]);
        chain(&mut g, &[join, NodeId::from("stop"), end()]);
        g
    };
    cases.push(RuleCase {
        rule: RuleId::R7,
        failing: parallel("r7_fail", "Decelerate"),
        passing: parallel("r7_pass", "KeepVelocity"),
    });

    // R8: 50 km/h pedestrian.
    let mut ok = pedestrian_50kmh(reg);
    ok.name = "r8_pass".into();
    ok.actors[1].start_speed = ms(1.4);
    cases.push(RuleCase {
        rule: RuleId::R8,
        failing: pedestrian_50kmh(reg),
        passing: ok,
    });

    // R9: a cycle between two maneuvers.
    let cyclic = |name: &str, back: bool| {
        let mut g = rule_base(reg, name);
        g.edges.clear();
        let keep = g
            .add_action(reg, Some("keep"), "KeepVelocity", "ego", None, &[("duration", s(1.0))])
            .unwrap();
        chain(&mut g, &[root(), keep.clone(), NodeId::from("stop"), end()]);
        if back {
            g.connect(NodeId::from("stop"), keep).unwrap();
        }
        g
    };
    cases.push(RuleCase {
        rule: RuleId::R9,
        failing: cyclic("r9_fail", true),
        passing: cyclic("r9_pass", false),
    });

    // R10: a two-actor condition without its target.
    let radius = |name: &str, target: Option<&str>| {
        let mut g = rule_base(reg, name);
        g.add_actor(
            Actor::new("bike", ActorCategory::TwoWheeler, "bike")
                .starting_at(Pose2D::at(20.0, 0.0, 0.0), ms(0.0)),
        )
        .unwrap();
        let mut action = build_action(reg, "InVehicleRadius", "ego", None, &[("radius", m(10.0))]).unwrap();
        action.target_actor = target.map(ActorId::from);
        let near = push_node(&mut g, "near", NodePayload::Condition(action));
        g.edges.retain(|e| e.from.node != ROOT_ID);
        chain(&mut g, &[root(), near, NodeId::from("stop")]);
        g
    };
    cases.push(RuleCase {
        rule: RuleId::R10,
        failing: radius("r10_fail", None),
        passing: radius("r10_pass", Some("bike")),
    });

    cases
}

/// Every shipped scenario under its fixture file name.
pub fn catalog(reg: &Registry) -> Vec<(String, ScenarioGraph)> {
    let mut all = vec![
        ("uis1".to_string(), uis1(reg)),
        ("uis1_logical".to_string(), uis1_logical(reg)),
        ("uis1_functional".to_string(), uis1_functional(reg)),
        ("uis1_modular".to_string(), uis1_modular(reg)),
        ("uis2".to_string(), uis2(reg)),
        ("minimal".to_string(), minimal(reg)),
        ("one_finished".to_string(), one_finished(reg)),
        ("bad_join".to_string(), bad_join(reg)),
        ("pedestrian_50kmh".to_string(), pedestrian_50kmh(reg)),
    ];
    for case in rule_cases(reg) {
        let rule = case.rule.to_string().to_lowercase();
        all.push((format!("{rule}_fail"), case.failing));
        all.push((format!("{rule}_pass"), case.passing));
    }
    all
}
