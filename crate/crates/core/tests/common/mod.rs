#![allow(dead_code)]

use proptest::prelude::*;
use scenario_core::model::{
    build_action, AbstractionLevel, Actor, ActorCategory, Edge, Endpoint, GraphNode, JoinPolicy,
    NodeId, NodePayload, ParamValue, Pose2D, ScenarioGraph, END_ID, ROOT_ID,
};
use scenario_core::modules::{define_module, ModuleDef, ModuleInstance, Port};
use scenario_core::registry::Registry;

/// What a generated inner node is.
#[derive(Debug, Clone, Copy)]
pub enum Slot {
    /// TimeElapsed with the duration in ticks of 0.1 s.
    Timer(u8),
    /// KeepVelocity with the duration in ticks of 0.1 s.
    Hold(u8),
    Join(bool),
}

#[derive(Debug, Clone)]
pub struct DagSpec {
    pub slots: Vec<Slot>,
    /// Candidate edges `(a, b)` with `a < b` over `0 = root`, `1..=n` inner
    /// nodes and `n + 1 = end`.
    pub edges: Vec<(usize, usize)>,
}

pub fn slot() -> impl Strategy<Value = Slot> {
    prop_oneof![
        (1u8..30).prop_map(Slot::Timer),
        (1u8..30).prop_map(Slot::Hold),
        any::<bool>().prop_map(Slot::Join),
    ]
}

/// Random DAG with at most `max_nodes` nodes including root and end.
pub fn dag_spec(max_nodes: usize) -> impl Strategy<Value = DagSpec> {
    prop::collection::vec(slot(), 0..=max_nodes - 2).prop_flat_map(|slots| {
        let total = slots.len() + 2;
        let pair = (0..total, 0..total).prop_filter_map("forward pair", |(a, b)| {
            (a < b).then_some((a, b))
        });
        prop::collection::vec(pair, 0..=3 * total).prop_map(move |edges| DagSpec {
            slots: slots.clone(),
            edges,
        })
    })
}

pub fn node_name(i: usize, n: usize) -> String {
    match i {
        0 => ROOT_ID.to_string(),
        i if i == n + 1 => END_ID.to_string(),
        i => format!("n{i:02}"),
    }
}

pub fn ego() -> Actor {
    Actor::new("ego", ActorCategory::FourWheeler, "sedan")
        .ego()
        .starting_at(Pose2D::at(0.0, 0.0, 0.0), ParamValue::scalar(5.0, "m/s"))
}

fn add_slot(g: &mut ScenarioGraph, reg: &Registry, id: &str, slot: Slot, joins_all: bool) {
    let secs = |t: u8| [("duration", ParamValue::scalar(f64::from(t) / 10.0, "s"))];
    match slot {
        Slot::Timer(t) => {
            g.add_action(reg, Some(id), "TimeElapsed", "ego", None, &secs(t)).unwrap();
        }
        Slot::Hold(t) => {
            g.add_action(reg, Some(id), "KeepVelocity", "ego", None, &secs(t)).unwrap();
        }
        Slot::Join(one) => {
            let policy = if one && !joins_all {
                JoinPolicy::OneFinished
            } else {
                JoinPolicy::AllFinished
            };
            g.add_join(Some(id), policy).unwrap();
        }
    }
}

/// Graph exactly as generated; may violate any structural rule except
/// acyclicity.
pub fn raw_graph(reg: &Registry, spec: &DagSpec) -> ScenarioGraph {
    let n = spec.slots.len();
    let mut g = ScenarioGraph::new("random", "map", AbstractionLevel::Concrete).unwrap();
    g.add_actor(ego()).unwrap();
    for (i, slot) in spec.slots.iter().enumerate() {
        add_slot(&mut g, reg, &node_name(i + 1, n), *slot, false);
    }
    for &(a, b) in &spec.edges {
        let _ = g.connect(NodeId::from(node_name(a, n)), NodeId::from(node_name(b, n)));
    }
    g
}

/// Repairs the generated DAG into a valid scenario with AllFinished joins
/// only: dangling nodes are hooked to root or end, and joins with fewer
/// than two inputs get extra ones from root.
pub fn gate_graph(reg: &Registry, spec: &DagSpec) -> ScenarioGraph {
    let n = spec.slots.len();
    let mut g = ScenarioGraph::new("gates", "map", AbstractionLevel::Concrete).unwrap();
    g.add_actor(ego()).unwrap();
    // The first inner node has only the root before it, too few for a join.
    let mut slots = spec.slots.clone();
    if let Some(first @ Slot::Join(_)) = slots.first_mut() {
        *first = Slot::Timer(5);
    }
    for (i, slot) in slots.iter().enumerate() {
        add_slot(&mut g, reg, &node_name(i + 1, n), *slot, true);
    }
    let mut edges: Vec<(usize, usize)> = spec
        .edges
        .iter()
        .copied()
        .filter(|&(a, b)| !(a == 0 && b == n + 1))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let has_in = |e: &[(usize, usize)], v: usize| e.iter().filter(|p| p.1 == v).count();
    let has_out = |e: &[(usize, usize)], v: usize| e.iter().any(|p| p.0 == v);
    for v in 1..=n {
        let need = if matches!(slots[v - 1], Slot::Join(_)) { 2 } else { 1 };
        let mut from = 0;
        while has_in(&edges, v) < need {
            if !edges.contains(&(from, v)) {
                edges.push((from, v));
            }
            from += 1;
        }
        if !has_out(&edges, v) {
            edges.push((v, n + 1));
        }
    }
    if !edges.iter().any(|e| e.1 == n + 1) {
        edges.push((0, n + 1));
    }
    for (a, b) in edges {
        g.connect(NodeId::from(node_name(a, n)), NodeId::from(node_name(b, n)))
            .unwrap();
    }
    g
}

/// Module with a chain of `len` timers, optionally wrapping an instance of
/// `inner` in the middle. Role `driver`.
pub fn chain_module(reg: &Registry, name: &str, len: usize, inner: Option<&ModuleDef>, durations: &[u8]) -> ModuleDef {
    let mut elements = Vec::new();
    let mut ids = Vec::new();
    for k in 0..len.max(1) {
        let id = format!("t{k}");
        let d = durations.get(k).copied().unwrap_or(3);
        let action = build_action(
            reg,
            if k % 2 == 0 { "TimeElapsed" } else { "KeepVelocity" },
            "driver",
            None,
            &[("duration", ParamValue::scalar(f64::from(d) / 10.0, "s"))],
        )
        .unwrap();
        let payload = if k % 2 == 0 {
            NodePayload::Condition(action)
        } else {
            NodePayload::Maneuver(action)
        };
        elements.push(GraphNode {
            id: NodeId::from(id.as_str()),
            payload,
        });
        ids.push(Endpoint::node(id.as_str()));
    }
    if let Some(inner) = inner {
        elements.push(GraphNode {
            id: NodeId::from(format!("sub_{name}").as_str()),
            payload: NodePayload::ModuleInstance(ModuleInstance {
                module: inner.name.clone(),
                bindings: [("driver".to_string(), "driver".into())].into_iter().collect(),
                overrides: Default::default(),
            }),
        });
        let at = ids.len() / 2 + 1;
        ids.insert(at.min(ids.len()), Endpoint::node(format!("sub_{name}").as_str()));
    }
    let edges = ids
        .windows(2)
        .map(|w| Edge {
            from: w[0].clone(),
            to: w[1].clone(),
        })
        .collect();
    let first = ids.first().unwrap().node.to_string();
    let last = ids.last().unwrap().node.to_string();
    define_module(
        name,
        elements,
        edges,
        vec![Port::new("in", &first)],
        vec![Port::new("out", &last)],
        vec!["driver".into()],
    )
    .unwrap()
}

#[derive(Debug, Clone)]
pub struct ModularSpec {
    pub dag: DagSpec,
    pub depth: usize,
    pub lens: Vec<usize>,
    pub durations: Vec<u8>,
    /// Inner slots replaced by instances of the outermost module.
    pub instances: Vec<bool>,
    pub level: u8,
}

pub fn modular_spec() -> impl Strategy<Value = ModularSpec> {
    (
        dag_spec(10),
        0usize..=3,
        prop::collection::vec(1usize..4, 3),
        prop::collection::vec(1u8..40, 4),
        prop::collection::vec(any::<bool>(), 8),
        0u8..3,
    )
        .prop_map(|(dag, depth, lens, durations, instances, level)| ModularSpec {
            dag,
            depth,
            lens,
            durations,
            instances,
            level,
        })
}

/// Random graph with module instances nested `depth` levels deep.
pub fn modular_graph(reg: &Registry, spec: &ModularSpec) -> ScenarioGraph {
    let mut g = raw_graph(reg, &spec.dag);
    g.set_level(match spec.level {
        0 => AbstractionLevel::Functional,
        1 => AbstractionLevel::Logical,
        _ => AbstractionLevel::Concrete,
    });
    if spec.depth == 0 {
        return g;
    }
    let mut def: Option<ModuleDef> = None;
    for level in 0..spec.depth {
        let d = chain_module(reg, &format!("M{level}"), spec.lens[level], def.as_ref(), &spec.durations);
        g.register_module(d.clone()).unwrap();
        def = Some(d);
    }
    let def = def.unwrap();
    let n = spec.dag.slots.len();
    for k in 0..spec.instances.iter().filter(|b| **b).count().min(3) {
        let id = g
            .instantiate(reg, &def, Some(&format!("inst{k}")), &[("driver", "ego")], &[])
            .unwrap();
        let _ = g.connect(NodeId::from(node_name(k.min(n), n)), Endpoint::port(id.clone(), "in"));
        let _ = g.connect(Endpoint::port(id, "out"), NodeId::from(END_ID));
    }
    g
}
