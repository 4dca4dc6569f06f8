//! Static validation of scenario graphs.
//!
//! Every rule always runs; problems are reported as [`Finding`]s rather than
//! errors so editors get complete diagnostics. R7 and R8 are warnings, all
//! other rules are errors. Graphs with module instances are validated in
//! their flattened form, so findings inside modules name the copied nodes
//! (`<instance>/<element>`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AbstractionLevel, ActorId, GraphNode, NodeId, NodeKind, ParamValue, ScenarioGraph,
};
use crate::modules;
use crate::registry::{Quantity, Registry};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
}

impl RuleId {
    pub const ALL: [RuleId; 10] = [
        RuleId::R1,
        RuleId::R2,
        RuleId::R3,
        RuleId::R4,
        RuleId::R5,
        RuleId::R6,
        RuleId::R7,
        RuleId::R8,
        RuleId::R9,
        RuleId::R10,
    ];

    pub fn severity(self) -> Severity {
        match self {
            RuleId::R7 | RuleId::R8 => Severity::Warning,
            _ => Severity::Error,
        }
    }

    fn number(self) -> usize {
        RuleId::ALL.iter().position(|r| *r == self).unwrap() + 1
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.number())
    }
}

impl FromStr for RuleId {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('R')
            .and_then(|n| n.parse::<usize>().ok())
            .and_then(|n| n.checked_sub(1))
            .and_then(|i| RuleId::ALL.get(i).copied())
            .ok_or_else(|| ValidationError::UnknownRule(s.to_string()))
    }
}

impl Serialize for RuleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RuleId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("unknown rule '{0}'")]
    UnknownRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: RuleId,
    pub severity: Severity,
    pub node_ids: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actor_ids: Vec<ActorId>,
    pub message: String,
}

impl Finding {
    fn new(rule: RuleId, node_ids: Vec<NodeId>, message: String) -> Self {
        Finding {
            rule_id: rule,
            severity: rule.severity(),
            node_ids,
            actor_ids: Vec::new(),
            message,
        }
    }

    fn for_actor(rule: RuleId, actor: &ActorId, message: String) -> Self {
        Finding {
            actor_ids: vec![actor.clone()],
            ..Finding::new(rule, Vec::new(), message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_valid: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn from_findings(mut findings: Vec<Finding>) -> Self {
        findings.sort_by(|a, b| {
            let key = |f: &Finding| {
                (
                    f.node_ids.first().cloned(),
                    f.actor_ids.first().cloned(),
                    f.rule_id,
                )
            };
            key(a).cmp(&key(b))
        });
        let is_valid = findings.iter().all(|f| f.severity != Severity::Error);
        ValidationReport { is_valid, findings }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    pub fn count(&self, rule: RuleId) -> usize {
        self.findings.iter().filter(|f| f.rule_id == rule).count()
    }

    /// Verdict in strict mode, where warnings count as errors.
    pub fn passes(&self, strict: bool) -> bool {
        if strict {
            self.findings.is_empty()
        } else {
            self.is_valid
        }
    }

    pub fn to_json(&self) -> String {
        crate::model::document::to_pretty_json(self)
    }
}

/// Human-readable description of a rule.
pub fn explain(rule: &str) -> Result<&'static str, ValidationError> {
    Ok(match rule.parse::<RuleId>()? {
        RuleId::R1 => "R1 (error): a scenario has exactly one root node.",
        RuleId::R2 => "R2 (error): a scenario has exactly one end node.",
        RuleId::R3 => {
            "R3 (error): the root node has no incoming connection and the end node has no \
             outgoing connection."
        }
        RuleId::R4 => {
            "R4 (error): every maneuver and condition lies on a path from the root node to \
             the end node."
        }
        RuleId::R5 => "R5 (error): every join node has at least two incoming sequences.",
        RuleId::R6 => {
            "R6 (error): parameters fit the abstraction level: concrete scenarios give a \
             scalar for every required parameter, logical scenarios a scalar, range or \
             discrete set, functional scenarios may leave parameters unset."
        }
        RuleId::R7 => {
            "R7 (warning): an actor is not given conflicting maneuvers (e.g. Accelerate and \
             Decelerate) in parallel branches."
        }
        RuleId::R8 => {
            "R8 (warning): scalar parameters stay within the plausibility bounds of the \
             actor category, e.g. pedestrians move at most 4.2 m/s."
        }
        RuleId::R9 => "R9 (error): the scenario graph is acyclic.",
        RuleId::R10 => {
            "R10 (error): actor and module references resolve; two-actor actions name a \
             target actor."
        }
    })
}

/// Runs all rules against `graph`.
pub fn validate(graph: &ScenarioGraph, registry: &Registry) -> ValidationReport {
    let mut findings = Vec::new();
    let flat = match modules::flatten(graph) {
        Ok(flat) => flat,
        Err(err) => {
            let nodes = graph
                .nodes()
                .iter()
                .filter(|n| n.kind() == NodeKind::ModuleInstance)
                .map(|n| n.id.clone())
                .collect();
            findings.push(Finding::new(
                RuleId::R10,
                nodes,
                format!("module expansion failed: {err}"),
            ));
            graph.clone()
        }
    };
    let topo = Topology::new(&flat);
    let nodes = flat.nodes();

    check_terminals(&flat, &mut findings);
    check_terminal_edges(&flat, &topo, &mut findings);
    check_paths(nodes, &topo, &mut findings);
    check_joins(nodes, &topo, &mut findings);
    check_levels(&flat, registry, &mut findings);
    check_conflicts(&flat, &topo, registry, &mut findings);
    check_bounds(&flat, registry, &mut findings);
    check_acyclic(&topo, &mut findings);
    check_references(&flat, registry, &mut findings);

    ValidationReport::from_findings(findings)
}

fn ids_of_kind(nodes: &[GraphNode], kind: NodeKind) -> Vec<NodeId> {
    nodes
        .iter()
        .filter(|n| n.kind() == kind)
        .map(|n| n.id.clone())
        .collect()
}

fn check_terminals(graph: &ScenarioGraph, findings: &mut Vec<Finding>) {
    for (rule, kind) in [(RuleId::R1, NodeKind::Root), (RuleId::R2, NodeKind::End)] {
        let ids = ids_of_kind(graph.nodes(), kind);
        if ids.len() != 1 {
            findings.push(Finding::new(
                rule,
                ids.clone(),
                format!("expected exactly one {kind} node, found {}", ids.len()),
            ));
        }
    }
}

fn check_terminal_edges(graph: &ScenarioGraph, topo: &Topology, findings: &mut Vec<Finding>) {
    for (i, node) in graph.nodes().iter().enumerate() {
        match node.kind() {
            NodeKind::Root if !topo.pred[i].is_empty() => findings.push(Finding::new(
                RuleId::R3,
                vec![node.id.clone()],
                format!("root node '{}' has an incoming connection", node.id),
            )),
            NodeKind::End if !topo.succ[i].is_empty() => findings.push(Finding::new(
                RuleId::R3,
                vec![node.id.clone()],
                format!("end node '{}' has an outgoing connection", node.id),
            )),
            _ => {}
        }
    }
}

fn check_paths(nodes: &[GraphNode], topo: &Topology, findings: &mut Vec<Finding>) {
    let of_kind = |kind| -> Vec<usize> {
        (0..nodes.len())
            .filter(|&i| nodes[i].kind() == kind)
            .collect()
    };
    let from_root = topo.reach(&of_kind(NodeKind::Root), false);
    let to_end = topo.reach(&of_kind(NodeKind::End), true);
    for (i, node) in nodes.iter().enumerate() {
        if node.action().is_none() {
            continue;
        }
        if !(from_root[i] && to_end[i]) {
            let why = match (from_root[i], to_end[i]) {
                (false, false) => "is neither reachable from the root nor connected to the end",
                (false, true) => "is not reachable from the root",
                _ => "has no path to the end node",
            };
            findings.push(Finding::new(
                RuleId::R4,
                vec![node.id.clone()],
                format!("'{}' {why}", node.id),
            ));
        }
    }
}

fn check_joins(nodes: &[GraphNode], topo: &Topology, findings: &mut Vec<Finding>) {
    for (i, node) in nodes.iter().enumerate() {
        if node.kind() == NodeKind::Join && topo.pred[i].len() < 2 {
            findings.push(Finding::new(
                RuleId::R5,
                vec![node.id.clone()],
                format!(
                    "join '{}' has {} incoming sequence(s), needs at least two",
                    node.id,
                    topo.pred[i].len()
                ),
            ));
        }
    }
}

fn describe(value: &ParamValue) -> &'static str {
    match value {
        ParamValue::Unset => "unset",
        ParamValue::Scalar { .. } => "a scalar",
        ParamValue::Range { .. } => "a range",
        ParamValue::Set { .. } => "a discrete set",
    }
}

fn check_levels(graph: &ScenarioGraph, registry: &Registry, findings: &mut Vec<Finding>) {
    let level = graph.level();
    if level == AbstractionLevel::Functional {
        return;
    }
    let wanted = match level {
        AbstractionLevel::Concrete => "a scalar",
        _ => "a scalar, range or set",
    };
    for node in graph.nodes() {
        let Some(action) = node.action() else {
            continue;
        };
        let Some(spec) = registry.action(&action.action_type) else {
            continue;
        };
        let bad: Vec<String> = spec
            .params
            .iter()
            .filter(|p| p.required && action.param(&p.name).level() < level)
            .map(|p| format!("{} is {}", p.name, describe(action.param(&p.name))))
            .collect();
        if !bad.is_empty() {
            findings.push(Finding::new(
                RuleId::R6,
                vec![node.id.clone()],
                format!(
                    "{level} scenario needs {wanted} for every parameter of '{}': {}",
                    node.id,
                    bad.join(", ")
                ),
            ));
        }
    }
    for actor in graph.actors() {
        let bad: Vec<String> = actor
            .start_params()
            .iter()
            .filter(|(_, v)| v.level() < level)
            .map(|(k, v)| format!("{k} is {}", describe(v)))
            .collect();
        if !bad.is_empty() {
            findings.push(Finding::for_actor(
                RuleId::R6,
                &actor.id,
                format!(
                    "{level} scenario needs {wanted} for the start state of actor '{}': {}",
                    actor.id,
                    bad.join(", ")
                ),
            ));
        }
    }
    if level == AbstractionLevel::Concrete {
        let free: Vec<&str> = graph
            .environment()
            .iter()
            .filter(|(_, v)| v.level() == AbstractionLevel::Logical)
            .map(|(k, _)| k.as_str())
            .collect();
        if !free.is_empty() {
            findings.push(Finding::new(
                RuleId::R6,
                Vec::new(),
                format!(
                    "concrete scenario has free environment parameters: {}",
                    free.join(", ")
                ),
            ));
        }
    }
}

fn check_conflicts(
    graph: &ScenarioGraph,
    topo: &Topology,
    registry: &Registry,
    findings: &mut Vec<Finding>,
) {
    let nodes = graph.nodes();
    let maneuvers: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].kind() == NodeKind::Maneuver)
        .collect();
    if maneuvers.len() < 2 {
        return;
    }
    let desc = topo.strict_descendants();
    let joins: Vec<usize> = (0..nodes.len())
        .filter(|&i| matches!(nodes[i].kind(), NodeKind::Join | NodeKind::End))
        .collect();
    for (x, &i) in maneuvers.iter().enumerate() {
        for &j in &maneuvers[x + 1..] {
            let (a, b) = (nodes[i].action().unwrap(), nodes[j].action().unwrap());
            if a.reference_actor != b.reference_actor
                || !registry.conflicts(&a.action_type, &b.action_type)
                || desc[i][j]
                || desc[j][i]
            {
                continue;
            }
            if joins.iter().any(|&k| desc[i][k] && desc[j][k]) {
                let mut ids = vec![nodes[i].id.clone(), nodes[j].id.clone()];
                ids.sort();
                findings.push(Finding {
                    actor_ids: vec![a.reference_actor.clone()],
                    ..Finding::new(
                        RuleId::R7,
                        ids,
                        format!(
                            "actor '{}' may run {} ('{}') and {} ('{}') at the same time",
                            a.reference_actor,
                            a.action_type,
                            nodes[i].id,
                            b.action_type,
                            nodes[j].id
                        ),
                    )
                });
            }
        }
    }
}

fn check_bounds(graph: &ScenarioGraph, registry: &Registry, findings: &mut Vec<Finding>) {
    let out_of_bounds = |quantity: Quantity, value: f64, category| -> Option<String> {
        let b = registry.bounds(category);
        match quantity {
            Quantity::Speed if !(0.0..=b.max_speed).contains(&value) => Some(format!(
                "{value} m/s is outside 0..{} m/s for a {category:?}",
                b.max_speed
            )),
            Quantity::Acceleration if value.abs() > b.max_accel => Some(format!(
                "|{value}| m/s² exceeds {} m/s² for a {category:?}",
                b.max_accel
            )),
            _ => None,
        }
    };
    for node in graph.nodes() {
        let Some(action) = node.action() else {
            continue;
        };
        let (Some(spec), Some(actor)) = (
            registry.action(&action.action_type),
            graph.actor(&action.reference_actor),
        ) else {
            continue;
        };
        for p in &spec.params {
            for value in action.param(&p.name).numeric_extremes() {
                if let Some(why) = out_of_bounds(p.quantity, value, actor.category) {
                    findings.push(Finding {
                        actor_ids: vec![actor.id.clone()],
                        ..Finding::new(
                            RuleId::R8,
                            vec![node.id.clone()],
                            format!("'{}' {}: {why}", node.id, p.name),
                        )
                    });
                }
            }
        }
    }
    for actor in graph.actors() {
        for value in actor.start_speed.numeric_extremes() {
            if let Some(why) = out_of_bounds(Quantity::Speed, value, actor.category) {
                findings.push(Finding::for_actor(
                    RuleId::R8,
                    &actor.id,
                    format!("start speed of '{}': {why}", actor.id),
                ));
            }
        }
    }
}

fn check_acyclic(topo: &Topology, findings: &mut Vec<Finding>) {
    let desc = topo.strict_descendants();
    let cyclic: Vec<NodeId> = (0..topo.len())
        .filter(|&v| desc[v][v])
        .map(|v| topo.ids[v].clone())
        .collect();
    if !cyclic.is_empty() {
        let names: Vec<&str> = cyclic.iter().map(NodeId::as_str).collect();
        findings.push(Finding::new(
            RuleId::R9,
            cyclic.clone(),
            format!("graph contains a cycle through {}", names.join(", ")),
        ));
    }
}

fn check_references(graph: &ScenarioGraph, registry: &Registry, findings: &mut Vec<Finding>) {
    for node in graph.nodes() {
        let Some(action) = node.action() else {
            continue;
        };
        let mut problems = Vec::new();
        if graph.actor(&action.reference_actor).is_none() {
            problems.push(format!(
                "reference actor '{}' does not exist",
                action.reference_actor
            ));
        }
        let two_actor = registry
            .action(&action.action_type)
            .is_some_and(|s| s.two_actor);
        match (&action.target_actor, two_actor) {
            (None, true) => problems.push(format!("{} needs a target actor", action.action_type)),
            (Some(t), true) if graph.actor(t).is_none() => {
                problems.push(format!("target actor '{t}' does not exist"))
            }
            (Some(t), false) => problems.push(format!(
                "{} takes no target actor, got '{t}'",
                action.action_type
            )),
            _ => {}
        }
        if !problems.is_empty() {
            findings.push(Finding::new(
                RuleId::R10,
                vec![node.id.clone()],
                format!("'{}': {}", node.id, problems.join("; ")),
            ));
        }
    }
}
