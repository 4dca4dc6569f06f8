//! Scenario graphs: actors, action/join/module nodes and directed edges from
//! a unique root to a unique end node.

pub(crate) mod document;
mod param;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modules::{ModuleDef, ModuleInstance};
use crate::registry::{ActionCategory, Registry};

pub use document::{parse, serialize, FORMAT_VERSION};
pub use param::{ParamValue, Scalar};

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl PartialEq<str> for $name {
            fn eq(&self, other: &str) -> bool {
                self.0 == other
            }
        }

        impl PartialEq<&str> for $name {
            fn eq(&self, other: &&str) -> bool {
                self.0 == *other
            }
        }
    };
}

string_id!(NodeId);
string_id!(ActorId);

pub const ROOT_ID: &str = "root";
pub const END_ID: &str = "end";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("a scenario holds exactly one {0} node")]
    DuplicateTerminal(NodeKind),
    #[error("unknown action type '{0}'")]
    UnknownAction(String),
    #[error("unknown node '{0}'")]
    UnknownNode(NodeId),
    #[error("unknown actor '{0}'")]
    UnknownActor(ActorId),
    #[error("duplicate edge {0}")]
    DuplicateEdge(String),
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("parameter '{key}' is not declared for {action}")]
    UnknownParameter { action: String, key: String },
    #[error("parse error at line {line}, column {column} ({path}): {message}")]
    Parse {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
}

impl ModelError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstractionLevel {
    Functional,
    Logical,
    Concrete,
}

impl fmt::Display for AbstractionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbstractionLevel::Functional => "functional",
            AbstractionLevel::Logical => "logical",
            AbstractionLevel::Concrete => "concrete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorCategory {
    Pedestrian,
    TwoWheeler,
    FourWheeler,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: ParamValue,
    pub y: ParamValue,
    pub heading: ParamValue,
}

impl Pose2D {
    /// Concrete pose in meters / radians.
    pub fn at(x: f64, y: f64, heading: f64) -> Self {
        Pose2D {
            x: ParamValue::scalar(x, "m"),
            y: ParamValue::scalar(y, "m"),
            heading: ParamValue::scalar(heading, "rad"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub id: ActorId,
    pub name: String,
    pub category: ActorCategory,
    pub model: String,
    pub is_ego: bool,
    pub start_pose: Pose2D,
    pub start_speed: ParamValue,
}

impl Actor {
    pub fn new(id: &str, category: ActorCategory, model: &str) -> Self {
        Actor {
            id: ActorId::from(id),
            name: id.to_string(),
            category,
            model: model.to_string(),
            is_ego: false,
            start_pose: Pose2D::default(),
            start_speed: ParamValue::Unset,
        }
    }

    pub fn ego(mut self) -> Self {
        self.is_ego = true;
        self
    }

    pub fn starting_at(mut self, pose: Pose2D, speed: ParamValue) -> Self {
        self.start_pose = pose;
        self.start_speed = speed;
        self
    }

    /// Start parameters as `(field, value)` pairs in a fixed order.
    pub fn start_params(&self) -> [(&'static str, &ParamValue); 4] {
        [
            ("x", &self.start_pose.x),
            ("y", &self.start_pose.y),
            ("heading", &self.start_pose.heading),
            ("start_speed", &self.start_speed),
        ]
    }

    pub fn start_param_mut(&mut self, field: &str) -> Option<&mut ParamValue> {
        match field {
            "x" => Some(&mut self.start_pose.x),
            "y" => Some(&mut self.start_pose.y),
            "heading" => Some(&mut self.start_pose.heading),
            "start_speed" => Some(&mut self.start_speed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinPolicy {
    AllFinished,
    OneFinished,
}

/// Payload of maneuver and condition nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionNode {
    pub action_type: String,
    pub category: ActionCategory,
    pub reference_actor: ActorId,
    pub target_actor: Option<ActorId>,
    pub params: BTreeMap<String, ParamValue>,
}

impl ActionNode {
    /// Value of `key`, treating absent keys as unset.
    pub fn param(&self, key: &str) -> &ParamValue {
        static UNSET: ParamValue = ParamValue::Unset;
        self.params.get(key).unwrap_or(&UNSET)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    End,
    Maneuver,
    Condition,
    Join,
    ModuleInstance,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Root => "root",
            NodeKind::End => "end",
            NodeKind::Maneuver => "maneuver",
            NodeKind::Condition => "condition",
            NodeKind::Join => "join",
            NodeKind::ModuleInstance => "module_instance",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodePayload {
    Root,
    End,
    Maneuver(ActionNode),
    Condition(ActionNode),
    Join(JoinPolicy),
    ModuleInstance(ModuleInstance),
}

impl NodePayload {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodePayload::Root => NodeKind::Root,
            NodePayload::End => NodeKind::End,
            NodePayload::Maneuver(_) => NodeKind::Maneuver,
            NodePayload::Condition(_) => NodeKind::Condition,
            NodePayload::Join(_) => NodeKind::Join,
            NodePayload::ModuleInstance(_) => NodeKind::ModuleInstance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: NodeId,
    pub payload: NodePayload,
}

impl GraphNode {
    pub fn kind(&self) -> NodeKind {
        self.payload.kind()
    }

    pub fn action(&self) -> Option<&ActionNode> {
        match &self.payload {
            NodePayload::Maneuver(a) | NodePayload::Condition(a) => Some(a),
            _ => None,
        }
    }

    pub fn action_mut(&mut self) -> Option<&mut ActionNode> {
        match &mut self.payload {
            NodePayload::Maneuver(a) | NodePayload::Condition(a) => Some(a),
            _ => None,
        }
    }

    pub fn instance(&self) -> Option<&ModuleInstance> {
        match &self.payload {
            NodePayload::ModuleInstance(m) => Some(m),
            _ => None,
        }
    }

    pub fn join_policy(&self) -> Option<JoinPolicy> {
        match self.payload {
            NodePayload::Join(p) => Some(p),
            _ => None,
        }
    }
}

/// Edge endpoint; `port` names a module port when the node is a module
/// instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub node: NodeId,
    pub port: Option<String>,
}

impl Endpoint {
    pub fn node(id: impl Into<NodeId>) -> Self {
        Endpoint {
            node: id.into(),
            port: None,
        }
    }

    pub fn port(id: impl Into<NodeId>, port: &str) -> Self {
        Endpoint {
            node: id.into(),
            port: Some(port.to_string()),
        }
    }
}

impl From<&NodeId> for Endpoint {
    fn from(id: &NodeId) -> Self {
        Endpoint::node(id.clone())
    }
}

impl From<NodeId> for Endpoint {
    fn from(id: NodeId) -> Self {
        Endpoint::node(id)
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.port {
            Some(p) => write!(f, "{}:{}", self.node, p),
            None => write!(f, "{}", self.node),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: Endpoint,
    pub to: Endpoint,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

/// Position of an edge in [`ScenarioGraph::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGraph {
    pub(crate) name: String,
    pub(crate) map_name: String,
    pub(crate) level: AbstractionLevel,
    pub(crate) environment: BTreeMap<String, ParamValue>,
    pub(crate) actors: Vec<Actor>,
    pub(crate) nodes: Vec<GraphNode>,
    pub(crate) edges: Vec<Edge>,
    pub(crate) module_defs: BTreeMap<String, ModuleDef>,
}

impl ScenarioGraph {
    /// A graph holding only its root and end node.
    pub fn new(name: &str, map_name: &str, level: AbstractionLevel) -> Result<Self, ModelError> {
        if name.trim().is_empty() {
            return Err(ModelError::InvalidArgument("scenario name is empty".into()));
        }
        Ok(ScenarioGraph {
            name: name.to_string(),
            map_name: map_name.to_string(),
            level,
            environment: BTreeMap::new(),
            actors: Vec::new(),
            nodes: vec![
                GraphNode {
                    id: NodeId::from(ROOT_ID),
                    payload: NodePayload::Root,
                },
                GraphNode {
                    id: NodeId::from(END_ID),
                    payload: NodePayload::End,
                },
            ],
            edges: Vec::new(),
            module_defs: BTreeMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn map_name(&self) -> &str {
        &self.map_name
    }

    pub fn level(&self) -> AbstractionLevel {
        self.level
    }

    pub fn set_level(&mut self, level: AbstractionLevel) {
        self.level = level;
    }

    pub fn environment(&self) -> &BTreeMap<String, ParamValue> {
        &self.environment
    }

    pub fn set_environment(&mut self, key: &str, value: ParamValue) {
        self.environment.insert(key.to_string(), value);
    }

    pub fn environment_mut(&mut self) -> &mut BTreeMap<String, ParamValue> {
        &mut self.environment
    }

    pub fn actors(&self) -> &[Actor] {
        &self.actors
    }

    pub fn actors_mut(&mut self) -> &mut [Actor] {
        &mut self.actors
    }

    pub fn actor(&self, id: &ActorId) -> Option<&Actor> {
        self.actors.iter().find(|a| &a.id == id)
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: &NodeId) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn node_mut(&mut self, id: &NodeId) -> Option<&mut GraphNode> {
        self.nodes.iter_mut().find(|n| &n.id == id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn module_defs(&self) -> &BTreeMap<String, ModuleDef> {
        &self.module_defs
    }

    pub fn module_def(&self, name: &str) -> Option<&ModuleDef> {
        self.module_defs.get(name)
    }

    /// First node of the given kind, e.g. the root.
    pub fn find_kind(&self, kind: NodeKind) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.kind() == kind)
    }

    pub fn root_id(&self) -> Option<&NodeId> {
        self.find_kind(NodeKind::Root).map(|n| &n.id)
    }

    pub fn end_id(&self) -> Option<&NodeId> {
        self.find_kind(NodeKind::End).map(|n| &n.id)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind() == kind).count()
    }

    pub fn has_module_instances(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| n.kind() == NodeKind::ModuleInstance)
    }

    pub fn add_actor(&mut self, actor: Actor) -> Result<ActorId, ModelError> {
        if actor.id.as_str().is_empty() {
            return Err(ModelError::InvalidArgument("actor id is empty".into()));
        }
        if self.actor(&actor.id).is_some() {
            return Err(ModelError::DuplicateId(actor.id.0));
        }
        if actor.is_ego && self.actors.iter().any(|a| a.is_ego) {
            return Err(ModelError::InvalidArgument(
                "a scenario has at most one ego actor".into(),
            ));
        }
        for (field, value) in actor.start_params() {
            value
                .check()
                .map_err(|m| ModelError::InvalidArgument(format!("{}.{field}: {m}", actor.id)))?;
        }
        let id = actor.id.clone();
        self.actors.push(actor);
        Ok(id)
    }

    fn fresh_id(&self) -> NodeId {
        let mut k = self.nodes.len();
        loop {
            let id = NodeId(format!("n{k}"));
            if self.node(&id).is_none() {
                return id;
            }
            k += 1;
        }
    }

    /// Adds a node under a generated id.
    pub fn add_node(
        &mut self,
        registry: &Registry,
        payload: NodePayload,
    ) -> Result<NodeId, ModelError> {
        let id = self.fresh_id();
        self.add_node_with_id(registry, id, payload)
    }

    /// Adds a node under a caller-chosen id.
    pub fn add_node_with_id(
        &mut self,
        registry: &Registry,
        id: impl Into<NodeId>,
        payload: NodePayload,
    ) -> Result<NodeId, ModelError> {
        let id = id.into();
        if id.as_str().is_empty() {
            return Err(ModelError::InvalidArgument("node id is empty".into()));
        }
        if self.node(&id).is_some() {
            return Err(ModelError::DuplicateId(id.0));
        }
        match &payload {
            NodePayload::Root | NodePayload::End => {
                return Err(ModelError::DuplicateTerminal(payload.kind()))
            }
            NodePayload::Maneuver(action) | NodePayload::Condition(action) => {
                self.check_action(registry, payload.kind(), action)?
            }
            NodePayload::Join(_) => {}
            NodePayload::ModuleInstance(inst) => {
                if !self.module_defs.contains_key(&inst.module) {
                    return Err(ModelError::InvalidArgument(format!(
                        "module '{}' is not registered in this scenario",
                        inst.module
                    )));
                }
            }
        }
        self.nodes.push(GraphNode {
            id: id.clone(),
            payload,
        });
        Ok(id)
    }

    fn check_action(
        &self,
        registry: &Registry,
        kind: NodeKind,
        action: &ActionNode,
    ) -> Result<(), ModelError> {
        let spec = registry
            .action(&action.action_type)
            .ok_or_else(|| ModelError::UnknownAction(action.action_type.clone()))?;
        let expected = if spec.is_condition() {
            NodeKind::Condition
        } else {
            NodeKind::Maneuver
        };
        if kind != expected || spec.category != action.category {
            return Err(ModelError::InvalidArgument(format!(
                "{} is a {:?} action",
                spec.name, spec.category
            )));
        }
        for (key, value) in &action.params {
            if spec.param(key).is_none() {
                return Err(ModelError::UnknownParameter {
                    action: spec.name.clone(),
                    key: key.clone(),
                });
            }
            value
                .check()
                .map_err(|m| ModelError::InvalidArgument(format!("{key}: {m}")))?;
        }
        if self.actor(&action.reference_actor).is_none() {
            return Err(ModelError::UnknownActor(action.reference_actor.clone()));
        }
        match (&action.target_actor, spec.two_actor) {
            (Some(target), true) => {
                if self.actor(target).is_none() {
                    return Err(ModelError::UnknownActor(target.clone()));
                }
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(ModelError::InvalidArgument(format!(
                    "{} does not take a target actor",
                    spec.name
                )))
            }
            (None, true) => {
                return Err(ModelError::InvalidArgument(format!(
                    "{} requires a target actor",
                    spec.name
                )))
            }
        }
        Ok(())
    }

    /// Adds a maneuver or condition, choosing the node kind and category from
    /// the registry.
    pub fn add_action(
        &mut self,
        registry: &Registry,
        id: Option<&str>,
        action_type: &str,
        reference_actor: &str,
        target_actor: Option<&str>,
        params: &[(&str, ParamValue)],
    ) -> Result<NodeId, ModelError> {
        let action = build_action(registry, action_type, reference_actor, target_actor, params)?;
        let payload = if action.category.is_condition() {
            NodePayload::Condition(action)
        } else {
            NodePayload::Maneuver(action)
        };
        match id {
            Some(id) => self.add_node_with_id(registry, id, payload),
            None => self.add_node(registry, payload),
        }
    }

    pub fn add_join(&mut self, id: Option<&str>, policy: JoinPolicy) -> Result<NodeId, ModelError> {
        let id = match id {
            Some(id) => NodeId::from(id),
            None => self.fresh_id(),
        };
        if self.node(&id).is_some() {
            return Err(ModelError::DuplicateId(id.0));
        }
        self.nodes.push(GraphNode {
            id: id.clone(),
            payload: NodePayload::Join(policy),
        });
        Ok(id)
    }

    /// Adds a directed edge. Cycles are accepted here and reported by
    /// validation.
    pub fn connect(
        &mut self,
        from: impl Into<Endpoint>,
        to: impl Into<Endpoint>,
    ) -> Result<EdgeId, ModelError> {
        let edge = Edge {
            from: from.into(),
            to: to.into(),
        };
        for (end, is_source) in [(&edge.from, true), (&edge.to, false)] {
            let node = self
                .node(&end.node)
                .ok_or_else(|| ModelError::UnknownNode(end.node.clone()))?;
            if let Some(port) = &end.port {
                let Some(inst) = node.instance() else {
                    return Err(ModelError::InvalidArgument(format!(
                        "node '{}' has no ports",
                        end.node
                    )));
                };
                let def = &self.module_defs[&inst.module];
                let known = if is_source {
                    def.out_ports.iter().any(|p| &p.name == port)
                } else {
                    def.in_ports.iter().any(|p| &p.name == port)
                };
                if !known {
                    return Err(ModelError::InvalidArgument(format!(
                        "module '{}' has no {} port '{port}'",
                        inst.module,
                        if is_source { "output" } else { "input" }
                    )));
                }
            }
        }
        if edge.from.node == edge.to.node {
            return Err(ModelError::InvalidArgument(format!(
                "self-loop on '{}'",
                edge.from.node
            )));
        }
        if self.edges.contains(&edge) {
            return Err(ModelError::DuplicateEdge(edge.to_string()));
        }
        self.edges.push(edge);
        Ok(EdgeId(self.edges.len() - 1))
    }

    /// Stores a parameter verbatim. Level conformance is left to validation.
    pub fn set_parameter(
        &mut self,
        registry: &Registry,
        node: &NodeId,
        key: &str,
        value: ParamValue,
    ) -> Result<&GraphNode, ModelError> {
        value.check().map_err(ModelError::InvalidArgument)?;
        let idx = self
            .nodes
            .iter()
            .position(|n| &n.id == node)
            .ok_or_else(|| ModelError::UnknownNode(node.clone()))?;
        let action = self.nodes[idx].action_mut().ok_or_else(|| {
            ModelError::InvalidArgument(format!("node '{node}' has no parameters"))
        })?;
        let spec = registry
            .action(&action.action_type)
            .ok_or_else(|| ModelError::UnknownAction(action.action_type.clone()))?;
        if spec.param(key).is_none() {
            return Err(ModelError::UnknownParameter {
                action: spec.name.clone(),
                key: key.to_string(),
            });
        }
        action.params.insert(key.to_string(), value);
        Ok(&self.nodes[idx])
    }

    pub fn predecessors<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| &e.to.node == id)
    }

    pub fn successors<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| &e.from.node == id)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        name: String,
        map_name: String,
        level: AbstractionLevel,
        environment: BTreeMap<String, ParamValue>,
        actors: Vec<Actor>,
        nodes: Vec<GraphNode>,
        edges: Vec<Edge>,
        module_defs: BTreeMap<String, ModuleDef>,
    ) -> Self {
        ScenarioGraph {
            name,
            map_name,
            level,
            environment,
            actors,
            nodes,
            edges,
            module_defs,
        }
    }
}

/// Builds an action payload with the category taken from the registry.
pub fn build_action(
    registry: &Registry,
    action_type: &str,
    reference_actor: &str,
    target_actor: Option<&str>,
    params: &[(&str, ParamValue)],
) -> Result<ActionNode, ModelError> {
    let spec = registry
        .action(action_type)
        .ok_or_else(|| ModelError::UnknownAction(action_type.to_string()))?;
    let mut map = BTreeMap::new();
    for (key, value) in params {
        if spec.param(key).is_none() {
            return Err(ModelError::UnknownParameter {
                action: spec.name.clone(),
                key: key.to_string(),
            });
        }
        map.insert(key.to_string(), value.clone());
    }
    Ok(ActionNode {
        action_type: spec.name.clone(),
        category: spec.category,
        reference_actor: ActorId::from(reference_actor),
        target_actor: target_actor.map(ActorId::from),
        params: map,
    })
}
