//! Reusable sub-scenarios.
//!
//! A [`ModuleDef`] is a fragment of maneuvers, conditions, joins and nested
//! module instances with named in/out ports and symbolic actor roles. An
//! instance binds each role to a scenario actor; [`flatten`] replaces every
//! instance by a renamed copy of the definition's elements.

mod catalog;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    ActorId, Edge, Endpoint, GraphNode, NodeId, NodeKind, NodePayload, ParamValue, ScenarioGraph,
};
use crate::registry::Registry;

pub use catalog::{
    library_load, library_save, module_document, parse_module, Catalog, CatalogError,
    CatalogIndex, IndexEntry,
};

pub const DEFAULT_DEPTH_LIMIT: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuleError {
    #[error("invalid module: {0}")]
    InvalidArgument(String),
    #[error("node '{0}' cannot be a module element")]
    IllegalElement(NodeId),
    #[error("module '{0}' contains itself")]
    RecursiveModule(String),
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("role '{0}' is not bound")]
    UnboundRole(String),
    #[error("unknown actor '{0}'")]
    UnknownActor(ActorId),
    #[error("actor '{actor}' cannot perform {action} (role '{role}')")]
    BindingMismatch {
        role: String,
        actor: ActorId,
        action: String,
    },
    #[error("unknown element '{0}'")]
    UnknownElement(String),
    #[error("parameter '{key}' is not declared for element '{element}'")]
    UnknownParameter { element: String, key: String },
    #[error("module '{module}' has no {direction} port '{port}'")]
    UnknownPort {
        module: String,
        direction: &'static str,
        port: String,
    },
    #[error("edge at '{0}' must name a port")]
    AmbiguousPort(NodeId),
    #[error("module nesting deeper than {0}")]
    DepthExceeded(usize),
    #[error("module instance '{0}' already belongs to another parent")]
    InstanceReused(NodeId),
    #[error("module '{0}' is already registered with different content")]
    Conflict(String),
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub name: String,
    /// Entry element for in-ports, exit element for out-ports.
    pub element: NodeId,
}

impl Port {
    pub fn new(name: &str, element: &str) -> Self {
        Port {
            name: name.to_string(),
            element: NodeId::from(element),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleDef {
    pub name: String,
    /// Content hash over everything but the revision itself.
    pub revision: String,
    pub elements: Vec<GraphNode>,
    pub edges: Vec<Edge>,
    pub in_ports: Vec<Port>,
    pub out_ports: Vec<Port>,
    pub roles: Vec<String>,
}

impl ModuleDef {
    pub fn element(&self, id: &NodeId) -> Option<&GraphNode> {
        self.elements.iter().find(|e| &e.id == id)
    }

    fn port(&self, direction: Direction, name: Option<&str>) -> Result<&Port, PortError> {
        let ports = match direction {
            Direction::In => &self.in_ports,
            Direction::Out => &self.out_ports,
        };
        match name {
            Some(name) => ports
                .iter()
                .find(|p| p.name == name)
                .ok_or(PortError::Unknown),
            None if ports.len() == 1 => Ok(&ports[0]),
            None => Err(PortError::Ambiguous),
        }
    }
}

#[derive(Clone, Copy)]
enum Direction {
    In,
    Out,
}

enum PortError {
    Unknown,
    Ambiguous,
}

/// Payload of a module-instance node. The instance id is the node id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModuleInstance {
    pub module: String,
    pub bindings: BTreeMap<String, ActorId>,
    /// Element id (or `inner/element` path into nested instances) to
    /// parameter overrides.
    pub overrides: BTreeMap<NodeId, BTreeMap<String, ParamValue>>,
}

pub(crate) fn compute_revision(def: &ModuleDef) -> String {
    let record = crate::model::document::def_to_record(def, false);
    let bytes = serde_json::to_vec(&record).expect("records always serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Creates a module definition after checking its structural invariants.
pub fn define_module(
    name: &str,
    elements: Vec<GraphNode>,
    edges: Vec<Edge>,
    in_ports: Vec<Port>,
    out_ports: Vec<Port>,
    roles: Vec<String>,
) -> Result<ModuleDef, ModuleError> {
    if name.trim().is_empty() {
        return Err(ModuleError::InvalidArgument("module name is empty".into()));
    }
    let mut ids = BTreeSet::new();
    for el in &elements {
        match &el.payload {
            NodePayload::Root | NodePayload::End => {
                return Err(ModuleError::IllegalElement(el.id.clone()))
            }
            NodePayload::ModuleInstance(inst) if inst.module == name => {
                return Err(ModuleError::RecursiveModule(name.to_string()))
            }
            _ => {}
        }
        if !ids.insert(el.id.clone()) {
            return Err(ModuleError::DuplicateId(el.id.0.clone()));
        }
    }
    let role_set: BTreeSet<&str> = roles.iter().map(String::as_str).collect();
    if role_set.len() != roles.len() {
        return Err(ModuleError::InvalidArgument("duplicate role name".into()));
    }
    for el in &elements {
        let used: Vec<&ActorId> = match &el.payload {
            NodePayload::Maneuver(a) | NodePayload::Condition(a) => {
                std::iter::once(&a.reference_actor)
                    .chain(a.target_actor.as_ref())
                    .collect()
            }
            NodePayload::ModuleInstance(inst) => inst.bindings.values().collect(),
            _ => Vec::new(),
        };
        for actor in used {
            if !role_set.contains(actor.as_str()) {
                return Err(ModuleError::InvalidArgument(format!(
                    "element '{}' refers to '{actor}', which is not a role of {name}",
                    el.id
                )));
            }
        }
    }
    for edge in &edges {
        for end in [&edge.from, &edge.to] {
            if !ids.contains(&end.node) {
                return Err(ModuleError::UnknownElement(end.node.0.clone()));
            }
        }
    }
    if in_ports.is_empty() || out_ports.is_empty() {
        return Err(ModuleError::InvalidArgument(
            "a module needs at least one input and one output port".into(),
        ));
    }
    for ports in [&in_ports, &out_ports] {
        let mut names = BTreeSet::new();
        for p in ports {
            if !names.insert(&p.name) {
                return Err(ModuleError::InvalidArgument(format!(
                    "duplicate port '{}'",
                    p.name
                )));
            }
            if !ids.contains(&p.element) {
                return Err(ModuleError::UnknownElement(p.element.0.clone()));
            }
        }
    }

    // Every element must sit between an entry and an exit element.
    let forward = reach(&elements, &edges, in_ports.iter().map(|p| &p.element), false);
    let backward = reach(&elements, &edges, out_ports.iter().map(|p| &p.element), true);
    for el in &elements {
        if !(forward.contains(&el.id) && backward.contains(&el.id)) {
            return Err(ModuleError::InvalidArgument(format!(
                "element '{}' is not on a path from an input to an output port",
                el.id
            )));
        }
    }

    let mut def = ModuleDef {
        name: name.to_string(),
        revision: String::new(),
        elements,
        edges,
        in_ports,
        out_ports,
        roles,
    };
    def.revision = compute_revision(&def);
    Ok(def)
}

fn reach<'a>(
    nodes: &[GraphNode],
    edges: &[Edge],
    seeds: impl Iterator<Item = &'a NodeId>,
    reverse: bool,
) -> BTreeSet<NodeId> {
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut queue: VecDeque<NodeId> = seeds.cloned().collect();
    while let Some(id) = queue.pop_front() {
        if !nodes.iter().any(|n| n.id == id) || !seen.insert(id.clone()) {
            continue;
        }
        for e in edges {
            let (a, b) = if reverse {
                (&e.to.node, &e.from.node)
            } else {
                (&e.from.node, &e.to.node)
            };
            if a == &id {
                queue.push_back(b.clone());
            }
        }
    }
    seen
}

/// Checks that nested instances reference known definitions and that the
/// nesting relation is acyclic.
pub fn check_def_nesting(defs: &BTreeMap<String, ModuleDef>) -> Result<(), ModuleError> {
    fn visit<'a>(
        name: &'a str,
        defs: &'a BTreeMap<String, ModuleDef>,
        stack: &mut Vec<&'a str>,
        done: &mut BTreeSet<&'a str>,
    ) -> Result<(), ModuleError> {
        if done.contains(name) {
            return Ok(());
        }
        if stack.contains(&name) {
            return Err(ModuleError::RecursiveModule(name.to_string()));
        }
        let def = defs
            .get(name)
            .ok_or_else(|| ModuleError::UnknownModule(name.to_string()))?;
        stack.push(name);
        for el in &def.elements {
            if let Some(inst) = el.instance() {
                visit(&inst.module, defs, stack, done)?;
            }
        }
        stack.pop();
        done.insert(name);
        Ok(())
    }

    let mut done = BTreeSet::new();
    for name in defs.keys() {
        visit(name, defs, &mut Vec::new(), &mut done)?;
    }
    Ok(())
}

fn instance_ids(graph: &ScenarioGraph) -> Vec<(String, &NodeId)> {
    let top = graph
        .nodes()
        .iter()
        .filter(|n| n.kind() == NodeKind::ModuleInstance)
        .map(|n| ("scenario".to_string(), &n.id));
    let nested = graph.module_defs().values().flat_map(|d| {
        d.elements
            .iter()
            .filter(|n| n.kind() == NodeKind::ModuleInstance)
            .map(move |n| (d.name.clone(), &n.id))
    });
    top.chain(nested).collect()
}

/// Module-instance ids are unique across the scenario and all definitions it
/// carries: an instance belongs to exactly one parent.
pub fn check_instance_exclusivity(graph: &ScenarioGraph) -> Result<(), ModuleError> {
    let mut seen = BTreeSet::new();
    for (_, id) in instance_ids(graph) {
        if !seen.insert(id) {
            return Err(ModuleError::InstanceReused(id.clone()));
        }
    }
    Ok(())
}

/// `(role, action_type)` for every action reachable through a definition,
/// with nested roles mapped to this definition's roles.
fn role_uses(
    def: &ModuleDef,
    defs: &BTreeMap<String, ModuleDef>,
    depth: usize,
) -> Result<Vec<(String, String)>, ModuleError> {
    if depth > DEFAULT_DEPTH_LIMIT {
        return Err(ModuleError::DepthExceeded(DEFAULT_DEPTH_LIMIT));
    }
    let mut uses = Vec::new();
    for el in &def.elements {
        match &el.payload {
            NodePayload::Maneuver(a) | NodePayload::Condition(a) => {
                uses.push((a.reference_actor.0.clone(), a.action_type.clone()));
            }
            NodePayload::ModuleInstance(inst) => {
                let inner = defs
                    .get(&inst.module)
                    .ok_or_else(|| ModuleError::UnknownModule(inst.module.clone()))?;
                for (role, action) in role_uses(inner, defs, depth + 1)? {
                    let outer = inst
                        .bindings
                        .get(&role)
                        .ok_or_else(|| ModuleError::UnboundRole(role.clone()))?;
                    uses.push((outer.0.clone(), action));
                }
            }
            _ => {}
        }
    }
    Ok(uses)
}

fn check_override_target(
    def: &ModuleDef,
    defs: &BTreeMap<String, ModuleDef>,
    path: &str,
    key: &str,
    registry: &Registry,
) -> Result<(), ModuleError> {
    let (head, rest) = match path.split_once('/') {
        Some((h, r)) => (h, Some(r)),
        None => (path, None),
    };
    let el = def
        .element(&NodeId::from(head))
        .ok_or_else(|| ModuleError::UnknownElement(path.to_string()))?;
    match (&el.payload, rest) {
        (NodePayload::Maneuver(a) | NodePayload::Condition(a), None) => {
            let declared = registry
                .action(&a.action_type)
                .is_some_and(|s| s.param(key).is_some());
            if declared {
                Ok(())
            } else {
                Err(ModuleError::UnknownParameter {
                    element: path.to_string(),
                    key: key.to_string(),
                })
            }
        }
        (NodePayload::ModuleInstance(inst), Some(rest)) => {
            let inner = defs
                .get(&inst.module)
                .ok_or_else(|| ModuleError::UnknownModule(inst.module.clone()))?;
            check_override_target(inner, defs, rest, key, registry)
        }
        _ => Err(ModuleError::UnknownElement(path.to_string())),
    }
}

impl ScenarioGraph {
    /// Makes a definition available to instances in this scenario. Nested
    /// definitions must be registered first.
    pub fn register_module(&mut self, def: ModuleDef) -> Result<(), ModuleError> {
        if let Some(existing) = self.module_defs.get(&def.name) {
            return if existing == &def {
                Ok(())
            } else {
                Err(ModuleError::Conflict(def.name))
            };
        }
        let name = def.name.clone();
        self.module_defs.insert(name.clone(), def);
        let checked = check_def_nesting(&self.module_defs)
            .and_then(|_| check_instance_exclusivity(self));
        if let Err(e) = checked {
            self.module_defs.remove(&name);
            return Err(e);
        }
        Ok(())
    }

    /// Adds a module-instance node for `def` (registering it if needed).
    pub fn instantiate(
        &mut self,
        registry: &Registry,
        def: &ModuleDef,
        id: Option<&str>,
        bindings: &[(&str, &str)],
        overrides: &[(&str, &str, ParamValue)],
    ) -> Result<NodeId, ModuleError> {
        self.register_module(def.clone())?;
        let mut bound = BTreeMap::new();
        for (role, actor) in bindings {
            if !def.roles.iter().any(|r| r == role) {
                return Err(ModuleError::InvalidArgument(format!(
                    "{} has no role '{role}'",
                    def.name
                )));
            }
            let actor = ActorId::from(*actor);
            if self.actor(&actor).is_none() {
                return Err(ModuleError::UnknownActor(actor));
            }
            bound.insert(role.to_string(), actor);
        }
        for role in &def.roles {
            if !bound.contains_key(role) {
                return Err(ModuleError::UnboundRole(role.clone()));
            }
        }
        for (role, action) in role_uses(def, &self.module_defs, 1)? {
            let actor = &bound[&role];
            let category = self.actor(actor).expect("checked above").category;
            let allowed = registry.action(&action).is_none_or(|s| s.allows(category));
            if !allowed {
                return Err(ModuleError::BindingMismatch {
                    role,
                    actor: actor.clone(),
                    action,
                });
            }
        }
        let mut ov: BTreeMap<NodeId, BTreeMap<String, ParamValue>> = BTreeMap::new();
        for (element, key, value) in overrides {
            check_override_target(def, &self.module_defs, element, key, registry)?;
            value.check().map_err(ModuleError::InvalidArgument)?;
            ov.entry(NodeId::from(*element))
                .or_default()
                .insert(key.to_string(), value.clone());
        }
        let id = match id {
            Some(id) => NodeId::from(id),
            None => {
                let mut k = self.nodes.len();
                loop {
                    let candidate = NodeId(format!("m{k}"));
                    if self.node(&candidate).is_none() {
                        break candidate;
                    }
                    k += 1;
                }
            }
        };
        if self.node(&id).is_some() {
            return Err(ModuleError::DuplicateId(id.0));
        }
        if instance_ids(self).iter().any(|(_, other)| **other == id) {
            return Err(ModuleError::InstanceReused(id));
        }
        self.nodes.push(GraphNode {
            id: id.clone(),
            payload: NodePayload::ModuleInstance(ModuleInstance {
                module: def.name.clone(),
                bindings: bound,
                overrides: ov,
            }),
        });
        Ok(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlattenOptions {
    pub depth_limit: usize,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        FlattenOptions {
            depth_limit: DEFAULT_DEPTH_LIMIT,
        }
    }
}

struct Fragment {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    entries: BTreeMap<String, NodeId>,
    exits: BTreeMap<String, NodeId>,
}

struct Expander<'a> {
    defs: &'a BTreeMap<String, ModuleDef>,
    limit: usize,
}

impl Expander<'_> {
    fn expand(
        &self,
        instance_id: &NodeId,
        inst: &ModuleInstance,
        actors: &dyn Fn(&str) -> Result<ActorId, ModuleError>,
        depth: usize,
    ) -> Result<Fragment, ModuleError> {
        if depth > self.limit {
            return Err(ModuleError::DepthExceeded(self.limit));
        }
        let def = self
            .defs
            .get(&inst.module)
            .ok_or_else(|| ModuleError::UnknownModule(inst.module.clone()))?;
        let resolve_role = |role: &str| -> Result<ActorId, ModuleError> {
            let bound = inst
                .bindings
                .get(role)
                .ok_or_else(|| ModuleError::UnboundRole(role.to_string()))?;
            actors(bound.as_str())
        };
        let rename = |el: &NodeId| NodeId(format!("{instance_id}/{el}"));

        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut nested: BTreeMap<NodeId, Fragment> = BTreeMap::new();
        for el in &def.elements {
            match &el.payload {
                NodePayload::Maneuver(a) | NodePayload::Condition(a) => {
                    let mut a = a.clone();
                    a.reference_actor = resolve_role(a.reference_actor.as_str())?;
                    if let Some(t) = &a.target_actor {
                        a.target_actor = Some(resolve_role(t.as_str())?);
                    }
                    if let Some(ov) = inst.overrides.get(&el.id) {
                        for (k, v) in ov {
                            a.params.insert(k.clone(), v.clone());
                        }
                    }
                    let payload = if el.kind() == NodeKind::Condition {
                        NodePayload::Condition(a)
                    } else {
                        NodePayload::Maneuver(a)
                    };
                    nodes.push(GraphNode {
                        id: rename(&el.id),
                        payload,
                    });
                }
                NodePayload::Join(p) => nodes.push(GraphNode {
                    id: rename(&el.id),
                    payload: NodePayload::Join(*p),
                }),
                NodePayload::ModuleInstance(inner) => {
                    let prefix = format!("{}/", el.id);
                    let mut inner = inner.clone();
                    for (path, ov) in &inst.overrides {
                        if let Some(rest) = path.as_str().strip_prefix(&prefix) {
                            let slot = inner.overrides.entry(NodeId::from(rest)).or_default();
                            for (k, v) in ov {
                                slot.insert(k.clone(), v.clone());
                            }
                        }
                    }
                    let frag = self.expand(&rename(&el.id), &inner, &resolve_role, depth + 1)?;
                    nodes.extend(frag.nodes.iter().cloned());
                    edges.extend(frag.edges.iter().cloned());
                    nested.insert(el.id.clone(), frag);
                }
                NodePayload::Root | NodePayload::End => {
                    return Err(ModuleError::IllegalElement(el.id.clone()))
                }
            }
        }

        let endpoint = |end: &Endpoint, direction: Direction| -> Result<NodeId, ModuleError> {
            match nested.get(&end.node) {
                None => Ok(rename(&end.node)),
                Some(frag) => port_target(self.defs, def, &end.node, frag, end, direction),
            }
        };
        for e in &def.edges {
            edges.push(Edge {
                from: Endpoint::node(endpoint(&e.from, Direction::Out)?),
                to: Endpoint::node(endpoint(&e.to, Direction::In)?),
            });
        }

        let mut entries = BTreeMap::new();
        for p in &def.in_ports {
            let ep = Endpoint::node(p.element.clone());
            entries.insert(p.name.clone(), endpoint(&ep, Direction::In)?);
        }
        let mut exits = BTreeMap::new();
        for p in &def.out_ports {
            let ep = Endpoint::node(p.element.clone());
            exits.insert(p.name.clone(), endpoint(&ep, Direction::Out)?);
        }
        Ok(Fragment {
            nodes,
            edges,
            entries,
            exits,
        })
    }
}

fn port_target(
    defs: &BTreeMap<String, ModuleDef>,
    parent: &ModuleDef,
    element: &NodeId,
    frag: &Fragment,
    end: &Endpoint,
    direction: Direction,
) -> Result<NodeId, ModuleError> {
    let module = parent
        .element(element)
        .and_then(|e| e.instance())
        .map(|i| i.module.clone())
        .unwrap_or_default();
    resolve_port(defs, &module, element, frag, end.port.as_deref(), direction)
}

fn resolve_port(
    defs: &BTreeMap<String, ModuleDef>,
    module: &str,
    instance: &NodeId,
    frag: &Fragment,
    port: Option<&str>,
    direction: Direction,
) -> Result<NodeId, ModuleError> {
    let def = defs
        .get(module)
        .ok_or_else(|| ModuleError::UnknownModule(module.to_string()))?;
    let p = def.port(direction, port).map_err(|e| match e {
        PortError::Ambiguous => ModuleError::AmbiguousPort(instance.clone()),
        PortError::Unknown => ModuleError::UnknownPort {
            module: module.to_string(),
            direction: match direction {
                Direction::In => "input",
                Direction::Out => "output",
            },
            port: port.unwrap_or_default().to_string(),
        },
    })?;
    let map = match direction {
        Direction::In => &frag.entries,
        Direction::Out => &frag.exits,
    };
    Ok(map[&p.name].clone())
}

/// Replaces every module instance by a copy of its definition.
///
/// Copied nodes are named `<instance>/<element>`, nested recursively, so
/// ids are stable across runs. A module-free graph is returned unchanged.
pub fn flatten(graph: &ScenarioGraph) -> Result<ScenarioGraph, ModuleError> {
    flatten_with(graph, FlattenOptions::default())
}

pub fn flatten_with(
    graph: &ScenarioGraph,
    options: FlattenOptions,
) -> Result<ScenarioGraph, ModuleError> {
    if !graph.has_module_instances() {
        return Ok(graph.clone());
    }
    let expander = Expander {
        defs: graph.module_defs(),
        limit: options.depth_limit,
    };
    let top_actor = |id: &str| Ok(ActorId::from(id));

    let mut nodes = Vec::new();
    let mut frags: BTreeMap<NodeId, (String, Fragment)> = BTreeMap::new();
    let mut inner_edges = Vec::new();
    for node in graph.nodes() {
        match node.instance() {
            Some(inst) => {
                let frag = expander.expand(&node.id, inst, &top_actor, 1)?;
                nodes.extend(frag.nodes.iter().cloned());
                inner_edges.extend(frag.edges.iter().cloned());
                frags.insert(node.id.clone(), (inst.module.clone(), frag));
            }
            None => nodes.push(node.clone()),
        }
    }

    let resolve = |end: &Endpoint, direction: Direction| -> Result<NodeId, ModuleError> {
        match frags.get(&end.node) {
            None => Ok(end.node.clone()),
            Some((module, frag)) => resolve_port(
                graph.module_defs(),
                module,
                &end.node,
                frag,
                end.port.as_deref(),
                direction,
            ),
        }
    };
    let mut edges = Vec::new();
    for e in graph.edges() {
        let edge = Edge {
            from: Endpoint::node(resolve(&e.from, Direction::Out)?),
            to: Endpoint::node(resolve(&e.to, Direction::In)?),
        };
        if !edges.contains(&edge) {
            edges.push(edge);
        }
    }
    for e in inner_edges {
        if !edges.contains(&e) {
            edges.push(e);
        }
    }

    let mut flat = graph.clone();
    flat.nodes = nodes;
    flat.edges = edges;
    Ok(flat)
}
