//! Canonical scenario document: pretty-printed JSON with 2-space indentation,
//! fixed field order and a trailing newline.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    AbstractionLevel, ActionNode, Actor, ActorCategory, ActorId, Edge, Endpoint, GraphNode,
    JoinPolicy, ModelError, NodeId, NodeKind, NodePayload, ParamValue, Pose2D, ScenarioGraph,
};
use crate::modules::{self, ModuleDef, ModuleInstance, Port};
use crate::registry::{ActionCategory, Registry};

pub const FORMAT_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
struct DocumentRecord {
    format_version: Option<String>,
    name: Option<String>,
    map: Option<String>,
    abstraction_level: Option<AbstractionLevel>,
    environment: Option<BTreeMap<String, ParamValue>>,
    actors: Option<Vec<ActorRecord>>,
    nodes: Option<Vec<NodeRecord>>,
    edges: Option<Vec<EdgeRecord>>,
    module_defs: Option<Vec<ModuleDefRecord>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartRecord {
    #[serde(default)]
    x: ParamValue,
    #[serde(default)]
    y: ParamValue,
    #[serde(default)]
    heading: ParamValue,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActorRecord {
    id: String,
    #[serde(default)]
    name: String,
    category: ActorCategory,
    #[serde(default)]
    model: String,
    #[serde(default)]
    is_ego: bool,
    start: StartRecord,
    #[serde(default)]
    start_speed: ParamValue,
}

/// Union of all node shapes; `kind` decides which fields are legal.
#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub(crate) struct NodeRecord {
    id: String,
    kind: Option<NodeKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_type: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    category: Option<ActionCategory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ref_actor: Option<String>,
    // `Some(None)` writes an explicit null for single-actor actions.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "explicit_null"
    )]
    target_actor: Option<Option<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<BTreeMap<String, ParamValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<JoinPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    module: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bindings: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overrides: Option<BTreeMap<String, BTreeMap<String, ParamValue>>>,
}

fn explicit_null<'de, D>(d: D) -> Result<Option<Option<String>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Option::<String>::deserialize(d).map(Some)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct EdgeRecord {
    from: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    from_port: Option<String>,
    to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    to_port: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct PortRecord {
    name: String,
    element: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ModuleDefRecord {
    pub(crate) name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub(crate) revision: Option<String>,
    pub(crate) roles: Vec<String>,
    pub(crate) in_ports: Vec<PortRecord>,
    pub(crate) out_ports: Vec<PortRecord>,
    pub(crate) elements: Vec<NodeRecord>,
    pub(crate) edges: Vec<EdgeRecord>,
}

pub(crate) fn node_to_record(node: &GraphNode) -> NodeRecord {
    let mut rec = NodeRecord {
        id: node.id.0.clone(),
        kind: Some(node.kind()),
        ..NodeRecord::default()
    };
    match &node.payload {
        NodePayload::Root | NodePayload::End => {}
        NodePayload::Maneuver(a) | NodePayload::Condition(a) => {
            rec.action_type = Some(a.action_type.clone());
            rec.category = Some(a.category);
            rec.ref_actor = Some(a.reference_actor.0.clone());
            rec.target_actor = Some(a.target_actor.as_ref().map(|t| t.0.clone()));
            rec.params = Some(a.params.clone());
        }
        NodePayload::Join(policy) => rec.policy = Some(*policy),
        NodePayload::ModuleInstance(inst) => {
            rec.module = Some(inst.module.clone());
            rec.bindings = Some(
                inst.bindings
                    .iter()
                    .map(|(k, v)| (k.clone(), v.0.clone()))
                    .collect(),
            );
            if !inst.overrides.is_empty() {
                rec.overrides = Some(
                    inst.overrides
                        .iter()
                        .map(|(k, v)| (k.0.clone(), v.clone()))
                        .collect(),
                );
            }
        }
    }
    rec
}

pub(crate) fn edge_to_record(edge: &Edge) -> EdgeRecord {
    EdgeRecord {
        from: edge.from.node.0.clone(),
        from_port: edge.from.port.clone(),
        to: edge.to.node.0.clone(),
        to_port: edge.to.port.clone(),
    }
}

fn port_to_record(port: &Port) -> PortRecord {
    PortRecord {
        name: port.name.clone(),
        element: port.element.0.clone(),
    }
}

pub(crate) fn def_to_record(def: &ModuleDef, with_revision: bool) -> ModuleDefRecord {
    ModuleDefRecord {
        name: def.name.clone(),
        revision: with_revision.then(|| def.revision.clone()),
        roles: def.roles.clone(),
        in_ports: def.in_ports.iter().map(port_to_record).collect(),
        out_ports: def.out_ports.iter().map(port_to_record).collect(),
        elements: def.elements.iter().map(node_to_record).collect(),
        edges: def.edges.iter().map(edge_to_record).collect(),
    }
}

pub(crate) fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("records always serialize");
    text.push('\n');
    text
}

/// Renders a graph as its canonical document text.
pub fn serialize(graph: &ScenarioGraph) -> String {
    let record = DocumentRecord {
        format_version: Some(FORMAT_VERSION.to_string()),
        name: Some(graph.name.clone()),
        map: Some(graph.map_name.clone()),
        abstraction_level: Some(graph.level),
        environment: Some(graph.environment.clone()),
        actors: Some(
            graph
                .actors
                .iter()
                .map(|a| ActorRecord {
                    id: a.id.0.clone(),
                    name: a.name.clone(),
                    category: a.category,
                    model: a.model.clone(),
                    is_ego: a.is_ego,
                    start: StartRecord {
                        x: a.start_pose.x.clone(),
                        y: a.start_pose.y.clone(),
                        heading: a.start_pose.heading.clone(),
                    },
                    start_speed: a.start_speed.clone(),
                })
                .collect(),
        ),
        nodes: Some(graph.nodes.iter().map(node_to_record).collect()),
        edges: Some(graph.edges.iter().map(edge_to_record).collect()),
        module_defs: Some(
            graph
                .module_defs
                .values()
                .map(|d| def_to_record(d, true))
                .collect(),
        ),
    };
    to_pretty_json(&record)
}

pub(crate) fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        ModelError::Parse {
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })
}

/// Parses a scenario document.
///
/// Structural problems that validation reports as findings (terminal counts,
/// unresolved actors, cycles) are accepted; schema violations are not.
pub fn parse(text: &str, registry: &Registry) -> Result<ScenarioGraph, ModelError> {
    let record: DocumentRecord = from_json(text)?;
    let require = |field: &'static str, present: bool| {
        if present {
            Ok(())
        } else {
            Err(ModelError::schema(field, "missing required field"))
        }
    };
    require("format_version", record.format_version.is_some())?;
    require("name", record.name.is_some())?;
    require("map", record.map.is_some())?;
    require("abstraction_level", record.abstraction_level.is_some())?;
    require("actors", record.actors.is_some())?;
    require("nodes", record.nodes.is_some())?;
    require("edges", record.edges.is_some())?;

    let version = record.format_version.unwrap();
    if version != FORMAT_VERSION {
        return Err(ModelError::schema(
            "format_version",
            format!("unsupported version '{version}'"),
        ));
    }
    let name = record.name.unwrap();
    if name.trim().is_empty() {
        return Err(ModelError::schema("name", "empty scenario name"));
    }

    let environment = record.environment.unwrap_or_default();

    let mut actors = Vec::new();
    let mut actor_ids = BTreeSet::new();
    for (i, a) in record.actors.unwrap().into_iter().enumerate() {
        let path = format!("actors[{i}]");
        if a.id.is_empty() || !actor_ids.insert(a.id.clone()) {
            return Err(ModelError::schema(path, format!("bad or duplicate id '{}'", a.id)));
        }
        actors.push(Actor {
            id: ActorId(a.id),
            name: a.name,
            category: a.category,
            model: a.model,
            is_ego: a.is_ego,
            start_pose: Pose2D {
                x: a.start.x,
                y: a.start.y,
                heading: a.start.heading,
            },
            start_speed: a.start_speed,
        });
    }
    if actors.iter().filter(|a| a.is_ego).count() > 1 {
        return Err(ModelError::schema("actors", "more than one ego actor"));
    }

    // Definitions first: nodes may reference them.
    let mut module_defs = BTreeMap::new();
    for (i, d) in record.module_defs.unwrap_or_default().into_iter().enumerate() {
        let path = format!("module_defs[{i}]");
        let def = def_from_record(d, registry, &path)?;
        if module_defs.contains_key(&def.name) {
            return Err(ModelError::schema(path, format!("duplicate module '{}'", def.name)));
        }
        module_defs.insert(def.name.clone(), def);
    }
    modules::check_def_nesting(&module_defs)
        .map_err(|e| ModelError::schema("module_defs", e.to_string()))?;

    let nodes = nodes_from_records(record.nodes.unwrap(), registry, "nodes", true)?;
    for (i, node) in nodes.iter().enumerate() {
        if let Some(inst) = node.instance() {
            if !module_defs.contains_key(&inst.module) {
                return Err(ModelError::schema(
                    format!("nodes[{i}].module"),
                    format!("unknown module '{}'", inst.module),
                ));
            }
        }
    }
    let edges = edges_from_records(record.edges.unwrap(), &nodes, "edges")?;

    let graph = ScenarioGraph::from_parts(
        name,
        record.map.unwrap(),
        record.abstraction_level.unwrap(),
        environment,
        actors,
        nodes,
        edges,
        module_defs,
    );
    modules::check_instance_exclusivity(&graph)
        .map_err(|e| ModelError::schema("nodes", e.to_string()))?;
    Ok(graph)
}

pub(crate) fn def_from_record(
    d: ModuleDefRecord,
    registry: &Registry,
    path: &str,
) -> Result<ModuleDef, ModelError> {
    let elements = nodes_from_records(d.elements, registry, &format!("{path}.elements"), false)?;
    let edges = edges_from_records(d.edges, &elements, &format!("{path}.edges"))?;
    let ports = |records: Vec<PortRecord>| {
        records
            .into_iter()
            .map(|p| Port {
                name: p.name,
                element: NodeId(p.element),
            })
            .collect::<Vec<_>>()
    };
    let stated = d.revision;
    let def = modules::define_module(
        &d.name,
        elements,
        edges,
        ports(d.in_ports),
        ports(d.out_ports),
        d.roles,
    )
    .map_err(|e| ModelError::schema(path, e.to_string()))?;
    if let Some(rev) = stated {
        if rev != def.revision {
            return Err(ModelError::schema(
                format!("{path}.revision"),
                format!("stated revision {rev} does not match content {}", def.revision),
            ));
        }
    }
    Ok(def)
}

fn nodes_from_records(
    records: Vec<NodeRecord>,
    registry: &Registry,
    path: &str,
    terminals_allowed: bool,
) -> Result<Vec<GraphNode>, ModelError> {
    let mut seen = BTreeSet::new();
    let mut nodes = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let path = format!("{path}[{i}]");
        if rec.id.is_empty() || !seen.insert(rec.id.clone()) {
            return Err(ModelError::schema(
                format!("{path}.id"),
                format!("bad or duplicate node id '{}'", rec.id),
            ));
        }
        let node = node_from_record(rec, registry, &path)?;
        if !terminals_allowed && matches!(node.kind(), NodeKind::Root | NodeKind::End) {
            return Err(ModelError::schema(
                path,
                "root and end nodes cannot be module elements",
            ));
        }
        nodes.push(node);
    }
    Ok(nodes)
}

fn node_from_record(
    rec: NodeRecord,
    registry: &Registry,
    path: &str,
) -> Result<GraphNode, ModelError> {
    let kind = rec
        .kind
        .ok_or_else(|| ModelError::schema(format!("{path}.kind"), "missing required field"))?;
    let forbid = |field: &str, present: bool| {
        if present {
            Err(ModelError::schema(
                format!("{path}.{field}"),
                format!("field not allowed on {kind} nodes"),
            ))
        } else {
            Ok(())
        }
    };
    let is_action = matches!(kind, NodeKind::Maneuver | NodeKind::Condition);
    if !is_action {
        forbid("action_type", rec.action_type.is_some())?;
        forbid("category", rec.category.is_some())?;
        forbid("ref_actor", rec.ref_actor.is_some())?;
        forbid("target_actor", rec.target_actor.is_some())?;
        forbid("params", rec.params.is_some())?;
    }
    if kind != NodeKind::Join {
        forbid("policy", rec.policy.is_some())?;
    }
    if kind != NodeKind::ModuleInstance {
        forbid("module", rec.module.is_some())?;
        forbid("bindings", rec.bindings.is_some())?;
        forbid("overrides", rec.overrides.is_some())?;
    }

    let payload = match kind {
        NodeKind::Root => NodePayload::Root,
        NodeKind::End => NodePayload::End,
        NodeKind::Maneuver | NodeKind::Condition => {
            let action_type = rec.action_type.ok_or_else(|| {
                ModelError::schema(format!("{path}.action_type"), "missing required field")
            })?;
            let spec = registry.action(&action_type).ok_or_else(|| {
                ModelError::schema(
                    format!("{path}.action_type"),
                    format!("unknown action type '{action_type}'"),
                )
            })?;
            if spec.is_condition() != (kind == NodeKind::Condition) {
                return Err(ModelError::schema(
                    format!("{path}.kind"),
                    format!("{action_type} is not a {kind} action"),
                ));
            }
            if let Some(cat) = rec.category {
                if cat != spec.category {
                    return Err(ModelError::schema(
                        format!("{path}.category"),
                        format!("{action_type} is {:?}, not {cat:?}", spec.category),
                    ));
                }
            }
            let params = rec.params.unwrap_or_default();
            for key in params.keys() {
                if spec.param(key).is_none() {
                    return Err(ModelError::schema(
                        format!("{path}.params.{key}"),
                        format!("parameter not declared for {action_type}"),
                    ));
                }
            }
            let action = ActionNode {
                action_type,
                category: spec.category,
                reference_actor: ActorId(rec.ref_actor.unwrap_or_default()),
                target_actor: rec.target_actor.flatten().map(ActorId),
                params,
            };
            if kind == NodeKind::Condition {
                NodePayload::Condition(action)
            } else {
                NodePayload::Maneuver(action)
            }
        }
        NodeKind::Join => NodePayload::Join(rec.policy.ok_or_else(|| {
            ModelError::schema(format!("{path}.policy"), "missing required field")
        })?),
        NodeKind::ModuleInstance => {
            let module = rec.module.ok_or_else(|| {
                ModelError::schema(format!("{path}.module"), "missing required field")
            })?;
            NodePayload::ModuleInstance(ModuleInstance {
                module,
                bindings: rec
                    .bindings
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(k, v)| (k, ActorId(v)))
                    .collect(),
                overrides: rec
                    .overrides
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(k, v)| (NodeId(k), v))
                    .collect(),
            })
        }
    };
    Ok(GraphNode {
        id: NodeId(rec.id),
        payload,
    })
}

fn edges_from_records(
    records: Vec<EdgeRecord>,
    nodes: &[GraphNode],
    path: &str,
) -> Result<Vec<Edge>, ModelError> {
    let ids: BTreeSet<&str> = nodes.iter().map(|n| n.id.as_str()).collect();
    let mut edges: Vec<Edge> = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let path = format!("{path}[{i}]");
        for (field, id) in [("from", &rec.from), ("to", &rec.to)] {
            if !ids.contains(id.as_str()) {
                return Err(ModelError::schema(
                    format!("{path}.{field}"),
                    format!("unknown node '{id}'"),
                ));
            }
        }
        if rec.from == rec.to {
            return Err(ModelError::schema(path, format!("self-loop on '{}'", rec.from)));
        }
        let edge = Edge {
            from: Endpoint {
                node: NodeId(rec.from),
                port: rec.from_port,
            },
            to: Endpoint {
                node: NodeId(rec.to),
                port: rec.to_port,
            },
        };
        if edges.contains(&edge) {
            return Err(ModelError::schema(path, format!("duplicate edge {edge}")));
        }
        edges.push(edge);
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "format_version": "1",
  "name": "minimal",
  "map": "m",
  "abstraction_level": "concrete",
  "environment": {},
  "actors": [],
  "nodes": [{"id": "root", "kind": "root"}, {"id": "end", "kind": "end"}],
  "edges": [{"from": "root", "to": "end"}],
  "module_defs": []
}"#;

    #[test]
    fn parses_minimal_document() {
        let g = parse(MINIMAL, &Registry::builtin()).unwrap();
        assert_eq!(g.nodes().len(), 2);
        assert_eq!(g.edges().len(), 1);
        let again = parse(&serialize(&g), &Registry::builtin()).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn missing_level_is_schema_error() {
        let text = MINIMAL.replace("\"abstraction_level\": \"concrete\",", "");
        match parse(&text, &Registry::builtin()) {
            Err(ModelError::Schema { path, .. }) => assert_eq!(path, "abstraction_level"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let text = MINIMAL.replace("\"kind\": \"end\"", "\"kind\": 7");
        match parse(&text, &Registry::builtin()) {
            Err(ModelError::Parse { line, path, .. }) => {
                assert_eq!(line, 8);
                assert_eq!(path, "nodes[1].kind");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse("{", &Registry::builtin()),
            Err(ModelError::Parse { .. })
        ));
    }

    #[test]
    fn kind_specific_fields_are_enforced() {
        let text = MINIMAL.replace(
            r#"{"id": "end", "kind": "end"}"#,
            r#"{"id": "end", "kind": "end", "policy": "all_finished"}"#,
        );
        assert!(matches!(
            parse(&text, &Registry::builtin()),
            Err(ModelError::Schema { .. })
        ));
        let dangling = MINIMAL.replace(r#""to": "end""#, r#""to": "nowhere""#);
        assert!(matches!(
            parse(&dangling, &Registry::builtin()),
            Err(ModelError::Schema { .. })
        ));
    }

    #[test]
    fn unknown_action_and_param_are_schema_errors() {
        let node = r#"{"id": "a", "kind": "maneuver", "action_type": "Fly", "ref_actor": "x", "target_actor": null, "params": {}}"#;
        let text = MINIMAL.replace(r#"{"id": "end", "kind": "end"}"#, &format!(r#"{{"id": "end", "kind": "end"}}, {node}"#));
        assert!(matches!(
            parse(&text, &Registry::builtin()),
            Err(ModelError::Schema { .. })
        ));
        let node = r#"{"id": "a", "kind": "maneuver", "action_type": "Accelerate", "ref_actor": "x", "target_actor": null, "params": {"color": null}}"#;
        let text = MINIMAL.replace(r#"{"id": "end", "kind": "end"}"#, &format!(r#"{{"id": "end", "kind": "end"}}, {node}"#));
        assert!(matches!(
            parse(&text, &Registry::builtin()),
            Err(ModelError::Schema { .. })
        ));
    }
}
