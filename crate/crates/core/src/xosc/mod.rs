//! OpenSCENARIO 1.0 export of concrete scenario graphs.
//!
//! Start and completion of graph nodes are encoded as triggers in
//! disjunctive normal form (a `StartTrigger` is an OR of `ConditionGroup`s,
//! each an AND of conditions):
//!
//! * `ready(v)`: all predecessors done (any, for one-finished joins)
//! * `done(v)` of a maneuver: its Event reached `completeState`
//! * `done(v)` of a condition: `ready(v)` and the condition's own predicate
//! * `done(v)` of a join: `ready(v)`
//!
//! Every maneuver becomes one Event started by `ready(v)`; the Storyboard
//! stops on `ready(end)`. Maneuvers that can lose at a one-finished join go
//! into a separate Act whose StopTrigger is the join, which cancels them.

mod verify;
mod xml;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::concretize::classify_level;
use crate::model::{
    AbstractionLevel, ActionNode, Actor, ActorCategory, JoinPolicy, NodeKind, ParamValue,
    ScenarioGraph,
};
use crate::modules::{self, ModuleError};
use crate::registry::{ActionKind, Registry};
use crate::topology::Topology;
use crate::validation::{self, Finding};

pub use verify::{verify_structure, StructureReport};
use xml::{num, Element};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("level error: only concrete scenarios can be exported, found {found}")]
    LevelError { found: AbstractionLevel },
    #[error("scenario has validation errors: {}", .0.iter().map(|f| format!("{} {}", f.rule_id, f.message)).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<Finding>),
    #[error("node '{node}': action {action} has no OpenSCENARIO counterpart")]
    UnsupportedAction { node: String, action: String },
    #[error("unknown catalog kind '{0}'")]
    UnknownCatalog(String),
    #[error(transparent)]
    Module(#[from] ModuleError),
}

/// Catalog kinds accepted in `CatalogLocations`, as `(kind, element)`.
pub const CATALOG_KINDS: [(&str, &str); 8] = [
    ("vehicle", "VehicleCatalog"),
    ("controller", "ControllerCatalog"),
    ("pedestrian", "PedestrianCatalog"),
    ("misc_object", "MiscObjectCatalog"),
    ("environment", "EnvironmentCatalog"),
    ("maneuver", "ManeuverCatalog"),
    ("trajectory", "TrajectoryCatalog"),
    ("route", "RouteCatalog"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExportOptions {
    /// `(kind, directory)` pairs; kinds from [`CATALOG_KINDS`].
    pub catalog_locations: Vec<(String, String)>,
    /// Emit action parameters as ParameterDeclarations referenced by `$name`.
    pub parameterize: bool,
    pub author: String,
    pub date: String,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            catalog_locations: Vec::new(),
            parameterize: false,
            author: "scenario-toolkit".into(),
            date: "2020-03-01T00:00:00".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Atom {
    EventComplete(usize),
    Predicate(usize),
}

/// OR of ANDs. `vec![vec![]]` is true, `vec![]` is false.
type Dnf = Vec<Vec<Atom>>;

fn dnf_and(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let mut c: Vec<Atom> = x.iter().chain(y).cloned().collect();
            c.sort();
            c.dedup();
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

fn dnf_or(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = a.clone();
    for c in b {
        if !out.contains(c) {
            out.push(c.clone());
        }
    }
    out
}

struct Exporter<'a> {
    graph: &'a ScenarioGraph,
    registry: &'a Registry,
    topo: Topology,
    options: &'a ExportOptions,
    params: Vec<(String, f64)>,
    ready: Vec<Dnf>,
    done: Vec<Dnf>,
}

fn param_name(node: &str, key: &str) -> String {
    let clean: String = node
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{clean}_{key}")
}

impl<'a> Exporter<'a> {
    fn value(&mut self, node: usize, action: &ActionNode, key: &str) -> String {
        let v = action.param(key).as_f64().unwrap_or(0.0);
        self.literal(node, key, v)
    }

    fn literal(&mut self, node: usize, key: &str, v: f64) -> String {
        if self.options.parameterize {
            let name = param_name(self.topo.ids[node].as_str(), key);
            if !self.params.iter().any(|(n, _)| n == &name) {
                self.params.push((name.clone(), v));
            }
            format!("${name}")
        } else {
            num(v)
        }
    }

    fn kind(&self, action: &ActionNode) -> ActionKind {
        self.registry
            .action(&action.action_type)
            .map_or(ActionKind::Custom, |s| s.kind)
    }

    fn compute_triggers(&mut self) {
        let n = self.topo.len();
        let order = self.topo.topo_order().expect("validated graphs are acyclic");
        self.ready = vec![Vec::new(); n];
        self.done = vec![Vec::new(); n];
        for v in order {
            let node = &self.graph.nodes()[v];
            let preds = &self.topo.pred[v];
            let ready = if node.kind() == NodeKind::Root {
                vec![Vec::new()]
            } else if node.join_policy() == Some(JoinPolicy::OneFinished) {
                preds
                    .iter()
                    .fold(Vec::new(), |acc, &p| dnf_or(&acc, &self.done[p]))
            } else {
                preds
                    .iter()
                    .fold(vec![Vec::new()], |acc, &p| dnf_and(&acc, &self.done[p]))
            };
            let done = match node.kind() {
                NodeKind::Maneuver => vec![vec![Atom::EventComplete(v)]],
                NodeKind::Condition => dnf_and(&ready, &vec![vec![Atom::Predicate(v)]]),
                _ => ready.clone(),
            };
            self.ready[v] = ready;
            self.done[v] = done;
        }
    }

    fn trigger(&mut self, tag: &'static str, name: &str, dnf: &Dnf) -> Element {
        let mut trigger = Element::new(tag);
        if dnf.iter().any(Vec::is_empty) || dnf.is_empty() {
            return trigger.child(Element::new("ConditionGroup").child(sim_time_condition(
                &format!("{name}_start"),
                "0".into(),
            )));
        }
        for group in dnf.clone() {
            let conditions: Vec<Element> =
                group.iter().map(|atom| self.condition(atom)).collect();
            trigger.push(Element::new("ConditionGroup").children(conditions));
        }
        trigger
    }

    fn condition(&mut self, atom: &Atom) -> Element {
        match *atom {
            Atom::EventComplete(v) => {
                let event = self.topo.ids[v].to_string();
                condition_shell(&format!("{event}_done")).child(
                    Element::new("ByValueCondition").child(
                        Element::new("StoryboardElementStateCondition")
                            .attr("storyboardElementType", "event")
                            .attr("storyboardElementRef", event)
                            .attr("state", "completeState"),
                    ),
                )
            }
            Atom::Predicate(v) => {
                let id = self.topo.ids[v].to_string();
                let action = self.graph.nodes()[v].action().expect("condition").clone();
                let entity = action.reference_actor.to_string();
                let by_entity = |inner: Element| {
                    condition_shell(&id).child(
                        Element::new("ByEntityCondition")
                            .child(
                                Element::new("TriggeringEntities")
                                    .attr("triggeringEntitiesRule", "any")
                                    .child(Element::new("EntityRef").attr("entityRef", entity.clone())),
                            )
                            .child(Element::new("EntityCondition").child(inner)),
                    )
                };
                match self.kind(&action) {
                    ActionKind::InLocationRadius => {
                        let tolerance = self.value(v, &action, "radius");
                        let x = self.value(v, &action, "x");
                        let y = self.value(v, &action, "y");
                        by_entity(
                            Element::new("ReachPositionCondition")
                                .attr("tolerance", tolerance)
                                .child(Element::new("Position").child(world_position(x, y, "0".into()))),
                        )
                    }
                    ActionKind::InVehicleRadius => {
                        let radius = self.value(v, &action, "radius");
                        let target = action
                            .target_actor
                            .as_ref()
                            .map(ToString::to_string)
                            .unwrap_or_default();
                        by_entity(
                            Element::new("RelativeDistanceCondition")
                                .attr("entityRef", target)
                                .attr("relativeDistanceType", "cartesianDistance")
                                .attr("value", radius)
                                .attr("freespace", "false")
                                .attr("rule", "lessThan"),
                        )
                    }
                    ActionKind::TimeElapsed => {
                        let duration = self.value(v, &action, "duration");
                        sim_time_condition(&id, duration)
                    }
                    ActionKind::SpeedReached => {
                        let speed = self.value(v, &action, "speed");
                        by_entity(
                            Element::new("SpeedCondition")
                                .attr("value", speed)
                                .attr("rule", "greaterThan"),
                        )
                    }
                    _ => unreachable!("unsupported conditions are rejected before emission"),
                }
            }
        }
    }

    fn private_action(&mut self, v: usize, actor: &Actor) -> Result<Element, ExportError> {
        let action = self.graph.nodes()[v].action().expect("maneuver").clone();
        let bounds = self.registry.bounds(actor.category);
        let me = actor.id.to_string();
        let speed = |dynamics: (&str, String, &str), target: Element| {
            Element::new("LongitudinalAction").child(
                Element::new("SpeedAction")
                    .child(
                        Element::new("SpeedActionDynamics")
                            .attr("dynamicsShape", dynamics.0)
                            .attr("value", dynamics.1)
                            .attr("dynamicsDimension", dynamics.2),
                    )
                    .child(Element::new("SpeedActionTarget").child(target)),
            )
        };
        let absolute = |value: String| Element::new("AbsoluteTargetSpeed").attr("value", value);
        let hold = || {
            Element::new("RelativeTargetSpeed")
                .attr("entityRef", me.clone())
                .attr("value", "0")
                .attr("speedTargetValueType", "delta")
                .attr("continuous", "false")
        };
        let kind = self.kind(&action);
        let inner = match kind {
            ActionKind::Accelerate => {
                let rate = action.param("throttle").as_f64().unwrap_or(0.0) * bounds.max_accel;
                let rate = self.literal(v, "rate", rate);
                let target = self.value(v, &action, "target_velocity");
                speed(("linear", rate, "rate"), absolute(target))
            }
            ActionKind::Decelerate | ActionKind::Stop => {
                let rate = action.param("brake").as_f64().unwrap_or(0.0) * bounds.max_accel;
                let rate = self.literal(v, "rate", rate);
                let target = if kind == ActionKind::Stop {
                    "0".to_string()
                } else {
                    self.value(v, &action, "target_velocity")
                };
                speed(("linear", rate, "rate"), absolute(target))
            }
            ActionKind::KeepVelocity => {
                let duration = self.value(v, &action, "duration");
                speed(("linear", duration, "time"), hold())
            }
            ActionKind::DriveDistance => {
                let distance = self.value(v, &action, "distance");
                speed(("linear", distance, "distance"), hold())
            }
            ActionKind::FollowVehicle => {
                let gap = self.value(v, &action, "gap");
                let target = action
                    .target_actor
                    .as_ref()
                    .map(ToString::to_string)
                    .unwrap_or_default();
                Element::new("LongitudinalAction").child(
                    Element::new("LongitudinalDistanceAction")
                        .attr("entityRef", target)
                        .attr("distance", gap)
                        .attr("freespace", "false")
                        .attr("continuous", "true"),
                )
            }
            ActionKind::LaneChangeLeft | ActionKind::LaneChangeRight => {
                let duration = self.value(v, &action, "duration");
                let lanes = if kind == ActionKind::LaneChangeLeft { "1" } else { "-1" };
                Element::new("LateralAction").child(
                    Element::new("LaneChangeAction")
                        .child(
                            Element::new("LaneChangeActionDynamics")
                                .attr("dynamicsShape", "sinusoidal")
                                .attr("value", duration)
                                .attr("dynamicsDimension", "time"),
                        )
                        .child(
                            Element::new("LaneChangeTarget").child(
                                Element::new("RelativeTargetLane")
                                    .attr("entityRef", me.clone())
                                    .attr("value", lanes),
                            ),
                        ),
                )
            }
            ActionKind::TurnLeft | ActionKind::TurnRight => {
                let r = action.param("radius").as_f64().unwrap_or(0.0);
                let angle = action.param("angle").as_f64().unwrap_or(0.0);
                let side = if kind == ActionKind::TurnLeft { 1.0 } else { -1.0 };
                // End of the arc in the actor's frame at activation.
                let dx = self.literal(v, "dx", r * angle.sin());
                let dy = self.literal(v, "dy", side * r * (1.0 - angle.cos()));
                let waypoint = |dx: String, dy: String| {
                    Element::new("Waypoint").attr("routeStrategy", "shortest").child(
                        Element::new("Position").child(
                            Element::new("RelativeObjectPosition")
                                .attr("entityRef", me.clone())
                                .attr("dx", dx)
                                .attr("dy", dy),
                        ),
                    )
                };
                Element::new("RoutingAction").child(
                    Element::new("AssignRouteAction").child(
                        Element::new("Route")
                            .attr("name", format!("{}_route", self.topo.ids[v]))
                            .attr("closed", "false")
                            .child(waypoint("0".into(), "0".into()))
                            .child(waypoint(dx, dy)),
                    ),
                )
            }
            _ => {
                return Err(ExportError::UnsupportedAction {
                    node: self.topo.ids[v].to_string(),
                    action: action.action_type.clone(),
                })
            }
        };
        Ok(Element::new("PrivateAction").child(inner))
    }

    fn entity(&self, actor: &Actor) -> Element {
        let b = self.registry.bounds(actor.category);
        let height = match actor.category {
            ActorCategory::Pedestrian => 1.8,
            ActorCategory::TwoWheeler => 1.7,
            ActorCategory::FourWheeler => 1.5,
        };
        let bbox = Element::new("BoundingBox")
            .child(
                Element::new("Center")
                    .attr("x", "0")
                    .attr("y", "0")
                    .attr("z", num(height / 2.0)),
            )
            .child(
                Element::new("Dimensions")
                    .attr("width", num(b.width))
                    .attr("length", num(b.length))
                    .attr("height", num(height)),
            );
        let mut props = Element::new("Properties");
        if actor.is_ego {
            props.push(Element::new("Property").attr("name", "is_ego").attr("value", "true"));
        }
        let object = match actor.category {
            ActorCategory::Pedestrian => Element::new("Pedestrian")
                .attr("model", actor.model.clone())
                .attr("mass", "80")
                .attr("name", actor.model.clone())
                .attr("pedestrianCategory", "pedestrian")
                .child(Element::new("ParameterDeclarations"))
                .child(bbox)
                .child(props),
            category => {
                let (vehicle_category, wheel, track, wheelbase) = match category {
                    ActorCategory::TwoWheeler => ("bicycle", 0.7, 0.1, 1.1),
                    _ => ("car", 0.6, 1.6, 2.7),
                };
                let axle = |tag: &'static str, steering: f64, x: f64| {
                    Element::new(tag)
                        .attr("maxSteering", num(steering))
                        .attr("wheelDiameter", num(wheel))
                        .attr("trackWidth", num(track))
                        .attr("positionX", num(x))
                        .attr("positionZ", num(wheel / 2.0))
                };
                Element::new("Vehicle")
                    .attr("name", actor.model.clone())
                    .attr("vehicleCategory", vehicle_category)
                    .child(Element::new("ParameterDeclarations"))
                    .child(
                        Element::new("Performance")
                            .attr("maxSpeed", num(b.max_speed))
                            .attr("maxAcceleration", num(b.max_accel))
                            .attr("maxDeceleration", num(b.max_accel)),
                    )
                    .child(bbox)
                    .child(
                        Element::new("Axles")
                            .child(axle("FrontAxle", 0.5, wheelbase))
                            .child(axle("RearAxle", 0.0, 0.0)),
                    )
                    .child(props)
            }
        };
        Element::new("ScenarioObject")
            .attr("name", actor.id.to_string())
            .child(object)
    }

    fn init(&self) -> Element {
        let mut actions = Element::new("Actions");
        if let Some(env) = environment_action(self.graph) {
            actions.push(env);
        }
        for actor in self.graph.actors() {
            let pose = &actor.start_pose;
            let f = |v: &ParamValue| num(v.as_f64().unwrap_or(0.0));
            actions.push(
                Element::new("Private")
                    .attr("entityRef", actor.id.to_string())
                    .child(Element::new("PrivateAction").child(
                        Element::new("TeleportAction").child(Element::new("Position").child(
                            world_position(f(&pose.x), f(&pose.y), f(&pose.heading)),
                        )),
                    ))
                    .child(Element::new("PrivateAction").child(
                        Element::new("LongitudinalAction").child(
                            Element::new("SpeedAction")
                                .child(
                                    Element::new("SpeedActionDynamics")
                                        .attr("dynamicsShape", "step")
                                        .attr("value", "0")
                                        .attr("dynamicsDimension", "time"),
                                )
                                .child(Element::new("SpeedActionTarget").child(
                                    Element::new("AbsoluteTargetSpeed")
                                        .attr("value", f(&actor.start_speed)),
                                )),
                        ),
                    )),
            );
        }
        Element::new("Init").child(actions)
    }

    /// Maneuver nodes grouped by the act that runs them. Key `None` is the
    /// main act; `Some(j)` collects maneuvers cancelled by one-finished join
    /// `j`.
    fn acts(&self) -> BTreeMap<Option<usize>, Vec<usize>> {
        let nodes = self.graph.nodes();
        let ends: Vec<usize> = (0..nodes.len())
            .filter(|&v| nodes[v].kind() == NodeKind::End)
            .collect();
        let mut owner: Vec<Option<usize>> = vec![None; nodes.len()];
        for j in 0..nodes.len() {
            if nodes[j].join_policy() != Some(JoinPolicy::OneFinished) {
                continue;
            }
            let escapes = self.topo.reach_avoiding(&ends, true, Some(j));
            let ancestors = self.topo.reach(&self.topo.pred[j], true);
            for v in 0..nodes.len() {
                if ancestors[v] && !escapes[v] && owner[v].is_none() {
                    owner[v] = Some(j);
                }
            }
        }
        let mut acts: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
        for v in self.topo.topo_order().expect("acyclic") {
            if nodes[v].kind() == NodeKind::Maneuver {
                acts.entry(owner[v]).or_default().push(v);
            }
        }
        acts
    }

    fn story(&mut self) -> Result<Element, ExportError> {
        let mut story = Element::new("Story").attr("name", self.graph.name().to_string());
        let actors: Vec<Actor> = self.graph.actors().to_vec();
        for (owner, maneuvers) in self.acts() {
            let act_name = match owner {
                None => "main".to_string(),
                Some(j) => format!("until_{}", self.topo.ids[j]),
            };
            let mut act = Element::new("Act").attr("name", act_name.clone());
            for actor in &actors {
                let mine: Vec<usize> = maneuvers
                    .iter()
                    .copied()
                    .filter(|&v| {
                        self.graph.nodes()[v].action().map(|a| &a.reference_actor) == Some(&actor.id)
                    })
                    .collect();
                if mine.is_empty() {
                    continue;
                }
                let mut maneuver = Element::new("Maneuver")
                    .attr("name", format!("{act_name}_{}", actor.id));
                for v in mine {
                    let id = self.topo.ids[v].to_string();
                    let action = self.private_action(v, actor)?;
                    let ready = self.ready[v].clone();
                    let start = self.trigger("StartTrigger", &id, &ready);
                    maneuver.push(
                        Element::new("Event")
                            .attr("name", id.clone())
                            .attr("priority", "parallel")
                            .attr("maximumExecutionCount", "1")
                            .child(Element::new("Action").attr("name", id.clone()).child(action))
                            .child(start),
                    );
                }
                act.push(
                    Element::new("ManeuverGroup")
                        .attr("maximumExecutionCount", "1")
                        .attr("name", format!("{act_name}_{}_group", actor.id))
                        .child(
                            Element::new("Actors")
                                .attr("selectTriggeringEntities", "false")
                                .child(Element::new("EntityRef").attr("entityRef", actor.id.to_string())),
                        )
                        .child(maneuver),
                );
            }
            act.push(Element::new("StartTrigger").child(Element::new("ConditionGroup").child(
                sim_time_condition(&format!("{act_name}_start"), "0".into()),
            )));
            if let Some(j) = owner {
                let done = self.done[j].clone();
                act.push(self.trigger("StopTrigger", &act_name, &done));
            }
            story.push(act);
        }
        Ok(story)
    }

    fn check_supported(&self) -> Result<(), ExportError> {
        for (v, node) in self.graph.nodes().iter().enumerate() {
            let Some(action) = node.action() else {
                continue;
            };
            let kind = self.kind(action);
            let supported = match node.kind() {
                NodeKind::Condition => matches!(
                    kind,
                    ActionKind::InLocationRadius
                        | ActionKind::InVehicleRadius
                        | ActionKind::TimeElapsed
                        | ActionKind::SpeedReached
                ),
                _ => kind != ActionKind::Custom && !kind_is_condition(kind),
            };
            if !supported {
                return Err(ExportError::UnsupportedAction {
                    node: self.topo.ids[v].to_string(),
                    action: action.action_type.clone(),
                });
            }
        }
        Ok(())
    }
}

fn kind_is_condition(kind: ActionKind) -> bool {
    matches!(
        kind,
        ActionKind::InLocationRadius
            | ActionKind::InVehicleRadius
            | ActionKind::TimeElapsed
            | ActionKind::SpeedReached
    )
}

fn condition_shell(name: &str) -> Element {
    Element::new("Condition")
        .attr("name", name.to_string())
        .attr("delay", "0")
        .attr("conditionEdge", "none")
}

fn sim_time_condition(name: &str, value: String) -> Element {
    condition_shell(name).child(
        Element::new("ByValueCondition").child(
            Element::new("SimulationTimeCondition")
                .attr("value", value)
                .attr("rule", "greaterThan"),
        ),
    )
}

fn world_position(x: String, y: String, h: String) -> Element {
    Element::new("WorldPosition")
        .attr("x", x)
        .attr("y", y)
        .attr("z", "0")
        .attr("h", h)
}

fn environment_action(graph: &ScenarioGraph) -> Option<Element> {
    let env = graph.environment();
    let get = |k: &str| env.get(k).filter(|v| !v.is_unset());
    if get("time_of_day").is_none() && get("precipitation").is_none() && get("cloud_cover").is_none()
    {
        return None;
    }
    let time = match get("time_of_day") {
        Some(ParamValue::Scalar { value, .. }) => match value.as_f64() {
            Some(h) => {
                let minutes = (h * 60.0).round() as i64;
                format!("2020-03-01T{:02}:{:02}:00", minutes / 60 % 24, minutes % 60)
            }
            None => value.to_string(),
        },
        _ => "2020-03-01T12:00:00".to_string(),
    };
    let intensity = get("precipitation").and_then(ParamValue::as_f64).unwrap_or(0.0);
    let clouds = match get("cloud_cover") {
        Some(ParamValue::Scalar { value, .. }) => value.to_string(),
        _ => "free".to_string(),
    };
    Some(
        Element::new("GlobalAction").child(
            Element::new("EnvironmentAction").child(
                Element::new("Environment")
                    .attr("name", "environment")
                    .child(
                        Element::new("TimeOfDay")
                            .attr("animation", "false")
                            .attr("dateTime", time),
                    )
                    .child(
                        Element::new("Weather")
                            .attr("cloudState", clouds)
                            .child(
                                Element::new("Sun")
                                    .attr("intensity", "10000")
                                    .attr("azimuth", "0")
                                    .attr("elevation", "1.31"),
                            )
                            .child(Element::new("Fog").attr("visualRange", "100000"))
                            .child(
                                Element::new("Precipitation")
                                    .attr(
                                        "precipitationType",
                                        if intensity > 0.0 { "rain" } else { "dry" },
                                    )
                                    .attr("intensity", num(intensity)),
                            ),
                    )
                    .child(Element::new("RoadCondition").attr("frictionScaleFactor", "1")),
            ),
        ),
    )
}

/// Renders a concrete, valid scenario as an OpenSCENARIO 1.0 document.
pub fn export(
    graph: &ScenarioGraph,
    registry: &Registry,
    options: &ExportOptions,
) -> Result<String, ExportError> {
    let flat = modules::flatten(graph)?;
    let level = classify_level(&flat, registry);
    if level != AbstractionLevel::Concrete {
        return Err(ExportError::LevelError { found: level });
    }
    let report = validation::validate(&flat, registry);
    if !report.is_valid {
        return Err(ExportError::InvalidScenario(report.errors().cloned().collect()));
    }
    let mut catalogs = Element::new("CatalogLocations");
    for (kind, path) in &options.catalog_locations {
        let tag = CATALOG_KINDS
            .iter()
            .find(|(k, _)| k == kind)
            .map(|(_, tag)| *tag)
            .ok_or_else(|| ExportError::UnknownCatalog(kind.clone()))?;
        catalogs.push(Element::new(tag).child(Element::new("Directory").attr("path", path.clone())));
    }

    let mut ex = Exporter {
        graph: &flat,
        registry,
        topo: Topology::new(&flat),
        options,
        params: Vec::new(),
        ready: Vec::new(),
        done: Vec::new(),
    };
    ex.check_supported()?;
    ex.compute_triggers();
    let entities = Element::new("Entities").children(flat.actors().iter().map(|a| ex.entity(a)));
    let init = ex.init();
    let story = ex.story()?;
    let end = (0..flat.nodes().len())
        .find(|&v| flat.nodes()[v].kind() == NodeKind::End)
        .expect("validated graphs have an end node");
    let ready_end = ex.ready[end].clone();
    let stop = ex.trigger("StopTrigger", "end", &ready_end);

    let declarations = Element::new("ParameterDeclarations").children(ex.params.iter().map(
        |(name, value)| {
            Element::new("ParameterDeclaration")
                .attr("name", name.clone())
                .attr("parameterType", "double")
                .attr("value", num(*value))
        },
    ));
    let doc = Element::new("OpenSCENARIO")
        .child(
            Element::new("FileHeader")
                .attr("revMajor", "1")
                .attr("revMinor", "0")
                .attr("date", options.date.clone())
                .attr("description", flat.name().to_string())
                .attr("author", options.author.clone()),
        )
        .child(declarations)
        .child(catalogs)
        .child(
            Element::new("RoadNetwork")
                .child(Element::new("LogicFile").attr("filepath", flat.map_name().to_string()))
                .child(Element::new("SceneGraphFile").attr("filepath", "")),
        )
        .child(entities)
        .child(
            Element::new("Storyboard")
                .child(init)
                .child(story)
                .child(stop),
        );
    Ok(doc.render_document())
}
