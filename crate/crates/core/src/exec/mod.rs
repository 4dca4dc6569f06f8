//! Tick-based execution of concrete scenario graphs.
//!
//! One tick: evaluate running conditions on the world state at the start of
//! the tick, advance running maneuvers, mark completions and activate
//! successors, advance time, check collisions, then check for completion and
//! timeout. Events and the outcome carry the time at the end of the tick.

mod dynamics;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concretize::classify_level;
use crate::model::{AbstractionLevel, JoinPolicy, NodeKind, ParamValue, ScenarioGraph};
use crate::modules::{self, ModuleError};
use crate::registry::{ActionKind, Registry};
use crate::topology::Topology;
use crate::validation::{self, Finding};

use dynamics::Progress;
pub use trace::{
    outcome, replay_states, ActorState, Event, EventKind, NodeStatus, Outcome, OutcomeKind,
    OutcomeSummary, Trace, WorldState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickConfig {
    pub dt: f64,
    pub max_time: f64,
    /// Recorded for reproducibility; the kinematics themselves are not
    /// random.
    pub seed: u64,
    /// Every n-th tick is stored in the trace. The first and last states are
    /// always stored.
    pub sample_stride: u64,
}

impl Default for TickConfig {
    fn default() -> Self {
        TickConfig {
            dt: 0.05,
            max_time: 60.0,
            seed: 0,
            sample_stride: 1,
        }
    }
}

impl TickConfig {
    pub fn with_dt(dt: f64) -> Self {
        TickConfig {
            dt,
            ..TickConfig::default()
        }
    }

    fn check(&self) -> Result<(), ExecError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ExecError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.max_time.is_finite() && self.max_time > 0.0) {
            return Err(ExecError::InvalidConfig(format!(
                "max_time must be positive, got {}",
                self.max_time
            )));
        }
        if self.sample_stride == 0 {
            return Err(ExecError::InvalidConfig("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("level error: only concrete scenarios can be executed, found {found}")]
    LevelError { found: AbstractionLevel },
    #[error("invalid tick configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario has validation errors: {}", summarize(.0))]
    InvalidScenario(Vec<Finding>),
    #[error(transparent)]
    Module(#[from] ModuleError),
    #[error("time {t} is outside the trace (0..{end})")]
    OutOfRange { t: f64, end: f64 },
}

fn summarize(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| format!("{} {}", f.rule_id, f.message))
        .collect::<Vec<_>>()
        .join("; ")
}

fn num(v: &ParamValue) -> f64 {
    v.as_f64().unwrap_or(0.0)
}

struct Engine<'a> {
    graph: &'a ScenarioGraph,
    topo: Topology,
    kinds: Vec<Option<ActionKind>>,
    /// Reference and target actor index per node.
    refs: Vec<Option<(usize, Option<usize>)>>,
    status: Vec<NodeStatus>,
    frozen: Vec<bool>,
    progress: Vec<Progress>,
    events: Vec<Event>,
    tick: u64,
    time: f64,
    completed: bool,
}

impl Engine<'_> {
    fn log(&mut self, node: usize, kind: EventKind) {
        self.events.push(Event {
            tick: self.tick,
            time: self.time,
            node: self.topo.ids[node].clone(),
            kind,
        });
    }

    fn succeed(&mut self, v: usize) {
        self.status[v] = NodeStatus::Succeeded;
        self.log(v, EventKind::Succeeded);
    }

    fn can_activate(&self, v: usize) -> bool {
        let preds = &self.topo.pred[v];
        let done = |&p: &usize| self.status[p] == NodeStatus::Succeeded;
        match self.graph.nodes()[v].join_policy() {
            Some(JoinPolicy::OneFinished) => preds.iter().any(done),
            _ => !preds.is_empty() && preds.iter().all(done),
        }
    }

    /// Marks `finished` as succeeded and activates everything that becomes
    /// ready. Joins and the end node pass through within the same tick.
    fn propagate(&mut self, finished: Vec<usize>) {
        let mut queue = std::collections::VecDeque::new();
        for v in finished {
            self.succeed(v);
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            for w in self.topo.succ[v].clone() {
                if self.status[w] != NodeStatus::Idle || self.frozen[w] || !self.can_activate(w) {
                    continue;
                }
                self.status[w] = NodeStatus::Running;
                self.log(w, EventKind::Started);
                match self.graph.nodes()[w].kind() {
                    NodeKind::Join => {
                        if self.graph.nodes()[w].join_policy() == Some(JoinPolicy::OneFinished) {
                            self.freeze_losers(w);
                        }
                        self.succeed(w);
                        queue.push_back(w);
                    }
                    NodeKind::End => {
                        self.succeed(w);
                        self.completed = true;
                    }
                    _ => {}
                }
            }
        }
    }

    /// Freezes unfinished ancestors of `join` whose only way to the end
    /// leads through `join`.
    fn freeze_losers(&mut self, join: usize) {
        let ends: Vec<usize> = (0..self.topo.len())
            .filter(|&v| self.graph.nodes()[v].kind() == NodeKind::End)
            .collect();
        let escapes = self.topo.reach_avoiding(&ends, true, Some(join));
        let ancestors = self.topo.reach(&self.topo.pred[join], true);
        for v in 0..self.topo.len() {
            if ancestors[v]
                && !escapes[v]
                && !self.frozen[v]
                && self.status[v] != NodeStatus::Succeeded
            {
                self.frozen[v] = true;
                self.log(v, EventKind::Frozen);
            }
        }
    }
}

/// Executes a concrete, valid scenario.
pub fn run(graph: &ScenarioGraph, registry: &Registry, config: &TickConfig) -> Result<Trace, ExecError> {
    config.check()?;
    let flat = modules::flatten(graph)?;
    let level = classify_level(&flat, registry);
    if level != AbstractionLevel::Concrete {
        return Err(ExecError::LevelError { found: level });
    }
    let report = validation::validate(&flat, registry);
    if !report.is_valid {
        return Err(ExecError::InvalidScenario(report.errors().cloned().collect()));
    }

    let actor_index = |id| flat.actors().iter().position(|a| &a.id == id);
    let mut world: Vec<ActorState> = flat
        .actors()
        .iter()
        .map(|a| {
            let b = registry.bounds(a.category);
            ActorState {
                id: a.id.clone(),
                x: num(&a.start_pose.x),
                y: num(&a.start_pose.y),
                heading: num(&a.start_pose.heading),
                speed: num(&a.start_speed).max(0.0),
                accel: 0.0,
                half_length: b.length / 2.0,
                half_width: b.width / 2.0,
            }
        })
        .collect();
    let bounds: Vec<_> = flat.actors().iter().map(|a| registry.bounds(a.category)).collect();

    let topo = Topology::new(&flat);
    let n = topo.len();
    let kinds = flat
        .nodes()
        .iter()
        .map(|node| node.action().and_then(|a| registry.action(&a.action_type)).map(|s| s.kind))
        .collect();
    let refs = flat
        .nodes()
        .iter()
        .map(|node| {
            node.action().map(|a| {
                (
                    actor_index(&a.reference_actor).expect("validated reference"),
                    a.target_actor.as_ref().and_then(actor_index),
                )
            })
        })
        .collect();
    let mut engine = Engine {
        graph: &flat,
        topo,
        kinds,
        refs,
        status: vec![NodeStatus::Idle; n],
        frozen: vec![false; n],
        progress: vec![Progress::default(); n],
        events: Vec::new(),
        tick: 0,
        time: 0.0,
        completed: false,
    };
    let roots: Vec<usize> = (0..n)
        .filter(|&v| flat.nodes()[v].kind() == NodeKind::Root)
        .collect();
    for &r in &roots {
        engine.status[r] = NodeStatus::Running;
        engine.log(r, EventKind::Started);
    }

    let mut states = vec![WorldState {
        time: 0.0,
        actors: world.clone(),
    }];
    let mut min_distance = min_pair_distance(&world);
    let outcome = loop {
        engine.tick += 1;
        let start_time = engine.time;
        engine.time = engine.tick as f64 * config.dt;
        let snapshot = world.clone();
        let mut finished: Vec<usize> = roots
            .iter()
            .copied()
            .filter(|&r| engine.status[r] == NodeStatus::Running)
            .collect();

        // (1) conditions
        for v in 0..n {
            if engine.status[v] != NodeStatus::Running
                || engine.frozen[v]
                || flat.nodes()[v].kind() != NodeKind::Condition
            {
                continue;
            }
            let (Some(kind), Some((r, t))) = (engine.kinds[v], engine.refs[v]) else {
                continue;
            };
            let action = flat.nodes()[v].action().expect("condition payload");
            let target = t.map(|t| &snapshot[t]);
            if dynamics::condition_holds(kind, action, &snapshot[r], target, start_time) {
                finished.push(v);
            }
        }

        // (2) maneuvers
        for a in world.iter_mut() {
            a.accel = 0.0;
        }
        let mut lateral = vec![0.0; world.len()];
        for v in 0..n {
            if engine.status[v] != NodeStatus::Running
                || engine.frozen[v]
                || flat.nodes()[v].kind() != NodeKind::Maneuver
            {
                continue;
            }
            let (Some(kind), Some((r, t))) = (engine.kinds[v], engine.refs[v]) else {
                continue;
            };
            let action = flat.nodes()[v].action().expect("maneuver payload");
            let target = t.map(|t| &snapshot[t]);
            let (lat, done) = dynamics::step_maneuver(
                kind,
                action,
                &mut world[r],
                target,
                &bounds[r],
                &mut engine.progress[v],
                config.dt,
            );
            lateral[r] += lat;
            if done {
                finished.push(v);
            }
        }
        for (a, (lat, b)) in world.iter_mut().zip(lateral.iter().zip(&bounds)) {
            a.speed = a.speed.clamp(0.0, b.max_speed);
            let (sin, cos) = a.heading.sin_cos();
            a.x += a.speed * cos * config.dt - sin * lat;
            a.y += a.speed * sin * config.dt + cos * lat;
        }

        // (3) completions and activations, stamped with the new time (4)
        finished.sort_unstable();
        finished.dedup();
        engine.propagate(finished);

        let d = min_pair_distance(&world);
        min_distance = match (min_distance, d) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };

        // (5) collisions
        let collision = first_overlap(&world);
        let outcome = if let Some((i, j)) = collision {
            Some(Outcome::Collision {
                actors: [world[i].id.clone(), world[j].id.clone()],
                time: engine.time,
            })
        } else if engine.completed {
            // (6)
            Some(Outcome::Completed { time: engine.time })
        } else if engine.time > config.max_time + 1e-9 {
            // (7)
            Some(Outcome::Timeout { time: engine.time })
        } else {
            None
        };
        if outcome.is_some() || engine.tick.is_multiple_of(config.sample_stride) {
            states.push(WorldState {
                time: engine.time,
                actors: world.clone(),
            });
        }
        if let Some(o) = outcome {
            break o;
        }
    };

    Ok(Trace {
        tick_config: *config,
        states,
        events: engine.events,
        outcome,
        min_distance,
    })
}

fn min_pair_distance(world: &[ActorState]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in world.iter().enumerate() {
        for b in &world[i + 1..] {
            let d = a.distance(b);
            best = Some(best.map_or(d, |x| x.min(d)));
        }
    }
    best
}

fn first_overlap(world: &[ActorState]) -> Option<(usize, usize)> {
    for i in 0..world.len() {
        for j in i + 1..world.len() {
            if world[i].overlaps(&world[j]) {
                return Some((i, j));
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_tick_config() {
        for cfg in [
            TickConfig::with_dt(0.0),
            TickConfig::with_dt(-1.0),
            TickConfig {
                max_time: 0.0,
                ..TickConfig::default()
            },
            TickConfig {
                sample_stride: 0,
                ..TickConfig::default()
            },
        ] {
            assert!(matches!(cfg.check(), Err(ExecError::InvalidConfig(_))));
        }
        assert!(TickConfig::default().check().is_ok());
    }

    #[test]
    fn minimal_scenario_completes_after_one_tick() {
        let reg = Registry::builtin();
        let mut g = ScenarioGraph::new("m", "map", AbstractionLevel::Concrete).unwrap();
        g.connect(crate::model::NodeId::from("root"), crate::model::NodeId::from("end"))
            .unwrap();
        let trace = run(&g, &reg, &TickConfig::default()).unwrap();
        assert_eq!(trace.outcome, Outcome::Completed { time: 0.05 });
        assert_eq!(trace.states.len(), 2);
        assert_eq!(trace.min_distance, None);
    }
}
