use serde::{Deserialize, Serialize};

use crate::model::{ActorId, NodeId};

use super::{ExecError, TickConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: ActorId,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl ActorState {
    pub fn distance(&self, other: &ActorState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Overlap of world-aligned boxes; heading is ignored.
    pub fn overlaps(&self, other: &ActorState) -> bool {
        (self.x - other.x).abs() < self.half_length + other.half_length
            && (self.y - other.y).abs() < self.half_width + other.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub actors: Vec<ActorState>,
}

impl WorldState {
    pub fn actor(&self, id: &ActorId) -> Option<&ActorState> {
        self.actors.iter().find(|a| &a.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Idle,
    Running,
    Succeeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Started,
    Succeeded,
    /// Branch lost at a one-finished join; the node never updates again.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub time: f64,
    pub node: NodeId,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed { time: f64 },
    Collision { actors: [ActorId; 2], time: f64 },
    Timeout { time: f64 },
}

impl Outcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            Outcome::Completed { .. } => OutcomeKind::Completed,
            Outcome::Collision { .. } => OutcomeKind::Collision,
            Outcome::Timeout { .. } => OutcomeKind::Timeout,
        }
    }

    pub fn time(&self) -> f64 {
        match self {
            Outcome::Completed { time } | Outcome::Collision { time, .. } | Outcome::Timeout { time } => {
                *time
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Completed,
    Collision,
    Timeout,
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeKind::Completed => "Completed",
            OutcomeKind::Collision => "Collision",
            OutcomeKind::Timeout => "Timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub tick_config: TickConfig,
    pub states: Vec<WorldState>,
    pub events: Vec<Event>,
    pub outcome: Outcome,
    /// Smallest centre distance between any two actors over all ticks,
    /// sampled or not.
    pub min_distance: Option<f64>,
}

impl Trace {
    pub fn to_json(&self) -> String {
        crate::model::document::to_pretty_json(self)
    }

    pub fn end_time(&self) -> f64 {
        self.outcome.time()
    }

    /// First event of `kind` for `node`.
    pub fn event_time(&self, node: &str, kind: EventKind) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.node == node && e.kind == kind)
            .map(|e| e.time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub kind: OutcomeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collision: Option<[ActorId; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collision_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_time: Option<f64>,
    pub end_time: f64,
    pub min_distance: Option<f64>,
}

pub fn outcome(trace: &Trace) -> OutcomeSummary {
    let (collision, collision_time, completion_time) = match &trace.outcome {
        Outcome::Completed { time } => (None, None, Some(*time)),
        Outcome::Collision { actors, time } => (Some(actors.clone()), Some(*time), None),
        Outcome::Timeout { .. } => (None, None, None),
    };
    OutcomeSummary {
        kind: trace.outcome.kind(),
        collision,
        collision_time,
        completion_time,
        end_time: trace.end_time(),
        min_distance: trace.min_distance,
    }
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

/// World state at time `t`, interpolated linearly between the surrounding
/// samples.
pub fn replay_states(trace: &Trace, t: f64) -> Result<WorldState, ExecError> {
    let (first, last) = match (trace.states.first(), trace.states.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(ExecError::OutOfRange { t, end: 0.0 }),
    };
    if !(first.time..=last.time).contains(&t) {
        return Err(ExecError::OutOfRange { t, end: last.time });
    }
    let after = trace.states.partition_point(|s| s.time < t);
    let b = &trace.states[after];
    if b.time == t || after == 0 {
        return Ok(b.clone());
    }
    let a = &trace.states[after - 1];
    let w = (t - a.time) / (b.time - a.time);
    let actors = a
        .actors
        .iter()
        .zip(&b.actors)
        .map(|(p, q)| ActorState {
            id: p.id.clone(),
            x: lerp(p.x, q.x, w),
            y: lerp(p.y, q.y, w),
            heading: lerp(p.heading, q.heading, w),
            speed: lerp(p.speed, q.speed, w),
            accel: lerp(p.accel, q.accel, w),
            half_length: p.half_length,
            half_width: p.half_width,
        })
        .collect();
    Ok(WorldState { time: t, actors })
}
