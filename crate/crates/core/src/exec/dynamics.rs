//! Per-action update rules and completion predicates.

use std::f64::consts::PI;

use crate::model::ActionNode;
use crate::registry::{ActionKind, CategoryBounds};

use super::trace::ActorState;

/// Progress a running maneuver keeps between ticks.
#[derive(Debug, Clone, Default)]
pub(crate) struct Progress {
    pub elapsed: f64,
    pub distance: f64,
    pub turned: f64,
    pub lateral: f64,
}

fn p(action: &ActionNode, key: &str) -> f64 {
    action.param(key).as_f64().unwrap_or(0.0)
}

/// Speed/heading/lateral change of one maneuver for one tick. Returns the
/// lateral displacement (left positive) and whether the maneuver completed.
pub(crate) fn step_maneuver(
    kind: ActionKind,
    action: &ActionNode,
    state: &mut ActorState,
    target: Option<&ActorState>,
    bounds: &CategoryBounds,
    progress: &mut Progress,
    dt: f64,
) -> (f64, bool) {
    progress.elapsed += dt;
    let mut lateral = 0.0;
    let done = match kind {
        ActionKind::Accelerate => {
            let goal = p(action, "target_velocity").min(bounds.max_speed);
            let a = p(action, "throttle").clamp(0.0, 1.0) * bounds.max_accel;
            if state.speed < goal {
                state.accel = a;
                state.speed = (state.speed + a * dt).min(goal);
            } else {
                state.accel = 0.0;
            }
            state.speed >= goal
        }
        ActionKind::Decelerate | ActionKind::Stop => {
            let goal = if kind == ActionKind::Stop {
                0.0
            } else {
                p(action, "target_velocity").max(0.0)
            };
            let a = p(action, "brake").clamp(0.0, 1.0) * bounds.max_accel;
            if state.speed > goal {
                state.accel = -a;
                state.speed = (state.speed - a * dt).max(goal);
            } else {
                state.accel = 0.0;
            }
            state.speed <= goal
        }
        ActionKind::KeepVelocity => {
            state.accel = 0.0;
            progress.elapsed >= p(action, "duration") - 1e-9
        }
        ActionKind::DriveDistance => {
            state.accel = 0.0;
            progress.distance += state.speed * dt;
            progress.distance >= p(action, "distance") - 1e-9
        }
        ActionKind::FollowVehicle => {
            if let Some(t) = target {
                let (dx, dy) = (t.x - state.x, t.y - state.y);
                let dist = dx.hypot(dy);
                if dist > 1e-9 {
                    state.heading = dy.atan2(dx);
                }
                let wanted = (t.speed + 0.5 * (dist - p(action, "gap"))).clamp(0.0, bounds.max_speed);
                let dv = (wanted - state.speed).clamp(-bounds.max_accel * dt, bounds.max_accel * dt);
                state.accel = dv / dt;
                state.speed += dv;
            }
            progress.elapsed >= p(action, "duration") - 1e-9
        }
        ActionKind::LaneChangeLeft | ActionKind::LaneChangeRight => {
            state.accel = 0.0;
            let duration = p(action, "duration").max(dt);
            let width = p(action, "lane_width");
            let s = (progress.elapsed / duration).min(1.0);
            // Smooth lateral profile with zero lateral speed at both ends.
            let offset = width * (s - (2.0 * PI * s).sin() / (2.0 * PI));
            let delta = offset - progress.lateral;
            progress.lateral = offset;
            lateral = if kind == ActionKind::LaneChangeLeft {
                delta
            } else {
                -delta
            };
            s >= 1.0
        }
        ActionKind::TurnLeft | ActionKind::TurnRight => {
            state.accel = 0.0;
            let radius = p(action, "radius").max(1e-6);
            let angle = p(action, "angle").abs();
            let step = (state.speed / radius * dt).min(angle - progress.turned);
            progress.turned += step;
            state.heading += if kind == ActionKind::TurnLeft {
                step
            } else {
                -step
            };
            progress.turned >= angle - 1e-12
        }
        // Conditions and custom actions have no dynamics.
        _ => true,
    };
    (lateral, done)
}

/// Predicate of a condition node at the current world state.
pub(crate) fn condition_holds(
    kind: ActionKind,
    action: &ActionNode,
    state: &ActorState,
    target: Option<&ActorState>,
    time: f64,
) -> bool {
    match kind {
        ActionKind::InLocationRadius => {
            (state.x - p(action, "x")).hypot(state.y - p(action, "y")) <= p(action, "radius")
        }
        ActionKind::InVehicleRadius => {
            target.is_some_and(|t| (state.x - t.x).hypot(state.y - t.y) <= p(action, "radius"))
        }
        ActionKind::TimeElapsed => time >= p(action, "duration") - 1e-9,
        ActionKind::SpeedReached => state.speed >= p(action, "speed"),
        _ => false,
    }
}
