//! Action registry: the closed vocabulary of maneuvers and conditions, their
//! parameter schemas, per-category plausibility bounds and conflict pairs.
//!
//! All values are SI. The builtin table can be adjusted through
//! [`RegistryOverrides`] (loaded from a TOML config file by the CLI) without
//! code changes.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::model::ActorCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCategory {
    Longitudinal,
    Lateral,
    Composite,
    Condition,
}

impl ActionCategory {
    pub fn is_condition(self) -> bool {
        self == ActionCategory::Condition
    }
}

/// Behavior implemented by the executor and exporter for an action type.
///
/// Registry entries added through configuration must reuse one of the builtin
/// behaviors or use `Custom`, which neither the executor nor the exporter can
/// handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Accelerate,
    Decelerate,
    KeepVelocity,
    DriveDistance,
    FollowVehicle,
    Stop,
    LaneChangeLeft,
    LaneChangeRight,
    TurnLeft,
    TurnRight,
    InLocationRadius,
    InVehicleRadius,
    TimeElapsed,
    SpeedReached,
    Custom,
}

/// Physical quantity of a parameter, used for plausibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Speed,
    Acceleration,
    Length,
    Duration,
    Ratio,
    Angle,
    Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub unit: String,
    pub quantity: Quantity,
    pub default: Option<f64>,
    pub required: bool,
}

impl ParamSpec {
    fn new(name: &str, unit: &str, quantity: Quantity, default: Option<f64>) -> Self {
        ParamSpec {
            name: name.to_string(),
            unit: unit.to_string(),
            quantity,
            default,
            required: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: String,
    pub category: ActionCategory,
    pub kind: ActionKind,
    /// Whether the action relates a reference actor to a target actor.
    pub two_actor: bool,
    pub params: Vec<ParamSpec>,
    /// Opaque metadata shown by editors; never interpreted.
    pub complexity: u8,
    /// Actor categories that may not act as reference actor.
    pub excluded_categories: Vec<ActorCategory>,
}

impl ActionSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn is_condition(&self) -> bool {
        self.category.is_condition()
    }

    pub fn allows(&self, category: ActorCategory) -> bool {
        !self.excluded_categories.contains(&category)
    }
}

/// Plausibility bounds and collision extents for one actor category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryBounds {
    /// m/s
    pub max_speed: f64,
    /// m/s², magnitude
    pub max_accel: f64,
    /// bounding box length in m
    pub length: f64,
    /// bounding box width in m
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    actions: BTreeMap<String, ActionSpec>,
    bounds: BTreeMap<ActorCategory, CategoryBounds>,
    conflicts: Vec<(String, String)>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}

impl Registry {
    /// The v1 action table.
    pub fn builtin() -> Self {
        use ActionCategory::*;
        use Quantity::*;

        let p = ParamSpec::new;
        let mut actions = BTreeMap::new();
        let mut add = |name: &str,
                       category: ActionCategory,
                       kind: ActionKind,
                       two_actor: bool,
                       complexity: u8,
                       excluded: &[ActorCategory],
                       params: Vec<ParamSpec>| {
            actions.insert(
                name.to_string(),
                ActionSpec {
                    name: name.to_string(),
                    category,
                    kind,
                    two_actor,
                    params,
                    complexity,
                    excluded_categories: excluded.to_vec(),
                },
            );
        };
        let walkers = [ActorCategory::Pedestrian];

        add(
            "Accelerate",
            Longitudinal,
            ActionKind::Accelerate,
            false,
            1,
            &[],
            vec![
                p("target_velocity", "m/s", Speed, Some(5.0)),
                p("throttle", "ratio", Ratio, Some(0.5)),
            ],
        );
        add(
            "Decelerate",
            Longitudinal,
            ActionKind::Decelerate,
            false,
            1,
            &[],
            vec![
                p("target_velocity", "m/s", Speed, Some(0.0)),
                p("brake", "ratio", Ratio, Some(0.5)),
            ],
        );
        add(
            "KeepVelocity",
            Longitudinal,
            ActionKind::KeepVelocity,
            false,
            1,
            &[],
            vec![p("duration", "s", Duration, Some(2.0))],
        );
        add(
            "DriveDistance",
            Longitudinal,
            ActionKind::DriveDistance,
            false,
            1,
            &[],
            vec![p("distance", "m", Length, Some(10.0))],
        );
        add(
            "FollowVehicle",
            Longitudinal,
            ActionKind::FollowVehicle,
            true,
            2,
            &walkers,
            vec![
                p("gap", "m", Length, Some(10.0)),
                p("duration", "s", Duration, Some(5.0)),
            ],
        );
        add(
            "Stop",
            Longitudinal,
            ActionKind::Stop,
            false,
            1,
            &[],
            vec![p("brake", "ratio", Ratio, Some(0.5))],
        );
        for (name, kind) in [
            ("LaneChangeLeft", ActionKind::LaneChangeLeft),
            ("LaneChangeRight", ActionKind::LaneChangeRight),
        ] {
            add(
                name,
                Lateral,
                kind,
                false,
                2,
                &walkers,
                vec![
                    p("lane_width", "m", Length, Some(3.5)),
                    p("duration", "s", Duration, Some(3.0)),
                ],
            );
        }
        for (name, kind) in [
            ("TurnLeft", ActionKind::TurnLeft),
            ("TurnRight", ActionKind::TurnRight),
        ] {
            add(
                name,
                Lateral,
                kind,
                false,
                2,
                &[],
                vec![
                    p("radius", "m", Length, Some(6.0)),
                    p("angle", "rad", Angle, Some(FRAC_PI_2)),
                ],
            );
        }
        add(
            "InLocationRadius",
            Condition,
            ActionKind::InLocationRadius,
            false,
            1,
            &[],
            vec![
                p("x", "m", Position, None),
                p("y", "m", Position, None),
                p("radius", "m", Length, Some(2.0)),
            ],
        );
        add(
            "InVehicleRadius",
            Condition,
            ActionKind::InVehicleRadius,
            true,
            1,
            &[],
            vec![p("radius", "m", Length, Some(10.0))],
        );
        add(
            "TimeElapsed",
            Condition,
            ActionKind::TimeElapsed,
            false,
            1,
            &[],
            vec![p("duration", "s", Duration, Some(1.0))],
        );
        add(
            "SpeedReached",
            Condition,
            ActionKind::SpeedReached,
            false,
            1,
            &[],
            vec![p("speed", "m/s", Speed, Some(5.0))],
        );

        let mut bounds = BTreeMap::new();
        bounds.insert(
            ActorCategory::Pedestrian,
            CategoryBounds {
                max_speed: 4.2,
                max_accel: 3.0,
                length: 0.5,
                width: 0.5,
            },
        );
        bounds.insert(
            ActorCategory::TwoWheeler,
            CategoryBounds {
                max_speed: 16.7,
                max_accel: 4.0,
                length: 1.8,
                width: 0.6,
            },
        );
        bounds.insert(
            ActorCategory::FourWheeler,
            CategoryBounds {
                max_speed: 69.4,
                max_accel: 9.0,
                length: 4.5,
                width: 1.9,
            },
        );

        let conflicts = [
            ("Accelerate", "Decelerate"),
            ("Accelerate", "Stop"),
            ("LaneChangeLeft", "LaneChangeRight"),
            ("TurnLeft", "TurnRight"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();

        Registry {
            actions,
            bounds,
            conflicts,
        }
    }

    pub fn action(&self, name: &str) -> Option<&ActionSpec> {
        self.actions.get(name)
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionSpec> {
        self.actions.values()
    }

    pub fn bounds(&self, category: ActorCategory) -> CategoryBounds {
        self.bounds[&category]
    }

    /// Whether two action types may not run simultaneously on one actor.
    pub fn conflicts(&self, a: &str, b: &str) -> bool {
        self.conflicts
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    pub fn conflict_pairs(&self) -> &[(String, String)] {
        &self.conflicts
    }

    /// Adds or replaces an action entry.
    pub fn insert_action(&mut self, spec: ActionSpec) {
        self.actions.insert(spec.name.clone(), spec);
    }

    pub fn apply(&mut self, overrides: &RegistryOverrides) -> Result<(), String> {
        for (category, patch) in &overrides.bounds {
            let b = self.bounds.get_mut(category).expect("all categories present");
            if let Some(v) = patch.max_speed {
                b.max_speed = v;
            }
            if let Some(v) = patch.max_accel {
                b.max_accel = v;
            }
            if let Some(v) = patch.length {
                b.length = v;
            }
            if let Some(v) = patch.width {
                b.width = v;
            }
        }
        for (action, defaults) in &overrides.defaults {
            let spec = self
                .actions
                .get_mut(action)
                .ok_or_else(|| format!("unknown action '{action}' in defaults"))?;
            for (key, value) in defaults {
                let param = spec
                    .params
                    .iter_mut()
                    .find(|p| &p.name == key)
                    .ok_or_else(|| format!("unknown parameter '{action}.{key}' in defaults"))?;
                param.default = Some(*value);
            }
        }
        for pair in &overrides.conflicts {
            if !self.conflicts(&pair[0], &pair[1]) {
                self.conflicts.push((pair[0].clone(), pair[1].clone()));
            }
        }
        Ok(())
    }

    /// Builtin table with a TOML override document applied.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let overrides: RegistryOverrides = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut registry = Registry::builtin();
        registry.apply(&overrides)?;
        Ok(registry)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsPatch {
    pub max_speed: Option<f64>,
    pub max_accel: Option<f64>,
    pub length: Option<f64>,
    pub width: Option<f64>,
}

/// Config-file overrides for the registry tables.
///
/// ```toml
/// [bounds.pedestrian]
/// max_speed = 3.0
///
/// [defaults.Accelerate]
/// throttle = 0.6
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryOverrides {
    #[serde(default)]
    pub bounds: BTreeMap<ActorCategory, BoundsPatch>,
    #[serde(default)]
    pub defaults: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub conflicts: Vec<[String; 2]>,
}
