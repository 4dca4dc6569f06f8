use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::AbstractionLevel;

/// A single parameter value: a number or a piece of text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(v) => Some(*v),
            Scalar::Text(_) => None,
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Number(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Text(v.to_string())
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Number(v) => write!(f, "{v}"),
            Scalar::Text(s) => f.write_str(s),
        }
    }
}

/// Parameter value carrying abstraction-level semantics.
///
/// `Unset` is legal only at the functional level, `Range` and `Set` up to the
/// logical level, and concrete scenarios use `Scalar` throughout.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ParamValue {
    #[default]
    Unset,
    Scalar {
        value: Scalar,
        unit: String,
    },
    /// Grid `min, min + step, ...` up to and including `max` when
    /// `max - min` is a multiple of `step`.
    Range {
        min: f64,
        max: f64,
        step: f64,
        unit: String,
    },
    Set {
        values: Vec<Scalar>,
        unit: String,
    },
}

impl ParamValue {
    pub fn scalar(value: impl Into<Scalar>, unit: &str) -> Self {
        ParamValue::Scalar {
            value: value.into(),
            unit: unit.to_string(),
        }
    }

    pub fn range(min: f64, max: f64, step: f64, unit: &str) -> Result<Self, String> {
        let v = ParamValue::Range {
            min,
            max,
            step,
            unit: unit.to_string(),
        };
        v.check().map(|_| v)
    }

    pub fn set(values: Vec<Scalar>, unit: &str) -> Result<Self, String> {
        let v = ParamValue::Set {
            values,
            unit: unit.to_string(),
        };
        v.check().map(|_| v)
    }

    pub fn check(&self) -> Result<(), String> {
        match self {
            ParamValue::Range { min, max, step, .. } => {
                if !(min.is_finite() && max.is_finite() && step.is_finite()) {
                    Err("range bounds must be finite".into())
                } else if min > max {
                    Err(format!("range min {min} exceeds max {max}"))
                } else if *step <= 0.0 {
                    Err(format!("range step {step} must be positive"))
                } else {
                    Ok(())
                }
            }
            ParamValue::Set { values, .. } if values.is_empty() => {
                Err("discrete set must not be empty".into())
            }
            _ => Ok(()),
        }
    }

    /// Highest abstraction level at which this value is admissible.
    pub fn level(&self) -> AbstractionLevel {
        match self {
            ParamValue::Unset => AbstractionLevel::Functional,
            ParamValue::Range { .. } | ParamValue::Set { .. } => AbstractionLevel::Logical,
            ParamValue::Scalar { .. } => AbstractionLevel::Concrete,
        }
    }

    pub fn is_unset(&self) -> bool {
        matches!(self, ParamValue::Unset)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar { value, .. } => value.as_f64(),
            _ => None,
        }
    }

    pub fn unit(&self) -> &str {
        match self {
            ParamValue::Unset => "",
            ParamValue::Scalar { unit, .. }
            | ParamValue::Range { unit, .. }
            | ParamValue::Set { unit, .. } => unit,
        }
    }

    /// Number of grid points for free values; 1 for scalars and unset.
    pub fn cardinality(&self) -> u64 {
        match self {
            ParamValue::Range { min, max, step, .. } => range_len(*min, *max, *step),
            ParamValue::Set { values, .. } => values.len() as u64,
            _ => 1,
        }
    }

    /// The `index`-th grid point of a free value.
    pub fn grid_point(&self, index: u64) -> Option<Scalar> {
        match self {
            ParamValue::Range { min, max, step, .. } => (index < range_len(*min, *max, *step))
                .then(|| Scalar::Number(grid_value(*min, *step, index))),
            ParamValue::Set { values, .. } => values.get(index as usize).cloned(),
            _ => None,
        }
    }

    /// Numeric values this parameter can take (scalars, range end points,
    /// numeric set members).
    pub fn numeric_extremes(&self) -> Vec<f64> {
        match self {
            ParamValue::Unset => Vec::new(),
            ParamValue::Scalar { value, .. } => value.as_f64().into_iter().collect(),
            ParamValue::Range { min, max, step, .. } => {
                let n = range_len(*min, *max, *step);
                vec![*min, grid_value(*min, *step, n - 1)]
            }
            ParamValue::Set { values, .. } => values.iter().filter_map(Scalar::as_f64).collect(),
        }
    }
}

// Relative slack so that e.g. (0.3 - 0.1) / 0.1 counts as 2 steps.
const GRID_EPS: f64 = 1e-9;

/// `floor((max - min) / step) + 1`.
pub(crate) fn range_len(min: f64, max: f64, step: f64) -> u64 {
    ((max - min) / step + GRID_EPS).floor() as u64 + 1
}

fn grid_value(min: f64, step: f64, index: u64) -> f64 {
    let v = min + step * index as f64;
    // Snap representation noise such as 0.30000000000000004 to its shortest
    // neighbour so exported documents stay readable.
    let rounded = (v * 1e9).round() / 1e9;
    if (rounded - v).abs() <= 1e-12 * v.abs().max(1.0) {
        rounded
    } else {
        v
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    scalar: Option<Scalar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    set: Option<Vec<Scalar>>,
    #[serde(default)]
    unit: String,
}

impl Serialize for ParamValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let record = match self {
            ParamValue::Unset => return serializer.serialize_none(),
            ParamValue::Scalar { value, unit } => ParamRecord {
                scalar: Some(value.clone()),
                range: None,
                set: None,
                unit: unit.clone(),
            },
            ParamValue::Range {
                min,
                max,
                step,
                unit,
            } => ParamRecord {
                scalar: None,
                range: Some([*min, *max, *step]),
                set: None,
                unit: unit.clone(),
            },
            ParamValue::Set { values, unit } => ParamRecord {
                scalar: None,
                range: None,
                set: Some(values.clone()),
                unit: unit.clone(),
            },
        };
        record.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ParamValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let Some(record) = Option::<ParamRecord>::deserialize(deserializer)? else {
            return Ok(ParamValue::Unset);
        };
        let value = match (record.scalar, record.range, record.set) {
            (Some(value), None, None) => ParamValue::Scalar {
                value,
                unit: record.unit,
            },
            (None, Some([min, max, step]), None) => ParamValue::Range {
                min,
                max,
                step,
                unit: record.unit,
            },
            (None, None, Some(values)) => ParamValue::Set {
                values,
                unit: record.unit,
            },
            _ => {
                return Err(D::Error::custom(
                    "parameter needs exactly one of `scalar`, `range`, `set`",
                ))
            }
        };
        value.check().map_err(D::Error::custom)?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_cardinality_follows_floor_formula() {
        assert_eq!(ParamValue::range(3.0, 8.0, 1.0, "m/s").unwrap().cardinality(), 6);
        assert_eq!(ParamValue::range(3.0, 8.5, 1.0, "m/s").unwrap().cardinality(), 6);
        assert_eq!(ParamValue::range(0.1, 0.3, 0.1, "").unwrap().cardinality(), 3);
        assert_eq!(ParamValue::range(2.0, 2.0, 0.5, "").unwrap().cardinality(), 1);
    }

    #[test]
    fn grid_points_walk_from_min() {
        let r = ParamValue::range(0.1, 0.3, 0.1, "").unwrap();
        assert_eq!(r.grid_point(0), Some(Scalar::Number(0.1)));
        assert_eq!(r.grid_point(2), Some(Scalar::Number(0.3)));
        assert_eq!(r.grid_point(3), None);
    }

    #[test]
    fn invalid_ranges_and_sets_are_rejected() {
        assert!(ParamValue::range(5.0, 3.0, 1.0, "").is_err());
        assert!(ParamValue::range(3.0, 5.0, 0.0, "").is_err());
        assert!(ParamValue::set(vec![], "").is_err());
        assert!(serde_json::from_str::<ParamValue>(r#"{"range": [1, 0, 1]}"#).is_err());
        assert!(serde_json::from_str::<ParamValue>(r#"{"set": []}"#).is_err());
        assert!(serde_json::from_str::<ParamValue>(r#"{"scalar": 1, "set": [1]}"#).is_err());
    }

    #[test]
    fn encodings_match_document_format() {
        let cases = [
            (ParamValue::Unset, "null"),
            (ParamValue::scalar(5.0, "m/s"), r#"{"scalar":5.0,"unit":"m/s"}"#),
            (ParamValue::scalar("red", ""), r#"{"scalar":"red","unit":""}"#),
            (
                ParamValue::range(3.0, 8.0, 1.0, "m/s").unwrap(),
                r#"{"range":[3.0,8.0,1.0],"unit":"m/s"}"#,
            ),
            (
                ParamValue::set(vec![5.0.into(), 10.0.into()], "m").unwrap(),
                r#"{"set":[5.0,10.0],"unit":"m"}"#,
            ),
        ];
        for (value, text) in cases {
            assert_eq!(serde_json::to_string(&value).unwrap(), text);
            assert_eq!(serde_json::from_str::<ParamValue>(text).unwrap(), value);
        }
    }
}
