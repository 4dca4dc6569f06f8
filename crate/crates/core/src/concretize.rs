//! Level classification, registry defaults and logical-to-concrete
//! generation.
//!
//! Free parameters are Range and Set values on action nodes, actor start
//! states and environment entries. Plans and generated graphs are computed on
//! the flattened graph, so parameters inside module instances are addressed
//! by their flattened node ids.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AbstractionLevel, ActorId, GraphNode, NodeId, ParamValue, ScenarioGraph};
use crate::modules::{self, ModuleError};
use crate::registry::Registry;

/// Name of the generator behind [`sample`]. Frozen for format version 1.
pub const SAMPLER: &str = "chacha8-v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcretizeError {
    #[error("level error: operation needs a logical or concrete scenario, found {found}")]
    LevelError { found: AbstractionLevel },
    #[error("no registry default for required parameter '{key}' of {owner}")]
    MissingDefault { owner: String, key: String },
    #[error("index {index} out of range for {total} variants")]
    OutOfRange { index: u64, total: u64 },
    #[error("parameter space too large to count")]
    TooLarge,
    #[error("plan does not match scenario: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Module(#[from] ModuleError),
}

/// Where a free parameter lives.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamOwner {
    Actor(ActorId),
    Environment,
    Node(NodeId),
}

impl std::fmt::Display for ParamOwner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamOwner::Actor(a) => write!(f, "actor '{a}'"),
            ParamOwner::Environment => f.write_str("environment"),
            ParamOwner::Node(n) => write!(f, "node '{n}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub owner: ParamOwner,
    pub key: String,
    pub value: ParamValue,
}

impl FreeParam {
    pub fn cardinality(&self) -> u64 {
        self.value.cardinality()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcretizationPlan {
    pub free_params: Vec<FreeParam>,
    pub total_count: u64,
}

impl ConcretizationPlan {
    /// Grid index of every free parameter for variant `index`; the last
    /// parameter varies fastest.
    pub fn digits(&self, index: u64) -> Result<Vec<u64>, ConcretizeError> {
        if index >= self.total_count {
            return Err(ConcretizeError::OutOfRange {
                index,
                total: self.total_count,
            });
        }
        let mut rest = index;
        let mut digits = vec![0; self.free_params.len()];
        for (d, p) in digits.iter_mut().zip(&self.free_params).rev() {
            let n = p.cardinality();
            *d = rest % n;
            rest /= n;
        }
        Ok(digits)
    }

    pub fn to_json(&self) -> String {
        crate::model::document::to_pretty_json(self)
    }
}

fn flat(graph: &ScenarioGraph) -> Result<ScenarioGraph, ConcretizeError> {
    Ok(modules::flatten(graph)?)
}

/// Lowest level over all required parameters, actor start states and
/// free environment entries.
pub fn classify_level(graph: &ScenarioGraph, registry: &Registry) -> AbstractionLevel {
    let g = modules::flatten(graph).unwrap_or_else(|_| graph.clone());
    let mut level = AbstractionLevel::Concrete;
    for node in g.nodes() {
        let Some(action) = node.action() else {
            continue;
        };
        if let Some(spec) = registry.action(&action.action_type) {
            for p in spec.params.iter().filter(|p| p.required) {
                level = level.min(action.param(&p.name).level());
            }
        }
    }
    for actor in g.actors() {
        for (_, v) in actor.start_params() {
            level = level.min(v.level());
        }
    }
    for v in g.environment().values() {
        if !v.is_unset() {
            level = level.min(v.level());
        }
    }
    level
}

fn fill_node(node: &mut GraphNode, registry: &Registry) -> Result<bool, ConcretizeError> {
    let id = node.id.clone();
    let Some(action) = node.action_mut() else {
        return Ok(false);
    };
    let Some(spec) = registry.action(&action.action_type) else {
        return Ok(false);
    };
    let mut changed = false;
    for p in spec.params.iter().filter(|p| p.required) {
        if action.param(&p.name).is_unset() {
            let default = p.default.ok_or_else(|| ConcretizeError::MissingDefault {
                owner: ParamOwner::Node(id.clone()).to_string(),
                key: p.name.clone(),
            })?;
            action
                .params
                .insert(p.name.clone(), ParamValue::scalar(default, &p.unit));
            changed = true;
        }
    }
    Ok(changed)
}

/// Replaces every unset required parameter with its registry default. Unset
/// start speeds become 0 m/s; start poses have no default.
pub fn apply_defaults(
    graph: &ScenarioGraph,
    registry: &Registry,
) -> Result<ScenarioGraph, ConcretizeError> {
    let mut g = graph.clone();
    for node in &mut g.nodes {
        fill_node(node, registry)?;
        if let crate::model::NodePayload::ModuleInstance(inst) = &mut node.payload {
            for values in inst.overrides.values_mut() {
                values.retain(|_, v| !v.is_unset());
            }
        }
    }
    for def in g.module_defs.values_mut() {
        let mut changed = false;
        for el in &mut def.elements {
            changed |= fill_node(el, registry)?;
        }
        if changed {
            def.revision = modules::compute_revision(def);
        }
    }
    for actor in &mut g.actors {
        if actor.start_speed.is_unset() {
            actor.start_speed = ParamValue::scalar(0.0, "m/s");
        }
        for (field, v) in actor.start_params() {
            if v.is_unset() {
                return Err(ConcretizeError::MissingDefault {
                    owner: ParamOwner::Actor(actor.id.clone()).to_string(),
                    key: field.to_string(),
                });
            }
        }
    }
    Ok(g)
}

/// Lists the free parameters of a logical or concrete scenario.
pub fn plan(graph: &ScenarioGraph, registry: &Registry) -> Result<ConcretizationPlan, ConcretizeError> {
    let level = classify_level(graph, registry);
    if level == AbstractionLevel::Functional {
        return Err(ConcretizeError::LevelError { found: level });
    }
    let g = flat(graph)?;
    let is_free = |v: &ParamValue| v.level() == AbstractionLevel::Logical;
    let mut free = Vec::new();
    for actor in g.actors() {
        for (field, v) in actor.start_params() {
            if is_free(v) {
                free.push(FreeParam {
                    owner: ParamOwner::Actor(actor.id.clone()),
                    key: field.to_string(),
                    value: v.clone(),
                });
            }
        }
    }
    for (key, v) in g.environment() {
        if is_free(v) {
            free.push(FreeParam {
                owner: ParamOwner::Environment,
                key: key.clone(),
                value: v.clone(),
            });
        }
    }
    for node in g.nodes() {
        if let Some(action) = node.action() {
            for (key, v) in &action.params {
                if is_free(v) {
                    free.push(FreeParam {
                        owner: ParamOwner::Node(node.id.clone()),
                        key: key.clone(),
                        value: v.clone(),
                    });
                }
            }
        }
    }
    free.sort_by(|a, b| (&a.owner, &a.key).cmp(&(&b.owner, &b.key)));
    let total_count = free
        .iter()
        .try_fold(1u64, |acc, p| acc.checked_mul(p.cardinality()))
        .ok_or(ConcretizeError::TooLarge)?;
    Ok(ConcretizationPlan {
        free_params: free,
        total_count,
    })
}

fn assign(
    graph: &ScenarioGraph,
    plan: &ConcretizationPlan,
    digits: &[u64],
) -> Result<ScenarioGraph, ConcretizeError> {
    let mut g = flat(graph)?;
    for (p, &d) in plan.free_params.iter().zip(digits) {
        let value = p
            .value
            .grid_point(d)
            .ok_or_else(|| ConcretizeError::PlanMismatch(format!("{} {}", p.owner, p.key)))?;
        let scalar = ParamValue::Scalar {
            value,
            unit: p.value.unit().to_string(),
        };
        let missing = || ConcretizeError::PlanMismatch(format!("{} has no {}", p.owner, p.key));
        let slot = match &p.owner {
            ParamOwner::Actor(id) => g
                .actors
                .iter_mut()
                .find(|a| &a.id == id)
                .and_then(|a| a.start_param_mut(&p.key)),
            ParamOwner::Environment => g.environment.get_mut(&p.key),
            ParamOwner::Node(id) => g
                .node_mut(id)
                .and_then(GraphNode::action_mut)
                .and_then(|a| a.params.get_mut(&p.key)),
        };
        *slot.ok_or_else(missing)? = scalar;
    }
    g.set_level(AbstractionLevel::Concrete);
    Ok(g)
}

/// Variant `index` in mixed-radix order; index 0 takes every minimum.
pub fn enumerate(
    graph: &ScenarioGraph,
    plan: &ConcretizationPlan,
    index: u64,
) -> Result<ScenarioGraph, ConcretizeError> {
    let digits = plan.digits(index)?;
    assign(graph, plan, &digits)
}

/// Draws every free parameter uniformly from its grid using [`SAMPLER`].
pub fn sample(
    graph: &ScenarioGraph,
    plan: &ConcretizationPlan,
    seed: u64,
) -> Result<ScenarioGraph, ConcretizeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let digits: Vec<u64> = plan
        .free_params
        .iter()
        .map(|p| uniform_below(&mut rng, p.cardinality()))
        .collect();
    assign(graph, plan, &digits)
}

/// Unbiased draw from `0..n` by rejection.
fn uniform_below(rng: &mut impl RngCore, n: u64) -> u64 {
    let limit = u64::MAX - u64::MAX % n;
    loop {
        let x = rng.next_u64();
        if x < limit {
            return x % n;
        }
    }
}
