//! Batch operations over every variant of a logical scenario.
//!
//! With the `parallel` feature (default) variants are processed on the rayon
//! pool; without it they run in a plain loop. Both produce identical rows in
//! index order.

use serde::Serialize;
use thiserror::Error;

use crate::concretize::{self, ConcretizationPlan, ConcretizeError};
use crate::exec::{self, ExecError, OutcomeKind, TickConfig};
use crate::model::{ActorId, ScenarioGraph};
use crate::registry::Registry;
use crate::xosc::{self, ExportError, ExportOptions};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Concretize(#[from] ConcretizeError),
    #[error("variant {index}: {source}")]
    Exec { index: u64, source: ExecError },
    #[error("variant {index}: {source}")]
    Export { index: u64, source: ExportError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: u64,
    pub outcome: OutcomeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collision: Option<[ActorId; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_time: Option<f64>,
    pub end_time: f64,
    pub min_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub plan: ConcretizationPlan,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn count(&self, kind: OutcomeKind) -> usize {
        self.rows.iter().filter(|r| r.outcome == kind).count()
    }

    /// Comma-separated, one line per variant:
    /// `index,outcome,actors,min_distance,completion_time`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("index,outcome,actors,min_distance,completion_time\n");
        for r in &self.rows {
            let actors = r
                .collision
                .as_ref()
                .map_or(String::new(), |[a, b]| format!("{a}+{b}"));
            let d = r.min_distance.map_or(String::new(), |d| format!("{d:.3}"));
            let t = r.completion_time.map_or(String::new(), |t| format!("{t:.2}"));
            out.push_str(&format!("{},{},{actors},{d},{t}\n", r.index, r.outcome));
        }
        out
    }

    pub fn to_json(&self) -> String {
        crate::model::document::to_pretty_json(self)
    }
}

#[cfg(feature = "parallel")]
fn map_indices<T: Send>(
    total: u64,
    f: impl Fn(u64) -> Result<T, SweepError> + Sync + Send,
) -> Result<Vec<T>, SweepError> {
    use rayon::prelude::*;
    (0..total).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indices<T: Send>(
    total: u64,
    f: impl Fn(u64) -> Result<T, SweepError> + Sync + Send,
) -> Result<Vec<T>, SweepError> {
    sequential(total, f)
}

fn sequential<T>(total: u64, f: impl Fn(u64) -> Result<T, SweepError>) -> Result<Vec<T>, SweepError> {
    (0..total).map(f).collect()
}

fn run_variant(
    graph: &ScenarioGraph,
    registry: &Registry,
    plan: &ConcretizationPlan,
    config: &TickConfig,
    index: u64,
) -> Result<SweepRow, SweepError> {
    let variant = concretize::enumerate(graph, plan, index)?;
    let trace =
        exec::run(&variant, registry, config).map_err(|source| SweepError::Exec { index, source })?;
    let summary = exec::outcome(&trace);
    Ok(SweepRow {
        index,
        outcome: summary.kind,
        collision: summary.collision,
        completion_time: summary.completion_time,
        end_time: summary.end_time,
        min_distance: summary.min_distance,
    })
}

fn sweep_config(config: &TickConfig) -> TickConfig {
    // Only outcomes are kept, so store first and last states only.
    TickConfig {
        sample_stride: u64::MAX,
        ..*config
    }
}

/// Executes every variant of `graph` and reports one row per index.
pub fn sweep(graph: &ScenarioGraph, registry: &Registry, config: &TickConfig) -> Result<SweepReport, SweepError> {
    let plan = concretize::plan(graph, registry)?;
    let config = sweep_config(config);
    let rows = map_indices(plan.total_count, |i| run_variant(graph, registry, &plan, &config, i))?;
    Ok(SweepReport { plan, rows })
}

/// [`sweep`] on the calling thread regardless of features.
pub fn sweep_sequential(
    graph: &ScenarioGraph,
    registry: &Registry,
    config: &TickConfig,
) -> Result<SweepReport, SweepError> {
    let plan = concretize::plan(graph, registry)?;
    let config = sweep_config(config);
    let rows = sequential(plan.total_count, |i| run_variant(graph, registry, &plan, &config, i))?;
    Ok(SweepReport { plan, rows })
}

/// Exports every variant; element `i` is the document for index `i`.
pub fn export_all(
    graph: &ScenarioGraph,
    registry: &Registry,
    options: &ExportOptions,
) -> Result<Vec<String>, SweepError> {
    let plan = concretize::plan(graph, registry)?;
    map_indices(plan.total_count, |index| {
        let variant = concretize::enumerate(graph, &plan, index)?;
        xosc::export(&variant, registry, options).map_err(|source| SweepError::Export { index, source })
    })
}
