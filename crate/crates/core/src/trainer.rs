//! Cross-data label completion loop.
//!
//! Each iteration trains a network on every instance with at least one
//! label, predicts the missing cells of every incomplete instance, and for
//! each task writes the `k` most confident predictions into the label grid.
//! The loop stops once no cell is missing, when the iteration limit is hit,
//! or when an iteration accepts nothing.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use log::info;
use thiserror::Error;

use crate::dataset::{split, AffineScale, LabelCell, MultiTargetDataset};
use crate::eval::{evaluate, metric_column, EvalError, MetricReport};
use crate::model::{init_network, predict, train, ModelError, MtShlNetwork, NetworkConfig, RawOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct CdlcConfig {
    /// Cells pseudo-labeled per task and iteration.
    pub select_per_task: usize,
    pub max_iterations: Option<usize>,
    /// Per-task confidence floor, keyed by task name.
    pub min_confidence: BTreeMap<String, f64>,
    pub retrain_from_scratch: bool,
    pub eval_every_iteration: bool,
    pub network: NetworkConfig,
}

impl Default for CdlcConfig {
    fn default() -> Self {
        CdlcConfig {
            select_per_task: 1000,
            max_iterations: None,
            min_confidence: BTreeMap::new(),
            retrain_from_scratch: true,
            eval_every_iteration: true,
            network: NetworkConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CdlcError {
    #[error("no labeled instance to train on")]
    NoLabels,
    #[error("select_per_task must be at least 1")]
    InvalidK,
    #[error("min_confidence given for unknown task '{0}'")]
    UnknownTask(String),
    #[error("evaluation set does not share the feature space and tasks of the training data")]
    SchemaMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub instance: usize,
    pub task: usize,
    /// Label as stored in the grid (regression: standardized units).
    pub grid_label: LabelCell,
    /// Label in original units.
    pub label: LabelCell,
    pub confidence: f64,
}

/// Ordering used for selection: higher confidence first, then lower
/// instance index.
pub fn selection_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.confidence.total_cmp(&a.confidence).then(a.instance.cmp(&b.instance))
}

/// Picks the `k` most confident candidates of one task (ties go to the lower
/// instance index). Candidates below `min_confidence` are dropped first.
/// The result is in selection order.
pub fn select_top_k(candidates: &[Candidate], k: usize, min_confidence: Option<f64>) -> Vec<Candidate> {
    let mut pool: Vec<Candidate> = match min_confidence {
        Some(floor) => candidates.iter().filter(|c| c.confidence >= floor).copied().collect(),
        None => candidates.to_vec(),
    };
    if k == 0 {
        return Vec::new();
    }
    if pool.len() > k {
        pool.select_nth_unstable_by(k - 1, selection_order);
        pool.truncate(k);
    }
    pool.sort_unstable_by(selection_order);
    pool
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelAssignment {
    pub instance: usize,
    pub task: usize,
    /// Assigned label in original units.
    pub label: LabelCell,
    pub confidence: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskIterationStats {
    pub filled: usize,
    /// Confidence of the last (least confident) accepted cell.
    pub boundary_confidence: Option<f64>,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tasks: Vec<TaskIterationStats>,
    /// Test-set metrics of the model trained at the start of this iteration.
    pub metrics: Option<MetricReport>,
    pub frozen_tasks: Vec<usize>,
    pub duration: Duration,
}

impl IterationRecord {
    pub fn filled(&self) -> usize {
        self.tasks.iter().map(|t| t.filled).sum()
    }

    pub fn remaining(&self) -> usize {
        self.tasks.iter().map(|t| t.remaining).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdlcStatus {
    Complete,
    MaxIterations,
    /// An iteration accepted no cell (every candidate under its threshold).
    Stalled,
}

impl std::fmt::Display for CdlcStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CdlcStatus::Complete => "complete",
            CdlcStatus::MaxIterations => "max-iterations",
            CdlcStatus::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone)]
pub struct CdlcOutcome {
    /// Completed grid, in the same units as the input dataset.
    pub dataset: MultiTargetDataset,
    pub records: Vec<IterationRecord>,
    pub assignments: Vec<PseudoLabelAssignment>,
    pub status: CdlcStatus,
    /// Test-set metrics of a model trained on the final grid.
    pub final_metrics: Option<MetricReport>,
    /// The model behind `final_metrics`.
    pub final_network: Option<MtShlNetwork>,
}

/// Runs label completion with identity target scaling.
pub fn run_cdlc(
    ds: &MultiTargetDataset,
    config: &CdlcConfig,
    eval_set: Option<&MultiTargetDataset>,
) -> Result<CdlcOutcome, CdlcError> {
    let scales = vec![AffineScale::identity(); ds.num_tasks()];
    run_cdlc_scaled(ds, config, eval_set, &scales)
}

/// Runs label completion on a dataset whose regression targets are
/// standardized by `target_scales`. Assignment labels and evaluation use
/// original units; the grid stays standardized.
pub fn run_cdlc_scaled(
    ds: &MultiTargetDataset,
    config: &CdlcConfig,
    eval_set: Option<&MultiTargetDataset>,
    target_scales: &[AffineScale],
) -> Result<CdlcOutcome, CdlcError> {
    if config.select_per_task == 0 {
        return Err(CdlcError::InvalidK);
    }
    if let Some(name) = config.min_confidence.keys().find(|n| ds.task_index(n).is_none()) {
        return Err(CdlcError::UnknownTask(name.clone()));
    }
    if eval_set.is_some_and(|e| !e.same_schema(ds)) {
        return Err(CdlcError::SchemaMismatch);
    }
    assert_eq!(target_scales.len(), ds.num_tasks());
    if split(ds).labeled.is_empty() {
        return Err(CdlcError::NoLabels);
    }
    config.network.validate()?;
    let floors: Vec<Option<f64>> = ds.tasks.iter().map(|t| config.min_confidence.get(&t.name).copied()).collect();

    let mut grid = ds.clone();
    let mut records = Vec::new();
    let mut assignments = Vec::new();
    let mut previous: Option<MtShlNetwork> = None;
    let status = loop {
        let view = split(&grid);
        if view.incomplete.is_empty() {
            break CdlcStatus::Complete;
        }
        let iteration = records.len();
        if config.max_iterations.is_some_and(|max| iteration >= max) {
            break CdlcStatus::MaxIterations;
        }
        let started = Instant::now();
        let trained = fit(&grid, config, iteration, target_scales, previous.take(), &view.labeled)?;
        let net = trained.network;

        let metrics = match eval_set {
            Some(e) if config.eval_every_iteration => Some(evaluate(&net, e)?),
            _ => None,
        };

        let mut per_task: Vec<Vec<Candidate>> = vec![Vec::new(); grid.num_tasks()];
        for row in predict(&net, &grid, &view.incomplete)? {
            for p in row.tasks {
                if grid.label(row.row, p.task).is_defined() {
                    continue;
                }
                let grid_label = match p.raw {
                    RawOutput::Value(v) => LabelCell::Real(v),
                    RawOutput::Probabilities(_) => p.label,
                };
                per_task[p.task].push(Candidate {
                    instance: row.row,
                    task: p.task,
                    grid_label,
                    label: p.label,
                    confidence: p.confidence,
                });
            }
        }

        let mut stats = Vec::with_capacity(grid.num_tasks());
        for (t, candidates) in per_task.iter().enumerate() {
            let chosen = select_top_k(candidates, config.select_per_task, floors[t]);
            for c in &chosen {
                debug_assert!(!grid.label(c.instance, t).is_defined());
                grid.set_label(c.instance, t, c.grid_label);
                assignments.push(PseudoLabelAssignment {
                    instance: c.instance,
                    task: t,
                    label: c.label,
                    confidence: c.confidence,
                    iteration,
                });
            }
            stats.push(TaskIterationStats {
                filled: chosen.len(),
                boundary_confidence: chosen.last().map(|c| c.confidence),
                remaining: grid.undefined_count(t),
            });
        }
        let record = IterationRecord {
            iteration,
            tasks: stats,
            metrics,
            frozen_tasks: trained.frozen_tasks,
            duration: started.elapsed(),
        };
        info!(
            "iteration {iteration}: filled {} cells, {} remaining ({:.1?})",
            record.filled(),
            record.remaining(),
            record.duration
        );
        let stalled = record.filled() == 0;
        records.push(record);
        if !config.retrain_from_scratch {
            previous = Some(net);
        }
        if stalled {
            break CdlcStatus::Stalled;
        }
    };

    let (final_metrics, final_network) = match eval_set {
        Some(e) => {
            let labeled = split(&grid).labeled;
            let trained = fit(&grid, config, records.len(), target_scales, previous, &labeled)?;
            (Some(evaluate(&trained.network, e)?), Some(trained.network))
        }
        None => (None, None),
    };

    Ok(CdlcOutcome { dataset: grid, records, assignments, status, final_metrics, final_network })
}

fn fit(
    grid: &MultiTargetDataset,
    config: &CdlcConfig,
    iteration: usize,
    target_scales: &[AffineScale],
    previous: Option<MtShlNetwork>,
    rows: &[usize],
) -> Result<crate::model::Trained, CdlcError> {
    let seed = config.network.seed.wrapping_add(iteration as u64);
    let net = match previous {
        Some(mut net) => {
            net.config.seed = seed;
            net
        }
        None => {
            let cfg = NetworkConfig { seed, ..config.network.clone() };
            let mut net = init_network(&cfg, grid.num_features(), &grid.tasks)?;
            net.target_scales = target_scales.to_vec();
            net
        }
    };
    Ok(train(&net, grid, rows)?)
}

/// Formats a float for CSV output; negative zero prints as `0`.
pub fn csv_float(x: f64) -> String {
    format!("{}", x + 0.0)
}

/// Writes `assignments.csv`: one row per pseudo-label.
pub fn write_assignments_csv(
    mut w: impl Write,
    ds: &MultiTargetDataset,
    assignments: &[PseudoLabelAssignment],
) -> io::Result<()> {
    writeln!(w, "iteration,instance,dataset_origin,task,label,confidence")?;
    for a in assignments {
        let task = &ds.tasks[a.task];
        let label = match a.label {
            LabelCell::Real(v) => csv_float(v),
            other => csv_text(&task.format_label(&other)),
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            a.iteration,
            a.instance,
            ds.origin[a.instance],
            csv_text(&task.name),
            label,
            csv_float(a.confidence)
        )?;
    }
    Ok(())
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `iterations.csv`: one `iteration` row per record, plus a `final`
/// row holding the metrics of the model trained on the completed grid.
/// Wall-clock durations are left out so that reruns are byte-identical.
pub fn write_iterations_csv(mut w: impl Write, ds: &MultiTargetDataset, outcome: &CdlcOutcome) -> io::Result<()> {
    let mut header = vec!["phase".to_string(), "iteration".to_string()];
    for t in &ds.tasks {
        header.push(csv_text(&format!("filled_{}", t.name)));
        header.push(csv_text(&format!("boundary_confidence_{}", t.name)));
        header.push(csv_text(&format!("remaining_{}", t.name)));
    }
    for t in &ds.tasks {
        header.push(csv_text(&metric_column(t)));
    }
    writeln!(w, "{}", header.join(","))?;

    let metric_cells = |m: Option<&MetricReport>| -> Vec<String> {
        ds.tasks
            .iter()
            .map(|t| match m {
                None => String::new(),
                Some(m) => m.value(&t.name).map_or_else(|| "NaN".to_string(), csv_float),
            })
            .collect()
    };
    for r in &outcome.records {
        let mut row = vec!["iteration".to_string(), r.iteration.to_string()];
        for s in &r.tasks {
            row.push(s.filled.to_string());
            row.push(s.boundary_confidence.map(csv_float).unwrap_or_default());
            row.push(s.remaining.to_string());
        }
        row.extend(metric_cells(r.metrics.as_ref()));
        writeln!(w, "{}", row.join(","))?;
    }
    if let Some(m) = &outcome.final_metrics {
        let mut row = vec!["final".to_string(), outcome.records.len().to_string()];
        for t in 0..ds.num_tasks() {
            row.push("0".into());
            row.push(String::new());
            row.push(outcome.dataset.undefined_count(t).to_string());
        }
        row.extend(metric_cells(Some(m)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
