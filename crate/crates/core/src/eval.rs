//! Evaluation metrics: unweighted average recall for classification tasks,
//! Pearson correlation for regression tasks, and pseudo-label quality
//! against withheld ground truth.

use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use thiserror::Error;

use crate::dataset::{LabelCell, LabelGrid, MultiTargetDataset, TaskKind, TaskSchema};
use crate::model::{ModelError, MtShlNetwork};
use crate::trainer::PseudoLabelAssignment;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric needs a non-empty input")]
    Empty,
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("class index {0} outside 0..{1}")]
    ClassOutOfRange(usize, usize),
    #[error("correlation needs at least 2 points")]
    TooFewPoints,
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set does not match the model: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Recall of every class; `None` for classes absent from `truth`.
pub fn per_class_recall(truth: &[usize], pred: &[usize], k: usize) -> Result<Vec<Option<f64>>, MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = vec![0usize; k];
    let mut correct = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(pred) {
        for c in [t, p] {
            if c >= k {
                return Err(MetricError::ClassOutOfRange(c, k));
            }
        }
        total[t] += 1;
        if t == p {
            correct[t] += 1;
        }
    }
    Ok(total.iter().zip(&correct).map(|(&n, &c)| (n > 0).then(|| c as f64 / n as f64)).collect())
}

/// Unweighted average recall over the classes present in `truth`.
pub fn uar(truth: &[usize], pred: &[usize], k: usize) -> Result<f64, MetricError> {
    let recalls: Vec<f64> = per_class_recall(truth, pred, k)?.into_iter().flatten().collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson_cc(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFewPoints);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskMetric {
    Classification { uar: f64, recalls: Vec<Option<f64>> },
    /// `cc` is `None` when the correlation is undefined (zero variance).
    Regression { cc: Option<f64> },
    /// No defined truth cell for this task.
    NotEvaluable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskReport {
    pub task: String,
    pub evaluated: usize,
    pub metric: TaskMetric,
}

impl TaskReport {
    /// The headline number: UAR or CC. `None` when unavailable.
    pub fn value(&self) -> Option<f64> {
        match self.metric {
            TaskMetric::Classification { uar, .. } => Some(uar),
            TaskMetric::Regression { cc } => cc,
            TaskMetric::NotEvaluable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub tasks: Vec<TaskReport>,
}

impl MetricReport {
    pub fn get(&self, task: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.task == task)
    }

    pub fn value(&self, task: &str) -> Option<f64> {
        self.get(task).and_then(TaskReport::value)
    }
}

/// Column name used in CSV output: `uar_<task>` or `cc_<task>`.
pub fn metric_column(task: &TaskSchema) -> String {
    match task.kind {
        TaskKind::Regression => format!("cc_{}", task.name),
        _ => format!("uar_{}", task.name),
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tasks {
            match &t.metric {
                TaskMetric::Classification { uar, recalls } => {
                    let r: Vec<String> = recalls
                        .iter()
                        .map(|r| r.map_or_else(|| "-".to_string(), |v| format!("{v:.4}")))
                        .collect();
                    writeln!(f, "{}: UAR {uar:.4} (n={}; per-class recall {})", t.task, t.evaluated, r.join(" "))?
                }
                TaskMetric::Regression { cc: Some(cc) } => writeln!(f, "{}: CC {cc:.4} (n={})", t.task, t.evaluated)?,
                TaskMetric::Regression { cc: None } => {
                    writeln!(f, "{}: CC NaN (undefined: zero variance; n={})", t.task, t.evaluated)?
                }
                TaskMetric::NotEvaluable => writeln!(f, "{}: not evaluable (no labeled instances)", t.task)?,
            }
        }
        Ok(())
    }
}

/// Scores predicted labels against the defined cells of `truth`. Regression
/// predictions and truth must be in the same units.
pub fn score_predictions(truth: &MultiTargetDataset, predictions: &[Vec<LabelCell>]) -> MetricReport {
    assert_eq!(truth.len(), predictions.len());
    let tasks = truth
        .tasks
        .iter()
        .enumerate()
        .map(|(t, task)| {
            let pairs: Vec<(LabelCell, LabelCell)> = (0..truth.len())
                .filter(|&i| truth.label(i, t).is_defined())
                .map(|i| (truth.label(i, t), predictions[i][t]))
                .collect();
            let metric = if pairs.is_empty() {
                TaskMetric::NotEvaluable
            } else {
                match &task.kind {
                    TaskKind::Regression => {
                        let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(a, b)| (real(*a), real(*b))).unzip();
                        let cc = match pearson_cc(&x, &y) {
                            Ok(cc) => Some(cc),
                            Err(e) => {
                                warn!("CC for task '{}' is undefined: {e}", task.name);
                                None
                            }
                        };
                        TaskMetric::Regression { cc }
                    }
                    kind => {
                        let k = kind.num_classes().expect("classification task");
                        let (x, y): (Vec<usize>, Vec<usize>) = pairs.iter().map(|(a, b)| (class(*a), class(*b))).unzip();
                        let recalls = per_class_recall(&x, &y, k).expect("non-empty, in-range classes");
                        let present: Vec<f64> = recalls.iter().flatten().copied().collect();
                        TaskMetric::Classification { uar: present.iter().sum::<f64>() / present.len() as f64, recalls }
                    }
                }
            };
            TaskReport { task: task.name.clone(), evaluated: pairs.len(), metric }
        })
        .collect();
    MetricReport { tasks }
}

fn real(c: LabelCell) -> f64 {
    match c {
        LabelCell::Real(v) => v,
        other => panic!("expected a real label, found {other:?}"),
    }
}

fn class(c: LabelCell) -> usize {
    match c {
        LabelCell::ClassIndex(k) => k,
        other => panic!("expected a class label, found {other:?}"),
    }
}

/// Deterministic-mode predictions of `net` for every row of `ds`.
pub fn predict_all(net: &MtShlNetwork, ds: &MultiTargetDataset) -> Result<Vec<Vec<LabelCell>>, EvalError> {
    check_schema(net, ds)?;
    (0..ds.len()).map(|i| net.predict_labels(ds.features(i)).map_err(EvalError::from)).collect()
}

fn check_schema(net: &MtShlNetwork, ds: &MultiTargetDataset) -> Result<(), EvalError> {
    if ds.num_features() != net.feature_dim {
        return Err(EvalError::SchemaMismatch(format!("{} features, model expects {}", ds.num_features(), net.feature_dim)));
    }
    let names: Vec<&String> = ds.tasks.iter().map(|t| &t.name).collect();
    if names.len() != net.task_names.len() || names.iter().zip(&net.task_names).any(|(a, b)| *a != b) {
        return Err(EvalError::SchemaMismatch(format!("tasks {names:?}, model has {:?}", net.task_names)));
    }
    Ok(())
}

/// Scores `net` on an evaluation set whose features are already transformed
/// like the training features and whose labels are in original units.
pub fn evaluate(net: &MtShlNetwork, eval_set: &MultiTargetDataset) -> Result<MetricReport, EvalError> {
    let preds = predict_all(net, eval_set)?;
    Ok(score_predictions(eval_set, &preds))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PseudoLabelQuality {
    Classification {
        correct: usize,
        /// iteration -> (correct, comparable)
        per_iteration: BTreeMap<usize, (usize, usize)>,
    },
    Regression {
        cc: Option<f64>,
        mae: f64,
    },
    NoComparableCells,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelReport {
    pub task: String,
    /// Assignments whose cell is defined in the withheld truth.
    pub comparable: usize,
    /// Assignments to cells that never had a ground-truth label.
    pub skipped: usize,
    pub quality: PseudoLabelQuality,
}

impl PseudoLabelReport {
    pub fn accuracy(&self) -> Option<f64> {
        match &self.quality {
            PseudoLabelQuality::Classification { correct, .. } => Some(*correct as f64 / self.comparable as f64),
            _ => None,
        }
    }
}

impl fmt::Display for PseudoLabelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.quality {
            PseudoLabelQuality::NoComparableCells => {
                write!(f, "{}: 0 comparable cells ({} skipped)", self.task, self.skipped)
            }
            PseudoLabelQuality::Classification { per_iteration, .. } => {
                write!(
                    f,
                    "{}: accuracy {:.4} over {} comparable cells ({} skipped)",
                    self.task,
                    self.accuracy().unwrap_or(f64::NAN),
                    self.comparable,
                    self.skipped
                )?;
                for (it, (c, n)) in per_iteration {
                    write!(f, "; iteration {it}: {:.4} ({n})", *c as f64 / *n as f64)?;
                }
                Ok(())
            }
            PseudoLabelQuality::Regression { cc, mae } => write!(
                f,
                "{}: CC {} MAE {mae:.4} over {} comparable cells ({} skipped)",
                self.task,
                cc.map_or_else(|| "NaN".to_string(), |v| format!("{v:.4}")),
                self.comparable,
                self.skipped
            ),
        }
    }
}

/// Compares pseudo-labels with the labels that were withheld before
/// completion. `withheld_truth` must be in the same units as the assigned
/// labels.
pub fn pseudo_label_accuracy(
    tasks: &[TaskSchema],
    assignments: &[PseudoLabelAssignment],
    withheld_truth: &LabelGrid,
) -> Vec<PseudoLabelReport> {
    tasks
        .iter()
        .enumerate()
        .map(|(t, task)| {
            let mut skipped = 0;
            let mut pairs = Vec::new();
            for a in assignments.iter().filter(|a| a.task == t) {
                match withheld_truth.get(a.instance, t) {
                    LabelCell::Undefined => skipped += 1,
                    truth => pairs.push((a.iteration, truth, a.label)),
                }
            }
            let quality = if pairs.is_empty() {
                PseudoLabelQuality::NoComparableCells
            } else if task.kind.is_regression() {
                let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(_, a, b)| (real(*a), real(*b))).unzip();
                let mae = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64;
                PseudoLabelQuality::Regression { cc: pearson_cc(&x, &y).ok(), mae }
            } else {
                let mut per_iteration: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
                let mut correct = 0;
                for (it, truth, assigned) in &pairs {
                    let e = per_iteration.entry(*it).or_default();
                    e.1 += 1;
                    if truth == assigned {
                        e.0 += 1;
                        correct += 1;
                    }
                }
                PseudoLabelQuality::Classification { correct, per_iteration }
            };
            PseudoLabelReport { task: task.name.clone(), comparable: pairs.len(), skipped, quality }
        })
        .collect()
}
