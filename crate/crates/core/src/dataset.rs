//! Joint multi-target dataset: one feature matrix over all instances of all
//! input files and a sparse label grid over the union of their tasks.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arff::{ArffRelation, ArffValue, AttributeDecl, AttributeKind};

/// Standard deviations below this are treated as constant columns.
pub const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    /// Two ordered class names; trained with a single sigmoid unit.
    Binary(Vec<String>),
    /// K >= 3 ordered class names; trained with a softmax layer.
    Multiclass(Vec<String>),
    Regression,
}

impl TaskKind {
    pub fn from_categories(categories: Vec<String>) -> Option<Self> {
        match categories.len() {
            0 | 1 => None,
            2 => Some(TaskKind::Binary(categories)),
            _ => Some(TaskKind::Multiclass(categories)),
        }
    }

    pub fn class_names(&self) -> Option<&[String]> {
        match self {
            TaskKind::Binary(c) | TaskKind::Multiclass(c) => Some(c),
            TaskKind::Regression => None,
        }
    }

    /// Number of classes; `None` for regression.
    pub fn num_classes(&self) -> Option<usize> {
        self.class_names().map(<[String]>::len)
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, TaskKind::Regression)
    }

    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::Binary(_) => "binary",
            TaskKind::Multiclass(_) => "multiclass",
            TaskKind::Regression => "regression",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchema {
    /// 1-based task number.
    pub task_id: usize,
    pub name: String,
    pub kind: TaskKind,
    /// 1-based indices of the input files that declare this task.
    pub source_datasets: BTreeSet<usize>,
}

impl TaskSchema {
    pub fn accepts(&self, cell: &LabelCell) -> bool {
        match (cell, &self.kind) {
            (LabelCell::Undefined, _) => true,
            (LabelCell::Real(x), TaskKind::Regression) => x.is_finite(),
            (LabelCell::ClassIndex(c), kind) => kind.num_classes().is_some_and(|k| *c < k),
            _ => false,
        }
    }

    /// Renders a label for CSV/report output.
    pub fn format_label(&self, cell: &LabelCell) -> String {
        match cell {
            LabelCell::Undefined => "?".into(),
            LabelCell::Real(x) => format!("{x}"),
            LabelCell::ClassIndex(c) => match self.kind.class_names() {
                Some(names) => names[*c].clone(),
                None => c.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LabelCell {
    ClassIndex(usize),
    Real(f64),
    Undefined,
}

impl LabelCell {
    pub fn is_defined(&self) -> bool {
        !matches!(self, LabelCell::Undefined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTargetDataset {
    /// Row-major N x F feature matrix.
    features: Vec<f64>,
    num_features: usize,
    /// Row-major N x M label grid.
    labels: Vec<LabelCell>,
    pub tasks: Vec<TaskSchema>,
    /// 1-based source file index per instance.
    pub origin: Vec<usize>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("no input files given")]
    NoInputs,
    #[error("at least one target task is required (all files declare 0 targets)")]
    NoTasks,
    #[error("file {file}: {num_targets} targets requested but only {available} attributes are available")]
    TooManyTargets { file: usize, num_targets: usize, available: usize },
    #[error("file {file}: feature space differs from file 1 ({detail})")]
    FeatureMismatch { file: usize, detail: String },
    #[error("file {file}: task '{task}' is {found} here but {expected} in an earlier file")]
    TaskKindConflict { file: usize, task: String, expected: String, found: String },
    #[error("file {file}: task '{task}' declares categories {found:?}, earlier file declares {expected:?}")]
    CategoryConflict { file: usize, task: String, expected: Vec<String>, found: Vec<String> },
    #[error("file {file}: string attribute '{attribute}' cannot be used as a feature or target")]
    StringAttribute { file: usize, attribute: String },
    #[error("file {file}: feature '{attribute}' must be numeric")]
    NominalFeature { file: usize, attribute: String },
    #[error("file {file}: nominal target '{attribute}' needs at least 2 categories")]
    DegenerateTarget { file: usize, attribute: String },
    #[error("file {file}, row {row}: missing value for feature '{attribute}'")]
    MissingFeature { file: usize, row: usize, attribute: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid label for task '{task}' at row {row}")]
    InvalidLabel { task: String, row: usize },
}

impl DatasetError {
    /// 1-based number of the input file at fault, if any.
    pub fn file(&self) -> Option<usize> {
        match self {
            DatasetError::TooManyTargets { file, .. }
            | DatasetError::FeatureMismatch { file, .. }
            | DatasetError::TaskKindConflict { file, .. }
            | DatasetError::CategoryConflict { file, .. }
            | DatasetError::StringAttribute { file, .. }
            | DatasetError::NominalFeature { file, .. }
            | DatasetError::DegenerateTarget { file, .. }
            | DatasetError::MissingFeature { file, .. } => Some(*file),
            _ => None,
        }
    }
}

impl MultiTargetDataset {
    /// Builds a dataset from raw parts, checking every invariant.
    pub fn from_parts(
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<LabelCell>>,
        tasks: Vec<TaskSchema>,
        origin: Vec<usize>,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n = features.len();
        let f = feature_names.len();
        if labels.len() != n || origin.len() != n {
            return Err(DatasetError::Shape(format!(
                "{n} feature rows, {} label rows, {} origins",
                labels.len(),
                origin.len()
            )));
        }
        if tasks.is_empty() {
            return Err(DatasetError::NoTasks);
        }
        let m = tasks.len();
        let mut flat_x = Vec::with_capacity(n * f);
        let mut flat_y = Vec::with_capacity(n * m);
        for (i, (x, y)) in features.into_iter().zip(labels).enumerate() {
            if x.len() != f || y.len() != m {
                return Err(DatasetError::Shape(format!("row {i} has {} features and {} labels", x.len(), y.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::Shape(format!("row {i} has a non-finite feature")));
            }
            for (cell, task) in y.iter().zip(&tasks) {
                if !task.accepts(cell) {
                    return Err(DatasetError::InvalidLabel { task: task.name.clone(), row: i });
                }
            }
            flat_x.extend(x);
            flat_y.extend(y);
        }
        if origin.contains(&0) {
            return Err(DatasetError::Shape("origin indices are 1-based".into()));
        }
        Ok(MultiTargetDataset { features: flat_x, num_features: f, labels: flat_y, tasks, origin, feature_names })
    }

    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn features(&self, row: usize) -> &[f64] {
        &self.features[row * self.num_features..(row + 1) * self.num_features]
    }

    pub fn labels(&self, row: usize) -> &[LabelCell] {
        let m = self.tasks.len();
        &self.labels[row * m..(row + 1) * m]
    }

    pub fn label(&self, row: usize, task: usize) -> LabelCell {
        self.labels[row * self.tasks.len() + task]
    }

    /// Overwrites one label cell. Panics if the value violates the task schema.
    pub fn set_label(&mut self, row: usize, task: usize, cell: LabelCell) {
        assert!(self.tasks[task].accepts(&cell), "label {cell:?} invalid for task '{}'", self.tasks[task].name);
        let m = self.tasks.len();
        self.labels[row * m + task] = cell;
    }

    pub fn undefined_count(&self, task: usize) -> usize {
        (0..self.len()).filter(|&i| !self.label(i, task).is_defined()).count()
    }

    pub fn defined_count(&self, task: usize) -> usize {
        self.len() - self.undefined_count(task)
    }

    pub fn total_undefined(&self) -> usize {
        self.labels.iter().filter(|c| !c.is_defined()).count()
    }

    pub fn num_sources(&self) -> usize {
        self.origin.iter().copied().max().unwrap_or(0)
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }

    /// Copy of the label grid; used to keep withheld ground truth.
    pub fn label_grid(&self) -> LabelGrid {
        LabelGrid { cells: self.labels.clone(), num_tasks: self.tasks.len() }
    }

    /// Returns a dataset with the same labels but new feature values.
    pub fn with_features(&self, features: Vec<f64>) -> Self {
        assert_eq!(features.len(), self.features.len());
        MultiTargetDataset { features, ..self.clone() }
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.num_features);
        let mut labels = Vec::with_capacity(rows.len() * self.tasks.len());
        for &i in rows {
            features.extend_from_slice(self.features(i));
            labels.extend_from_slice(self.labels(i));
        }
        MultiTargetDataset {
            features,
            num_features: self.num_features,
            labels,
            tasks: self.tasks.clone(),
            origin: rows.iter().map(|&i| self.origin[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Whether two datasets share feature names and task schemas.
    pub fn same_schema(&self, other: &MultiTargetDataset) -> bool {
        self.feature_names == other.feature_names
            && self.tasks.len() == other.tasks.len()
            && self.tasks.iter().zip(&other.tasks).all(|(a, b)| a.name == b.name && a.kind == b.kind)
    }
}

/// Detached N x M label grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    cells: Vec<LabelCell>,
    num_tasks: usize,
}

impl LabelGrid {
    pub fn get(&self, row: usize, task: usize) -> LabelCell {
        self.cells[row * self.num_tasks + task]
    }

    pub fn num_rows(&self) -> usize {
        self.cells.len().checked_div(self.num_tasks).unwrap_or(0)
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }
}

/// Instance index sets of a dataset: labeled (at least one defined cell) and
/// incomplete (at least one undefined cell). Partially labeled rows are in
/// both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitView {
    pub labeled: Vec<usize>,
    pub incomplete: Vec<usize>,
}

pub fn split(ds: &MultiTargetDataset) -> SplitView {
    let mut labeled = Vec::new();
    let mut incomplete = Vec::new();
    for i in 0..ds.len() {
        let row = ds.labels(i);
        if row.iter().any(LabelCell::is_defined) {
            labeled.push(i);
        }
        if row.iter().any(|c| !c.is_defined()) {
            incomplete.push(i);
        }
    }
    SplitView { labeled, incomplete }
}

/// Input file for [`assemble`]: a parsed relation plus the number of trailing
/// target attributes it carries.
#[derive(Debug, Clone)]
pub struct SourceFile<'a> {
    pub relation: &'a ArffRelation,
    pub num_targets: usize,
}

/// Attribute layout of one source file after assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceLayout {
    /// Column in the relation for each feature.
    pub feature_columns: Vec<usize>,
    /// (column in the relation, task index) for each target.
    pub target_columns: Vec<(usize, usize)>,
}

/// Merges several ARFF relations into one multi-target dataset.
///
/// The last `num_targets` attributes of every file are targets, everything
/// else (except an optional leading instance-name column) is a numeric
/// feature. Tasks are matched across files by attribute name.
pub fn assemble(files: &[SourceFile<'_>], ignore_first_attribute: bool) -> Result<MultiTargetDataset, DatasetError> {
    assemble_with_layout(files, ignore_first_attribute).map(|(ds, _)| ds)
}

pub fn assemble_with_layout(
    files: &[SourceFile<'_>],
    ignore_first_attribute: bool,
) -> Result<(MultiTargetDataset, Vec<SourceLayout>), DatasetError> {
    if files.is_empty() {
        return Err(DatasetError::NoInputs);
    }
    let skip = usize::from(ignore_first_attribute);
    let mut tasks: Vec<TaskSchema> = Vec::new();
    let mut layouts = Vec::with_capacity(files.len());
    let mut feature_names: Option<Vec<String>> = None;

    for (fi, file) in files.iter().enumerate() {
        let d = fi + 1;
        let attrs = &file.relation.attributes;
        let available = attrs.len().saturating_sub(skip);
        if file.num_targets > available {
            return Err(DatasetError::TooManyTargets { file: d, num_targets: file.num_targets, available });
        }
        let first_target = attrs.len() - file.num_targets;
        let feature_columns: Vec<usize> = (skip..first_target).collect();
        for &c in &feature_columns {
            match attrs[c].kind {
                AttributeKind::Numeric => {}
                AttributeKind::StringAttr => {
                    return Err(DatasetError::StringAttribute { file: d, attribute: attrs[c].name.clone() })
                }
                AttributeKind::Nominal(_) => {
                    return Err(DatasetError::NominalFeature { file: d, attribute: attrs[c].name.clone() })
                }
            }
        }
        let names: Vec<String> = feature_columns.iter().map(|&c| attrs[c].name.clone()).collect();
        match &feature_names {
            None => feature_names = Some(names),
            Some(expected) if *expected != names => {
                let detail = if expected.len() != names.len() {
                    format!("{} features instead of {}", names.len(), expected.len())
                } else {
                    let pos = expected.iter().zip(&names).position(|(a, b)| a != b).unwrap_or(0);
                    format!("feature {} is '{}' instead of '{}'", pos + 1, names[pos], expected[pos])
                };
                return Err(DatasetError::FeatureMismatch { file: d, detail });
            }
            Some(_) => {}
        }

        let mut target_columns = Vec::with_capacity(file.num_targets);
        for c in first_target..attrs.len() {
            let attr = &attrs[c];
            let kind = target_kind(attr, d)?;
            let t = match tasks.iter().position(|t| t.name == attr.name) {
                Some(t) => {
                    check_merge(&tasks[t], &kind, d)?;
                    tasks[t].source_datasets.insert(d);
                    t
                }
                None => {
                    tasks.push(TaskSchema {
                        task_id: tasks.len() + 1,
                        name: attr.name.clone(),
                        kind,
                        source_datasets: BTreeSet::from([d]),
                    });
                    tasks.len() - 1
                }
            };
            target_columns.push((c, t));
        }
        layouts.push(SourceLayout { feature_columns, target_columns });
    }

    if tasks.is_empty() {
        return Err(DatasetError::NoTasks);
    }
    let feature_names = feature_names.unwrap_or_default();
    let m = tasks.len();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut origin = Vec::new();
    for (fi, (file, layout)) in files.iter().zip(&layouts).enumerate() {
        let attrs = &file.relation.attributes;
        for (r, row) in file.relation.rows.iter().enumerate() {
            let x = layout
                .feature_columns
                .iter()
                .map(|&c| match row[c] {
                    ArffValue::Num(v) => Ok(v),
                    _ => Err(DatasetError::MissingFeature { file: fi + 1, row: r + 1, attribute: attrs[c].name.clone() }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut y = vec![LabelCell::Undefined; m];
            for &(c, t) in &layout.target_columns {
                y[t] = match &row[c] {
                    ArffValue::Missing => LabelCell::Undefined,
                    ArffValue::Num(v) => LabelCell::Real(*v),
                    ArffValue::Nom(k) => {
                        let name = &attrs[c].categories().expect("nominal")[*k];
                        let names = tasks[t].kind.class_names().expect("classification task");
                        LabelCell::ClassIndex(names.iter().position(|n| n == name).expect("category sets checked"))
                    }
                    ArffValue::Str(_) => unreachable!("string targets rejected above"),
                };
            }
            features.push(x);
            labels.push(y);
            origin.push(fi + 1);
        }
    }
    let ds = MultiTargetDataset::from_parts(features, labels, tasks, origin, feature_names)?;
    Ok((ds, layouts))
}

fn target_kind(attr: &AttributeDecl, file: usize) -> Result<TaskKind, DatasetError> {
    match &attr.kind {
        AttributeKind::Numeric => Ok(TaskKind::Regression),
        AttributeKind::StringAttr => Err(DatasetError::StringAttribute { file, attribute: attr.name.clone() }),
        AttributeKind::Nominal(c) => TaskKind::from_categories(c.clone())
            .ok_or_else(|| DatasetError::DegenerateTarget { file, attribute: attr.name.clone() }),
    }
}

fn check_merge(existing: &TaskSchema, kind: &TaskKind, file: usize) -> Result<(), DatasetError> {
    match (&existing.kind, kind) {
        (TaskKind::Regression, TaskKind::Regression) => Ok(()),
        (a, b) if a.is_regression() != b.is_regression() => Err(DatasetError::TaskKindConflict {
            file,
            task: existing.name.clone(),
            expected: a.label().into(),
            found: b.label().into(),
        }),
        (a, b) => {
            let ea = a.class_names().expect("classification");
            let fb = b.class_names().expect("classification");
            let sa: BTreeSet<&String> = ea.iter().collect();
            let sb: BTreeSet<&String> = fb.iter().collect();
            if sa == sb {
                Ok(())
            } else {
                Err(DatasetError::CategoryConflict {
                    file,
                    task: existing.name.clone(),
                    expected: ea.to_vec(),
                    found: fb.to_vec(),
                })
            }
        }
    }
}

/// Hides `floor(fraction * defined)` defined cells of every task, chosen
/// uniformly without replacement. Deterministic in `seed`.
pub fn drop_labels(ds: &MultiTargetDataset, fraction: f64, seed: u64) -> MultiTargetDataset {
    assert!((0.0..=1.0).contains(&fraction), "drop fraction {fraction} outside [0, 1]");
    let mut out = ds.clone();
    for t in 0..ds.num_tasks() {
        let defined: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i, t).is_defined()).collect();
        let count = (fraction * defined.len() as f64).floor() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        for pick in index::sample(&mut rng, defined.len(), count) {
            out.set_label(defined[pick], t, LabelCell::Undefined);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineScale {
    pub mean: f64,
    pub std: f64,
}

impl AffineScale {
    pub fn identity() -> Self {
        AffineScale { mean: 0.0, std: 1.0 }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Mean/population-stddev statistics; `std` falls back to 1 for constant data.
fn column_scale(values: impl Iterator<Item = f64> + Clone) -> (AffineScale, bool) {
    let n = values.clone().count();
    if n == 0 {
        return (AffineScale::identity(), true);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < CONSTANT_STD {
        (AffineScale { mean, std: 1.0 }, true)
    } else {
        (AffineScale { mean, std }, false)
    }
}

/// Fitted per-column transform produced by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub features: Vec<AffineScale>,
    pub constant: Vec<bool>,
    /// Scale for each regression task; `None` for classification tasks.
    pub targets: Vec<Option<AffineScale>>,
}

impl Standardization {
    pub fn feature_means(&self) -> Vec<f64> {
        self.features.iter().map(|s| s.mean).collect()
    }

    pub fn feature_stds(&self) -> Vec<f64> {
        self.features.iter().map(|s| s.std).collect()
    }

    fn map_features(&self, ds: &MultiTargetDataset, f: impl Fn(&AffineScale, f64) -> f64) -> Vec<f64> {
        assert_eq!(ds.num_features(), self.features.len(), "feature count mismatch");
        let mut x = Vec::with_capacity(ds.len() * ds.num_features());
        for i in 0..ds.len() {
            x.extend(ds.features(i).iter().zip(&self.features).map(|(&v, s)| f(s, v)));
        }
        x
    }

    fn map_targets(&self, ds: &mut MultiTargetDataset, f: impl Fn(&AffineScale, f64) -> f64) {
        for (t, scale) in self.targets.iter().enumerate() {
            let Some(scale) = scale else { continue };
            for i in 0..ds.len() {
                if let LabelCell::Real(v) = ds.label(i, t) {
                    ds.set_label(i, t, LabelCell::Real(f(scale, v)));
                }
            }
        }
    }

    /// Applies the fitted transform to features only (e.g. for a test set
    /// whose labels stay in original units).
    pub fn apply_features(&self, ds: &MultiTargetDataset) -> MultiTargetDataset {
        ds.with_features(self.map_features(ds, |s, v| s.forward(v)))
    }

    /// Applies the fitted transform to features and regression targets.
    pub fn apply(&self, ds: &MultiTargetDataset) -> MultiTargetDataset {
        let mut out = self.apply_features(ds);
        self.map_targets(&mut out, |s, v| s.forward(v));
        out
    }

    /// Maps standardized features and targets back to original units.
    /// Constant feature columns come back as their mean.
    pub fn invert(&self, ds: &MultiTargetDataset) -> MultiTargetDataset {
        let mut out = ds.with_features(self.map_features(ds, |s, v| s.inverse(v)));
        self.map_targets(&mut out, |s, v| s.inverse(v));
        out
    }

    pub fn invert_targets(&self, ds: &MultiTargetDataset) -> MultiTargetDataset {
        let mut out = ds.clone();
        self.map_targets(&mut out, |s, v| s.inverse(v));
        out
    }

    /// Inverse scale of a single label cell.
    pub fn invert_label(&self, task: usize, cell: LabelCell) -> LabelCell {
        match (cell, self.targets[task]) {
            (LabelCell::Real(v), Some(s)) => LabelCell::Real(s.inverse(v)),
            (c, _) => c,
        }
    }

    pub fn target_scales(&self) -> Vec<AffineScale> {
        self.targets.iter().map(|s| s.unwrap_or_else(AffineScale::identity)).collect()
    }
}

/// Standardizes every feature column over all instances and every regression
/// target over its defined cells.
pub fn standardize(ds: &MultiTargetDataset) -> (MultiTargetDataset, Standardization) {
    assert!(!ds.is_empty(), "cannot standardize an empty dataset");
    let (features, constant) = (0..ds.num_features())
        .map(|j| column_scale((0..ds.len()).map(move |i| ds.features(i)[j])))
        .unzip();
    let targets = ds
        .tasks
        .iter()
        .enumerate()
        .map(|(t, task)| {
            task.kind.is_regression().then(|| {
                let values = (0..ds.len()).filter_map(move |i| match ds.label(i, t) {
                    LabelCell::Real(v) => Some(v),
                    _ => None,
                });
                column_scale(values).0
            })
        })
        .collect();
    let st = Standardization { features, constant, targets };
    (st.apply(ds), st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arff::parse_arff;

    fn task(id: usize, name: &str, kind: TaskKind) -> TaskSchema {
        TaskSchema { task_id: id, name: name.into(), kind, source_datasets: BTreeSet::from([1]) }
    }

    fn small(labels: Vec<Vec<LabelCell>>) -> MultiTargetDataset {
        let n = labels.len();
        let tasks = vec![
            task(1, "b", TaskKind::Binary(vec!["n".into(), "y".into()])),
            task(2, "c", TaskKind::Multiclass(vec!["a".into(), "b".into(), "c".into()])),
            task(3, "r", TaskKind::Regression),
        ];
        MultiTargetDataset::from_parts(
            (0..n).map(|i| vec![i as f64]).collect(),
            labels,
            tasks,
            vec![1; n],
            vec!["x".into()],
        )
        .unwrap()
    }

    use LabelCell::{ClassIndex as C, Real as R, Undefined as U};

    #[test]
    fn split_definitions() {
        let full = small(vec![vec![C(0), C(1), R(1.0)], vec![C(1), C(2), R(0.0)]]);
        let sv = split(&full);
        assert_eq!(sv.labeled, vec![0, 1]);
        assert!(sv.incomplete.is_empty());

        let empty = small(vec![vec![U, U, U], vec![U, U, U]]);
        let sv = split(&empty);
        assert!(sv.labeled.is_empty());
        assert_eq!(sv.incomplete, vec![0, 1]);

        let partial = small(vec![vec![U, C(2), U]]);
        let sv = split(&partial);
        assert_eq!(sv.labeled, vec![0]);
        assert_eq!(sv.incomplete, vec![0]);
    }

    #[test]
    fn invalid_labels_rejected() {
        let tasks = vec![task(1, "c", TaskKind::Multiclass(vec!["a".into(), "b".into(), "c".into()]))];
        let e = MultiTargetDataset::from_parts(vec![vec![0.0]], vec![vec![C(3)]], tasks.clone(), vec![1], vec!["x".into()]);
        assert!(matches!(e, Err(DatasetError::InvalidLabel { .. })));
        let e = MultiTargetDataset::from_parts(vec![vec![0.0]], vec![vec![R(1.0)]], tasks, vec![1], vec!["x".into()]);
        assert!(matches!(e, Err(DatasetError::InvalidLabel { .. })));
    }

    fn emotion_files() -> Vec<ArffRelation> {
        let header = "@attribute f1 numeric\n@attribute f2 numeric\n";
        let emo = "@attribute emotion {ang,hap,sad,neu}\n";
        let a = format!("@relation A\n{header}{emo}@attribute arousal numeric\n@data\n1,2,ang,0.5\n3,4,?,0.1\n");
        let b = format!("@relation B\n{header}{emo}@data\n5,6,sad\n");
        let c = format!("@relation C\n{header}@attribute arousal numeric\n@attribute valence numeric\n@data\n7,8,0.2,-0.3\n");
        let d = format!("@relation D\n{header}@data\n9,10\n11,12\n");
        [a, b, c, d].iter().map(|t| parse_arff(t).unwrap()).collect()
    }

    #[test]
    fn assemble_merges_tasks_by_name() {
        let rels = emotion_files();
        let files: Vec<SourceFile> = rels
            .iter()
            .zip([2, 1, 2, 0])
            .map(|(relation, num_targets)| SourceFile { relation, num_targets })
            .collect();
        let ds = assemble(&files, false).unwrap();
        assert_eq!(ds.num_tasks(), 3);
        assert_eq!(ds.tasks[0].name, "emotion");
        assert_eq!(ds.tasks[0].kind.num_classes(), Some(4));
        assert!(matches!(ds.tasks[0].kind, TaskKind::Multiclass(_)));
        assert_eq!(ds.tasks[1].name, "arousal");
        assert!(ds.tasks[1].kind.is_regression());
        assert_eq!(ds.tasks[2].name, "valence");
        assert_eq!(ds.tasks[1].source_datasets, BTreeSet::from([1, 3]));
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.origin, vec![1, 1, 2, 3, 4, 4]);
        assert_eq!(ds.labels(0), [C(0), R(0.5), U]);
        assert_eq!(ds.labels(1), [U, R(0.1), U]);
        assert_eq!(ds.labels(2), [C(2), U, U]);
        assert_eq!(ds.labels(3), [U, R(0.2), R(-0.3)]);
        assert_eq!(ds.labels(4), [U, U, U]);
        assert_eq!(ds.labels(5), [U, U, U]);
        assert_eq!(ds.features(3), [7.0, 8.0]);
    }

    #[test]
    fn assemble_requires_a_task() {
        let rel = parse_arff("@relation t\n@attribute a numeric\n@data\n1\n").unwrap();
        let e = assemble(&[SourceFile { relation: &rel, num_targets: 0 }], false).unwrap_err();
        assert_eq!(e, DatasetError::NoTasks);
    }

    #[test]
    fn assemble_category_conflict() {
        let a = parse_arff("@relation a\n@attribute f numeric\n@attribute emotion {ang,hap,sad}\n@data\n").unwrap();
        let b = parse_arff("@relation b\n@attribute f numeric\n@attribute emotion {ang,hap,neu}\n@data\n").unwrap();
        let e = assemble(&[SourceFile { relation: &a, num_targets: 1 }, SourceFile { relation: &b, num_targets: 1 }], false)
            .unwrap_err();
        assert!(matches!(e, DatasetError::CategoryConflict { file: 2, .. }), "{e}");
    }

    #[test]
    fn assemble_category_order_from_first_file() {
        let a = parse_arff("@relation a\n@attribute f numeric\n@attribute e {x,y,z}\n@data\n0,x\n").unwrap();
        let b = parse_arff("@relation b\n@attribute f numeric\n@attribute e {z,y,x}\n@data\n1,x\n").unwrap();
        let ds = assemble(&[SourceFile { relation: &a, num_targets: 1 }, SourceFile { relation: &b, num_targets: 1 }], false)
            .unwrap();
        assert_eq!(ds.tasks[0].kind.class_names().unwrap(), ["x", "y", "z"]);
        assert_eq!(ds.label(1, 0), C(0));
    }

    #[test]
    fn assemble_error_paths() {
        let a = parse_arff("@relation a\n@attribute f numeric\n@attribute t numeric\n@data\n").unwrap();
        let b = parse_arff("@relation b\n@attribute g numeric\n@attribute t numeric\n@data\n").unwrap();
        let kind = parse_arff("@relation b\n@attribute f numeric\n@attribute t {p,q}\n@data\n").unwrap();
        let s = parse_arff("@relation s\n@attribute name string\n@attribute t numeric\n@data\n").unwrap();
        let one = |r| SourceFile { relation: r, num_targets: 1 };
        assert!(matches!(assemble(&[one(&a), one(&b)], false), Err(DatasetError::FeatureMismatch { file: 2, .. })));
        assert!(matches!(assemble(&[one(&a), one(&kind)], false), Err(DatasetError::TaskKindConflict { file: 2, .. })));
        assert!(matches!(assemble(&[one(&s)], false), Err(DatasetError::StringAttribute { .. })));
        let ok = assemble(&[one(&s)], true).unwrap();
        assert_eq!(ok.num_features(), 0);
        let too_many = SourceFile { relation: &a, num_targets: 3 };
        assert!(matches!(assemble(&[too_many], false), Err(DatasetError::TooManyTargets { .. })));
    }

    #[test]
    fn drop_labels_counts_and_determinism() {
        let labels: Vec<Vec<LabelCell>> = (0..120)
            .map(|i| vec![if i < 100 { C(i % 2) } else { U }, C(i % 3), R(i as f64)])
            .collect();
        let ds = small(labels);
        let dropped = drop_labels(&ds, 0.75, 42);
        assert_eq!(ds.undefined_count(0), 20);
        assert_eq!(dropped.undefined_count(0), 20 + 75);
        assert_eq!(dropped.undefined_count(1), 90);
        assert_eq!(dropped.undefined_count(2), 90);
        assert_eq!(drop_labels(&ds, 0.75, 42), dropped);
        assert_ne!(drop_labels(&ds, 0.75, 43), dropped);
        assert_eq!(drop_labels(&ds, 0.0, 1), ds);
        assert_eq!(drop_labels(&ds, 1.0, 1).total_undefined(), 120 * 3);
        for i in 0..ds.len() {
            assert_eq!(ds.features(i), dropped.features(i));
            for t in 0..3 {
                let after = dropped.label(i, t);
                assert!(!after.is_defined() || after == ds.label(i, t));
            }
        }
    }

    #[test]
    fn standardize_by_hand() {
        let tasks = vec![task(1, "r", TaskKind::Regression)];
        let ds = MultiTargetDataset::from_parts(
            vec![vec![1.0, 0.0], vec![1.0, 2.0], vec![1.0, 1.0]],
            vec![vec![R(2.0)], vec![R(4.0)], vec![U]],
            tasks,
            vec![1; 3],
            vec!["c".into(), "v".into()],
        )
        .unwrap();
        let (z, st) = standardize(&ds);
        assert_eq!(st.constant, vec![true, false]);
        for i in 0..3 {
            assert_eq!(z.features(i)[0], 0.0);
        }
        assert_eq!(z.label(0, 0), R(-1.0));
        assert_eq!(z.label(1, 0), R(1.0));
        assert_eq!(z.label(2, 0), U);
        let back = st.invert(&z);
        for i in 0..2 {
            match (back.label(i, 0), ds.label(i, 0)) {
                (R(a), R(b)) => assert!((a - b).abs() < 1e-12),
                _ => panic!(),
            }
        }
    }

    #[test]
    fn standardize_two_point_column() {
        let tasks = vec![task(1, "b", TaskKind::Binary(vec!["n".into(), "y".into()]))];
        let ds = MultiTargetDataset::from_parts(vec![vec![0.0], vec![2.0]], vec![vec![C(0)], vec![C(1)]], tasks, vec![1; 2], vec!["x".into()])
            .unwrap();
        let (z, st) = standardize(&ds);
        assert_eq!(z.features(0), [-1.0]);
        assert_eq!(z.features(1), [1.0]);
        assert_eq!(st.targets, vec![None]);
        assert_eq!(z.label(1, 0), C(1));
    }
}
