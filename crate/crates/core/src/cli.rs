//! `xdata-complete` command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
//! failure.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Parser;
use log::info;
use thiserror::Error;

use crate::arff::{read_arff_file, write_arff, ArffRelation};
use crate::config::{parse_config, DatasetEntry, RunConfig};
use crate::dataset::{
    assemble_with_layout, drop_labels, standardize, DatasetError, LabelGrid, MultiTargetDataset, SourceFile, SourceLayout,
};
use crate::eval::{predict_all, pseudo_label_accuracy};
use crate::model::ModelError;
use crate::trainer::{
    run_cdlc_scaled, write_assignments_csv, write_iterations_csv, CdlcError, CdlcOutcome, PseudoLabelAssignment,
};
use crate::writeback::{merged_relation, source_relation};

#[derive(Debug, Clone, Parser)]
#[command(name = "xdata-complete", about = "Complete sparse multi-target label matrices across datasets")]
pub struct Args {
    /// Configuration file (key = value lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides net.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Paths of the files written by a run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub written: Vec<PathBuf>,
    pub iterations: usize,
    pub assignments: usize,
}

/// Parses `argv` (including the program name), runs, and returns the exit
/// code. Errors are printed to standard error.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&args) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("xdata-complete: {e}");
            e.exit_code()
        }
    }
}

/// Loads the configuration and applies command-line overrides. Relative
/// paths stay as written; [`execute`] resolves them against the config
/// file's directory.
pub fn effective_config(args: &Args) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.cdlc.network.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn map_cdlc(e: CdlcError) -> CliError {
    match e {
        CdlcError::NoLabels | CdlcError::SchemaMismatch => CliError::Data(e.to_string()),
        CdlcError::UnknownTask(_) | CdlcError::InvalidK | CdlcError::Model(ModelError::InvalidConfig(_)) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

struct Loaded {
    relations: Vec<ArffRelation>,
    test: Option<ArffRelation>,
}

fn load(cfg: &RunConfig, base: &Path) -> Result<Loaded, CliError> {
    let read = |p: &Path| read_arff_file(resolve(base, p)).map_err(|e| CliError::Data(e.to_string()));
    let relations = cfg.datasets.iter().map(|d| read(&d.file)).collect::<Result<Vec<_>, _>>()?;
    let test = cfg.test_file.as_deref().map(read).transpose()?;
    Ok(Loaded { relations, test })
}

/// Appends the path of the file at fault. File number `len + 1` is the test
/// file, which is assembled after the training files.
fn dataset_error(e: &DatasetError, datasets: &[DatasetEntry], test: Option<&Path>) -> String {
    let path = e.file().and_then(|d| match datasets.get(d - 1) {
        Some(entry) => Some(entry.file.as_path()),
        None if d == datasets.len() + 1 => test,
        None => None,
    });
    match path {
        Some(p) => format!("{e} [{}]", p.display()),
        None => e.to_string(),
    }
}

/// Builds the evaluation set by assembling it together with the training
/// files, so that task matching and category order follow the same rules.
fn assemble_test(
    cfg: &RunConfig,
    relations: &[ArffRelation],
    test: &ArffRelation,
    train: &MultiTargetDataset,
) -> Result<MultiTargetDataset, CliError> {
    let skip = usize::from(cfg.ignore_first_attribute);
    let needed = skip + train.num_features();
    let test_targets = test.attributes.len().checked_sub(needed).ok_or_else(|| {
        CliError::Data(format!("test file has {} attributes, fewer than the {needed} feature columns", test.attributes.len()))
    })?;
    let mut files: Vec<SourceFile> = relations
        .iter()
        .zip(&cfg.datasets)
        .map(|(relation, d)| SourceFile { relation, num_targets: d.num_targets })
        .collect();
    files.push(SourceFile { relation: test, num_targets: test_targets });
    let (joint, _) = assemble_with_layout(&files, cfg.ignore_first_attribute)
        .map_err(|e| CliError::Data(dataset_error(&e, &cfg.datasets, cfg.test_file.as_deref())))?;
    if joint.num_tasks() != train.num_tasks() {
        let unknown: Vec<&str> = joint.tasks[train.num_tasks()..].iter().map(|t| t.name.as_str()).collect();
        return Err(CliError::Data(format!("test file declares tasks unknown to the training data: {unknown:?}")));
    }
    let test_id = files.len();
    let rows: Vec<usize> = (0..joint.len()).filter(|&i| joint.origin[i] == test_id).collect();
    let mut ds = joint.select_rows(&rows);
    ds.tasks = train.tasks.clone();
    ds.origin = vec![1; ds.len()];
    Ok(ds)
}

/// Copies `ds` and writes every assignment into its cell.
pub fn apply_assignments(ds: &MultiTargetDataset, assignments: &[PseudoLabelAssignment]) -> MultiTargetDataset {
    let mut out = ds.clone();
    for a in assignments {
        out.set_label(a.instance, a.task, a.label);
    }
    out
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn write_file(path: &Path, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn write_with(
    path: &Path,
    written: &mut Vec<PathBuf>,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let err = |e: std::io::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = BufWriter::new(fs::File::create(path).map_err(err)?);
    f(&mut w).map_err(err)?;
    std::io::Write::flush(&mut w).map_err(err)?;
    written.push(path.to_path_buf());
    Ok(())
}

/// In-memory result of a run, before anything is written.
#[derive(Debug)]
pub struct Pipeline {
    pub relations: Vec<ArffRelation>,
    pub layouts: Vec<SourceLayout>,
    /// Grid handed to completion, in original units (after any label drop).
    pub working: MultiTargetDataset,
    /// Labels before the drop, when a drop fraction is configured.
    pub withheld: Option<LabelGrid>,
    /// Test set with standardized features and original-unit labels.
    pub test: Option<MultiTargetDataset>,
    pub outcome: CdlcOutcome,
}

/// Reads, assembles, optionally drops labels, standardizes and runs label
/// completion. Relative input paths are resolved against `base`.
pub fn run_pipeline(cfg: &RunConfig, base: &Path) -> Result<Pipeline, CliError> {
    let loaded = load(cfg, base)?;
    let files: Vec<SourceFile> = loaded
        .relations
        .iter()
        .zip(&cfg.datasets)
        .map(|(relation, d)| SourceFile { relation, num_targets: d.num_targets })
        .collect();
    let (assembled, layouts) = assemble_with_layout(&files, cfg.ignore_first_attribute)
        .map_err(|e| CliError::Data(dataset_error(&e, &cfg.datasets, cfg.test_file.as_deref())))?;
    info!(
        "assembled {} instances, {} features, {} tasks from {} files",
        assembled.len(),
        assembled.num_features(),
        assembled.num_tasks(),
        files.len()
    );
    if assembled.is_empty() {
        return Err(CliError::Data("input files contain no instances".into()));
    }
    let test = loaded.test.as_ref().map(|t| assemble_test(cfg, &loaded.relations, t, &assembled)).transpose()?;

    let (working, withheld) = match cfg.drop_fraction {
        Some(f) => {
            let dropped = drop_labels(&assembled, f, cfg.drop_seed);
            info!("dropped {} labels (fraction {f})", dropped.total_undefined() - assembled.total_undefined());
            (dropped, Some(assembled.label_grid()))
        }
        None => (assembled, None),
    };
    let (standardized, transform) = standardize(&working);
    let test = test.as_ref().map(|t| transform.apply_features(t));

    let outcome =
        run_cdlc_scaled(&standardized, &cfg.cdlc, test.as_ref(), &transform.target_scales()).map_err(map_cdlc)?;
    info!("completion finished: {} after {} iterations", outcome.status, outcome.records.len());
    Ok(Pipeline { relations: loaded.relations, layouts, working, withheld, test, outcome })
}

/// Runs the whole pipeline for parsed arguments and writes the outputs.
pub fn execute(args: &Args) -> Result<RunSummary, CliError> {
    let cfg = effective_config(args)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let output_dir = match &args.out_dir {
        Some(dir) => dir.clone(),
        None => resolve(&base, &cfg.output_dir),
    };
    let Pipeline { relations, layouts, working, withheld, test: test_std, outcome } = run_pipeline(&cfg, &base)?;

    fs::create_dir_all(&output_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", output_dir.display())))?;
    let completed = apply_assignments(&working, &outcome.assignments);
    let mut written = Vec::new();
    write_file(&output_dir.join("completed.arff"), &write_arff(&merged_relation("completed", &completed)), &mut written)?;
    if cfg.per_source_output {
        let mut first = 0;
        for (d, ((rel, layout), entry)) in relations.iter().zip(&layouts).zip(&cfg.datasets).enumerate() {
            let stem = entry.file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let name = format!("completed_{}_{}.arff", d + 1, file_safe(&stem));
            write_file(&output_dir.join(name), &write_arff(&source_relation(rel, layout, &completed, first)), &mut written)?;
            first += rel.rows.len();
        }
    }
    write_with(&output_dir.join("assignments.csv"), &mut written, |w| {
        write_assignments_csv(w, &completed, &outcome.assignments)
    })?;
    write_with(&output_dir.join("iterations.csv"), &mut written, |w| write_iterations_csv(w, &completed, &outcome))?;
    if let (Some(net), Some(test)) = (&outcome.final_network, &test_std) {
        let preds = predict_all(net, test).map_err(|e| CliError::Runtime(e.to_string()))?;
        for (t, task) in test.tasks.iter().enumerate() {
            let mut csv = String::from("instance,true,predicted\n");
            for (i, p) in preds.iter().enumerate() {
                let truth = test.label(i, t);
                if truth.is_defined() {
                    let _ = writeln!(csv, "{i},{},{}", task.format_label(&truth), task.format_label(&p[t]));
                }
            }
            write_file(&output_dir.join(format!("scatter_{}.csv", file_safe(&task.name))), &csv, &mut written)?;
        }
    }
    let report = render_report(&cfg, &completed, &outcome, withheld.as_ref());
    write_file(&output_dir.join("report.txt"), &report, &mut written)?;
    info!("wrote {} files to {}", written.len(), output_dir.display());

    Ok(RunSummary {
        output_dir,
        written,
        iterations: outcome.records.len(),
        assignments: outcome.assignments.len(),
    })
}

fn render_report(cfg: &RunConfig, ds: &MultiTargetDataset, outcome: &CdlcOutcome, withheld: Option<&LabelGrid>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "xdata-complete report\n");
    let _ = writeln!(s, "status: {}", outcome.status);
    let _ = writeln!(s, "iterations: {}", outcome.records.len());
    let _ = writeln!(s, "pseudo-labels assigned: {}", outcome.assignments.len());
    let _ = writeln!(s, "instances: {}  features: {}  tasks: {}", ds.len(), ds.num_features(), ds.num_tasks());
    for t in &ds.tasks {
        let _ = writeln!(s, "  task {} '{}': {} (files {:?})", t.task_id, t.name, t.kind.label(), t.source_datasets);
    }
    let _ = writeln!(s, "\n[effective configuration]\n{}", cfg.to_config_text());

    let _ = writeln!(s, "[iterations]");
    for r in &outcome.records {
        let _ = write!(s, "iteration {} ({:.2?}):", r.iteration, r.duration);
        for (task, st) in ds.tasks.iter().zip(&r.tasks) {
            let boundary = st.boundary_confidence.map_or_else(|| "-".to_string(), |c| format!("{c:.4}"));
            let _ = write!(s, " {} +{} (boundary {boundary}, {} left);", task.name, st.filled, st.remaining);
        }
        s.push('\n');
        for &t in &r.frozen_tasks {
            let _ = writeln!(s, "  warning: task '{}' had no training labels; head frozen", ds.tasks[t].name);
        }
        if let Some(m) = &r.metrics {
            for line in m.to_string().lines() {
                let _ = writeln!(s, "  {line}");
            }
        }
    }
    if let Some(m) = &outcome.final_metrics {
        let _ = writeln!(s, "\n[test-set metrics, model trained on the completed data]\n{m}");
    }
    if let Some(truth) = withheld {
        let _ = writeln!(s, "[pseudo-label quality against withheld labels (diagnostic, not a test-set metric)]");
        for r in pseudo_label_accuracy(&ds.tasks, &outcome.assignments, truth) {
            let _ = writeln!(s, "{r}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 3);
    }

    #[test]
    fn bad_arguments_are_config_errors() {
        assert_eq!(main(["xdata-complete"]), 1);
        assert_eq!(main(["xdata-complete", "--config", "x", "--seed", "abc"]), 1);
        assert_eq!(main(["xdata-complete", "--help"]), 0);
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(file_safe("a b/c"), "a_b_c");
    }
}
