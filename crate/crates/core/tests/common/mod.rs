//! Reference implementations and builders shared by the integration tests.
//! The oracles here are written from the metric and loss definitions alone
//! and never call into the library's own formulas.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xdata::dataset::{LabelCell, MultiTargetDataset, TaskKind, TaskSchema};
use xdata::model::{init_network, MtShlNetwork, NetworkConfig, TaskOutput};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn task(id: usize, name: &str, kind: TaskKind) -> TaskSchema {
    TaskSchema { task_id: id, name: name.into(), kind, source_datasets: BTreeSet::from([1]) }
}

pub fn names(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

/// One binary, one 4-class and one regression task.
pub fn three_tasks() -> Vec<TaskSchema> {
    vec![
        task(1, "bin", TaskKind::Binary(names("b", 2))),
        task(2, "cls", TaskKind::Multiclass(names("c", 4))),
        task(3, "reg", TaskKind::Regression),
    ]
}

/// Random small architecture: shared layers up to [6,4], head hidden
/// layers up to [3].
pub fn random_micro_config(r: &mut ChaCha8Rng, tasks: &[TaskSchema]) -> NetworkConfig {
    let shared = match r.random_range(0..4) {
        0 => vec![],
        1 => vec![r.random_range(1..=6)],
        _ => vec![r.random_range(1..=6), r.random_range(1..=4)],
    };
    let mut heads = BTreeMap::new();
    for t in tasks {
        if r.random_bool(0.5) {
            heads.insert(t.name.clone(), vec![r.random_range(1..=3)]);
        }
    }
    NetworkConfig {
        shared_layer_sizes: shared,
        head_hidden_sizes: heads,
        dropout_rate: 0.0,
        mc_passes: 1,
        seed: r.random(),
        ..NetworkConfig::default()
    }
}

/// Perturbs every parameter so that biases are nonzero too.
pub fn jitter(net: &mut MtShlNetwork, r: &mut ChaCha8Rng, scale: f64) {
    let p: Vec<f64> = net.params().iter().map(|w| w + scale * r.random_range(-1.0..1.0)).collect();
    net.set_params(&p);
}

pub fn random_label(r: &mut ChaCha8Rng, kind: &TaskKind, undefined_rate: f64) -> LabelCell {
    if r.random_bool(undefined_rate) {
        return LabelCell::Undefined;
    }
    match kind {
        TaskKind::Regression => LabelCell::Real(r.random_range(-2.0..2.0)),
        k => LabelCell::ClassIndex(r.random_range(0..k.num_classes().unwrap())),
    }
}

pub fn random_batch(
    r: &mut ChaCha8Rng,
    f: usize,
    tasks: &[TaskSchema],
    n: usize,
    undefined_rate: f64,
) -> Vec<(Vec<f64>, Vec<LabelCell>)> {
    (0..n)
        .map(|_| {
            let x = (0..f).map(|_| r.random_range(-2.0..2.0)).collect();
            let y = tasks.iter().map(|t| random_label(r, &t.kind, undefined_rate)).collect();
            (x, y)
        })
        .collect()
}

pub fn random_micro_network(r: &mut ChaCha8Rng, f: usize, tasks: &[TaskSchema]) -> MtShlNetwork {
    let cfg = random_micro_config(r, tasks);
    let mut net = init_network(&cfg, f, tasks).unwrap();
    jitter(&mut net, r, 0.3);
    net
}

/// Loss of one defined cell computed straight from the head output:
/// cross-entropy for classes, squared error for regression.
pub fn cell_loss_oracle(out: &TaskOutput, label: LabelCell) -> f64 {
    match (out, label) {
        (_, LabelCell::Undefined) => 0.0,
        (TaskOutput::Binary(p), LabelCell::ClassIndex(1)) => -p.ln(),
        (TaskOutput::Binary(p), LabelCell::ClassIndex(0)) => -(1.0 - p).ln(),
        (TaskOutput::Multiclass(p), LabelCell::ClassIndex(c)) => -p[c].ln(),
        (TaskOutput::Regression(v), LabelCell::Real(y)) => (v - y) * (v - y),
        other => panic!("label does not fit output: {other:?}"),
    }
}

/// Masked multi-task loss summed over rows and tasks.
pub fn batch_loss_oracle(net: &MtShlNetwork, rows: &[(Vec<f64>, Vec<LabelCell>)]) -> f64 {
    rows.iter()
        .map(|(x, y)| {
            let outs = net.forward_deterministic(x).unwrap();
            outs.iter().zip(y).map(|(o, &l)| cell_loss_oracle(o, l)).sum::<f64>()
        })
        .sum()
}

/// Central finite differences of [`batch_loss_oracle`] over every parameter.
pub fn numeric_gradient(net: &MtShlNetwork, rows: &[(Vec<f64>, Vec<LabelCell>)], eps: f64) -> Vec<f64> {
    let base = net.params();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + eps;
            probe.set_params(&p);
            let up = batch_loss_oracle(&probe, rows);
            p[i] = base[i] - eps;
            probe.set_params(&p);
            let down = batch_loss_oracle(&probe, rows);
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// True when `a` and `b` agree to relative error `rel`, or absolute `abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let d = (a - b).abs();
    d <= abs || d <= rel * a.abs().max(b.abs())
}

/// UAR from an explicit confusion matrix, averaged over classes that occur
/// in the truth.
pub fn uar_oracle(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let mut sum = 0.0;
    let mut present = 0;
    for (c, row) in confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total > 0 {
            sum += row[c] as f64 / total as f64;
            present += 1;
        }
    }
    sum / present as f64
}

/// Two-pass sample covariance over the product of standard deviations.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let cov = sxy / (n - 1.0);
    cov / ((sxx / (n - 1.0)).sqrt() * (syy / (n - 1.0)).sqrt())
}

/// Dataset with `n` rows of `f` uniform features, labels derived from the
/// features (so there is something to learn) and cells left undefined
/// according to `undefined_per_task` (scattered, not contiguous).
pub fn synthetic_grid(seed: u64, n: usize, f: usize, tasks: Vec<TaskSchema>, undefined_per_task: &[usize]) -> MultiTargetDataset {
    let mut r = rng(seed);
    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mut labels: Vec<Vec<LabelCell>> = features
        .iter()
        .map(|x| {
            let s: f64 = x.iter().sum();
            tasks
                .iter()
                .map(|t| match &t.kind {
                    TaskKind::Regression => LabelCell::Real(s + 0.1 * x[0]),
                    k => {
                        let classes = k.num_classes().unwrap();
                        let u = ((s / f as f64 + 1.0) / 2.0 * classes as f64) as usize;
                        LabelCell::ClassIndex(u.min(classes - 1))
                    }
                })
                .collect()
        })
        .collect();
    for (t, &u) in undefined_per_task.iter().enumerate() {
        for i in rand::seq::index::sample(&mut r, n, u) {
            labels[i][t] = LabelCell::Undefined;
        }
    }
    let feature_names = (1..=f).map(|j| format!("x{j}")).collect();
    MultiTargetDataset::from_parts(features, labels, tasks, vec![1; n], feature_names).unwrap()
}
