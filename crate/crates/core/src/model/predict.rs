//! Prediction and Monte-Carlo dropout confidence.
//!
//! Every prediction runs `mc_passes` dropout-sampled forward passes. For
//! classification tasks the confidence is the negated Shannon entropy of the
//! mean output distribution; for regression it is the negated sample
//! variance of the outputs. Higher is more confident in both cases, and the
//! maximum is 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{DropoutMode, HeadKind, ModelError, MtShlNetwork, TaskOutput};
use crate::dataset::{LabelCell, MultiTargetDataset};

/// Stream offset for per-row prediction RNGs, keeping them apart from the
/// initialization and training streams.
const PREDICT_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub enum RawOutput {
    /// Mean class distribution over the MC passes (binary: `[1 - p, p]`).
    Probabilities(Vec<f64>),
    /// Mean regression output in standardized units.
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPrediction {
    pub task: usize,
    /// Decoded label; regression values are in original target units.
    pub label: LabelCell,
    pub raw: RawOutput,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowPrediction {
    pub row: usize,
    pub tasks: Vec<TaskPrediction>,
}

/// Shannon entropy in nats; `0 ln 0` is taken as 0.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `-H(p)`, clamped to `[-ln K, 0]`.
pub fn entropy_confidence(p: &[f64]) -> f64 {
    let max = (p.len() as f64).ln();
    -entropy(p).clamp(0.0, max)
}

/// Unbiased sample variance (Welford); 0 for fewer than two samples.
pub fn sample_variance(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (n, &x) in samples.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (n + 1) as f64;
        m2 += delta * (x - mean);
    }
    m2 / (samples.len() - 1) as f64
}

/// Class 1 iff the sigmoid output is strictly above 0.5.
pub fn decode_binary(p: f64) -> usize {
    usize::from(p > 0.5)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

enum Accumulator {
    Classes(Vec<f64>),
    Values(Vec<f64>),
}

fn mc_samples<R: Rng>(net: &MtShlNetwork, x: &[f64], passes: usize, rng: &mut R) -> Result<Vec<Accumulator>, ModelError> {
    let mut acc: Vec<Accumulator> = net
        .heads
        .iter()
        .map(|h| match h.kind {
            HeadKind::Sigmoid => Accumulator::Classes(vec![0.0; 2]),
            HeadKind::Softmax(k) => Accumulator::Classes(vec![0.0; k]),
            HeadKind::Linear => Accumulator::Values(Vec::with_capacity(passes)),
        })
        .collect();
    for _ in 0..passes {
        let outputs = net.forward(x, DropoutMode::Sampled(&mut *rng))?;
        for (a, out) in acc.iter_mut().zip(outputs) {
            match (a, out) {
                (Accumulator::Classes(sum), TaskOutput::Binary(p)) => {
                    sum[0] += 1.0 - p;
                    sum[1] += p;
                }
                (Accumulator::Classes(sum), TaskOutput::Multiclass(p)) => {
                    sum.iter_mut().zip(p).for_each(|(s, v)| *s += v);
                }
                (Accumulator::Values(v), TaskOutput::Regression(y)) => v.push(y),
                _ => unreachable!("head kind and output kind agree"),
            }
        }
    }
    Ok(acc)
}

fn summarize(net: &MtShlNetwork, task: usize, acc: Accumulator, passes: usize) -> TaskPrediction {
    match acc {
        Accumulator::Classes(sum) => {
            let mean: Vec<f64> = sum.iter().map(|s| s / passes as f64).collect();
            let class = match net.heads[task].kind {
                HeadKind::Sigmoid => decode_binary(mean[1]),
                _ => argmax(&mean),
            };
            let confidence = entropy_confidence(&mean);
            TaskPrediction { task, label: LabelCell::ClassIndex(class), raw: RawOutput::Probabilities(mean), confidence }
        }
        Accumulator::Values(values) => {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            TaskPrediction {
                task,
                label: LabelCell::Real(net.target_scales[task].inverse(mean)),
                raw: RawOutput::Value(mean),
                confidence: -sample_variance(&values),
            }
        }
    }
}

/// Confidence of `task` for one feature vector from `passes` dropout samples.
pub fn confidence<R: Rng>(net: &MtShlNetwork, x: &[f64], task: usize, passes: usize, rng: &mut R) -> Result<f64, ModelError> {
    let mut acc = mc_samples(net, x, passes, rng)?;
    Ok(summarize(net, task, acc.swap_remove(task), passes).confidence)
}

/// MC-dropout predictions for every task of the given rows.
///
/// Each row draws its dropout masks from its own RNG stream derived from
/// `(net.config.seed, row)`, so the result does not depend on scheduling.
pub fn predict(net: &MtShlNetwork, ds: &MultiTargetDataset, rows: &[usize]) -> Result<Vec<RowPrediction>, ModelError> {
    let passes = net.config.mc_passes;
    rows.par_iter()
        .map(|&row| {
            let mut rng = ChaCha8Rng::seed_from_u64(net.config.seed);
            rng.set_stream(PREDICT_STREAM_BASE + row as u64);
            let acc = mc_samples(net, ds.features(row), passes, &mut rng)?;
            let tasks = acc.into_iter().enumerate().map(|(t, a)| summarize(net, t, a, passes)).collect();
            Ok(RowPrediction { row, tasks })
        })
        .collect()
}

impl MtShlNetwork {
    /// Deterministic-mode decoded labels; regression in original units.
    pub fn predict_labels(&self, x: &[f64]) -> Result<Vec<LabelCell>, ModelError> {
        Ok(self
            .forward_deterministic(x)?
            .into_iter()
            .enumerate()
            .map(|(t, out)| match out {
                TaskOutput::Binary(p) => LabelCell::ClassIndex(decode_binary(p)),
                TaskOutput::Multiclass(p) => LabelCell::ClassIndex(argmax(&p)),
                TaskOutput::Regression(v) => LabelCell::Real(self.target_scales[t].inverse(v)),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AffineScale, TaskKind, TaskSchema};
    use crate::model::{init_network, NetworkConfig};
    use std::collections::BTreeSet;

    fn schema(id: usize, name: &str, kind: TaskKind) -> TaskSchema {
        TaskSchema { task_id: id, name: name.into(), kind, source_datasets: BTreeSet::new() }
    }

    #[test]
    fn tie_and_argmax_rules() {
        assert_eq!(decode_binary(0.5), 0);
        assert_eq!(decode_binary(0.5000001), 1);
        assert_eq!(argmax(&[0.1, 0.6, 0.3]), 1);
        assert_eq!(argmax(&[0.4, 0.2, 0.4]), 0);
    }

    #[test]
    fn entropy_identities() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        assert!((entropy_confidence(&[0.25; 4]) + 1.386294).abs() < 1e-6);
        assert_eq!(entropy_confidence(&[0.0, 1.0, 0.0]), 0.0);
        assert_eq!(sample_variance(&[1.0; 4]), 0.0);
        assert!((sample_variance(&[1.0, 2.0, 3.0, 4.0]) - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(sample_variance(&[3.0]), 0.0);
    }

    #[test]
    fn regression_decoding_uses_target_scale() {
        let cfg = NetworkConfig { dropout_rate: 0.0, mc_passes: 3, shared_layer_sizes: vec![2], ..Default::default() };
        let mut net = init_network(&cfg, 1, &[schema(1, "r", TaskKind::Regression)]).unwrap();
        let out = net.heads[0].layers.last_mut().unwrap();
        out.weights.iter_mut().for_each(|w| *w = 0.0);
        out.bias[0] = 1.0;
        net.target_scales[0] = AffineScale { mean: 3.0, std: 2.0 };
        let ds = MultiTargetDataset::from_parts(
            vec![vec![0.7]],
            vec![vec![LabelCell::Undefined]],
            vec![schema(1, "r", TaskKind::Regression)],
            vec![1],
            vec!["x".into()],
        )
        .unwrap();
        let p = predict(&net, &ds, &[0]).unwrap();
        assert_eq!(p[0].tasks[0].label, LabelCell::Real(5.0));
        assert_eq!(p[0].tasks[0].raw, RawOutput::Value(1.0));
        assert_eq!(p[0].tasks[0].confidence, 0.0);
        assert_eq!(net.predict_labels(&[0.7]).unwrap(), vec![LabelCell::Real(5.0)]);
    }

    #[test]
    fn predictions_are_schedule_independent() {
        let cfg = NetworkConfig { dropout_rate: 0.3, mc_passes: 5, shared_layer_sizes: vec![6], ..Default::default() };
        let tasks = [
            schema(1, "b", TaskKind::Binary(vec!["n".into(), "y".into()])),
            schema(2, "r", TaskKind::Regression),
        ];
        let net = init_network(&cfg, 2, &tasks).unwrap();
        let n = 40;
        let ds = MultiTargetDataset::from_parts(
            (0..n).map(|i| vec![i as f64 / 10.0, 1.0 - i as f64 / 20.0]).collect(),
            vec![vec![LabelCell::Undefined; 2]; n],
            tasks.to_vec(),
            vec![1; n],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let all: Vec<usize> = (0..n).collect();
        let full = predict(&net, &ds, &all).unwrap();
        let single = predict(&net, &ds, &[17]).unwrap();
        assert_eq!(full[17], single[0]);
        for rp in &full {
            match &rp.tasks[0].raw {
                RawOutput::Probabilities(p) => assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9),
                other => panic!("{other:?}"),
            }
            assert!(rp.tasks[0].confidence <= 0.0 && rp.tasks[0].confidence >= -(2f64.ln()));
            assert!(rp.tasks[1].confidence <= 0.0);
        }
    }
}
