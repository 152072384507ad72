//! Multi-task shared-hidden-layer network.
//!
//! A shared trunk of fully connected hidden layers feeds one head per task.
//! Each head has optional hidden layers followed by an output layer: one
//! sigmoid unit for binary tasks, a softmax over K units for multiclass
//! tasks, and one linear unit for regression tasks.

mod checkpoint;
mod loss;
mod predict;
mod train;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AffineScale, TaskKind, TaskSchema};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use loss::{loss_and_gradient, mt_loss, task_loss, Gradients};
pub use predict::{
    argmax, confidence, decode_binary, entropy, entropy_confidence, predict, sample_variance, RawOutput,
    RowPrediction, TaskPrediction,
};
pub use train::{dataset_loss, train, Trained};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `h = f(z)`.
    fn derivative(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation '{other}' (expected tanh or relu)")),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub shared_layer_sizes: Vec<usize>,
    /// Hidden layer sizes of each task head, keyed by task name. Tasks not
    /// listed get an output layer only.
    pub head_hidden_sizes: BTreeMap<String, Vec<usize>>,
    pub dropout_rate: f64,
    pub hidden_activation: Activation,
    pub epochs: usize,
    /// Step size applied to the summed (not averaged) minibatch loss.
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Number of dropout-sampled forward passes for confidence estimation.
    pub mc_passes: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            shared_layer_sizes: vec![64, 64],
            head_hidden_sizes: BTreeMap::new(),
            dropout_rate: 0.2,
            hidden_activation: Activation::Tanh,
            epochs: 30,
            learning_rate: 0.005,
            momentum: 0.0,
            batch_size: 32,
            mc_passes: 20,
            seed: 1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.shared_layer_sizes.iter().chain(self.head_hidden_sizes.values().flatten()).any(|&s| s == 0) {
            return bad("layer sizes must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be a positive number", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.mc_passes == 0 || (self.dropout_rate > 0.0 && self.mc_passes < 2) {
            return bad(format!("mc_passes {} too small (need >= 2 when dropout > 0)", self.mc_passes));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("network needs at least one task")]
    NoTasks,
    #[error("expected {expected} input features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Dense { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    /// `(fan_in, fan_out)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.inputs, self.outputs)
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        if self.inputs == 0 {
            return self.bias.clone();
        }
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Sigmoid,
    Softmax(usize),
    Linear,
}

impl HeadKind {
    pub fn for_task(kind: &TaskKind) -> Self {
        match kind {
            TaskKind::Binary(_) => HeadKind::Sigmoid,
            TaskKind::Multiclass(c) => HeadKind::Softmax(c.len()),
            TaskKind::Regression => HeadKind::Linear,
        }
    }

    pub fn output_size(self) -> usize {
        match self {
            HeadKind::Softmax(k) => k,
            HeadKind::Sigmoid | HeadKind::Linear => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub kind: HeadKind,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<Dense>,
}

/// Output of one head after its output activation.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskOutput {
    /// Sigmoid probability of class 1.
    Binary(f64),
    Multiclass(Vec<f64>),
    /// Prediction in standardized target units.
    Regression(f64),
}

pub enum DropoutMode<'a, R: Rng> {
    Deterministic,
    Sampled(&'a mut R),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtShlNetwork {
    pub config: NetworkConfig,
    pub feature_dim: usize,
    pub task_names: Vec<String>,
    pub shared: Vec<Dense>,
    pub heads: Vec<Head>,
    /// Standardization of each regression target; identity for the rest.
    pub target_scales: Vec<AffineScale>,
}

/// Creates a network with Glorot-uniform weights and zero biases.
/// Deterministic in `config.seed`.
pub fn init_network(config: &NetworkConfig, feature_dim: usize, tasks: &[TaskSchema]) -> Result<MtShlNetwork, ModelError> {
    config.validate()?;
    if tasks.is_empty() {
        return Err(ModelError::NoTasks);
    }
    if let Some(unknown) = config.head_hidden_sizes.keys().find(|k| !tasks.iter().any(|t| &t.name == *k)) {
        return Err(ModelError::InvalidConfig(format!("head layers given for unknown task '{unknown}'")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shared = Vec::with_capacity(config.shared_layer_sizes.len());
    let mut width = feature_dim;
    for &size in &config.shared_layer_sizes {
        shared.push(Dense::glorot(width, size, &mut rng));
        width = size;
    }
    let heads = tasks
        .iter()
        .map(|task| {
            let kind = HeadKind::for_task(&task.kind);
            let hidden = config.head_hidden_sizes.get(&task.name).map(Vec::as_slice).unwrap_or(&[]);
            let mut layers = Vec::with_capacity(hidden.len() + 1);
            let mut w = width;
            for &size in hidden.iter().chain(std::iter::once(&kind.output_size())) {
                layers.push(Dense::glorot(w, size, &mut rng));
                w = size;
            }
            Head { kind, layers }
        })
        .collect();
    Ok(MtShlNetwork {
        config: config.clone(),
        feature_dim,
        task_names: tasks.iter().map(|t| t.name.clone()).collect(),
        shared,
        heads,
        target_scales: vec![AffineScale::identity(); tasks.len()],
    })
}

/// Per-layer values kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct HiddenTrace {
    pub input: Vec<f64>,
    /// Activation before dropout.
    pub act: Vec<f64>,
    /// Dropout multiplier per unit: 0, 1/(1-p), or 1 in deterministic mode.
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct HeadTrace {
    pub hidden: Vec<HiddenTrace>,
    pub output_input: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub shared: Vec<HiddenTrace>,
    pub heads: Vec<HeadTrace>,
}

fn hidden_layer<R: Rng>(
    layer: &Dense,
    input: Vec<f64>,
    activation: Activation,
    dropout: f64,
    mode: &mut DropoutMode<'_, R>,
) -> (HiddenTrace, Vec<f64>) {
    let act: Vec<f64> = layer.affine(&input).into_iter().map(|z| activation.apply(z)).collect();
    let scale: Vec<f64> = match mode {
        DropoutMode::Sampled(rng) if dropout > 0.0 => {
            let keep = 1.0 / (1.0 - dropout);
            act.iter().map(|_| if rng.random::<f64>() < dropout { 0.0 } else { keep }).collect()
        }
        _ => vec![1.0; act.len()],
    };
    let out = act.iter().zip(&scale).map(|(a, s)| a * s).collect();
    (HiddenTrace { input, act, scale }, out)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl MtShlNetwork {
    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub(crate) fn trace<R: Rng>(&self, x: &[f64], mode: &mut DropoutMode<'_, R>) -> Result<ForwardTrace, ModelError> {
        if x.len() != self.feature_dim {
            return Err(ModelError::DimensionMismatch { expected: self.feature_dim, found: x.len() });
        }
        let act = self.config.hidden_activation;
        let p = self.config.dropout_rate;
        let mut a = x.to_vec();
        let mut shared = Vec::with_capacity(self.shared.len());
        for layer in &self.shared {
            let (t, next) = hidden_layer(layer, a, act, p, mode);
            shared.push(t);
            a = next;
        }
        let mut heads = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (out_layer, hidden_layers) = head.layers.split_last().expect("head has an output layer");
            let mut h = a.clone();
            let mut hidden = Vec::with_capacity(hidden_layers.len());
            for layer in hidden_layers {
                let (t, next) = hidden_layer(layer, h, act, p, mode);
                hidden.push(t);
                h = next;
            }
            let logits = out_layer.affine(&h);
            heads.push(HeadTrace { hidden, output_input: h, logits });
        }
        Ok(ForwardTrace { shared, heads })
    }

    /// Per-task outputs for one feature vector. Sampled mode zeroes each
    /// hidden unit with probability `dropout_rate` and rescales survivors by
    /// `1 / (1 - dropout_rate)`; inputs and outputs are never dropped.
    pub fn forward<R: Rng>(&self, x: &[f64], mut mode: DropoutMode<'_, R>) -> Result<Vec<TaskOutput>, ModelError> {
        let trace = self.trace(x, &mut mode)?;
        Ok(self.outputs_from(&trace))
    }

    /// Deterministic forward pass.
    pub fn forward_deterministic(&self, x: &[f64]) -> Result<Vec<TaskOutput>, ModelError> {
        self.forward::<ChaCha8Rng>(x, DropoutMode::Deterministic)
    }

    pub(crate) fn outputs_from(&self, trace: &ForwardTrace) -> Vec<TaskOutput> {
        self.heads
            .iter()
            .zip(&trace.heads)
            .map(|(head, t)| match head.kind {
                HeadKind::Sigmoid => TaskOutput::Binary(sigmoid(t.logits[0])),
                HeadKind::Softmax(_) => TaskOutput::Multiclass(softmax(&t.logits)),
                HeadKind::Linear => TaskOutput::Regression(t.logits[0]),
            })
            .collect()
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.shared.iter().chain(self.heads.iter().flat_map(|h| h.layers.iter()))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.shared.iter_mut().chain(self.heads.iter_mut().flat_map(|h| h.layers.iter_mut()))
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(Dense::num_params).sum()
    }

    /// All parameters flattened: shared layers, then each head, weights
    /// before biases within a layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params());
        let mut rest = params;
        for l in self.layers_mut() {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
    }

    /// Parameters of one head, flattened in the same order as [`params`].
    ///
    /// [`params`]: MtShlNetwork::params
    pub fn head_params(&self, task: usize) -> Vec<f64> {
        self.heads[task].layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    pub(crate) fn schema(id: usize, name: &str, kind: TaskKind) -> TaskSchema {
        TaskSchema { task_id: id, name: name.into(), kind, source_datasets: BTreeSet::from([1]) }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = NetworkConfig { shared_layer_sizes: vec![5, 3], seed: 9, ..Default::default() };
        let tasks = [schema(1, "r", TaskKind::Regression)];
        let a = init_network(&cfg, 4, &tasks).unwrap();
        let b = init_network(&cfg, 4, &tasks).unwrap();
        assert_eq!(
            a.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = init_network(&NetworkConfig { seed: 10, ..cfg }, 4, &tasks).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn init_shapes_chain() {
        let cfg = NetworkConfig { shared_layer_sizes: vec![8, 8], ..Default::default() };
        let net = init_network(&cfg, 10, &[schema(1, "r", TaskKind::Regression)]).unwrap();
        let shapes: Vec<_> = net.layers().map(Dense::shape).collect();
        assert_eq!(shapes, vec![(10, 8), (8, 8), (8, 1)]);
        assert!(net.layers().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let limit = (6.0f64 / 18.0).sqrt();
        assert!(net.shared[0].weights.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn head_hidden_layers() {
        let mut cfg = NetworkConfig { shared_layer_sizes: vec![6], ..Default::default() };
        cfg.head_hidden_sizes.insert("m".into(), vec![3]);
        let tasks = [
            schema(1, "m", TaskKind::Multiclass(vec!["a".into(), "b".into(), "c".into(), "d".into()])),
            schema(2, "b", TaskKind::Binary(vec!["n".into(), "y".into()])),
        ];
        let net = init_network(&cfg, 2, &tasks).unwrap();
        assert_eq!(net.heads[0].layers.iter().map(Dense::shape).collect::<Vec<_>>(), vec![(6, 3), (3, 4)]);
        assert_eq!(net.heads[1].layers.iter().map(Dense::shape).collect::<Vec<_>>(), vec![(6, 1)]);
        cfg.head_hidden_sizes.insert("nope".into(), vec![2]);
        assert!(matches!(init_network(&cfg, 2, &tasks), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn zero_tasks_rejected() {
        assert_eq!(init_network(&NetworkConfig::default(), 3, &[]).unwrap_err(), ModelError::NoTasks);
    }

    #[test]
    fn config_validation() {
        let ok = NetworkConfig::default();
        assert!(ok.validate().is_ok());
        assert!(NetworkConfig { dropout_rate: 1.0, ..ok.clone() }.validate().is_err());
        assert!(NetworkConfig { mc_passes: 1, ..ok.clone() }.validate().is_err());
        assert!(NetworkConfig { mc_passes: 1, dropout_rate: 0.0, ..ok.clone() }.validate().is_ok());
        assert!(NetworkConfig { shared_layer_sizes: vec![4, 0], ..ok.clone() }.validate().is_err());
        assert!(NetworkConfig { learning_rate: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let net = init_network(&NetworkConfig::default(), 3, &[schema(1, "r", TaskKind::Regression)]).unwrap();
        assert_eq!(
            net.forward_deterministic(&[1.0, 2.0]).unwrap_err(),
            ModelError::DimensionMismatch { expected: 3, found: 2 }
        );
    }

    #[test]
    fn no_dropout_sampling_matches_deterministic() {
        let cfg = NetworkConfig { dropout_rate: 0.0, shared_layer_sizes: vec![7, 5], ..Default::default() };
        let tasks = [
            schema(1, "b", TaskKind::Binary(vec!["n".into(), "y".into()])),
            schema(2, "r", TaskKind::Regression),
        ];
        let net = init_network(&cfg, 3, &tasks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.3, -1.2, 2.0];
        assert_eq!(net.forward(&x, DropoutMode::Sampled(&mut rng)).unwrap(), net.forward_deterministic(&x).unwrap());
    }

    #[test]
    fn dropout_changes_outputs() {
        let cfg = NetworkConfig { dropout_rate: 0.5, shared_layer_sizes: vec![16], ..Default::default() };
        let net = init_network(&cfg, 3, &[schema(1, "r", TaskKind::Regression)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.3, -1.2, 2.0];
        let a = net.forward(&x, DropoutMode::Sampled(&mut rng)).unwrap();
        let b = net.forward(&x, DropoutMode::Sampled(&mut rng)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_output_layer_gives_uniform_softmax() {
        let tasks = [schema(1, "m", TaskKind::Multiclass(vec!["a".into(), "b".into(), "c".into(), "d".into()]))];
        let mut net = init_network(&NetworkConfig::default(), 2, &tasks).unwrap();
        let out = net.heads[0].layers.last_mut().unwrap();
        out.weights.iter_mut().for_each(|w| *w = 0.0);
        match &net.forward_deterministic(&[1.0, -1.0]).unwrap()[0] {
            TaskOutput::Multiclass(p) => assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_output_in_open_unit_interval() {
        let tasks = [schema(1, "b", TaskKind::Binary(vec!["n".into(), "y".into()]))];
        let net = init_network(&NetworkConfig::default(), 2, &tasks).unwrap();
        for x in [[0.0, 0.0], [5.0, -3.0], [-9.0, 4.0]] {
            match net.forward_deterministic(&x).unwrap()[0] {
                TaskOutput::Binary(p) => assert!(p > 0.0 && p < 1.0),
                ref other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn stable_softmax_and_sigmoid_for_large_inputs() {
        for z in [vec![1e3, -1e3, 0.0], vec![-1e3, -1e3 + 1.0], vec![1e3, 1e3]] {
            let p = softmax(&z);
            assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0 && *v <= 1.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(sigmoid(1e3), 1.0);
        assert_eq!(sigmoid(-1e3), 0.0);
        assert!(sigmoid(-1e3).is_finite());
    }

    #[test]
    fn params_round_trip() {
        let cfg = NetworkConfig { shared_layer_sizes: vec![3], ..Default::default() };
        let mut net = init_network(&cfg, 2, &[schema(1, "r", TaskKind::Regression)]).unwrap();
        let p: Vec<f64> = (0..net.num_params()).map(|i| i as f64).collect();
        net.set_params(&p);
        assert_eq!(net.params(), p);
        assert_eq!(net.head_params(0), p[9..].to_vec());
    }
}
