//! Masked multi-task loss and its gradient.
//!
//! The loss of a batch is the sum, over instances and tasks, of the task
//! loss of every defined label cell. Undefined cells contribute nothing to
//! either the loss or the gradient.

use rand_chacha::ChaCha8Rng;

use super::{Dense, DropoutMode, ForwardTrace, HeadKind, HiddenTrace, ModelError, MtShlNetwork, TaskOutput};
use crate::dataset::LabelCell;

/// Loss of one defined cell, computed from the head's output activation:
/// binary cross-entropy, categorical cross-entropy, or squared error.
/// Undefined cells (and mismatched label kinds) give 0.
pub fn task_loss(output: &TaskOutput, label: LabelCell) -> f64 {
    match (output, label) {
        (TaskOutput::Binary(p), LabelCell::ClassIndex(y)) => {
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        }
        (TaskOutput::Multiclass(p), LabelCell::ClassIndex(y)) => -p[y].ln(),
        (TaskOutput::Regression(v), LabelCell::Real(y)) => (v - y) * (v - y),
        _ => 0.0,
    }
}

/// Sum of task losses over all defined cells of a batch.
pub fn mt_loss<L: AsRef<[LabelCell]>>(outputs: &[Vec<TaskOutput>], labels: &[L]) -> f64 {
    assert_eq!(outputs.len(), labels.len(), "outputs and labels cover different rows");
    outputs
        .iter()
        .zip(labels)
        .map(|(row, cells)| {
            let cells = cells.as_ref();
            assert_eq!(row.len(), cells.len(), "outputs and labels cover different tasks");
            row.iter().zip(cells).map(|(o, &c)| task_loss(o, c)).sum::<f64>()
        })
        .sum()
}

/// Gradient buffers mirroring the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) shared: Vec<LayerGrad>,
    pub(crate) heads: Vec<Vec<LayerGrad>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LayerGrad {
    fn zeros(layer: &Dense) -> Self {
        LayerGrad { w: vec![0.0; layer.weights.len()], b: vec![0.0; layer.bias.len()] }
    }
}

impl Gradients {
    pub fn zeros(net: &MtShlNetwork) -> Self {
        Gradients {
            shared: net.shared.iter().map(LayerGrad::zeros).collect(),
            heads: net.heads.iter().map(|h| h.layers.iter().map(LayerGrad::zeros).collect()).collect(),
        }
    }

    /// Flattened in the same order as [`MtShlNetwork::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.shared
            .iter()
            .chain(self.heads.iter().flatten())
            .flat_map(|g| g.w.iter().chain(&g.b))
            .copied()
            .collect()
    }

    pub fn head_flat(&self, task: usize) -> Vec<f64> {
        self.heads[task].iter().flat_map(|g| g.w.iter().chain(&g.b)).copied().collect()
    }

    pub(crate) fn clear(&mut self) {
        for g in self.shared.iter_mut().chain(self.heads.iter_mut().flatten()) {
            g.w.iter_mut().for_each(|v| *v = 0.0);
            g.b.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn log_sigmoid_pair(z: f64) -> (f64, f64) {
    // (ln sigmoid(z), ln(1 - sigmoid(z))) without overflow
    let softplus_neg = (-z.abs()).exp().ln_1p();
    (-(z.max(0.0) - z) - softplus_neg, -z.max(0.0) - softplus_neg)
}

/// Loss of one cell and its derivative with respect to the head's logits.
fn logit_loss(kind: HeadKind, logits: &[f64], label: LabelCell) -> Option<(f64, Vec<f64>)> {
    match (kind, label) {
        (_, LabelCell::Undefined) => None,
        (HeadKind::Sigmoid, LabelCell::ClassIndex(y)) => {
            let z = logits[0];
            let (lp, lq) = log_sigmoid_pair(z);
            let loss = if y == 1 { -lp } else { -lq };
            Some((loss, vec![super::sigmoid(z) - y as f64]))
        }
        (HeadKind::Softmax(_), LabelCell::ClassIndex(y)) => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let mut grad = super::softmax(logits);
            grad[y] -= 1.0;
            Some((lse - logits[y], grad))
        }
        (HeadKind::Linear, LabelCell::Real(y)) => {
            let d = logits[0] - y;
            Some((d * d, vec![2.0 * d]))
        }
        (kind, label) => panic!("label {label:?} does not fit a {kind:?} head"),
    }
}

/// Adds `delta ⊗ input` to the layer gradient and returns `Wᵀ delta`.
fn backprop_affine(layer: &Dense, input: &[f64], delta: &[f64], g: &mut LayerGrad) -> Vec<f64> {
    let mut d_in = vec![0.0; layer.inputs];
    for (o, &d) in delta.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        g.b[o] += d;
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        let grow = &mut g.w[o * layer.inputs..(o + 1) * layer.inputs];
        for ((gw, &x), (di, &w)) in grow.iter_mut().zip(input).zip(d_in.iter_mut().zip(row)) {
            *gw += d * x;
            *di += d * w;
        }
    }
    d_in
}

fn backprop_hidden(
    layer: &Dense,
    trace: &HiddenTrace,
    d_out: &[f64],
    activation: super::Activation,
    g: &mut LayerGrad,
) -> Vec<f64> {
    let delta: Vec<f64> = d_out
        .iter()
        .zip(&trace.scale)
        .zip(&trace.act)
        .map(|((d, s), h)| d * s * activation.derivative(*h))
        .collect();
    backprop_affine(layer, &trace.input, &delta, g)
}

/// Backpropagates the masked loss of one instance and accumulates into `grads`.
/// Returns the instance's loss.
pub(crate) fn accumulate(net: &MtShlNetwork, trace: &ForwardTrace, labels: &[LabelCell], grads: &mut Gradients) -> f64 {
    let act = net.config.hidden_activation;
    let mut loss = 0.0;
    let mut d_top: Option<Vec<f64>> = None;
    for (t, ((head, ht), &label)) in net.heads.iter().zip(&trace.heads).zip(labels).enumerate() {
        let Some((l, d_logits)) = logit_loss(head.kind, &ht.logits, label) else { continue };
        loss += l;
        let (out_layer, hidden) = head.layers.split_last().expect("output layer");
        let hg = &mut grads.heads[t];
        let mut d = backprop_affine(out_layer, &ht.output_input, &d_logits, &mut hg[hidden.len()]);
        for (j, (layer, tr)) in hidden.iter().zip(&ht.hidden).enumerate().rev() {
            d = backprop_hidden(layer, tr, &d, act, &mut hg[j]);
        }
        match &mut d_top {
            None => d_top = Some(d),
            Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
        }
    }
    if let Some(mut d) = d_top {
        for (j, (layer, tr)) in net.shared.iter().zip(&trace.shared).enumerate().rev() {
            d = backprop_hidden(layer, tr, &d, act, &mut grads.shared[j]);
        }
    }
    loss
}

/// Deterministic-mode loss and exact gradient over a batch of
/// `(features, labels)` rows.
pub fn loss_and_gradient<X, L>(net: &MtShlNetwork, rows: &[(X, L)]) -> Result<(f64, Gradients), ModelError>
where
    X: AsRef<[f64]>,
    L: AsRef<[LabelCell]>,
{
    let mut grads = Gradients::zeros(net);
    let mut loss = 0.0;
    for (x, y) in rows {
        let trace = net.trace::<ChaCha8Rng>(x.as_ref(), &mut DropoutMode::Deterministic)?;
        loss += accumulate(net, &trace, y.as_ref(), &mut grads);
    }
    Ok((loss, grads))
}
