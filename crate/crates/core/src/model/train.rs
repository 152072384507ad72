use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{accumulate, loss_and_gradient, Gradients};
use super::{DropoutMode, ModelError, MtShlNetwork};
use crate::dataset::MultiTargetDataset;

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct Trained {
    pub network: MtShlNetwork,
    /// Summed dropout-mode loss of every epoch.
    pub epoch_losses: Vec<f64>,
    /// Tasks without a single defined cell among the training rows; their
    /// heads are left untouched.
    pub frozen_tasks: Vec<usize>,
}

/// Deterministic-mode masked loss over the given rows.
pub fn dataset_loss(net: &MtShlNetwork, ds: &MultiTargetDataset, rows: &[usize]) -> Result<f64, ModelError> {
    let batch: Vec<_> = rows.iter().map(|&i| (ds.features(i), ds.labels(i))).collect();
    loss_and_gradient(net, &batch).map(|(l, _)| l)
}

/// Minibatch SGD on the masked multi-task loss over `rows` of `ds`.
///
/// Every epoch visits the rows in a fresh seeded shuffle; forward passes
/// during training sample dropout masks. The result is a pure function of
/// the network, the data and `net.config.seed`.
pub fn train(net: &MtShlNetwork, ds: &MultiTargetDataset, rows: &[usize]) -> Result<Trained, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if ds.num_features() != net.feature_dim {
        return Err(ModelError::DimensionMismatch { expected: net.feature_dim, found: ds.num_features() });
    }
    let cfg = &net.config;
    let frozen_tasks: Vec<usize> =
        (0..ds.num_tasks()).filter(|&t| rows.iter().all(|&i| !ds.label(i, t).is_defined())).collect();
    for &t in &frozen_tasks {
        warn!("task '{}' has no labeled instances in the training set; its head stays frozen", ds.tasks[t].name);
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order = rows.to_vec();
    let mut grads = Gradients::zeros(&net);
    let mut velocity = cfg.momentum.gt(&0.0).then(|| vec![0.0; net.num_params()]);
    let mut params = net.params();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let trace = net.trace(ds.features(i), &mut DropoutMode::Sampled(&mut rng))?;
                epoch_loss += accumulate(&net, &trace, ds.labels(i), &mut grads);
            }
            let g = grads.flatten();
            match velocity.as_mut() {
                Some(v) => {
                    for ((p, v), g) in params.iter_mut().zip(v.iter_mut()).zip(&g) {
                        *v = cfg.momentum * *v + g;
                        *p -= cfg.learning_rate * *v;
                    }
                }
                None => {
                    for (p, g) in params.iter_mut().zip(&g) {
                        *p -= cfg.learning_rate * g;
                    }
                }
            }
            net.set_params(&params);
        }
        epoch_losses.push(epoch_loss);
    }
    Ok(Trained { network: net, epoch_losses, frozen_tasks })
}
