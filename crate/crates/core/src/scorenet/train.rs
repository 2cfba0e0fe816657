//! Adam training of a score network with EMA shadow weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad_at, sample_targets, NoisePredictor, ScoreNetwork};
use crate::cloud::PointCloud;
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Exponential-moving-average decay of the shadow weights returned by
    /// [`train`]; `0` disables averaging.
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            iterations: 20_000,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            ema_decay: 0.999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return Err(Error::Parameter(format!(
                "adam_eps must be positive, got {}",
                self.adam_eps
            )));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Parameter(format!(
                "ema_decay must be in [0, 1), got {}",
                self.ema_decay
            )));
        }
        Ok(())
    }
}

/// Runs `cfg.iterations` Adam steps of the denoising objective on `data` and
/// returns the network carrying the EMA shadow weights.
///
/// The run is a pure function of `(net, s, data, cfg)`: batches, steps, and
/// noise all come from one ChaCha stream seeded by `cfg.seed`, drawn in a
/// fixed order. A non-finite loss aborts with [`Error::Training`].
pub fn train(
    net: &ScoreNetwork,
    s: &NoiseSchedule,
    data: &PointCloud,
    cfg: &TrainConfig,
) -> Result<ScoreNetwork> {
    Ok(train_with_losses(net, s, data, cfg)?.0)
}

/// Like [`train`], additionally returning the per-iteration losses for
/// monitoring and trend checks.
pub fn train_with_losses(
    net: &ScoreNetwork,
    s: &NoiseSchedule,
    data: &PointCloud,
    cfg: &TrainConfig,
) -> Result<(ScoreNetwork, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Parameter("training data is empty".into()));
    }
    if data.dim() != net.input_dim() {
        return Err(Error::Shape(format!(
            "network has input_dim {}, data has dim {}",
            net.input_dim(),
            data.dim()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = net.clone();
    let n_weights = net.weights().len();
    let mut m = vec![0.0; n_weights];
    let mut v = vec![0.0; n_weights];
    let mut shadow = net.weights().to_vec();
    let d = data.dim();
    let mut batch = vec![0.0; cfg.batch_size * d];
    let mut losses = Vec::with_capacity(cfg.iterations);

    for it in 1..=cfg.iterations {
        for slot in 0..cfg.batch_size {
            let pick = rng.gen_range(0..data.n());
            batch[slot * d..(slot + 1) * d].copy_from_slice(data.point(pick));
        }
        let (ts, eps) = sample_targets(s, cfg.batch_size, d, &mut rng);
        let (loss, grad) = loss_and_grad_at(&net, s, &batch, &ts, &eps)?;
        if !loss.is_finite() {
            return Err(Error::Training { iteration: it, loss });
        }
        losses.push(loss);

        let bc1 = 1.0 - cfg.adam_beta1.powi(it as i32);
        let bc2 = 1.0 - cfg.adam_beta2.powi(it as i32);
        let step = cfg.learning_rate / bc1;
        let weights = net.weights_mut();
        for i in 0..n_weights {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            weights[i] -= step * m[i] / ((v[i] / bc2).sqrt() + cfg.adam_eps);
            shadow[i] = cfg.ema_decay * shadow[i] + (1.0 - cfg.ema_decay) * weights[i];
        }
    }
    net.set_weights(shadow)?;
    Ok((net, losses))
}
