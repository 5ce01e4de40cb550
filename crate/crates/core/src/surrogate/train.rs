//! Adam training of the latent network on the Sobolev loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::network::{LatentData, LatentNetwork};
use crate::error::{Error, Result};
use crate::pde::ProblemKind;
use crate::rng::NormalStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-sample loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// `a0_k = ||q_k||^2 + tau_0`, `a1_k = ||G_k||_F^2 + tau_1`, where
    /// `tau_j = tau_rel * mean_k` of the corresponding squared norm.
    PerSample { tau_rel: f64 },
    /// The same weight for every sample: the dataset means of `||q_k||^2` and `||G_k||_F^2`.
    Uniform,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization::PerSample { tau_rel: 1e-8 }
    }
}

impl Normalization {
    /// Attaches loss weights to `data`.
    pub fn apply(self, data: LatentData) -> Result<LatentData> {
        let n = data.len();
        if n == 0 {
            return Ok(data);
        }
        let q_sq: Vec<f64> = data.q.column_iter().map(|c| c.norm_squared()).collect();
        let g_sq: Vec<f64> = (0..n).map(|k| data.jacobian(k).norm_squared()).collect();
        let mean_q = q_sq.iter().sum::<f64>() / n as f64;
        let mean_g = g_sq.iter().sum::<f64>() / n as f64;
        let (a0, a1) = match self {
            Normalization::PerSample { tau_rel } => {
                if !(tau_rel >= 0.0) {
                    return Err(Error::invalid("tau must be non-negative"));
                }
                (
                    q_sq.iter().map(|v| v + tau_rel * mean_q).collect(),
                    g_sq.iter().map(|v| v + tau_rel * mean_g).collect(),
                )
            }
            Normalization::Uniform => (vec![mean_q; n], vec![mean_g; n]),
        };
        data.with_weights(a0, a1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamParams,
    pub lr0: f64,
    pub lr_halvings: Vec<usize>,
    pub normalization: Normalization,
    pub seed: u64,
}

impl TrainingSchedule {
    /// 3000 epochs, batch 25, five halvings from epoch 2250.
    pub fn paper(lr0: f64, seed: u64) -> Self {
        Self::scaled(3000, lr0, seed)
    }

    /// 600 epochs, batch 25, five halvings from epoch 450.
    pub fn desk(lr0: f64, seed: u64) -> Self {
        Self::scaled(600, lr0, seed)
    }

    fn scaled(epochs: usize, lr0: f64, seed: u64) -> Self {
        let start = epochs * 3 / 4;
        let step = epochs / 20;
        Self {
            epochs,
            batch_size: 25,
            optimizer: AdamParams::default(),
            lr0,
            lr_halvings: (0..5).map(|i| start + i * step).collect(),
            normalization: Normalization::default(),
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if self.batch_size > n {
            return Err(Error::invalid(format!("batch size {} exceeds the {n} training samples", self.batch_size)));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.lr_halvings.windows(2).any(|w| w[0] >= w[1])
            || self.lr_halvings.last().is_some_and(|&e| e >= self.epochs)
        {
            return Err(Error::invalid("halving epochs must be strictly increasing and below the epoch count"));
        }
        let AdamParams { beta1, beta2, eps } = self.optimizer;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
            return Err(Error::invalid("Adam parameters out of range"));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let halvings = self.lr_halvings.iter().filter(|&&e| e <= epoch).count();
        self.lr0 * 0.5f64.powi(halvings as i32)
    }
}

/// Network architecture and learning rate for one problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: usize,
    /// Hidden width as a multiple of the rank.
    pub width_factor: usize,
    pub activation: Activation,
    pub lr0: f64,
}

impl NetworkConfig {
    pub fn for_problem(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::SemilinearElliptic => {
                Self { depth: 6, width_factor: 2, activation: Activation::Softplus, lr0: 1e-3 }
            }
            ProblemKind::SteadyBurgers => {
                Self { depth: 4, width_factor: 2, activation: Activation::Softplus, lr0: 2.5e-4 }
            }
        }
    }

    pub fn width(&self, rank: usize) -> usize {
        self.width_factor * rank
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Mean training loss of every epoch, measured over the full dataset after the epoch.
    pub history: Vec<f64>,
    pub final_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Trains `net` in place and returns the per-epoch loss history.
pub fn train(net: &mut LatentNetwork, data: &LatentData, schedule: &TrainingSchedule) -> Result<TrainReport> {
    schedule.validate(data.len())?;
    if data.input_dim() != net.input_dim() || data.output_dim() != net.output_dim() {
        return Err(Error::dims("latent data does not match the network dimensions"));
    }
    let initial_loss = net.loss(data)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let AdamParams { beta1, beta2, eps } = schedule.optimizer;
    let mut adam = Adam { m: vec![0.0; net.param_count()], v: vec![0.0; net.param_count()], t: 0 };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = NormalStream::new(schedule.seed, 1);
    let mut history = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let lr = schedule.learning_rate(epoch);
        order.shuffle(rng.rng_mut());
        for chunk in order.chunks(schedule.batch_size) {
            let batch = data.select(chunk);
            let (loss, grad) = net.loss_and_gradient(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let g = grad.flat();
            adam.t += 1;
            let c1 = 1.0 - beta1.powi(adam.t);
            let c2 = 1.0 - beta2.powi(adam.t);
            for (i, gi) in g.iter().enumerate() {
                adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * gi;
                adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * gi * gi;
            }
            let (m, v) = (&adam.m, &adam.v);
            net.apply_update(|i, _| lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps));
        }
        let loss = net.loss(data)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(loss);
    }
    let final_loss = *history.last().expect("at least one epoch");
    Ok(TrainReport { initial_loss, history, final_loss })
}
