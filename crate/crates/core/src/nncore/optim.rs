use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use crate::error::{PmcError, Result};

const INV_GAMMA: f64 = 10.0;
const INV_POWER: f64 = 0.75;

/// Annealed learning rate `base_lr * (1 + 10 p)^(-0.75)`.
pub fn inv_lr(p: f64, base_lr: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PmcError::Argument(format!(
            "training progress must lie in [0, 1], got {p}"
        )));
    }
    Ok(base_lr * (1.0 + INV_GAMMA * p).powf(-INV_POWER))
}

/// Adaptation ramp `2 / (1 + exp(-10 p)) - 1`, rising from 0 to ~1.
pub fn adaptation_ramp(p: f64) -> f64 {
    2.0 / (1.0 + (-10.0 * p).exp()) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Apply the INV annealing to the learning rate.
    pub anneal: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 3e-4,
            anneal: true,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(PmcError::Argument("base_lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(PmcError::Argument("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(PmcError::Argument("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Momentum SGD state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub config: SgdConfig,
    velocity: Vec<Vec<f64>>,
    progress: f64,
}

impl OptimState {
    pub fn new(net: &DenseNet, config: SgdConfig) -> Self {
        let velocity = net
            .layers()
            .iter()
            .map(|l| vec![0.0; l.weights.len() + l.bias.len()])
            .collect();
        OptimState {
            config,
            velocity,
            progress: 0.0,
        }
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    /// Progress only moves forward.
    pub fn set_progress(&mut self, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) || p < self.progress {
            return Err(PmcError::Argument(format!(
                "progress must be non-decreasing within [0, 1]: {} -> {p}",
                self.progress
            )));
        }
        self.progress = p;
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        if self.config.anneal {
            // progress is kept inside [0, 1] by set_progress
            inv_lr(self.progress, self.config.base_lr).unwrap_or(self.config.base_lr)
        } else {
            self.config.base_lr
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// `v <- momentum v + g + wd * w ; w <- w - lr v`
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.velocity.len() != net.layers().len() {
            return Err(PmcError::State("optimizer state does not match network".into()));
        }
        let lr = self.learning_rate();
        let SgdConfig {
            momentum, weight_decay, ..
        } = self.config;
        for ((layer, g), vel) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.velocity) {
            if g.weights.len() != layer.weights.len()
                || g.bias.len() != layer.bias.len()
                || vel.len() != layer.weights.len() + layer.bias.len()
            {
                return Err(PmcError::State("gradient shape does not match parameters".into()));
            }
            let (vw, vb) = vel.split_at_mut(layer.weights.len());
            for ((w, gw), v) in layer.weights.iter_mut().zip(&g.weights).zip(vw) {
                *v = momentum * *v + gw + weight_decay * *w;
                *w -= lr * *v;
            }
            for ((b, gb), v) in layer.bias.iter_mut().zip(&g.bias).zip(vb) {
                *v = momentum * *v + gb + weight_decay * *b;
                *b -= lr * *v;
            }
        }
        Ok(())
    }
}
