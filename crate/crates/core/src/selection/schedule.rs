use serde::{Deserialize, Serialize};

use crate::error::{PmcError, Result};

/// Self-paced proportion schedule of one accuracy stream.
///
/// At epoch `e` of `E`, `r = clamp(sum_{i<=e} eta_i / E, 0, 1)` where
/// `eta_i = -1` iff the accuracy fell below its running mean at both epoch
/// `i` and epoch `i - 1`, and `+1` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionSchedule {
    total_epochs: usize,
    accuracies: Vec<f64>,
    means: Vec<f64>,
    etas: Vec<i8>,
    ratios: Vec<f64>,
}

impl ProportionSchedule {
    pub fn new(total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(PmcError::Argument("total epochs must be >= 1".into()));
        }
        Ok(ProportionSchedule {
            total_epochs,
            accuracies: Vec::new(),
            means: Vec::new(),
            etas: Vec::new(),
            ratios: Vec::new(),
        })
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    /// Epochs recorded so far.
    pub fn epoch(&self) -> usize {
        self.accuracies.len()
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn etas(&self) -> &[i8] {
        &self.etas
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn current(&self) -> f64 {
        self.ratios.last().copied().unwrap_or(0.0)
    }

    /// Records the accuracy of the next epoch and returns the new proportion.
    pub fn update(&mut self, accuracy: f64) -> Result<f64> {
        let e = self.accuracies.len() + 1;
        if e > self.total_epochs {
            return Err(PmcError::ScheduleOverflow {
                epoch: e,
                total: self.total_epochs,
            });
        }
        if !accuracy.is_finite() {
            return Err(PmcError::Argument(format!("accuracy must be finite, got {accuracy}")));
        }
        self.accuracies.push(accuracy);
        let mean = self.accuracies.iter().sum::<f64>() / e as f64;
        self.means.push(mean);
        let eta = if e <= 2 {
            1
        } else {
            let dropped_now = accuracy < mean;
            let dropped_before = self.accuracies[e - 2] < self.means[e - 2];
            if dropped_now && dropped_before {
                -1
            } else {
                1
            }
        };
        self.etas.push(eta);
        let sum: i64 = self.etas.iter().map(|&v| v as i64).sum();
        let r = (sum as f64 / self.total_epochs as f64).clamp(0.0, 1.0);
        self.ratios.push(r);
        Ok(r)
    }
}

/// Which accuracy stream a schedule follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stream {
    Modality(usize),
    Fused,
}

/// Proportion schedules for every modality plus the fused stream, and the
/// multiplier applied to the fused proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub modalities: Vec<ProportionSchedule>,
    pub fused: ProportionSchedule,
    pub alpha: f64,
}

impl CurriculumState {
    pub fn new(n_modalities: usize, total_epochs: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PmcError::Argument(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(CurriculumState {
            modalities: (0..n_modalities)
                .map(|_| ProportionSchedule::new(total_epochs))
                .collect::<Result<_>>()?,
            fused: ProportionSchedule::new(total_epochs)?,
            alpha,
        })
    }

    pub fn update_proportion(&mut self, stream: Stream, accuracy: f64) -> Result<f64> {
        match stream {
            Stream::Modality(m) => self
                .modalities
                .get_mut(m)
                .ok_or_else(|| PmcError::Modality(format!("no schedule for modality {m}")))?
                .update(accuracy),
            Stream::Fused => self.fused.update(accuracy),
        }
    }

    pub fn ratio(&self, stream: Stream) -> f64 {
        match stream {
            Stream::Modality(m) => self.modalities.get(m).map_or(0.0, ProportionSchedule::current),
            Stream::Fused => self.fused.current(),
        }
    }
}
