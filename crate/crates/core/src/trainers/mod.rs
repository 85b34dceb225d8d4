//! Training loops: source-only and adversarial baselines, progressive
//! modality cooperation, and its privileged-information variant with a
//! generated target modality.

mod eval;
mod metrics;
mod pi;
mod pmc;

use serde::{Deserialize, Serialize};

use crate::branches::{BranchArch, BranchConfig};
use crate::error::{PmcError, Result};
use crate::mmg::MmgConfig;
use crate::nncore::SgdConfig;
use crate::selection::FusedWeightRule;

pub use eval::{evaluate, late_fusion_predict, Accuracies, EvalAccess, SamplePrediction, Split};
pub use metrics::{EpochRow, Phase, RunMetrics};
pub use pi::{train_pmc_pi, train_pmc_pi_with, PiOutcome};
pub use pmc::{
    selection_terms, tar_loss, train_dann, train_dann_with, train_pmc, train_pmc_with, train_source_only, Observer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    /// Every modality is present in both domains.
    #[default]
    #[serde(rename = "mmda")]
    Mmda,
    /// One modality exists only in the source domain.
    #[serde(rename = "mmda-pi")]
    MmdaPi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Cooperation epochs.
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub lambda: f64,
    pub lambda_gen: f64,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub anneal: bool,
    pub ramp: bool,
    pub batch_size: usize,
    pub alpha: f64,
    pub seed: u64,
    pub mode: Mode,
    pub disable_mss: bool,
    pub disable_mis: bool,
    pub disable_cv: bool,
    pub disable_gend: bool,
    pub fused_weight: FusedWeightRule,
    pub arch: BranchArch,
    pub mmg_epochs: usize,
    pub mmg_lr: f64,
    pub latent_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            warmup_epochs: 20,
            lambda: 0.3,
            lambda_gen: 0.1,
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 3e-4,
            anneal: true,
            ramp: true,
            batch_size: 16,
            alpha: 1.0,
            seed: 1,
            mode: Mode::Mmda,
            disable_mss: false,
            disable_mis: false,
            disable_cv: false,
            disable_gend: false,
            fused_weight: FusedWeightRule::default(),
            arch: BranchArch::default(),
            mmg_epochs: 40,
            mmg_lr: 0.01,
            latent_dim: 16,
        }
    }
}

fn bad(field: &str, reason: &str) -> PmcError {
    PmcError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(bad("epochs", "must be >= 1"));
        }
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("mmg_lr", self.mmg_lr),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_gen", self.lambda_gen),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(name, "must be >= 0"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(bad("momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be >= 1"));
        }
        if self.latent_dim == 0 {
            return Err(bad("latent_dim", "must be >= 1"));
        }
        if self.arch.feature.is_empty() || self.arch.feature.contains(&0) || self.arch.domain_hidden.contains(&0) {
            return Err(bad(
                "arch",
                "layer widths must be positive and the feature stack nonempty",
            ));
        }
        if self.mode == Mode::Mmda && (self.disable_cv || self.disable_gend) {
            return Err(bad(
                if self.disable_cv { "disable_cv" } else { "disable_gend" },
                "generator ablations need mode = \"mmda-pi\"",
            ));
        }
        if self.mode == Mode::MmdaPi && self.mmg_epochs == 0 {
            return Err(bad("mmg_epochs", "must be >= 1"));
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            base_lr: self.base_lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            anneal: self.anneal,
        }
    }

    pub fn branch_config(&self) -> BranchConfig {
        BranchConfig {
            arch: self.arch.clone(),
            sgd: self.sgd(),
            lambda: self.lambda,
            ramp: self.ramp,
            batch_size: self.batch_size,
        }
    }

    /// Generator settings with the conditioning and latent-adversary ablations applied.
    pub fn mmg_config(&self) -> MmgConfig {
        MmgConfig {
            latent_dim: self.latent_dim,
            lambda_gen: if self.disable_gend { 0.0 } else { self.lambda_gen },
            conditioning: !self.disable_cv,
            epochs: self.mmg_epochs,
            batch_size: self.batch_size,
            sgd: SgdConfig {
                base_lr: self.mmg_lr,
                ..self.sgd()
            },
            ramp: self.ramp,
            ..MmgConfig::default()
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.warmup_epochs + self.epochs
    }
}
