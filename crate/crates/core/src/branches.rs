//! Per-modality adversarial branches: feature extractor, category classifier
//! and domain classifier, trained with source cross-entropy plus a
//! gradient-reversed domain loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PmcError, Result};
use crate::nncore::{
    adaptation_ramp, argmax, binary_xent, grl_backward, softmax, softmax_xent, DenseNet, Gradients, OptimState,
    SgdConfig,
};
use crate::synthdata::{Domain, MultiModalDataset, Schema};

/// Hidden layer widths of the three networks in a branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchArch {
    /// Widths after the input layer; the last entry is the feature dim.
    pub feature: Vec<usize>,
    pub domain_hidden: Vec<usize>,
}

impl Default for BranchArch {
    fn default() -> Self {
        BranchArch {
            feature: vec![64, 32],
            domain_hidden: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub arch: BranchArch,
    pub sgd: SgdConfig,
    /// Trade-off between classification and adversarial alignment.
    pub lambda: f64,
    /// Multiply the reversal strength by the adaptation ramp.
    pub ramp: bool,
    /// Source samples per mini-batch; each batch carries as many target samples.
    pub batch_size: usize,
}

impl Default for BranchConfig {
    fn default() -> Self {
        BranchConfig {
            arch: BranchArch::default(),
            sgd: SgdConfig::default(),
            lambda: 0.3,
            ramp: true,
            batch_size: 16,
        }
    }
}

/// Stable 64-bit mixing (splitmix64 finalizer).
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn name_seed(seed: u64, name: &str) -> u64 {
    name.bytes().fold(mix(seed), |acc, b| mix(acc ^ b as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityBranch {
    pub modality: String,
    pub feature: DenseNet,
    pub classifier: DenseNet,
    pub domain: DenseNet,
    pub opt_feature: OptimState,
    pub opt_classifier: OptimState,
    pub opt_domain: OptimState,
    /// Seed of this branch's batch sampler.
    pub seed: u64,
}

/// Gradients of one branch, laid out like its three networks.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGrads {
    pub feature: Gradients,
    pub classifier: Gradients,
    pub domain: Gradients,
}

impl BranchGrads {
    pub fn zeros(branch: &ModalityBranch) -> Self {
        BranchGrads {
            feature: Gradients::zeros_like(&branch.feature),
            classifier: Gradients::zeros_like(&branch.classifier),
            domain: Gradients::zeros_like(&branch.domain),
        }
    }
}

/// Pseudo-labeled loss term attached to a target sample: `weight * CE(label)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetTerm {
    pub label: usize,
    pub weight: f64,
}

/// One mini-batch for one branch.
#[derive(Debug, Clone, Default)]
pub struct BranchBatch<'a> {
    pub source: Vec<(&'a [f64], usize)>,
    pub target: Vec<(&'a [f64], &'a [TargetTerm])>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLoss {
    pub src: f64,
    pub adv: f64,
    pub tar: f64,
}

/// What a training step optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// Source cross-entropy (+ target terms) and the reversed domain loss.
    Adversarial { grl_factor: f64 },
    /// Source cross-entropy only; the domain classifier is left untouched.
    SupervisedOnly,
}

impl ModalityBranch {
    pub fn new(modality: &str, input_dim: usize, classes: usize, cfg: &BranchConfig, seed: u64) -> Result<Self> {
        let bseed = name_seed(seed, modality);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(bseed ^ 0xA5A5));
        let mut fsizes = vec![input_dim];
        fsizes.extend(&cfg.arch.feature);
        let feat_dim = *fsizes.last().unwrap();
        let feature = DenseNet::new(&fsizes, &mut rng)?;
        let classifier = DenseNet::new(&[feat_dim, classes], &mut rng)?;
        let mut dsizes = vec![feat_dim];
        dsizes.extend(&cfg.arch.domain_hidden);
        dsizes.push(1);
        let domain = DenseNet::new(&dsizes, &mut rng)?;
        Ok(ModalityBranch {
            modality: modality.to_string(),
            opt_feature: OptimState::new(&feature, cfg.sgd),
            opt_classifier: OptimState::new(&classifier, cfg.sgd),
            opt_domain: OptimState::new(&domain, cfg.sgd),
            feature,
            classifier,
            domain,
            seed: bseed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.feature.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.output_dim()
    }

    /// Category probabilities for one input.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let f = self.feature.predict(x)?;
        Ok(softmax(&self.classifier.predict(&f)?))
    }

    pub fn domain_logit(&self, x: &[f64]) -> Result<f64> {
        let f = self.feature.predict(x)?;
        Ok(self.domain.predict(&f)?[0])
    }

    /// Mean domain BCE over the batch. Domain-classifier gradients are the
    /// plain ones; feature-extractor gradients pass through the reversal
    /// layer with strength `grl_factor`.
    pub fn adv_loss(&self, batch: &[(&[f64], u8)], grl_factor: f64) -> Result<(f64, BranchGrads)> {
        if batch.is_empty() {
            return Err(PmcError::EmptyBatch);
        }
        let mut grads = BranchGrads::zeros(self);
        let norm = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (x, d) in batch {
            let ft = self.feature.forward(x)?;
            let dt = self.domain.forward(&ft.output)?;
            let (l, g) = binary_xent(dt.output[0], *d)?;
            loss += l * norm;
            let dfeat = self.domain.backward(&dt, &[g * norm], &mut grads.domain)?;
            if grl_factor != 0.0 {
                self.feature
                    .backward(&ft, &grl_backward(&dfeat, grl_factor), &mut grads.feature)?;
            }
        }
        Ok((loss, grads))
    }

    /// Mean softmax cross-entropy over labeled source samples.
    pub fn src_loss(&self, batch: &[(&[f64], usize, Domain)]) -> Result<(f64, BranchGrads)> {
        if batch.is_empty() {
            return Err(PmcError::EmptyBatch);
        }
        if batch.iter().any(|(_, _, d)| *d != Domain::Source) {
            return Err(PmcError::Contract("source loss received a target sample".into()));
        }
        let items: Vec<(&[f64], usize, f64)> = batch.iter().map(|(x, y, _)| (*x, *y, 1.0)).collect();
        self.weighted_class_loss(&items, 1.0 / batch.len() as f64)
    }

    /// `norm * sum_i w_i CE(C(F(x_i)), y_i)`; gradients into F and C only.
    pub fn weighted_class_loss(&self, items: &[(&[f64], usize, f64)], norm: f64) -> Result<(f64, BranchGrads)> {
        let mut grads = BranchGrads::zeros(self);
        let mut loss = 0.0;
        for (x, y, w) in items {
            if *w == 0.0 {
                continue;
            }
            let ft = self.feature.forward(x)?;
            let ct = self.classifier.forward(&ft.output)?;
            let (l, g) = softmax_xent(&ct.output, *y, w * norm)?;
            loss += l;
            let df = self.classifier.backward(&ct, &g, &mut grads.classifier)?;
            self.feature.backward(&ft, &df, &mut grads.feature)?;
        }
        Ok((loss, grads))
    }

    /// Loss and gradients of one combined mini-batch step.
    ///
    /// Source terms are normalized by the source count, domain terms by the
    /// total count and pseudo-label terms by the target count.
    pub fn batch_grads(&self, batch: &BranchBatch<'_>, mode: StepMode) -> Result<(StepLoss, BranchGrads)> {
        if batch.source.is_empty() {
            return Err(PmcError::EmptyBatch);
        }
        let mut grads = BranchGrads::zeros(self);
        let mut loss = StepLoss::default();
        let n_src = 1.0 / batch.source.len() as f64;
        let n_all = 1.0 / (batch.source.len() + batch.target.len()) as f64;
        let n_tar = if batch.target.is_empty() {
            0.0
        } else {
            1.0 / batch.target.len() as f64
        };
        let grl = match mode {
            StepMode::Adversarial { grl_factor } => Some(grl_factor),
            StepMode::SupervisedOnly => None,
        };

        for (x, y) in &batch.source {
            let ft = self.feature.forward(x)?;
            let ct = self.classifier.forward(&ft.output)?;
            let (l, g) = softmax_xent(&ct.output, *y, n_src)?;
            loss.src += l;
            let mut dfeat = self.classifier.backward(&ct, &g, &mut grads.classifier)?;
            if let Some(factor) = grl {
                self.domain_term(&ft.output, 0, n_all, factor, &mut loss, &mut grads, &mut dfeat)?;
            }
            self.feature.backward(&ft, &dfeat, &mut grads.feature)?;
        }

        for (x, terms) in &batch.target {
            let active = terms.iter().any(|t| t.weight != 0.0);
            if grl.is_none() && !active {
                continue;
            }
            let ft = self.feature.forward(x)?;
            let mut dfeat = vec![0.0; ft.output.len()];
            let mut touched = false;
            if active {
                let ct = self.classifier.forward(&ft.output)?;
                let mut gsum = vec![0.0; ct.output.len()];
                for t in terms.iter().filter(|t| t.weight != 0.0) {
                    let (l, g) = softmax_xent(&ct.output, t.label, t.weight * n_tar)?;
                    loss.tar += l;
                    gsum.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                dfeat = self.classifier.backward(&ct, &gsum, &mut grads.classifier)?;
                touched = true;
            }
            if let Some(factor) = grl {
                touched |= self.domain_term(&ft.output, 1, n_all, factor, &mut loss, &mut grads, &mut dfeat)?;
            }
            if touched {
                self.feature.backward(&ft, &dfeat, &mut grads.feature)?;
            }
        }
        Ok((loss, grads))
    }

    /// Adds the domain loss of one feature vector; returns whether the
    /// reversed gradient reached `dfeat`.
    #[allow(clippy::too_many_arguments)]
    fn domain_term(
        &self,
        feat: &[f64],
        d: u8,
        norm: f64,
        factor: f64,
        loss: &mut StepLoss,
        grads: &mut BranchGrads,
        dfeat: &mut [f64],
    ) -> Result<bool> {
        let dt = self.domain.forward(feat)?;
        let (l, g) = binary_xent(dt.output[0], d)?;
        loss.adv += l * norm;
        let back = self.domain.backward(&dt, &[g * norm], &mut grads.domain)?;
        if factor == 0.0 {
            return Ok(false);
        }
        for (a, b) in dfeat.iter_mut().zip(grl_backward(&back, factor)) {
            *a += b;
        }
        Ok(true)
    }

    pub fn set_progress(&mut self, p: f64) -> Result<()> {
        self.opt_feature.set_progress(p)?;
        self.opt_classifier.set_progress(p)?;
        self.opt_domain.set_progress(p)
    }

    pub fn apply(&mut self, grads: &BranchGrads, mode: StepMode) -> Result<()> {
        self.opt_feature.step(&mut self.feature, &grads.feature)?;
        self.opt_classifier.step(&mut self.classifier, &grads.classifier)?;
        if matches!(mode, StepMode::Adversarial { .. }) {
            self.opt_domain.step(&mut self.domain, &grads.domain)?;
        }
        Ok(())
    }
}

/// Dense per-modality training matrices. Target rows of a modality may be
/// absent (`None`) until they are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub classes: usize,
    pub modalities: Vec<String>,
    pub source_ids: Vec<u64>,
    pub source_y: Vec<usize>,
    pub target_ids: Vec<u64>,
    /// `source_x[m][i]`
    pub source_x: Vec<Vec<Vec<f64>>>,
    /// `target_x[m]` is `None` for a modality missing on the target domain.
    pub target_x: Vec<Option<Vec<Vec<f64>>>>,
}

impl TrainData {
    /// Training view of a dataset. Target labels are not copied.
    pub fn from_dataset(ds: &MultiModalDataset) -> Result<Self> {
        let schema: &Schema = ds.schema();
        if ds.n_source() == 0 || ds.n_target() == 0 {
            return Err(PmcError::EmptyDataset);
        }
        let nm = schema.modalities.len();
        let mut source_x = vec![Vec::new(); nm];
        let mut source_y = Vec::new();
        let mut source_ids = Vec::new();
        for s in ds.source() {
            source_ids.push(s.id);
            source_y.push(s.label.ok_or(PmcError::Pairing(s.id))?);
            for (m, col) in source_x.iter_mut().enumerate() {
                col.push(s.payload(m).ok_or(PmcError::Pairing(s.id))?.to_vec());
            }
        }
        let target_ids: Vec<u64> = ds.target().map(|s| s.id).collect();
        let target_x = (0..nm)
            .map(|m| {
                if schema.is_dropped(m) {
                    Ok(None)
                } else {
                    ds.target()
                        .map(|s| {
                            s.payload(m)
                                .map(<[f64]>::to_vec)
                                .ok_or_else(|| PmcError::Modality(format!("target {} lacks modality {m}", s.id)))
                        })
                        .collect::<Result<Vec<_>>>()
                        .map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainData {
            classes: schema.classes,
            modalities: schema.modality_names(),
            source_ids,
            source_y,
            target_ids,
            source_x,
            target_x,
        })
    }

    pub fn n_source(&self) -> usize {
        self.source_y.len()
    }

    pub fn n_target(&self) -> usize {
        self.target_ids.len()
    }

    pub fn dim(&self, m: usize) -> usize {
        self.source_x[m].first().map_or(0, Vec::len)
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|n| n == name)
    }
}

/// Number of mini-batches in one epoch.
pub fn steps_per_epoch(n_source: usize, batch_size: usize) -> usize {
    n_source.div_ceil(batch_size.max(1))
}

/// Batch index plan of one branch for one epoch: `(source idx, target idx)`
/// per step. Depends only on the branch seed and the epoch number.
pub fn epoch_plan(
    seed: u64,
    epoch: usize,
    n_source: usize,
    n_target: usize,
    batch: usize,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(epoch as u64 + 1)));
    let mut src: Vec<usize> = (0..n_source).collect();
    src.shuffle(&mut rng);
    let mut tgt: Vec<usize> = (0..n_target).collect();
    tgt.shuffle(&mut rng);
    let mut cursor = 0;
    src.chunks(batch.max(1))
        .map(|chunk| {
            let t = (0..chunk.len())
                .map(|_| {
                    if cursor == tgt.len() {
                        tgt.shuffle(&mut rng);
                        cursor = 0;
                    }
                    cursor += 1;
                    tgt[cursor - 1]
                })
                .collect();
            (chunk.to_vec(), t)
        })
        .collect()
}

/// One branch per modality plus the shared trade-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEnsemble {
    pub classes: usize,
    pub branches: Vec<ModalityBranch>,
    pub config: BranchConfig,
    /// Completed training epochs.
    pub epoch: usize,
}

/// Which optimization an epoch runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpochKind {
    Adversarial,
    SupervisedOnly,
}

/// Schedule position shared by all branches: epoch `epoch` of `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochClock {
    pub epoch: usize,
    pub total_epochs: usize,
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct EnsembleCheckpoint {
    format: String,
    version: u32,
    ensemble: BranchEnsemble,
}

impl BranchEnsemble {
    pub fn new(modalities: &[(String, usize)], classes: usize, config: BranchConfig, seed: u64) -> Result<Self> {
        config.sgd.validate()?;
        if !(config.lambda >= 0.0 && config.lambda.is_finite()) {
            return Err(PmcError::Argument("lambda must be >= 0".into()));
        }
        if config.batch_size == 0 {
            return Err(PmcError::Argument("batch_size must be positive".into()));
        }
        let branches = modalities
            .iter()
            .map(|(name, dim)| ModalityBranch::new(name, *dim, classes, &config, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(BranchEnsemble {
            classes,
            branches,
            config,
            epoch: 0,
        })
    }

    pub fn for_data(data: &TrainData, modalities: &[usize], config: BranchConfig, seed: u64) -> Result<Self> {
        let spec: Vec<(String, usize)> = modalities
            .iter()
            .map(|&m| (data.modalities[m].clone(), data.dim(m)))
            .collect();
        Self::new(&spec, data.classes, config, seed)
    }

    pub fn branch(&self, name: &str) -> Option<&ModalityBranch> {
        self.branches.iter().find(|b| b.modality == name)
    }

    pub fn grl_factor(&self, progress: f64) -> f64 {
        if self.config.ramp {
            self.config.lambda * adaptation_ramp(progress)
        } else {
            self.config.lambda
        }
    }

    /// Trains every branch for one epoch. `terms[b][t]` lists the pseudo-label
    /// terms of target sample `t` for branch `b` (empty slices when none).
    /// Returns the source accuracy of each branch after the epoch.
    pub fn train_epoch(
        &mut self,
        data: &TrainData,
        kind: EpochKind,
        clock: EpochClock,
        terms: Option<&[Vec<Vec<TargetTerm>>]>,
    ) -> Result<Vec<f64>> {
        if data.n_source() == 0 || data.n_target() == 0 {
            return Err(PmcError::EmptyDataset);
        }
        if clock.epoch >= clock.total_epochs {
            return Err(PmcError::ScheduleOverflow {
                epoch: clock.epoch + 1,
                total: clock.total_epochs,
            });
        }
        let steps = steps_per_epoch(data.n_source(), self.config.batch_size);
        let total_steps = (steps * clock.total_epochs) as f64;
        let empty: Vec<TargetTerm> = Vec::new();
        let mut accs = Vec::with_capacity(self.branches.len());
        for b in 0..self.branches.len() {
            let m = data
                .modality_index(&self.branches[b].modality)
                .ok_or_else(|| PmcError::Modality(format!("no data for `{}`", self.branches[b].modality)))?;
            let tx = data.target_x[m].as_ref().ok_or_else(|| {
                PmcError::Modality(format!("target payloads of `{}` are missing", data.modalities[m]))
            })?;
            let plan = epoch_plan(
                self.branches[b].seed,
                clock.epoch,
                data.n_source(),
                data.n_target(),
                self.config.batch_size,
            );
            for (step, (si, ti)) in plan.iter().enumerate() {
                let p = (clock.epoch * steps + step) as f64 / total_steps;
                let mode = match kind {
                    EpochKind::Adversarial => StepMode::Adversarial {
                        grl_factor: self.grl_factor(p),
                    },
                    EpochKind::SupervisedOnly => StepMode::SupervisedOnly,
                };
                let batch = BranchBatch {
                    source: si
                        .iter()
                        .map(|&i| (data.source_x[m][i].as_slice(), data.source_y[i]))
                        .collect(),
                    target: ti
                        .iter()
                        .map(|&i| {
                            let t: &[TargetTerm] = terms.map_or(empty.as_slice(), |tt| tt[b][i].as_slice());
                            (tx[i].as_slice(), t)
                        })
                        .collect(),
                };
                let branch = &mut self.branches[b];
                branch.set_progress(p)?;
                let (_, grads) = branch.batch_grads(&batch, mode)?;
                branch.apply(&grads, mode)?;
            }
            accs.push(source_accuracy(&self.branches[b], &data.source_x[m], &data.source_y)?);
        }
        self.epoch = clock.epoch + 1;
        Ok(accs)
    }

    /// One adversarial epoch without pseudo labels.
    pub fn train_dann_epoch(&mut self, data: &TrainData, clock: EpochClock) -> Result<Vec<f64>> {
        self.train_epoch(data, EpochKind::Adversarial, clock, None)
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        serde_json::to_string(&EnsembleCheckpoint {
            format: "pmc-ensemble".into(),
            version: CHECKPOINT_VERSION,
            ensemble: self.clone(),
        })
        .map_err(|e| PmcError::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck: EnsembleCheckpoint = serde_json::from_str(text).map_err(|e| PmcError::Checkpoint(e.to_string()))?;
        if ck.format != "pmc-ensemble" || ck.version != CHECKPOINT_VERSION {
            return Err(PmcError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck.ensemble)
    }
}

pub fn source_accuracy(branch: &ModalityBranch, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        if argmax(&branch.predict(x)?) == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / xs.len() as f64)
}
