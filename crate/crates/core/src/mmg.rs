//! Missing-modality generator: an encoder-decoder that maps the available
//! modality to the missing one, conditioned on a category probability vector
//! concatenated to the latent code, with a gradient-reversed domain
//! classifier on the latent code.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::branches::{epoch_plan, mix, steps_per_epoch};
use crate::error::{PmcError, Result};
use crate::nncore::{adaptation_ramp, binary_xent, grl_backward, l1_loss, DenseNet, Gradients, OptimState, SgdConfig};
use crate::synthdata::MultiModalDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmgConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    /// Strength of the latent adversarial term; 0 disables it.
    pub lambda_gen: f64,
    /// Concatenate the category vector to the latent code; when off, a zero
    /// block of the same width is concatenated instead.
    pub conditioning: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub ramp: bool,
}

impl Default for MmgConfig {
    fn default() -> Self {
        MmgConfig {
            latent_dim: 16,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            discriminator_hidden: vec![16],
            lambda_gen: 0.1,
            conditioning: true,
            epochs: 40,
            batch_size: 16,
            sgd: SgdConfig::default(),
            ramp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmgModel {
    pub classes: usize,
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub discriminator: DenseNet,
    pub lambda_gen: f64,
    pub conditioning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmgGrads {
    pub encoder: Gradients,
    pub decoder: Gradients,
    pub discriminator: Gradients,
}

/// A labeled source sample with both the available and the missing modality.
#[derive(Debug, Clone, PartialEq)]
pub struct MmgPair {
    pub id: u64,
    pub available: Vec<f64>,
    pub missing: Option<Vec<f64>>,
    pub label: Option<usize>,
}

/// Anything that can produce the missing modality of a target sample.
pub trait ModalityGenerator {
    fn generate_for(&self, id: u64, available: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

impl MmgModel {
    pub fn new(available_dim: usize, missing_dim: usize, classes: usize, cfg: &MmgConfig, seed: u64) -> Result<Self> {
        if !(cfg.lambda_gen >= 0.0 && cfg.lambda_gen.is_finite()) {
            return Err(PmcError::Argument("lambda_gen must be >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x6D6D67));
        let mut es = vec![available_dim];
        es.extend(&cfg.encoder_hidden);
        es.push(cfg.latent_dim);
        let mut ds = vec![cfg.latent_dim + classes];
        ds.extend(&cfg.decoder_hidden);
        ds.push(missing_dim);
        let mut gs = vec![cfg.latent_dim];
        gs.extend(&cfg.discriminator_hidden);
        gs.push(1);
        Ok(MmgModel {
            classes,
            encoder: DenseNet::new(&es, &mut rng)?,
            decoder: DenseNet::new(&ds, &mut rng)?,
            discriminator: DenseNet::new(&gs, &mut rng)?,
            lambda_gen: cfg.lambda_gen,
            conditioning: cfg.conditioning,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    fn check_condition(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.classes {
            return Err(PmcError::Conditioning(format!(
                "expected {} entries, got {}",
                self.classes,
                v.len()
            )));
        }
        let sum: f64 = v.iter().sum();
        if v.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(PmcError::Conditioning(
                "vector is not a probability distribution".into(),
            ));
        }
        Ok(())
    }

    /// `z ⊕ v`, or `z ⊕ 0` with conditioning off.
    pub fn decoder_input(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let mut input = z.to_vec();
        if self.conditioning {
            input.extend_from_slice(v);
        } else {
            input.extend(std::iter::repeat_n(0.0, self.classes));
        }
        input
    }

    /// Generated missing-modality vector for `x` under category vector `v`.
    pub fn generate(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_condition(v)?;
        let z = self.encoder.predict(x)?;
        self.decoder.predict(&self.decoder_input(&z, v))
    }

    fn zero_grads(&self) -> MmgGrads {
        MmgGrads {
            encoder: Gradients::zeros_like(&self.encoder),
            decoder: Gradients::zeros_like(&self.decoder),
            discriminator: Gradients::zeros_like(&self.discriminator),
        }
    }

    /// Mean L1 reconstruction over `(x_available, x_missing, one-hot class)`.
    pub fn gen_loss(&self, batch: &[(&[f64], &[f64], usize)]) -> Result<(f64, MmgGrads)> {
        if batch.is_empty() {
            return Err(PmcError::EmptyBatch);
        }
        let mut grads = self.zero_grads();
        let norm = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (x, target, y) in batch {
            if *y >= self.classes {
                return Err(PmcError::Label {
                    label: *y,
                    classes: self.classes,
                });
            }
            let mut v = vec![0.0; self.classes];
            v[*y] = 1.0;
            let et = self.encoder.forward(x)?;
            let dt = self.decoder.forward(&self.decoder_input(&et.output, &v))?;
            let (l, g) = l1_loss(&dt.output, target)?;
            loss += l * norm;
            let g: Vec<f64> = g.into_iter().map(|v| v * norm).collect();
            let din = self.decoder.backward(&dt, &g, &mut grads.decoder)?;
            self.encoder
                .backward(&et, &din[..self.latent_dim()], &mut grads.encoder)?;
        }
        Ok((loss, grads))
    }

    /// Mean latent-domain BCE; encoder gradients are reversed with `grl_factor`.
    pub fn adv_loss(&self, batch: &[(&[f64], u8)], grl_factor: f64) -> Result<(f64, MmgGrads)> {
        if batch.is_empty() {
            return Err(PmcError::EmptyBatch);
        }
        let mut grads = self.zero_grads();
        let norm = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (x, d) in batch {
            let et = self.encoder.forward(x)?;
            let gt = self.discriminator.forward(&et.output)?;
            let (l, g) = binary_xent(gt.output[0], *d)?;
            loss += l * norm;
            let dz = self
                .discriminator
                .backward(&gt, &[g * norm], &mut grads.discriminator)?;
            if grl_factor != 0.0 {
                self.encoder
                    .backward(&et, &grl_backward(&dz, grl_factor), &mut grads.encoder)?;
            }
        }
        Ok((loss, grads))
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        serde_json::to_string(&MmgCheckpoint {
            format: "pmc-mmg".into(),
            version: 1,
            model: self.clone(),
        })
        .map_err(|e| PmcError::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let ck: MmgCheckpoint = serde_json::from_str(text).map_err(|e| PmcError::Checkpoint(e.to_string()))?;
        if ck.format != "pmc-mmg" || ck.version != 1 {
            return Err(PmcError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck.model)
    }
}

impl ModalityGenerator for MmgModel {
    fn generate_for(&self, _id: u64, available: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.generate(available, v)
    }
}

/// Replays known payloads by sample id, ignoring the inputs.
#[derive(Debug, Clone, Default)]
pub struct OracleGenerator {
    pub payloads: HashMap<u64, Vec<f64>>,
}

impl OracleGenerator {
    /// Takes the target payloads of `modality` from a dataset that still has them.
    pub fn from_dataset(ds: &MultiModalDataset, modality: &str) -> Result<Self> {
        let m = ds
            .schema()
            .modality_index(modality)
            .ok_or_else(|| PmcError::Schema(format!("unknown modality `{modality}`")))?;
        let payloads = ds
            .target()
            .map(|s| {
                s.payload(m)
                    .map(|p| (s.id, p.to_vec()))
                    .ok_or_else(|| PmcError::Modality(format!("target {} lacks `{modality}`", s.id)))
            })
            .collect::<Result<_>>()?;
        Ok(OracleGenerator { payloads })
    }
}

impl ModalityGenerator for OracleGenerator {
    fn generate_for(&self, id: u64, _available: &[f64], _v: &[f64]) -> Result<Vec<f64>> {
        self.payloads
            .get(&id)
            .cloned()
            .ok_or_else(|| PmcError::Modality(format!("oracle has no payload for {id}")))
    }
}

#[derive(Serialize, Deserialize)]
struct MmgCheckpoint {
    format: String,
    version: u32,
    model: MmgModel,
}

/// Concatenation of every available (non-missing) modality of a sample.
pub fn concat_available(payloads: &[Option<Vec<f64>>], missing: usize) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for (m, p) in payloads.iter().enumerate() {
        if m == missing {
            continue;
        }
        out.extend_from_slice(p.as_ref()?);
    }
    Some(out)
}

/// Source pairs and target inputs for generator training.
pub fn mmg_inputs(ds: &MultiModalDataset, missing: &str) -> Result<(Vec<MmgPair>, Vec<Vec<f64>>)> {
    let m = ds
        .schema()
        .modality_index(missing)
        .ok_or_else(|| PmcError::Schema(format!("unknown modality `{missing}`")))?;
    let pairs = ds
        .source()
        .map(|s| {
            Ok(MmgPair {
                id: s.id,
                available: concat_available(&s.payloads, m).ok_or(PmcError::Pairing(s.id))?,
                missing: s.payload(m).map(<[f64]>::to_vec),
                label: s.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = ds
        .target()
        .map(|s| {
            concat_available(&s.payloads, m)
                .ok_or_else(|| PmcError::Modality(format!("target {} lacks an available modality", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, targets))
}

/// Trains the generator: L1 reconstruction on source pairs plus the
/// reversed latent-domain loss on source and target inputs.
pub fn train_mmg(
    pairs: &[MmgPair],
    targets: &[Vec<f64>],
    classes: usize,
    cfg: &MmgConfig,
    seed: u64,
) -> Result<MmgModel> {
    if pairs.is_empty() || targets.is_empty() {
        return Err(PmcError::EmptyDataset);
    }
    let mut clean: Vec<(&[f64], &[f64], usize)> = Vec::with_capacity(pairs.len());
    for p in pairs {
        match (&p.missing, p.label) {
            (Some(x), Some(y)) => clean.push((p.available.as_slice(), x.as_slice(), y)),
            _ => return Err(PmcError::Pairing(p.id)),
        }
    }
    cfg.sgd.validate()?;
    let mut model = MmgModel::new(clean[0].0.len(), clean[0].1.len(), classes, cfg, seed)?;
    let mut opt_e = OptimState::new(&model.encoder, cfg.sgd);
    let mut opt_d = OptimState::new(&model.decoder, cfg.sgd);
    let mut opt_g = OptimState::new(&model.discriminator, cfg.sgd);
    let steps = steps_per_epoch(clean.len(), cfg.batch_size);
    let total = (steps * cfg.epochs.max(1)) as f64;
    let plan_seed = mix(seed ^ 0x67656E);
    for epoch in 0..cfg.epochs {
        let plan = epoch_plan(plan_seed, epoch, clean.len(), targets.len(), cfg.batch_size);
        for (step, (si, ti)) in plan.iter().enumerate() {
            let p = (epoch * steps + step) as f64 / total;
            for o in [&mut opt_e, &mut opt_d, &mut opt_g] {
                o.set_progress(p)?;
            }
            let factor = if cfg.ramp {
                model.lambda_gen * adaptation_ramp(p)
            } else {
                model.lambda_gen
            };
            let gen_batch: Vec<_> = si.iter().map(|&i| clean[i]).collect();
            let (_, mut g) = model.gen_loss(&gen_batch)?;
            let adv_batch: Vec<(&[f64], u8)> = si
                .iter()
                .map(|&i| (clean[i].0, 0u8))
                .chain(ti.iter().map(|&i| (targets[i].as_slice(), 1u8)))
                .collect();
            let (_, ga) = model.adv_loss(&adv_batch, factor)?;
            add_into(&mut g.encoder, &ga.encoder);
            g.discriminator = ga.discriminator;
            opt_e.step(&mut model.encoder, &g.encoder)?;
            opt_d.step(&mut model.decoder, &g.decoder)?;
            opt_g.step(&mut model.discriminator, &g.discriminator)?;
        }
    }
    Ok(model)
}

fn add_into(acc: &mut Gradients, other: &Gradients) {
    for (a, b) in acc.layers.iter_mut().zip(&other.layers) {
        a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
        a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
    }
}
