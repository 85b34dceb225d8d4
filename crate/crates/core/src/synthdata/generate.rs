use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{valid_name, ModalitySchema, MultiModalDataset, Sample, Schema};
use crate::error::{PmcError, Result};

/// Affine shift applied to target features: `scale * R(angle) x + translation`.
/// The rotation acts on consecutive coordinate pairs `(0,1), (2,3), ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    #[serde(default)]
    pub rotation_deg: f64,
    /// Empty means no translation; otherwise one entry per dimension.
    #[serde(default)]
    pub translation: Vec<f64>,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ShiftSpec {
    pub fn identity() -> Self {
        ShiftSpec {
            rotation_deg: 0.0,
            translation: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let mut out = x.to_vec();
        for pair in out.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = c * a - s * b;
            pair[1] = s * a + c * b;
        }
        for (i, v) in out.iter_mut().enumerate() {
            *v *= self.scale;
            if let Some(t) = self.translation.get(i) {
                *v += t;
            }
        }
        out
    }
}

/// Makes a modality a noisy nonlinear function of another one:
/// `strength * tanh(W (x_base - mean_base[y]))` is added to the class mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub base: String,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
    /// Norm of each class mean; 0 makes the modality carry no class signal.
    pub separation: f64,
    /// Standard deviation of the isotropic noise on this modality.
    pub noise: f64,
    #[serde(default = "ShiftSpec::identity")]
    pub shift: ShiftSpec,
    #[serde(default)]
    pub coupling: Option<Coupling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub classes: usize,
    pub modalities: Vec<ModalitySpec>,
    pub n_source: usize,
    pub n_target: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BenchmarkSpec {
    /// Default two-modality benchmark: `A` is strongly informative, `B` is
    /// weaker and partly derivable from `A`. On the target domain both
    /// modalities are rotated by 40 degrees and translated by 1 per coordinate.
    pub fn blobs_mm2(seed: u64) -> Self {
        let shift = ShiftSpec {
            rotation_deg: 40.0,
            translation: vec![1.0; 8],
            scale: 1.0,
        };
        BenchmarkSpec {
            classes: 4,
            modalities: vec![
                ModalitySpec {
                    name: "A".into(),
                    dim: 8,
                    separation: 5.0,
                    noise: 1.0,
                    shift: shift.clone(),
                    coupling: None,
                },
                ModalitySpec {
                    name: "B".into(),
                    dim: 8,
                    separation: 3.5,
                    noise: 0.6,
                    shift,
                    coupling: Some(Coupling {
                        base: "A".into(),
                        strength: 1.0,
                    }),
                },
            ],
            n_source: 400,
            n_target: 400,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(PmcError::Spec {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.classes == 0 {
            return bad("classes", "category count must be positive");
        }
        if self.modalities.is_empty() {
            return bad("modalities", "at least one modality is required");
        }
        if self.n_source == 0 {
            return bad("n_source", "count must be positive");
        }
        if self.n_target == 0 {
            return bad("n_target", "count must be positive");
        }
        for (i, m) in self.modalities.iter().enumerate() {
            let f = |s: &str| format!("modalities[{i}].{s}");
            if !valid_name(&m.name) {
                return bad(&f("name"), "names use [A-Za-z0-9_-] only");
            }
            if self.modalities[..i].iter().any(|o| o.name == m.name) {
                return bad(&f("name"), "duplicate modality name");
            }
            if m.dim == 0 {
                return bad(&f("dim"), "dimension must be positive");
            }
            if !(m.separation >= 0.0 && m.separation.is_finite()) {
                return bad(&f("separation"), "informativeness must be >= 0");
            }
            if !(m.noise >= 0.0 && m.noise.is_finite()) {
                return bad(&f("noise"), "noise must be >= 0");
            }
            if !m.shift.translation.is_empty() && m.shift.translation.len() != m.dim {
                return bad(&f("shift.translation"), "translation length must equal dim");
            }
            if let Some(c) = &m.coupling {
                match self.modalities[..i].iter().find(|o| o.name == c.base) {
                    Some(base) if base.coupling.is_none() => {}
                    Some(_) => return bad(&f("coupling.base"), "base modality must not itself be coupled"),
                    None => return bad(&f("coupling.base"), "base must be an earlier modality"),
                }
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

struct ModalityModel {
    means: Vec<Vec<f64>>,
    mixing: Option<(usize, Vec<f64>)>,
}

pub fn generate_benchmark(spec: &BenchmarkSpec) -> Result<MultiModalDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let index = |name: &str| spec.modalities.iter().position(|m| m.name == name).unwrap();

    let models: Vec<ModalityModel> = spec
        .modalities
        .iter()
        .map(|m| {
            let means = (0..spec.classes)
                .map(|_| {
                    let mut dir = gaussian(&mut rng, m.dim);
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                    dir.iter_mut().for_each(|v| *v *= m.separation / norm);
                    dir
                })
                .collect();
            let mixing = m.coupling.as_ref().map(|c| {
                let b = index(&c.base);
                let bdim = spec.modalities[b].dim;
                let scale = 1.0 / (bdim as f64).sqrt();
                let w = gaussian(&mut rng, m.dim * bdim)
                    .into_iter()
                    .map(|v| v * scale)
                    .collect();
                (b, w)
            });
            ModalityModel { means, mixing }
        })
        .collect();

    let schema = Schema {
        classes: spec.classes,
        modalities: spec
            .modalities
            .iter()
            .map(|m| ModalitySchema {
                name: m.name.clone(),
                dim: m.dim,
            })
            .collect(),
        dropped: Vec::new(),
    };

    let total = spec.n_source + spec.n_target;
    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        let is_source = i < spec.n_source;
        let within = if is_source { i } else { i - spec.n_source };
        let y = within % spec.classes;
        // class-centred deviation per modality, reused by couplings
        let mut deviations: Vec<Vec<f64>> = Vec::with_capacity(spec.modalities.len());
        let mut clean: Vec<Vec<f64>> = Vec::with_capacity(spec.modalities.len());
        for (m, ms) in spec.modalities.iter().enumerate() {
            let mut dev: Vec<f64> = gaussian(&mut rng, ms.dim).into_iter().map(|v| v * ms.noise).collect();
            if let Some((b, w)) = &models[m].mixing {
                let strength = ms.coupling.as_ref().map_or(0.0, |c| c.strength);
                let base = &deviations[*b];
                for (r, d) in dev.iter_mut().enumerate() {
                    let row = &w[r * base.len()..(r + 1) * base.len()];
                    let z: f64 = row.iter().zip(base).map(|(a, x)| a * x).sum();
                    *d += strength * z.tanh();
                }
            }
            let x: Vec<f64> = models[m].means[y].iter().zip(&dev).map(|(mu, d)| mu + d).collect();
            deviations.push(dev);
            clean.push(x);
        }
        let payloads = if is_source {
            clean.into_iter().map(Some).collect()
        } else {
            clean
                .iter()
                .zip(&spec.modalities)
                .map(|(x, ms)| Some(ms.shift.apply(x)))
                .collect()
        };
        let id = i as u64;
        samples.push(if is_source {
            Sample::source(id, y, payloads)
        } else {
            Sample::target(id, Some(y), payloads)
        });
    }
    MultiModalDataset::new(schema, samples)
}
