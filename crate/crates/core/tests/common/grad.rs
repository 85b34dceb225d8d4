//! Central finite-difference checks of every loss path.

use pmc_core::branches::{BranchArch, BranchBatch, BranchConfig, ModalityBranch, StepMode, TargetTerm};
use pmc_core::mmg::{MmgConfig, MmgModel};
use pmc_core::nncore::DenseNet;
use pmc_core::selection::{Origin, SelectionEntry, SelectionSet};
use pmc_core::synthdata::Domain;
use pmc_core::trainers::tar_loss;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{normal_vec, rng};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct PathReport {
    pub path: &'static str,
    pub configs: usize,
    pub checked: usize,
    pub max_rel: f64,
}

impl PathReport {
    pub fn passes(&self) -> bool {
        self.max_rel <= TOLERANCE
    }
}

/// Relative error with a floor on the denominator so that gradients that
/// are zero up to rounding compare on an absolute scale.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of `f` with respect to the parameters of `net`.
pub fn fd_net(net: &DenseNet, mut f: impl FnMut(&DenseNet) -> f64) -> Vec<f64> {
    let base = net.parameters();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + STEP;
            probe.set_parameters(&p).unwrap();
            let up = f(&probe);
            p[i] = base[i] - STEP;
            probe.set_parameters(&p).unwrap();
            let down = f(&probe);
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn compare(analytic: &[f64], numeric: &[f64], scale: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, scale * n))
        .fold(0.0, f64::max)
}

/// Adds noise to every parameter so biases are nonzero; at the zero-bias
/// initialization a fully inactive hidden layer puts later pre-activations
/// exactly on the rectifier kink.
fn jitter(r: &mut ChaCha8Rng, net: &mut DenseNet) {
    let p: Vec<f64> = net.parameters().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
    net.set_parameters(&p).unwrap();
}

fn random_branch(r: &mut ChaCha8Rng, dim: usize, classes: usize) -> ModalityBranch {
    let cfg = BranchConfig {
        arch: BranchArch {
            feature: vec![r.random_range(3..8), r.random_range(2..6)],
            domain_hidden: vec![r.random_range(2..5)],
        },
        ..BranchConfig::default()
    };
    let mut b = ModalityBranch::new("m", dim, classes, &cfg, r.random()).unwrap();
    for net in [&mut b.feature, &mut b.classifier, &mut b.domain] {
        jitter(r, net);
    }
    b
}

fn random_mmg(r: &mut ChaCha8Rng, avail: usize, missing: usize, classes: usize) -> MmgModel {
    let cfg = MmgConfig {
        latent_dim: r.random_range(2..5),
        encoder_hidden: vec![r.random_range(3..7)],
        decoder_hidden: vec![r.random_range(3..7)],
        discriminator_hidden: vec![r.random_range(2..5)],
        conditioning: r.random_bool(0.5),
        ..MmgConfig::default()
    };
    let mut m = MmgModel::new(avail, missing, classes, &cfg, r.random()).unwrap();
    for net in [&mut m.encoder, &mut m.decoder, &mut m.discriminator] {
        jitter(r, net);
    }
    m
}

struct Acc {
    max_rel: f64,
    checked: usize,
}

impl Acc {
    fn add(&mut self, analytic: &[f64], numeric: &[f64], scale: f64) {
        self.max_rel = self.max_rel.max(compare(analytic, numeric, scale));
        self.checked += analytic.len();
    }
}

/// Domain loss of a branch: plain gradients into the domain classifier,
/// reversed and scaled ones into the feature extractor.
fn adv_path(r: &mut ChaCha8Rng, acc: &mut Acc) {
    let dim = r.random_range(2..6);
    let b = random_branch(r, dim, 3);
    let n = r.random_range(2..8);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(r, dim)).collect();
    let batch: Vec<(&[f64], u8)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_slice(), (i % 2) as u8))
        .collect();
    let factor = r.random_range(0.0..1.0);
    let (_, g) = b.adv_loss(&batch, factor).unwrap();
    let loss_with = |b: &ModalityBranch| b.adv_loss(&batch, factor).unwrap().0;
    let nd = fd_net(&b.domain, |net| {
        loss_with(&ModalityBranch {
            domain: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.domain.flatten(), &nd, 1.0);
    let nf = fd_net(&b.feature, |net| {
        loss_with(&ModalityBranch {
            feature: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.feature.flatten(), &nf, -factor);
}

fn src_path(r: &mut ChaCha8Rng, acc: &mut Acc) {
    let dim = r.random_range(2..6);
    let classes = r.random_range(2..5);
    let b = random_branch(r, dim, classes);
    let n = r.random_range(1..8);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(r, dim)).collect();
    let batch: Vec<(&[f64], usize, Domain)> = xs
        .iter()
        .map(|x| (x.as_slice(), r.random_range(0..classes), Domain::Source))
        .collect();
    let (_, g) = b.src_loss(&batch).unwrap();
    let loss_with = |b: &ModalityBranch| b.src_loss(&batch).unwrap().0;
    let nc = fd_net(&b.classifier, |net| {
        loss_with(&ModalityBranch {
            classifier: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.classifier.flatten(), &nc, 1.0);
    let nf = fd_net(&b.feature, |net| {
        loss_with(&ModalityBranch {
            feature: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.feature.flatten(), &nf, 1.0);
}

/// Random selection over `ids`: modality-specific entries for branch 0 and
/// 1 and integrated entries.
pub fn random_selection(r: &mut ChaCha8Rng, ids: &[u64], classes: usize) -> SelectionSet {
    let mut set = SelectionSet::new();
    for origin in [Origin::Mss(0), Origin::Mss(1), Origin::Mis] {
        for &id in ids {
            if r.random_bool(0.4) {
                set.push(SelectionEntry {
                    id,
                    label: r.random_range(0..classes),
                    weight: r.random_range(0.05..1.0),
                    confidence: r.random_range(0.3..1.0),
                    origin,
                })
                .unwrap();
            }
        }
    }
    set
}

fn tar_path(r: &mut ChaCha8Rng, acc: &mut Acc) {
    let dim = r.random_range(2..6);
    let classes = r.random_range(2..5);
    let b = random_branch(r, dim, classes);
    let n = r.random_range(2..9);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(r, dim)).collect();
    let ids: Vec<u64> = (0..n as u64).map(|i| 100 + 3 * i).collect();
    let targets: Vec<(u64, &[f64])> = ids.iter().zip(&xs).map(|(&id, x)| (id, x.as_slice())).collect();
    let sel = random_selection(r, &ids, classes);
    let (_, g) = tar_loss(&b, 0, &sel, &targets).unwrap();
    let loss_with = |b: &ModalityBranch| tar_loss(b, 0, &sel, &targets).unwrap().0;
    let nc = fd_net(&b.classifier, |net| {
        loss_with(&ModalityBranch {
            classifier: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.classifier.flatten(), &nc, 1.0);
    let nf = fd_net(&b.feature, |net| {
        loss_with(&ModalityBranch {
            feature: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.feature.flatten(), &nf, 1.0);
}

/// One full cooperation step: source, pseudo-label and reversed domain terms.
fn step_path(r: &mut ChaCha8Rng, acc: &mut Acc) {
    let dim = r.random_range(2..6);
    let classes = r.random_range(2..5);
    let b = random_branch(r, dim, classes);
    let ns = r.random_range(1..6);
    let nt = r.random_range(1..6);
    let sx: Vec<Vec<f64>> = (0..ns).map(|_| normal_vec(r, dim)).collect();
    let sy: Vec<usize> = (0..ns).map(|_| r.random_range(0..classes)).collect();
    let tx: Vec<Vec<f64>> = (0..nt).map(|_| normal_vec(r, dim)).collect();
    let terms: Vec<Vec<TargetTerm>> = (0..nt)
        .map(|_| {
            (0..r.random_range(0..3))
                .map(|_| TargetTerm {
                    label: r.random_range(0..classes),
                    weight: r.random_range(0.05..1.0),
                })
                .collect()
        })
        .collect();
    let batch = BranchBatch {
        source: sx.iter().zip(&sy).map(|(x, &y)| (x.as_slice(), y)).collect(),
        target: tx
            .iter()
            .zip(&terms)
            .map(|(x, t)| (x.as_slice(), t.as_slice()))
            .collect(),
    };
    let factor = r.random_range(0.0..1.0);
    let mode = StepMode::Adversarial { grl_factor: factor };
    let (_, g) = b.batch_grads(&batch, mode).unwrap();
    let cls = |b: &ModalityBranch| {
        let l = b.batch_grads(&batch, mode).unwrap().0;
        l.src + l.tar
    };
    let adv = |b: &ModalityBranch| b.batch_grads(&batch, mode).unwrap().0.adv;

    let nc = fd_net(&b.classifier, |net| {
        cls(&ModalityBranch {
            classifier: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.classifier.flatten(), &nc, 1.0);
    let nd = fd_net(&b.domain, |net| {
        adv(&ModalityBranch {
            domain: net.clone(),
            ..b.clone()
        })
    });
    acc.add(&g.domain.flatten(), &nd, 1.0);
    let nf_cls = fd_net(&b.feature, |net| {
        cls(&ModalityBranch {
            feature: net.clone(),
            ..b.clone()
        })
    });
    let nf_adv = fd_net(&b.feature, |net| {
        adv(&ModalityBranch {
            feature: net.clone(),
            ..b.clone()
        })
    });
    let nf: Vec<f64> = nf_cls.iter().zip(&nf_adv).map(|(c, a)| c - factor * a).collect();
    acc.add(&g.feature.flatten(), &nf, 1.0);
}

fn mmg_gen_path(r: &mut ChaCha8Rng, acc: &mut Acc) {
    let (avail, missing, classes) = (r.random_range(2..6), r.random_range(2..5), r.random_range(2..5));
    let m = random_mmg(r, avail, missing, classes);
    let n = r.random_range(1..6);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(r, avail)).collect();
    let ts: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(r, missing)).collect();
    let batch: Vec<(&[f64], &[f64], usize)> = xs
        .iter()
        .zip(&ts)
        .map(|(x, t)| (x.as_slice(), t.as_slice(), r.random_range(0..classes)))
        .collect();
    let (_, g) = m.gen_loss(&batch).unwrap();
    let loss_with = |m: &MmgModel| m.gen_loss(&batch).unwrap().0;
    let ne = fd_net(&m.encoder, |net| {
        loss_with(&MmgModel {
            encoder: net.clone(),
            ..m.clone()
        })
    });
    acc.add(&g.encoder.flatten(), &ne, 1.0);
    let nd = fd_net(&m.decoder, |net| {
        loss_with(&MmgModel {
            decoder: net.clone(),
            ..m.clone()
        })
    });
    acc.add(&g.decoder.flatten(), &nd, 1.0);
}

fn mmg_adv_path(r: &mut ChaCha8Rng, acc: &mut Acc) {
    let (avail, missing, classes) = (r.random_range(2..6), r.random_range(2..5), r.random_range(2..5));
    let m = random_mmg(r, avail, missing, classes);
    let n = r.random_range(2..8);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(r, avail)).collect();
    let batch: Vec<(&[f64], u8)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_slice(), (i % 2) as u8))
        .collect();
    let factor = r.random_range(0.0..1.0);
    let (_, g) = m.adv_loss(&batch, factor).unwrap();
    let loss_with = |m: &MmgModel| m.adv_loss(&batch, factor).unwrap().0;
    let nd = fd_net(&m.discriminator, |net| {
        loss_with(&MmgModel {
            discriminator: net.clone(),
            ..m.clone()
        })
    });
    acc.add(&g.discriminator.flatten(), &nd, 1.0);
    let ne = fd_net(&m.encoder, |net| {
        loss_with(&MmgModel {
            encoder: net.clone(),
            ..m.clone()
        })
    });
    acc.add(&g.encoder.flatten(), &ne, -factor);
}

/// Runs `configs` random configurations of every loss path.
pub fn suite(configs: usize, seed: u64) -> Vec<PathReport> {
    type Path = fn(&mut ChaCha8Rng, &mut Acc);
    let paths: [(&'static str, Path); 6] = [
        ("domain loss", adv_path),
        ("source loss", src_path),
        ("pseudo-label loss", tar_path),
        ("combined step", step_path),
        ("generator reconstruction", mmg_gen_path),
        ("generator latent domain", mmg_adv_path),
    ];
    paths
        .iter()
        .enumerate()
        .map(|(k, (name, path))| {
            let mut r = rng(seed ^ ((k as u64) << 32));
            let mut acc = Acc {
                max_rel: 0.0,
                checked: 0,
            };
            for _ in 0..configs {
                path(&mut r, &mut acc);
            }
            PathReport {
                path: name,
                configs,
                checked: acc.checked,
                max_rel: acc.max_rel,
            }
        })
        .collect()
}
