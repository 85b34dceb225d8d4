//! Seeded training runs on blobs-mm2 shared by the property tests and the
//! acceptance runner.

use std::collections::BTreeMap;

use pmc_core::branches::BranchEnsemble;
use pmc_core::mmg::{mmg_inputs, train_mmg, MmgModel, MmgPair, OracleGenerator};
use pmc_core::synthdata::{generate_benchmark, BenchmarkSpec, MultiModalDataset};
use pmc_core::trainers::{
    train_dann, train_dann_with, train_pmc, train_pmc_pi, train_pmc_pi_with, train_pmc_with, train_source_only, Mode,
    Observer, RunMetrics, TrainConfig,
};

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub fn blobs(seed: u64) -> MultiModalDataset {
    generate_benchmark(&BenchmarkSpec::blobs_mm2(seed)).unwrap()
}

pub fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..TrainConfig::default()
    }
}

fn pi_config(seed: u64) -> TrainConfig {
    TrainConfig {
        mode: Mode::MmdaPi,
        ..config(seed)
    }
}

/// Final fused and weak-modality (B) target accuracy, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub fused: f64,
    pub weak: Option<f64>,
}

fn score(m: &RunMetrics) -> Score {
    Score {
        fused: 100.0 * m.final_fused(),
        weak: m.final_modality("B").map(|v| 100.0 * v),
    }
}

/// Method name to per-seed scores, in seed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Results(pub BTreeMap<&'static str, Vec<Score>>);

impl Results {
    pub fn fused(&self, method: &str) -> f64 {
        let s = &self.0[method];
        s.iter().map(|x| x.fused).sum::<f64>() / s.len() as f64
    }

    pub fn weak(&self, method: &str) -> f64 {
        let s = &self.0[method];
        s.iter()
            .map(|x| x.weak.expect("method reports modality B"))
            .sum::<f64>()
            / s.len() as f64
    }
}

/// Every method of the ordering criteria for one seed.
pub fn run_seed(seed: u64) -> Vec<(&'static str, Score)> {
    let ds = blobs(seed);
    let cfg = config(seed);
    let mut out = Vec::new();
    out.push(("source-only", score(&train_source_only(&ds, &cfg).unwrap().1)));
    out.push(("dann", score(&train_dann(&ds, &cfg).unwrap().1)));
    out.push(("pmc", score(&train_pmc(&ds, &cfg).unwrap().1)));
    let no_mss = TrainConfig {
        disable_mss: true,
        ..cfg.clone()
    };
    out.push(("pmc-no-mss", score(&train_pmc(&ds, &no_mss).unwrap().1)));
    let no_mis = TrainConfig {
        disable_mis: true,
        ..cfg.clone()
    };
    out.push(("pmc-no-mis", score(&train_pmc(&ds, &no_mis).unwrap().1)));

    let dropped = ds.drop_modality("B").unwrap();
    out.push(("dann-a-only", score(&train_dann(&dropped, &cfg).unwrap().1)));
    let pc = pi_config(seed);
    let variants = [
        ("pi", pc.clone()),
        (
            "pi-no-cv",
            TrainConfig {
                disable_cv: true,
                ..pc.clone()
            },
        ),
        (
            "pi-no-gend",
            TrainConfig {
                disable_gend: true,
                ..pc.clone()
            },
        ),
        (
            "pi-no-both",
            TrainConfig {
                disable_cv: true,
                disable_gend: true,
                ..pc.clone()
            },
        ),
    ];
    for (name, c) in variants {
        out.push((name, score(&train_pmc_pi(&dropped, &c).unwrap().metrics)));
    }
    let oracle = OracleGenerator::from_dataset(&ds, "B").unwrap();
    out.push((
        "pi-oracle",
        score(&train_pmc_pi_with(&dropped, &pc, &oracle, &mut ()).unwrap().metrics),
    ));
    out
}

/// All methods over `seeds`, one thread per seed.
pub fn run_all(seeds: &[u64]) -> Results {
    let per_seed: Vec<Vec<(&'static str, Score)>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds.iter().map(|&seed| s.spawn(move || run_seed(seed))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut res = Results::default();
    for runs in per_seed {
        for (name, sc) in runs {
            res.0.entry(name).or_default().push(sc);
        }
    }
    res
}

/// Flattened parameters of every branch.
pub fn snapshot(ens: &BranchEnsemble) -> Vec<Vec<f64>> {
    ens.branches
        .iter()
        .flat_map(|b| [b.feature.parameters(), b.classifier.parameters(), b.domain.parameters()])
        .collect()
}

#[derive(Default)]
pub struct Trajectory(pub Vec<Vec<Vec<f64>>>);

impl Observer for Trajectory {
    fn epoch_end(&mut self, _epoch: usize, ens: &BranchEnsemble) {
        self.0.push(snapshot(ens));
    }
}

/// Parameter trajectories of PMC with both selections disabled and of DANN,
/// over `warmup + epochs` epochs.
pub fn reduction_trajectories(seed: u64, warmup: usize, epochs: usize) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>) {
    let ds = blobs(seed);
    let cfg = TrainConfig {
        warmup_epochs: warmup,
        epochs,
        ..config(seed)
    };
    let mut dann = Trajectory::default();
    train_dann_with(&ds, &cfg, &mut dann).unwrap();
    let off = TrainConfig {
        disable_mss: true,
        disable_mis: true,
        ..cfg
    };
    let mut pmc = Trajectory::default();
    train_pmc_with(&ds, &off, &mut pmc).unwrap();
    (pmc.0, dann.0)
}

/// Source pairs split into a training part and a held-out tail.
pub fn mmg_split(seed: u64) -> (Vec<MmgPair>, Vec<MmgPair>, Vec<Vec<f64>>) {
    let (mut pairs, targets) = mmg_inputs(&blobs(seed), "B").unwrap();
    let held = pairs.split_off(pairs.len() * 4 / 5);
    (pairs, held, targets)
}

pub fn trained_mmg(seed: u64, conditioning: bool) -> (MmgModel, Vec<MmgPair>) {
    let (train, held, targets) = mmg_split(seed);
    let cfg = TrainConfig {
        disable_cv: !conditioning,
        mode: Mode::MmdaPi,
        ..config(seed)
    };
    let model = train_mmg(&train, &targets, 4, &cfg.mmg_config(), seed).unwrap();
    (model, held)
}

fn one_hot(k: usize, c: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[c] = 1.0;
    v
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Mean L1 distance between outputs under two different one-hot category
/// vectors, over held-out inputs and all ordered class pairs.
pub fn conditioning_sensitivity(model: &MmgModel, held: &[MmgPair]) -> f64 {
    let k = model.classes;
    let mut total = 0.0;
    let mut n = 0usize;
    for p in held {
        let outs: Vec<Vec<f64>> = (0..k)
            .map(|c| model.generate(&p.available, &one_hot(k, c)).unwrap())
            .collect();
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    total += l1(&outs[a], &outs[b]);
                    n += 1;
                }
            }
        }
    }
    total / n as f64
}

/// Held-out L1 error of the generator (conditioned on the true class) and of
/// the best constant predictor fitted on the training pairs (coordinate-wise
/// median).
pub fn reconstruction_vs_constant(model: &MmgModel, train: &[MmgPair], held: &[MmgPair]) -> (f64, f64) {
    let dim = train[0].missing.as_ref().unwrap().len();
    let median: Vec<f64> = (0..dim)
        .map(|j| {
            let mut col: Vec<f64> = train.iter().map(|p| p.missing.as_ref().unwrap()[j]).collect();
            col.sort_by(f64::total_cmp);
            col[col.len() / 2]
        })
        .collect();
    let mut model_err = 0.0;
    let mut const_err = 0.0;
    for p in held {
        let truth = p.missing.as_ref().unwrap();
        let out = model
            .generate(&p.available, &one_hot(model.classes, p.label.unwrap()))
            .unwrap();
        model_err += l1(&out, truth);
        const_err += l1(&median, truth);
    }
    (model_err / held.len() as f64, const_err / held.len() as f64)
}
