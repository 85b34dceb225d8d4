//! `pmc train`: one run per seed, then an aggregate summary.
//!
//! Layout of `out_dir`:
//! - `experiment.toml`: copy of the config that produced the runs
//! - `seed-<s>/metrics.tsv`, `seed-<s>/ensemble.json`
//! - `seed-<s>/selections.tsv` (pmc, pmc-pi), `seed-<s>/mmg.json` (pmc-pi)
//! - `summary.tsv`, written last and atomically

use std::path::{Path, PathBuf};

use anyhow::Context;
use pmc_core::branches::BranchEnsemble;
use pmc_core::mmg::{mmg_inputs, train_mmg};
use pmc_core::selection::{SelectionSet, AUDIT_HEADER};
use pmc_core::trainers::{self, Observer, RunMetrics};

use crate::config::{config_error, ExperimentConfig, Method};
use crate::summary::{final_metrics, render, write_atomic};

/// Collects the selection audit trail.
struct Audit(String);

impl Observer for Audit {
    fn selection(&mut self, epoch: usize, set: &SelectionSet, selected_by: &[String]) {
        self.0.push_str(&set.audit_lines(epoch, selected_by));
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<RunMetrics> {
    let ds = cfg.dataset_for(seed)?;
    let tc = cfg.train_config(seed);
    let dir = seed_dir(&cfg.out_dir, seed);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut audit = Audit(format!("{AUDIT_HEADER}\n"));

    let (ens, metrics): (BranchEnsemble, RunMetrics) = match cfg.method {
        Method::SourceOnly => trainers::train_source_only(&ds, &tc)?,
        Method::Dann => trainers::train_dann(&ds, &tc)?,
        Method::Pmc => trainers::train_pmc_with(&ds, &tc, &mut audit)?,
        Method::PmcPi => {
            let missing = ds.schema().dropped[0].clone();
            let (pairs, targets) = mmg_inputs(&ds, &missing)?;
            let model = train_mmg(&pairs, &targets, ds.schema().classes, &tc.mmg_config(), seed)?;
            write_atomic(&dir.join("mmg.json"), &model.to_checkpoint()?)?;
            let out = trainers::train_pmc_pi_with(&ds, &tc, &model, &mut audit)?;
            (out.ensemble, out.metrics)
        }
    };

    write_atomic(&dir.join("metrics.tsv"), &metrics.to_tsv())?;
    write_atomic(&dir.join("ensemble.json"), &ens.to_checkpoint()?)?;
    if matches!(cfg.method, Method::Pmc | Method::PmcPi) {
        write_atomic(&dir.join("selections.tsv"), &audit.0)?;
    }
    Ok(metrics)
}

pub fn run(config_path: &Path) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    // dataset problems surface before any training starts
    for &seed in &cfg.seeds {
        cfg.dataset_for(seed)?;
    }
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", config_path.display())))?;
    write_atomic(&cfg.out_dir.join("experiment.toml"), &text)?;

    let results: Vec<anyhow::Result<RunMetrics>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let cfg = &cfg;
                scope.spawn(move || run_seed(cfg, seed).with_context(|| format!("seed {seed}")))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("worker panicked"))))
            .collect()
    });
    let runs = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;

    let mut table: Vec<(String, Vec<f64>)> = Vec::new();
    for run in &runs {
        for (name, v) in final_metrics(run) {
            match table.iter_mut().find(|(n, _)| *n == name) {
                Some((_, vals)) => vals.push(v),
                None => table.push((name, vec![v])),
            }
        }
    }
    write_atomic(&cfg.out_dir.join("summary.tsv"), &render(&table))?;

    println!(
        "{} over seeds {:?} -> {}",
        cfg.method.as_str(),
        cfg.seeds,
        cfg.out_dir.display()
    );
    for (name, values) in &table {
        let (mean, std) = crate::summary::mean_std(values);
        match std {
            Some(s) => println!("  {name}: {:.2} ± {:.2}", 100.0 * mean, 100.0 * s),
            None => println!("  {name}: {:.2}", 100.0 * mean),
        }
    }
    Ok(())
}
