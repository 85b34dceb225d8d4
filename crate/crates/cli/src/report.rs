//! `pmc report`: final-epoch accuracies of finished runs, side by side.
//!
//! Every number comes from `seed-*/metrics.tsv`. The only computations are
//! the mean and sample deviation over seeds and, for runs after the first,
//! the mean paired difference of fused accuracy against the first run on
//! the seeds both share.
//!
//! TSV columns: `run method seeds`, then `<metric>_mean <metric>_std` for
//! `tgt_fused` and each `tgt_<m>`, then `delta_fused delta_n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use pmc_core::trainers::RunMetrics;

use crate::config::config_error;
use crate::summary::{final_metrics, mean_std, write_atomic};

#[derive(Debug)]
pub struct RunSummary {
    pub name: String,
    pub method: String,
    pub modalities: Vec<String>,
    /// seed -> final metrics
    pub seeds: BTreeMap<u64, Vec<(String, f64)>>,
}

impl RunSummary {
    fn values(&self, metric: &str) -> Vec<f64> {
        self.seeds
            .values()
            .filter_map(|ms| ms.iter().find(|(n, _)| n == metric).map(|(_, v)| *v))
            .collect()
    }

    fn fused(&self, seed: u64) -> Option<f64> {
        self.seeds
            .get(&seed)?
            .iter()
            .find(|(n, _)| n == "tgt_fused")
            .map(|(_, v)| *v)
    }
}

pub fn load_run(dir: &Path) -> anyhow::Result<RunSummary> {
    let name = dir.display().to_string();
    let entries =
        std::fs::read_dir(dir).map_err(|e| config_error(format!("run {name}: cannot read directory: {e}")))?;
    let mut method: Option<String> = None;
    let mut modalities: Option<Vec<String>> = None;
    let mut seeds = BTreeMap::new();
    for entry in entries {
        let path = entry?.path();
        let is_seed = path
            .file_name()
            .and_then(|f| f.to_str())
            .is_some_and(|f| f.starts_with("seed-"));
        let file = path.join("metrics.tsv");
        if !is_seed || !file.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&file)?;
        let run =
            RunMetrics::from_tsv(&text).map_err(|e| config_error(format!("run {name}: {}: {e}", file.display())))?;
        if run.rows.is_empty() {
            return Err(config_error(format!("run {name}: {} has no epochs", file.display())));
        }
        if method.get_or_insert_with(|| run.method.clone()) != &run.method {
            return Err(config_error(format!("run {name}: seeds disagree on the method")));
        }
        if modalities.get_or_insert_with(|| run.modalities.clone()) != &run.modalities {
            return Err(config_error(format!("run {name}: seeds disagree on the modalities")));
        }
        seeds.insert(run.seed, final_metrics(&run));
    }
    match (method, modalities) {
        (Some(method), Some(modalities)) => Ok(RunSummary {
            name,
            method,
            modalities,
            seeds,
        }),
        _ => Err(config_error(format!("run {name}: no seed-*/metrics.tsv found"))),
    }
}

/// Mean paired fused difference `run - reference` over shared seeds.
pub fn paired_delta(reference: &RunSummary, run: &RunSummary) -> Option<(f64, usize)> {
    let diffs: Vec<f64> = run
        .seeds
        .keys()
        .filter_map(|&s| Some(run.fused(s)? - reference.fused(s)?))
        .collect();
    if diffs.is_empty() {
        return None;
    }
    Some((mean_std(&diffs).0, diffs.len()))
}

pub fn metric_names(modalities: &[String]) -> Vec<String> {
    std::iter::once("tgt_fused".to_string())
        .chain(modalities.iter().map(|m| format!("tgt_{m}")))
        .collect()
}

pub fn build(runs: &[RunSummary]) -> anyhow::Result<(String, String)> {
    let first = runs.first().ok_or_else(|| config_error("no runs given"))?;
    for r in &runs[1..] {
        if r.modalities != first.modalities {
            return Err(config_error(format!(
                "run {} has modalities {:?}, incompatible with {:?} of {}",
                r.name, r.modalities, first.modalities, first.name
            )));
        }
    }
    let metrics = metric_names(&first.modalities);

    let mut tsv = String::from("run\tmethod\tseeds");
    for m in &metrics {
        let _ = write!(tsv, "\t{m}_mean\t{m}_std");
    }
    tsv.push_str("\tdelta_fused\tdelta_n\n");

    let mut header = vec!["run".to_string(), "method".into(), "seeds".into()];
    header.extend(metrics.iter().cloned());
    header.push("delta_fused".into());
    let mut rows = vec![header];

    for (i, r) in runs.iter().enumerate() {
        let seeds: Vec<String> = r.seeds.keys().map(u64::to_string).collect();
        let _ = write!(tsv, "{}\t{}\t{}", r.name, r.method, seeds.join(","));
        let mut row = vec![r.name.clone(), r.method.clone(), seeds.join(",")];
        for m in &metrics {
            let vals = r.values(m);
            if vals.is_empty() {
                tsv.push_str("\t-\t-");
                row.push("-".into());
                continue;
            }
            let (mean, std) = mean_std(&vals);
            let _ = write!(tsv, "\t{mean}\t{}", std.map_or("-".to_string(), |s| s.to_string()));
            row.push(match std {
                Some(s) => format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * s),
                None => format!("{:.2}", 100.0 * mean),
            });
        }
        match (i, paired_delta(first, r)) {
            (0, _) | (_, None) => {
                tsv.push_str("\t-\t0\n");
                row.push("-".into());
            }
            (_, Some((d, n))) => {
                let _ = writeln!(tsv, "\t{d}\t{n}");
                row.push(format!("{:+.2}", 100.0 * d));
            }
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut table = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}", w = *w))
            .collect();
        let _ = writeln!(table, "{}", cells.join("  ").trim_end());
    }
    Ok((table, tsv))
}

pub fn run(dirs: &[impl AsRef<Path>], out: Option<&Path>) -> anyhow::Result<()> {
    let runs = dirs
        .iter()
        .map(|d| load_run(d.as_ref()))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let (table, tsv) = build(&runs)?;
    print!("{table}");
    println!("(target accuracy in %, mean ± sample std over seeds; delta_fused is paired against the first run)");
    if let Some(path) = out {
        write_atomic(path, &tsv)?;
    }
    Ok(())
}
