//! Aggregation over seeds and atomic file writes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use pmc_core::trainers::RunMetrics;

/// Mean and sample standard deviation (`None` below two values).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", Path::new(&tmp).display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub const SUMMARY_HEADER: &str = "metric\tmean\tstd\tn\tvalues";

/// One line per metric: `metric mean std n v1,v2,...` with `-` for an
/// undefined deviation.
pub fn render(metrics: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (name, values) in metrics {
        let (mean, std) = mean_std(values);
        let std = std.map_or("-".to_string(), |s| s.to_string());
        let list: Vec<String> = values.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{name}\t{mean}\t{std}\t{}\t{}", values.len(), list.join(","));
    }
    out
}

/// Final-epoch target accuracies: `tgt_fused`, then `tgt_<m>` for every
/// modality that has a branch.
pub fn final_metrics(run: &RunMetrics) -> Vec<(String, f64)> {
    let mut out = vec![("tgt_fused".to_string(), run.final_fused())];
    for m in &run.modalities {
        if let Some(v) = run.final_modality(m) {
            out.push((format!("tgt_{m}"), v));
        }
    }
    out
}
