//! Per-epoch run metrics and their tab-separated file format.
//!
//! Columns: `epoch phase`, then per modality `src_<m>`, `src_fused`,
//! `r_<m>`, `r_fused`, `mss_<m>`, `mis`, `tgt_<m>`, `tgt_fused`. Missing
//! values are written as `-`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PmcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Warmup,
    Cooperation,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Cooperation => "coop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub phase: Phase,
    pub source_acc: Vec<Option<f64>>,
    pub source_fused: Option<f64>,
    pub ratio: Vec<Option<f64>>,
    pub ratio_fused: Option<f64>,
    pub selected_mss: Vec<usize>,
    pub selected_mis: usize,
    pub target_acc: Vec<Option<f64>>,
    pub target_fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub method: String,
    pub seed: u64,
    pub modalities: Vec<String>,
    pub rows: Vec<EpochRow>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

impl RunMetrics {
    pub fn new(method: &str, seed: u64, modalities: Vec<String>) -> Self {
        RunMetrics {
            method: method.to_string(),
            seed,
            modalities,
            rows: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    /// Final fused target accuracy.
    pub fn final_fused(&self) -> f64 {
        self.last().map_or(0.0, |r| r.target_fused)
    }

    pub fn final_modality(&self, name: &str) -> Option<f64> {
        let m = self.modalities.iter().position(|n| n == name)?;
        self.last()?.target_acc[m]
    }

    pub fn header(&self) -> String {
        let mut cols = vec!["epoch".to_string(), "phase".to_string()];
        let m = &self.modalities;
        cols.extend(m.iter().map(|n| format!("src_{n}")));
        cols.push("src_fused".into());
        cols.extend(m.iter().map(|n| format!("r_{n}")));
        cols.push("r_fused".into());
        cols.extend(m.iter().map(|n| format!("mss_{n}")));
        cols.push("mis".into());
        cols.extend(m.iter().map(|n| format!("tgt_{n}")));
        cols.push("tgt_fused".into());
        cols.join("\t")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# method={} seed={}\n{}\n", self.method, self.seed, self.header());
        for r in &self.rows {
            let mut cols = vec![r.epoch.to_string(), r.phase.as_str().to_string()];
            cols.extend(r.source_acc.iter().map(|v| cell(*v)));
            cols.push(cell(r.source_fused));
            cols.extend(r.ratio.iter().map(|v| cell(*v)));
            cols.push(cell(r.ratio_fused));
            cols.extend(r.selected_mss.iter().map(|v| v.to_string()));
            cols.push(r.selected_mis.to_string());
            cols.extend(r.target_acc.iter().map(|v| cell(*v)));
            cols.push(format!("{}", r.target_fused));
            let _ = writeln!(out, "{}", cols.join("\t"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let perr = |line: usize, field: &str, reason: String| PmcError::Parse {
            line,
            field: field.to_string(),
            reason,
        };
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| perr(1, "meta", "empty metrics file".into()))?;
        let meta = meta
            .strip_prefix("# ")
            .ok_or_else(|| perr(1, "meta", "missing `# method=... seed=...` line".into()))?;
        let mut method = None;
        let mut seed = None;
        for kv in meta.split(' ') {
            match kv.split_once('=') {
                Some(("method", v)) => method = Some(v.to_string()),
                Some(("seed", v)) => seed = Some(v.parse::<u64>().map_err(|e| perr(1, "seed", e.to_string()))?),
                _ => return Err(perr(1, kv, "unknown meta field".into())),
            }
        }
        let header = lines.next().ok_or_else(|| perr(2, "header", "missing header".into()))?;
        let cols: Vec<&str> = header.split('\t').collect();
        let modalities: Vec<String> = cols
            .iter()
            .filter_map(|c| c.strip_prefix("src_"))
            .filter(|c| *c != "fused")
            .map(str::to_string)
            .collect();
        let mut metrics = RunMetrics::new(
            &method.ok_or_else(|| perr(1, "method", "missing".into()))?,
            seed.ok_or_else(|| perr(1, "seed", "missing".into()))?,
            modalities,
        );
        if metrics.header() != header {
            return Err(perr(2, "header", "unexpected column layout".into()));
        }
        let nm = metrics.modalities.len();
        for (i, line) in lines.enumerate() {
            let lineno = i + 3;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != cols.len() {
                return Err(perr(
                    lineno,
                    "row",
                    format!("expected {} fields, found {}", cols.len(), f.len()),
                ));
            }
            let opt = |j: usize| -> Result<Option<f64>> {
                match f[j] {
                    "-" => Ok(None),
                    v => v
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| perr(lineno, cols[j], e.to_string())),
                }
            };
            let count =
                |j: usize| -> Result<usize> { f[j].parse::<usize>().map_err(|e| perr(lineno, cols[j], e.to_string())) };
            let phase = match f[1] {
                "warmup" => Phase::Warmup,
                "coop" => Phase::Cooperation,
                other => return Err(perr(lineno, "phase", format!("unknown phase `{other}`"))),
            };
            let mut j = 2;
            let take_opts = |n: usize, j: &mut usize| -> Result<Vec<Option<f64>>> {
                let v = (*j..*j + n).map(opt).collect::<Result<Vec<_>>>()?;
                *j += n;
                Ok(v)
            };
            let source_acc = take_opts(nm, &mut j)?;
            let source_fused = take_opts(1, &mut j)?[0];
            let ratio = take_opts(nm, &mut j)?;
            let ratio_fused = take_opts(1, &mut j)?[0];
            let selected_mss = (j..j + nm).map(count).collect::<Result<Vec<_>>>()?;
            j += nm;
            let selected_mis = count(j)?;
            j += 1;
            let target_acc = take_opts(nm, &mut j)?;
            let target_fused = take_opts(1, &mut j)?[0].ok_or_else(|| perr(lineno, "tgt_fused", "missing".into()))?;
            metrics.rows.push(EpochRow {
                epoch: f[0]
                    .parse::<usize>()
                    .map_err(|e| perr(lineno, "epoch", e.to_string()))?,
                phase,
                source_acc,
                source_fused,
                ratio,
                ratio_fused,
                selected_mss,
                selected_mis,
                target_acc,
                target_fused,
            });
        }
        Ok(metrics)
    }
}
