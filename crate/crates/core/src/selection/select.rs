use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::records::PseudoRecord;
use crate::error::{PmcError, Result};

/// Which module selected an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    /// Modality-specific selection for modality index `m`.
    Mss(usize),
    /// Modality-integrated selection.
    Mis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub id: u64,
    pub label: usize,
    pub weight: f64,
    pub confidence: f64,
    pub origin: Origin,
}

/// Pseudo-labeled samples chosen in one epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionSet {
    entries: Vec<SelectionEntry>,
}

impl SelectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<SelectionEntry>) -> Result<Self> {
        let mut set = SelectionSet::new();
        for e in entries {
            set.push(e)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, entry: SelectionEntry) -> Result<()> {
        if !(entry.weight > 0.0 && entry.weight <= 1.0) {
            return Err(PmcError::Argument(format!(
                "selection weight must lie in (0, 1], got {}",
                entry.weight
            )));
        }
        if self.contains(entry.id, entry.origin) {
            return Err(PmcError::Argument(format!(
                "sample {} already selected by {:?}",
                entry.id, entry.origin
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Union of two sets; `(id, origin)` pairs must stay unique.
    pub fn merge(mut self, other: SelectionSet) -> Result<Self> {
        for e in other.entries {
            self.push(e)?;
        }
        Ok(self)
    }

    pub fn entries(&self) -> &[SelectionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indicator `s(x)` for an origin.
    pub fn contains(&self, id: u64, origin: Origin) -> bool {
        self.entries.iter().any(|e| e.id == id && e.origin == origin)
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.entries.iter().filter(|e| e.origin == origin).count()
    }

    pub fn ids(&self, origin: Origin) -> HashSet<u64> {
        self.entries
            .iter()
            .filter(|e| e.origin == origin)
            .map(|e| e.id)
            .collect()
    }

    /// Audit lines `epoch origin id label weight confidence`, tab separated.
    pub fn audit_lines(&self, epoch: usize, modality_names: &[String]) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let origin = match e.origin {
                Origin::Mss(m) => format!(
                    "MSS:{}",
                    modality_names.get(m).map_or_else(|| m.to_string(), Clone::clone)
                ),
                Origin::Mis => "MIS".to_string(),
            };
            let _ = writeln!(
                out,
                "{epoch}\t{origin}\t{}\t{}\t{:?}\t{:?}",
                e.id, e.label, e.weight, e.confidence
            );
        }
        out
    }
}

pub const AUDIT_HEADER: &str = "epoch\torigin\tid\tlabel\tweight\tconfidence";

/// `floor(ratio * n)`, tolerant to representation error in `ratio`
/// (e.g. `k / E` that lands a hair under an integer after scaling).
pub fn selection_count(ratio: f64, n: usize) -> usize {
    let raw = (ratio.clamp(0.0, 1.0) * n as f64 + 1e-9).floor() as usize;
    raw.min(n)
}

/// Descending by confidence, ascending id on ties.
pub(crate) fn rank_order(a: (f64, u64), b: (f64, u64)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn top_by<F>(records: &[PseudoRecord], ratio: f64, origin: Origin, pick: F) -> Result<SelectionSet>
where
    F: Fn(&PseudoRecord) -> (f64, usize, f64),
{
    let count = selection_count(ratio, records.len());
    let mut scored: Vec<(f64, u64, usize, f64)> = records
        .iter()
        .map(|r| {
            let (conf, label, weight) = pick(r);
            (conf, r.id, label, weight)
        })
        .collect();
    scored.sort_by(|a, b| rank_order((a.0, a.1), (b.0, b.1)));
    SelectionSet::from_entries(
        scored
            .into_iter()
            .take(count)
            .map(|(confidence, id, label, weight)| SelectionEntry {
                id,
                label,
                weight,
                confidence,
                origin,
            })
            .collect(),
    )
}

/// Modality-specific selection: the top `floor(r N)` records by the
/// confidence of modality `m`, labeled and weighted by that modality.
pub fn mss_select(records: &[PseudoRecord], m: usize, ratio: f64) -> Result<SelectionSet> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(PmcError::Argument(format!(
            "proportion must lie in [0, 1], got {ratio}"
        )));
    }
    if let Some(r) = records.iter().find(|r| m >= r.probs.len()) {
        return Err(PmcError::Modality(format!("record {} has no modality {m}", r.id)));
    }
    top_by(records, ratio, Origin::Mss(m), |r| {
        (r.confidences[m], r.labels[m], r.confidences[m])
    })
}

/// Modality-integrated selection: the top `floor(min(alpha r0, 1) N)` records
/// by fused confidence, labeled by the fused label with the fused weight.
pub fn mis_select(records: &[PseudoRecord], ratio: f64, alpha: f64) -> Result<SelectionSet> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(PmcError::Argument(format!(
            "proportion must lie in [0, 1], got {ratio}"
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(PmcError::Argument(format!("alpha must be > 0, got {alpha}")));
    }
    let effective = (alpha * ratio).min(1.0);
    top_by(records, effective, Origin::Mis, |r| {
        (r.fused_confidence, r.fused_label, r.fused_weight)
    })
}
