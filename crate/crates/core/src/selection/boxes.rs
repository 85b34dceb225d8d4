use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::select::{selection_count, Origin, SelectionEntry, SelectionSet};
use crate::error::{PmcError, Result};
use crate::nncore::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let r = Rect { x1, y1, x2, y2 };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        if !finite || self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(PmcError::Box(format!("degenerate rectangle {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = w * h;
        inter / (self.area() + other.area() - inter)
    }
}

/// A detection with its category probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    pub id: u64,
    pub frame: u64,
    pub rect: Rect,
    pub probs: Vec<f64>,
}

impl ScoredBox {
    pub fn label(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn confidence(&self) -> f64 {
        self.probs[self.label()]
    }

    fn validate(&self) -> Result<()> {
        self.rect.validate()?;
        let sum: f64 = self.probs.iter().sum();
        if self.probs.is_empty() || self.probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(PmcError::Box(format!(
                "box {} probabilities are not on the simplex",
                self.id
            )));
        }
        Ok(())
    }
}

/// Total order used by NMS: confidence descending, then every remaining
/// field, so that the result does not depend on input order.
fn nms_order(a: &ScoredBox, b: &ScoredBox) -> Ordering {
    b.confidence()
        .total_cmp(&a.confidence())
        .then(a.id.cmp(&b.id))
        .then(a.frame.cmp(&b.frame))
        .then(a.rect.x1.total_cmp(&b.rect.x1))
        .then(a.rect.y1.total_cmp(&b.rect.y1))
        .then(a.rect.x2.total_cmp(&b.rect.x2))
        .then(a.rect.y2.total_cmp(&b.rect.y2))
        .then_with(|| {
            a.probs
                .iter()
                .zip(&b.probs)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Greedy non-maximum suppression within each frame. A box is dropped when
/// its IoU with an already kept box of the same frame reaches `iou_threshold`.
/// The output is ordered by descending confidence.
pub fn nms(boxes: &[ScoredBox], iou_threshold: f64) -> Result<Vec<ScoredBox>> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(PmcError::Argument(format!(
            "IoU threshold must lie in (0, 1), got {iou_threshold}"
        )));
    }
    for b in boxes {
        b.validate()?;
    }
    let mut order: Vec<&ScoredBox> = boxes.iter().collect();
    order.sort_by(|a, b| nms_order(a, b));
    let mut kept: Vec<ScoredBox> = Vec::new();
    for cand in order {
        let suppressed = kept
            .iter()
            .any(|k| k.frame == cand.frame && k.rect.iou(&cand.rect) >= iou_threshold);
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    Ok(kept)
}

/// A detection proposed by one modality, scored by the classifiers of all
/// modalities (`scores[m]` is `None` when modality `m` did not score it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxProposal {
    pub id: u64,
    pub frame: u64,
    pub rect: Rect,
    pub proposer: usize,
    pub scores: Vec<Option<Vec<f64>>>,
}

impl BoxProposal {
    fn scored_by(&self, m: usize) -> Result<ScoredBox> {
        let probs = self
            .scores
            .get(m)
            .and_then(|s| s.clone())
            .ok_or_else(|| PmcError::Modality(format!("box {} lacks scores from modality {m}", self.id)))?;
        Ok(ScoredBox {
            id: self.id,
            frame: self.frame,
            rect: self.rect,
            probs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxSelectMode {
    Mss(usize),
    Mis,
}

fn top_boxes(mut scored: Vec<(f64, u64, usize, f64)>, ratio: f64, origin: Origin) -> Result<SelectionSet> {
    let count = selection_count(ratio, scored.len());
    scored.sort_by(|a, b| super::select::rank_order((a.0, a.1), (b.0, b.1)));
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

/// Box-level selection.
///
/// * `Mss(m)`: NMS over the boxes proposed by modality `m`, then the top
///   `floor(r K)` survivors by that modality's confidence.
/// * `Mis`: NMS over the pooled proposals of all modalities (each scored by
///   its proposer), then per-box mean of all modalities' probability vectors
///   and the top `floor(r K)` survivors by fused confidence.
///
/// `proposals[m]` holds the boxes proposed by modality `m`.
pub fn select_boxes(
    mode: BoxSelectMode,
    proposals: &[Vec<BoxProposal>],
    ratio: f64,
    iou_threshold: f64,
) -> Result<SelectionSet> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(PmcError::Argument(format!(
            "proportion must lie in [0, 1], got {ratio}"
        )));
    }
    let mut ids = HashSet::new();
    for p in proposals.iter().flatten() {
        if !ids.insert(p.id) {
            return Err(PmcError::Box(format!("duplicate box id {}", p.id)));
        }
    }
    match mode {
        BoxSelectMode::Mss(m) => {
            let own = proposals
                .get(m)
                .ok_or_else(|| PmcError::Modality(format!("no proposals for modality {m}")))?;
            let scored = own.iter().map(|p| p.scored_by(m)).collect::<Result<Vec<_>>>()?;
            let kept = nms(&scored, iou_threshold)?;
            let rows = kept
                .iter()
                .map(|b| (b.confidence(), b.id, b.label(), b.confidence()))
                .collect();
            top_boxes(rows, ratio, Origin::Mss(m))
        }
        BoxSelectMode::Mis => {
            let n_mod = proposals.len();
            let pooled: Vec<&BoxProposal> = proposals.iter().flatten().collect();
            let scored = pooled
                .iter()
                .map(|p| p.scored_by(p.proposer))
                .collect::<Result<Vec<_>>>()?;
            let kept = nms(&scored, iou_threshold)?;
            let mut rows = Vec::with_capacity(kept.len());
            for k in &kept {
                let p = pooled
                    .iter()
                    .find(|p| p.id == k.id)
                    .expect("kept box comes from the pool");
                let per_mod = (0..n_mod).map(|m| p.scored_by(m)).collect::<Result<Vec<_>>>()?;
                let dim = per_mod[0].probs.len();
                let mut fused = vec![0.0; dim];
                for b in &per_mod {
                    if b.probs.len() != dim {
                        return Err(PmcError::Box(format!("box {} has ragged score vectors", p.id)));
                    }
                    fused.iter_mut().zip(&b.probs).for_each(|(f, v)| *f += v / n_mod as f64);
                }
                let label = argmax(&fused);
                let weight = per_mod.iter().map(ScoredBox::confidence).sum::<f64>() / n_mod as f64;
                rows.push((fused[label], p.id, label, weight));
            }
            top_boxes(rows, ratio, Origin::Mis)
        }
    }
}
