//! Brute-force references for selection, NMS, box selection and the
//! proportion schedule, plus random instance generators.

use pmc_core::selection::{
    mis_select, mss_select, nms, select_boxes, BoxProposal, BoxSelectMode, FusedWeightRule, Origin, ProportionSchedule,
    PseudoRecord, Rect, ScoredBox, SelectionEntry, SelectionSet,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{coarse_probs, rng};

/// Probabilities whose masses sum to 8: every sum and halving stays exact.
pub fn dyadic_probs(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut masses = vec![0u32; k];
    for _ in 0..8 {
        masses[r.random_range(0..k)] += 1;
    }
    masses.iter().map(|&m| m as f64 / 8.0).collect()
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Number of keys strictly ranked ahead of `i`: higher confidence, or the
/// same confidence and a smaller id.
fn rank(keys: &[(f64, u64)], i: usize) -> usize {
    let (c, id) = keys[i];
    keys.iter()
        .filter(|&&(c2, id2)| c2 > c || (c2 == c && id2 < id))
        .count()
}

/// Entries as sorted `(id, label, weight bits, confidence bits, origin)` so
/// that sets compare exactly and independently of order.
pub fn canonical(set: &SelectionSet) -> Vec<(u64, usize, u64, u64, Origin)> {
    let mut v: Vec<_> = set
        .entries()
        .iter()
        .map(|e| (e.id, e.label, e.weight.to_bits(), e.confidence.to_bits(), e.origin))
        .collect();
    v.sort_by_key(|t| t.0);
    v
}

fn canonical_entries(mut v: Vec<SelectionEntry>) -> Vec<(u64, usize, u64, u64, Origin)> {
    v.sort_by_key(|e| e.id);
    v.iter()
        .map(|e| (e.id, e.label, e.weight.to_bits(), e.confidence.to_bits(), e.origin))
        .collect()
}

/// Modality-specific oracle with the proportion given as `num / 20`.
pub fn mss_oracle(records: &[PseudoRecord], m: usize, num: usize) -> Vec<SelectionEntry> {
    let count = num * records.len() / 20;
    let keys: Vec<(f64, u64)> = records
        .iter()
        .map(|r| (r.probs[m][first_max(&r.probs[m])], r.id))
        .collect();
    (0..records.len())
        .filter(|&i| rank(&keys, i) < count)
        .map(|i| {
            let p = &records[i].probs[m];
            let y = first_max(p);
            SelectionEntry {
                id: records[i].id,
                label: y,
                weight: p[y],
                confidence: p[y],
                origin: Origin::Mss(m),
            }
        })
        .collect()
}

/// Integrated oracle with the proportion `num / 20` and `alpha = a / 2`.
pub fn mis_oracle(records: &[PseudoRecord], num: usize, a: usize) -> Vec<SelectionEntry> {
    let count = (num * a).min(40) * records.len() / 40;
    let keys: Vec<(f64, u64)> = records.iter().map(|r| (r.fused_confidence, r.id)).collect();
    (0..records.len())
        .filter(|&i| rank(&keys, i) < count)
        .map(|i| SelectionEntry {
            id: records[i].id,
            label: records[i].fused_label,
            weight: records[i].fused_weight,
            confidence: records[i].fused_confidence,
            origin: Origin::Mis,
        })
        .collect()
}

/// Checks the derived fields of a record against its probabilities.
pub fn record_consistent(r: &PseudoRecord) -> bool {
    let m = r.probs.len() as f64;
    let k = r.probs[0].len();
    let fused: Vec<f64> = (0..k).map(|c| r.probs.iter().map(|p| p[c]).sum::<f64>() / m).collect();
    let label = first_max(&r.fused);
    let conf_mean = r.probs.iter().map(|p| p[first_max(p)]).sum::<f64>() / m;
    r.labels.iter().zip(&r.probs).all(|(&y, p)| y == first_max(p))
        && r.fused.iter().zip(&fused).all(|(a, b)| (a - b).abs() < 1e-12)
        && r.fused_label == label
        && r.fused_confidence == r.fused[label]
        && (r.fused_weight - conf_mean).abs() < 1e-12
}

pub fn random_records(r: &mut ChaCha8Rng) -> Vec<PseudoRecord> {
    let n = r.random_range(0..40);
    let mods = r.random_range(1..4);
    let k = r.random_range(2..5);
    let mut ids: Vec<u64> = (0..n as u64).map(|i| i * 7 + r.random_range(0..7)).collect();
    // shuffle so that input order carries no information
    for i in (1..ids.len()).rev() {
        ids.swap(i, r.random_range(0..=i));
    }
    ids.iter()
        .map(|&id| {
            let probs = (0..mods).map(|_| coarse_probs(r, k)).collect();
            PseudoRecord::from_probs(id, probs, FusedWeightRule::MeanMaxConfidence).unwrap()
        })
        .collect()
}

fn iou_at_least(a: &Rect, b: &Rect, tenths: u32) -> bool {
    // integer grid coordinates, so the areas are exact integers
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0) as i64;
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0) as i64;
    let area = |r: &Rect| ((r.x2 - r.x1) * (r.y2 - r.y1)) as i64;
    let inter = w * h;
    let union = area(a) + area(b) - inter;
    10 * inter >= tenths as i64 * union
}

/// Classic greedy NMS: take the best remaining box, discard its overlaps in
/// the same frame, repeat. Ids are unique.
pub fn nms_oracle(boxes: &[ScoredBox], tenths: u32) -> Vec<u64> {
    let mut left: Vec<&ScoredBox> = boxes.iter().collect();
    let mut kept = Vec::new();
    while !left.is_empty() {
        let best = (0..left.len())
            .min_by(|&i, &j| {
                let (a, b) = (left[i], left[j]);
                b.probs[first_max(&b.probs)]
                    .total_cmp(&a.probs[first_max(&a.probs)])
                    .then(a.id.cmp(&b.id))
            })
            .unwrap();
        let top = left.swap_remove(best);
        kept.push(top.id);
        left.retain(|b| b.frame != top.frame || !iou_at_least(&b.rect, &top.rect, tenths));
    }
    kept
}

fn random_rect(r: &mut ChaCha8Rng) -> Rect {
    let x1 = r.random_range(0..20) as f64;
    let y1 = r.random_range(0..20) as f64;
    let w = r.random_range(1..10) as f64;
    let h = r.random_range(1..10) as f64;
    Rect::new(x1, y1, x1 + w, y1 + h).unwrap()
}

pub fn random_boxes(r: &mut ChaCha8Rng) -> Vec<ScoredBox> {
    let n = r.random_range(0..30);
    let k = r.random_range(2..4);
    (0..n as u64)
        .map(|i| ScoredBox {
            id: i * 3 + 1,
            frame: r.random_range(0..3),
            rect: random_rect(r),
            probs: dyadic_probs(r, k),
        })
        .collect()
}

/// Proposals for 1, 2 or 4 modalities, each box scored by every modality.
/// With dyadic probabilities and a power-of-two modality count every fused
/// value is exact, so confidence ties are real ties.
pub fn random_proposals(r: &mut ChaCha8Rng) -> Vec<Vec<BoxProposal>> {
    let mods = [1, 2, 4][r.random_range(0..3)];
    let k = r.random_range(2..4);
    let mut next_id = 0u64;
    (0..mods)
        .map(|m| {
            (0..r.random_range(0..15))
                .map(|_| {
                    next_id += 1 + r.random_range(0..3);
                    BoxProposal {
                        id: next_id,
                        frame: r.random_range(0..2),
                        rect: random_rect(r),
                        proposer: m,
                        scores: (0..mods).map(|_| Some(dyadic_probs(r, k))).collect(),
                    }
                })
                .collect()
        })
        .collect()
}

fn scored(p: &BoxProposal, m: usize) -> ScoredBox {
    ScoredBox {
        id: p.id,
        frame: p.frame,
        rect: p.rect,
        probs: p.scores[m].clone().unwrap(),
    }
}

/// Composed reference for box selection: oracle NMS, then rank counting.
pub fn select_boxes_oracle(
    mode: BoxSelectMode,
    proposals: &[Vec<BoxProposal>],
    num: usize,
    tenths: u32,
) -> Vec<SelectionEntry> {
    let n_mod = proposals.len();
    let (pool, own): (Vec<&BoxProposal>, Option<usize>) = match mode {
        BoxSelectMode::Mss(m) => (proposals[m].iter().collect(), Some(m)),
        BoxSelectMode::Mis => (proposals.iter().flatten().collect(), None),
    };
    let boxes: Vec<ScoredBox> = pool.iter().map(|p| scored(p, own.unwrap_or(p.proposer))).collect();
    let kept = nms_oracle(&boxes, tenths);
    let rows: Vec<SelectionEntry> = kept
        .iter()
        .map(|id| {
            let p = pool.iter().find(|p| p.id == *id).unwrap();
            match own {
                Some(m) => {
                    let probs = p.scores[m].as_ref().unwrap();
                    let y = first_max(probs);
                    SelectionEntry {
                        id: p.id,
                        label: y,
                        weight: probs[y],
                        confidence: probs[y],
                        origin: Origin::Mss(m),
                    }
                }
                None => {
                    let all: Vec<&Vec<f64>> = p.scores.iter().map(|s| s.as_ref().unwrap()).collect();
                    let k = all[0].len();
                    let fused: Vec<f64> = (0..k)
                        .map(|c| all.iter().map(|v| v[c]).sum::<f64>() / n_mod as f64)
                        .collect();
                    let y = first_max(&fused);
                    SelectionEntry {
                        id: p.id,
                        label: y,
                        weight: all.iter().map(|v| v[first_max(v)]).sum::<f64>() / n_mod as f64,
                        confidence: fused[y],
                        origin: Origin::Mis,
                    }
                }
            }
        })
        .collect();
    let count = num * rows.len() / 20;
    let keys: Vec<(f64, u64)> = rows.iter().map(|e| (e.confidence, e.id)).collect();
    (0..rows.len())
        .filter(|&i| rank(&keys, i) < count)
        .map(|i| rows[i].clone())
        .collect()
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: &'static str,
    pub instances: usize,
    pub mismatches: usize,
    pub first_failure: Option<String>,
}

impl OracleReport {
    fn new(name: &'static str) -> Self {
        OracleReport {
            name,
            instances: 0,
            mismatches: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.instances += 1;
        if !ok {
            self.mismatches += 1;
            self.first_failure.get_or_insert_with(describe);
        }
    }

    pub fn passes(&self) -> bool {
        self.mismatches == 0
    }
}

/// `instances` random cases of each of the four selection routines.
pub fn selection_suite(instances: usize, seed: u64) -> Vec<OracleReport> {
    let mut r = rng(seed);
    let mut mss = OracleReport::new("modality-specific selection");
    let mut mis = OracleReport::new("modality-integrated selection");
    let mut nms_r = OracleReport::new("non-maximum suppression");
    let mut boxes = OracleReport::new("box selection");
    for _ in 0..instances {
        let records = random_records(&mut r);
        let num = r.random_range(0..=20);
        let a = r.random_range(1..=6);
        let mods = records.first().map_or(1, |x| x.probs.len());
        let m = r.random_range(0..mods);
        let consistent = records.iter().all(record_consistent);

        let got = canonical(&mss_select(&records, m, num as f64 / 20.0).unwrap());
        let want = canonical_entries(mss_oracle(&records, m, num));
        mss.record(consistent && got == want, || {
            format!("r={num}/20 m={m}: got {got:?}, want {want:?}")
        });

        let got = canonical(&mis_select(&records, num as f64 / 20.0, a as f64 / 2.0).unwrap());
        let want = canonical_entries(mis_oracle(&records, num, a));
        mis.record(got == want, || {
            format!("r={num}/20 alpha={a}/2: got {got:?}, want {want:?}")
        });

        let bs = random_boxes(&mut r);
        let tenths = r.random_range(1..10);
        let got: Vec<u64> = nms(&bs, tenths as f64 / 10.0).unwrap().iter().map(|b| b.id).collect();
        let want = nms_oracle(&bs, tenths);
        nms_r.record(got == want, || format!("delta={tenths}/10: got {got:?}, want {want:?}"));

        let props = random_proposals(&mut r);
        let mode = match r.random_range(0..=props.len()) {
            m if m < props.len() => BoxSelectMode::Mss(m),
            _ => BoxSelectMode::Mis,
        };
        let got = canonical(&select_boxes(mode, &props, num as f64 / 20.0, tenths as f64 / 10.0).unwrap());
        let want = canonical_entries(select_boxes_oracle(mode, &props, num, tenths));
        boxes.record(got == want, || {
            format!("{mode:?} r={num}/20: got {got:?}, want {want:?}")
        });
    }
    vec![mss, mis, nms_r, boxes]
}

/// Independent proportion schedule: `eta = -1` exactly when the accuracy is
/// below its running mean in this epoch and the previous one.
pub fn schedule_oracle(accs: &[f64], total: usize) -> Vec<(i8, f64)> {
    let mut sum = 0.0;
    let mut below = Vec::new();
    let mut eta_sum = 0i64;
    let mut out = Vec::new();
    for (i, &a) in accs.iter().enumerate() {
        sum += a;
        below.push(a < sum / (i + 1) as f64);
        let eta: i8 = if i > 0 && below[i] && below[i - 1] { -1 } else { 1 };
        eta_sum += eta as i64;
        out.push((eta, (eta_sum as f64 / total as f64).clamp(0.0, 1.0)));
    }
    out
}

pub fn run_schedule(accs: &[f64], total: usize) -> Vec<(i8, f64)> {
    let mut s = ProportionSchedule::new(total).unwrap();
    let ratios: Vec<f64> = accs.iter().map(|&a| s.update(a).unwrap()).collect();
    s.etas().iter().copied().zip(ratios).collect()
}

/// Random traces on a coarse grid (many exact equalities with the mean)
/// or as smooth random walks.
pub fn random_trace(r: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
    let total = r.random_range(1..30);
    let len = r.random_range(1..=total);
    let trace = if r.random_bool(0.5) {
        (0..len).map(|_| r.random_range(0..=20) as f64 / 20.0).collect()
    } else {
        let mut a: f64 = r.random_range(0.2..0.8);
        (0..len)
            .map(|_| {
                a = (a + r.random_range(-0.1..0.1)).clamp(0.0, 1.0);
                a
            })
            .collect()
    };
    (trace, total)
}

/// Hand-worked traces: `(accuracies, E, expected etas, expected ratios)`.
pub fn hand_traces() -> Vec<(Vec<f64>, usize, Vec<i8>, Vec<f64>)> {
    vec![
        (vec![0.9, 0.8, 0.7], 10, vec![1, 1, -1], vec![0.1, 0.2, 0.1]),
        (
            vec![0.5, 0.6, 0.7, 0.8, 0.9],
            10,
            vec![1; 5],
            vec![0.1, 0.2, 0.3, 0.4, 0.5],
        ),
        (
            vec![0.9, 0.1, 0.05, 0.04, 0.03, 0.02],
            10,
            vec![1, 1, -1, -1, -1, -1],
            vec![0.1, 0.2, 0.1, 0.0, 0.0, 0.0],
        ),
        (vec![0.5, 0.6, 0.7], 3, vec![1; 3], vec![1.0 / 3.0, 2.0 / 3.0, 1.0]),
    ]
}

#[derive(Debug, Clone)]
pub struct ScheduleReport {
    pub random: usize,
    pub random_mismatches: usize,
    pub hand: usize,
    pub hand_mismatches: usize,
    pub overflow_rejected: bool,
}

impl ScheduleReport {
    pub fn passes(&self) -> bool {
        self.random_mismatches == 0 && self.hand_mismatches == 0 && self.overflow_rejected
    }
}

pub fn schedule_suite(random: usize, seed: u64) -> ScheduleReport {
    let mut r = rng(seed);
    let mut random_mismatches = 0;
    for _ in 0..random {
        let (trace, total) = random_trace(&mut r);
        if run_schedule(&trace, total) != schedule_oracle(&trace, total) {
            random_mismatches += 1;
        }
    }
    let hands = hand_traces();
    let mut hand_mismatches = 0;
    for (accs, total, etas, ratios) in &hands {
        let got = run_schedule(accs, *total);
        let ok = got.len() == etas.len()
            && got
                .iter()
                .zip(etas.iter().zip(ratios))
                .all(|((ge, gr), (e, rr))| ge == e && (gr - rr).abs() < 1e-12);
        if !ok || got != schedule_oracle(accs, *total) {
            hand_mismatches += 1;
        }
    }
    let mut s = ProportionSchedule::new(3).unwrap();
    let overflow_rejected = (0..3).all(|_| s.update(0.5).is_ok()) && s.update(0.5).is_err();
    ScheduleReport {
        random,
        random_mismatches,
        hand: hands.len(),
        hand_mismatches,
        overflow_rejected,
    }
}
