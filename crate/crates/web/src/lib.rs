//! Browser demo: proportion-schedule explorer, NMS on random boxes and a
//! small PMC run with accuracy curves. Every export returns JSON text.

use pmc_core::selection::{nms, ProportionSchedule, Rect, ScoredBox};
use pmc_core::synthdata::{generate_benchmark, BenchmarkSpec};
use pmc_core::trainers::{train_dann, train_pmc, RunMetrics, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Schedule trace for the given per-epoch accuracies over `total_epochs`.
pub fn schedule_json(accuracies: &[f64], total_epochs: usize) -> Result<Value, String> {
    let mut s = ProportionSchedule::new(total_epochs).map_err(|e| e.to_string())?;
    for &a in accuracies {
        s.update(a).map_err(|e| e.to_string())?;
    }
    Ok(json!({
        "accuracies": s.accuracies(),
        "means": s.means(),
        "etas": s.etas(),
        "ratios": s.ratios(),
    }))
}

/// `count` random boxes in one 100x100 frame, scored over 3 classes, and the
/// ids NMS keeps at `iou_threshold`.
pub fn nms_json(seed: u64, count: usize, iou_threshold: f64) -> Result<Value, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes = Vec::with_capacity(count);
    for id in 0..count as u64 {
        // boxes cluster around a few centres so suppression has work to do
        let cx = [25.0, 50.0, 75.0][rng.random_range(0..3)] + rng.random_range(-12.0..12.0);
        let cy = [30.0, 70.0][rng.random_range(0..2)] + rng.random_range(-12.0..12.0);
        let w: f64 = rng.random_range(10.0..30.0);
        let h: f64 = rng.random_range(10.0..30.0);
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        boxes.push(ScoredBox {
            id,
            frame: 0,
            rect: Rect::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0).map_err(|e| e.to_string())?,
            probs: raw.iter().map(|v| v / total).collect(),
        });
    }
    let kept = nms(&boxes, iou_threshold).map_err(|e| e.to_string())?;
    Ok(json!({
        "boxes": boxes.iter().map(|b| json!({
            "id": b.id,
            "x1": b.rect.x1, "y1": b.rect.y1, "x2": b.rect.x2, "y2": b.rect.y2,
            "label": b.label(),
            "confidence": b.confidence(),
        })).collect::<Vec<_>>(),
        "kept": kept.iter().map(|b| b.id).collect::<Vec<_>>(),
    }))
}

fn curves(m: &RunMetrics) -> Value {
    json!({
        "fused": m.rows.iter().map(|r| r.target_fused).collect::<Vec<_>>(),
        "a": m.rows.iter().map(|r| r.target_acc[0]).collect::<Vec<_>>(),
        "b": m.rows.iter().map(|r| r.target_acc[1]).collect::<Vec<_>>(),
        "ratio_fused": m.rows.iter().map(|r| r.ratio_fused).collect::<Vec<_>>(),
        "selected_mis": m.rows.iter().map(|r| r.selected_mis).collect::<Vec<_>>(),
    })
}

/// DANN and PMC on a reduced blobs-mm2 (160 source and 160 target samples),
/// with per-epoch target accuracy curves.
pub fn pmc_run_json(seed: u64, warmup: usize, epochs: usize) -> Result<Value, String> {
    let spec = BenchmarkSpec {
        n_source: 160,
        n_target: 160,
        ..BenchmarkSpec::blobs_mm2(seed)
    };
    let ds = generate_benchmark(&spec).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig {
        seed,
        warmup_epochs: warmup,
        epochs,
        ..TrainConfig::default()
    };
    cfg.arch.feature = vec![32, 16];
    let (_, dann) = train_dann(&ds, &cfg).map_err(|e| e.to_string())?;
    let (_, pmc) = train_pmc(&ds, &cfg).map_err(|e| e.to_string())?;
    Ok(json!({
        "warmup": warmup,
        "dann": curves(&dann),
        "pmc": curves(&pmc),
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn schedule_trace(accuracies: &[f64], total_epochs: usize) -> Result<String, JsError> {
    to_js(schedule_json(accuracies, total_epochs))
}

#[wasm_bindgen]
pub fn nms_random(seed: u64, count: usize, iou_threshold: f64) -> Result<String, JsError> {
    to_js(nms_json(seed, count, iou_threshold))
}

#[wasm_bindgen]
pub fn pmc_run(seed: u64, warmup: usize, epochs: usize) -> Result<String, JsError> {
    to_js(pmc_run_json(seed, warmup, epochs))
}
