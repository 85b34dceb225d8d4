use serde::{Deserialize, Serialize};

use crate::branches::BranchEnsemble;
use crate::error::{PmcError, Result};
use crate::nncore::argmax;
use crate::synthdata::{Domain, MultiModalDataset, Sample, Schema};

/// Capability to read hidden target labels. Only this module can create one.
pub struct EvalAccess {
    _private: (),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub id: u64,
    pub labels: Vec<usize>,
    pub fused_label: usize,
    pub correct: Vec<bool>,
    pub fused_correct: bool,
}

/// Per-branch and late-fusion accuracies on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub modalities: Vec<String>,
    pub per_modality: Vec<f64>,
    pub fused: f64,
    pub predictions: Vec<SamplePrediction>,
}

fn slots(ens: &BranchEnsemble, schema: &Schema) -> Result<Vec<usize>> {
    ens.branches
        .iter()
        .map(|b| {
            schema
                .modality_index(&b.modality)
                .ok_or_else(|| PmcError::Modality(format!("`{}` not in schema", b.modality)))
        })
        .collect()
}

fn branch_probs(ens: &BranchEnsemble, slots: &[usize], sample: &Sample) -> Result<Vec<Vec<f64>>> {
    ens.branches
        .iter()
        .zip(slots)
        .map(|(b, &m)| {
            let x = sample
                .payload(m)
                .ok_or_else(|| PmcError::Modality(format!("sample {} lacks `{}`", sample.id, b.modality)))?;
            b.predict(x)
        })
        .collect()
}

fn mean_vector(probs: &[Vec<f64>]) -> Vec<f64> {
    let mut fused = vec![0.0; probs[0].len()];
    for p in probs {
        fused.iter_mut().zip(p).for_each(|(f, v)| *f += v);
    }
    let n = probs.len() as f64;
    fused.iter_mut().for_each(|f| *f /= n);
    fused
}

/// Late fusion: mean of the branches' probability vectors and its argmax
/// (lowest index on ties).
pub fn late_fusion_predict(ens: &BranchEnsemble, schema: &Schema, sample: &Sample) -> Result<(usize, Vec<f64>)> {
    if ens.branches.is_empty() {
        return Err(PmcError::Modality("ensemble has no branches".into()));
    }
    let slots = slots(ens, schema)?;
    let fused = mean_vector(&branch_probs(ens, &slots, sample)?);
    Ok((argmax(&fused), fused))
}

/// Exact accuracies of every branch and of the late fusion on a split.
/// Target truth is read through the evaluation-only path.
pub fn evaluate(ens: &BranchEnsemble, ds: &MultiModalDataset, split: Split) -> Result<Accuracies> {
    let access = EvalAccess { _private: () };
    let schema = ds.schema();
    let slots = slots(ens, schema)?;
    let domain = match split {
        Split::Source => Domain::Source,
        Split::Target => Domain::Target,
    };
    let mut hits = vec![0usize; ens.branches.len()];
    let mut fused_hits = 0usize;
    let mut predictions = Vec::new();
    for s in ds.samples().iter().filter(|s| s.domain == domain) {
        let truth = match split {
            Split::Source => s.label,
            Split::Target => s.hidden().reveal(&access),
        };
        let Some(truth) = truth else { continue };
        let probs = branch_probs(ens, &slots, s)?;
        let labels: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let fused_label = argmax(&mean_vector(&probs));
        let correct: Vec<bool> = labels.iter().map(|&l| l == truth).collect();
        for (h, c) in hits.iter_mut().zip(&correct) {
            *h += *c as usize;
        }
        fused_hits += (fused_label == truth) as usize;
        predictions.push(SamplePrediction {
            id: s.id,
            labels,
            fused_label,
            correct,
            fused_correct: fused_label == truth,
        });
    }
    let n = predictions.len().max(1) as f64;
    Ok(Accuracies {
        modalities: ens.branches.iter().map(|b| b.modality.clone()).collect(),
        per_modality: hits.iter().map(|&h| h as f64 / n).collect(),
        fused: fused_hits as f64 / n,
        predictions,
    })
}
