use serde::{Deserialize, Serialize};

use crate::branches::BranchEnsemble;
use crate::error::{PmcError, Result};
use crate::nncore::argmax;
use crate::synthdata::{Sample, Schema};

/// How the fused (modality-integrated) weight `w0` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusedWeightRule {
    /// Mean of every modality's own top confidence.
    #[default]
    MeanMaxConfidence,
    /// Mean of every modality's probability at the fused label.
    MeanProbAtFusedLabel,
}

/// Predictions of all modalities for one target sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoRecord {
    pub id: u64,
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// `probs[m][labels[m]]`, also the modality-specific weight.
    pub confidences: Vec<f64>,
    pub fused: Vec<f64>,
    pub fused_label: usize,
    pub fused_confidence: f64,
    pub fused_weight: f64,
}

impl PseudoRecord {
    pub fn from_probs(id: u64, probs: Vec<Vec<f64>>, rule: FusedWeightRule) -> Result<Self> {
        if probs.is_empty() {
            return Err(PmcError::Modality(format!("sample {id} has no modality predictions")));
        }
        let k = probs[0].len();
        if k == 0 || probs.iter().any(|p| p.len() != k) {
            return Err(PmcError::InputShape {
                expected: k,
                got: probs.iter().map(Vec::len).find(|l| *l != k).unwrap_or(0),
            });
        }
        let labels: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let confidences: Vec<f64> = probs.iter().zip(&labels).map(|(p, &y)| p[y]).collect();
        let inv_m = 1.0 / probs.len() as f64;
        let mut fused = vec![0.0; k];
        for p in &probs {
            for (f, v) in fused.iter_mut().zip(p) {
                *f += v;
            }
        }
        fused.iter_mut().for_each(|f| *f *= inv_m);
        let fused_label = argmax(&fused);
        let fused_weight = match rule {
            FusedWeightRule::MeanMaxConfidence => confidences.iter().sum::<f64>() * inv_m,
            FusedWeightRule::MeanProbAtFusedLabel => probs.iter().map(|p| p[fused_label]).sum::<f64>() * inv_m,
        };
        Ok(PseudoRecord {
            id,
            fused_confidence: fused[fused_label],
            probs,
            labels,
            confidences,
            fused,
            fused_label,
            fused_weight,
        })
    }

    /// Modality-specific weight `w^m`.
    pub fn weight(&self, m: usize) -> f64 {
        self.confidences[m]
    }
}

/// Pseudo records for target samples, predicting every branch of the
/// ensemble on the matching payload.
pub fn make_pseudo_records<'a>(
    ensemble: &BranchEnsemble,
    schema: &Schema,
    targets: impl IntoIterator<Item = &'a Sample>,
    rule: FusedWeightRule,
) -> Result<Vec<PseudoRecord>> {
    let slots: Vec<usize> = ensemble
        .branches
        .iter()
        .map(|b| {
            schema
                .modality_index(&b.modality)
                .ok_or_else(|| PmcError::Modality(format!("`{}` not in schema", b.modality)))
        })
        .collect::<Result<_>>()?;
    targets
        .into_iter()
        .map(|s| {
            let probs = ensemble
                .branches
                .iter()
                .zip(&slots)
                .map(|(b, &m)| {
                    let x = s
                        .payload(m)
                        .ok_or_else(|| PmcError::Modality(format!("sample {} lacks `{}`", s.id, b.modality)))?;
                    b.predict(x)
                })
                .collect::<Result<Vec<_>>>()?;
            PseudoRecord::from_probs(s.id, probs, rule)
        })
        .collect()
}
