use crate::error::{PmcError, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Weighted softmax cross-entropy: `-weight * log softmax(logits)[label]`.
pub fn softmax_xent(logits: &[f64], label: usize, weight: f64) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(PmcError::Label {
            label,
            classes: logits.len(),
        });
    }
    if !weight.is_finite() || weight < 0.0 {
        return Err(PmcError::Argument(format!(
            "sample weight must be finite and >= 0, got {weight}"
        )));
    }
    if weight == 0.0 {
        return Ok((0.0, vec![0.0; logits.len()]));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = weight * (lse - logits[label]);
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    grad.iter_mut().for_each(|g| *g *= weight);
    Ok((loss, grad))
}

/// Sigmoid binary cross-entropy on a single logit. `domain_label` is 0 or 1.
pub fn binary_xent(logit: f64, domain_label: u8) -> Result<(f64, f64)> {
    if !logit.is_finite() {
        return Err(PmcError::Argument(format!("non-finite logit {logit}")));
    }
    if domain_label > 1 {
        return Err(PmcError::Label {
            label: domain_label as usize,
            classes: 2,
        });
    }
    let d = domain_label as f64;
    // softplus(z) - d*z, evaluated without overflow
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    let loss = softplus - d * logit;
    let sig = if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    };
    Ok((loss, sig - d))
}

/// Mean absolute error and its (sub)gradient `sign(pred - target) / dim`.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(PmcError::InputShape {
            expected: target.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let diff = p - t;
            loss += diff.abs();
            if diff > 0.0 {
                1.0 / n
            } else if diff < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, grad))
}

/// Backward pass of the gradient reversal layer. The forward pass is the identity.
pub fn grl_backward(upstream_grad: &[f64], factor: f64) -> Vec<f64> {
    upstream_grad.iter().map(|g| -factor * g).collect()
}
