use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};

/// `−log_softmax(logits)[label]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    let n = tape.value(logits).numel();
    if tape.value(logits).rank() != 1 {
        return Err(Error::dim("cross_entropy expects a logit vector"));
    }
    if label >= n {
        return Err(Error::contract(format!("label {label} out of range for {n} classes")));
    }
    let ls = tape.log_softmax(logits)?;
    let picked = tape.select(ls, label)?;
    tape.scale(picked, -1.0)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::contract("top-1 accuracy over an empty set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Weighted sum of per-stream logits followed by [`argmax`].
pub fn fuse_logits(logits_per_stream: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    if logits_per_stream.is_empty() {
        return Err(Error::contract("fusion needs at least one stream"));
    }
    if weights.len() != logits_per_stream.len() {
        return Err(Error::contract(format!(
            "{} weights for {} streams",
            weights.len(),
            logits_per_stream.len()
        )));
    }
    let n = logits_per_stream[0].len();
    if n == 0 || logits_per_stream.iter().any(|l| l.len() != n) {
        return Err(Error::contract("all streams must score the same, nonzero number of classes"));
    }
    let mut fused = vec![0.0; n];
    for (l, &w) in logits_per_stream.iter().zip(weights) {
        for (f, x) in fused.iter_mut().zip(l.iter()) {
            *f += w * x;
        }
    }
    Ok(fused)
}

pub fn fuse_predictions(logits_per_stream: &[&[f64]], weights: &[f64]) -> Result<usize> {
    fuse_logits(logits_per_stream, weights).map(|f| argmax(&f))
}
