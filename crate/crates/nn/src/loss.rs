use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Row-wise softmax with the usual max shift.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (dst, &l) in o.iter_mut().zip(row) {
            *dst = (l - m).exp();
            s += *dst;
        }
        o.iter_mut().for_each(|v| *v /= s);
    }
    out
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean categorical cross-entropy over the batch.
    pub loss: f64,
    pub probs: Vec<f64>,
    /// Gradient of the mean loss w.r.t. the logits.
    pub d_logits: Vec<f64>,
}

/// Softmax + categorical cross-entropy for integer class labels.
pub fn softmax_xent(logits: &[f64], classes: usize, labels: &[usize]) -> Result<LossOutput> {
    if classes == 0 || logits.len() != labels.len() * classes {
        return Err(NnError::Shape(format!(
            "{} logits for {} labels x {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(bad) = logits.iter().position(|v| !v.is_finite()) {
        return Err(NnError::NonFinite(format!("logit {bad} = {}", logits[bad])));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::InvalidArgument(format!("label {l} outside {classes} classes")));
    }
    let probs = softmax_rows(logits, classes);
    let batch = labels.len() as f64;
    let mut loss = 0.0;
    let mut d_logits = probs.clone();
    for (r, (&y, row)) in labels.iter().zip(logits.chunks_exact(classes)).enumerate() {
        // -ln p_y = ln(sum_j exp(l_j - l_max)) - (l_y - l_max), with ln_1p on
        // the non-max terms so near-certain predictions keep their precision
        let (imax, &m) = row
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
        let rest: f64 = row
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != imax)
            .map(|(_, &l)| (l - m).exp())
            .sum();
        loss += rest.ln_1p() - (row[y] - m);
        d_logits[r * classes + y] -= 1.0;
    }
    d_logits.iter_mut().for_each(|g| *g /= batch);
    Ok(LossOutput {
        loss: loss / batch,
        probs,
        d_logits,
    })
}

/// `logits` is `classes` or `batch x classes`; `onehot` has the same shape.
pub fn softmax_crossentropy(logits: &Tensor, onehot: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape() != onehot.shape() {
        return Err(NnError::Shape(format!(
            "logits {:?} vs labels {:?}",
            logits.shape(),
            onehot.shape()
        )));
    }
    let classes = *logits
        .shape()
        .last()
        .ok_or_else(|| NnError::Shape("empty logits".into()))?;
    let mut labels = Vec::new();
    for row in onehot.values().chunks_exact(classes) {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != classes - 1 {
            return Err(NnError::InvalidArgument(format!("{row:?} is not one-hot")));
        }
        labels.push(row.iter().position(|&v| v == 1.0).unwrap_or(0));
    }
    let out = softmax_xent(logits.values(), classes, &labels)?;
    Ok((out.loss, Tensor::new(logits.shape().to_vec(), out.probs)?))
}
