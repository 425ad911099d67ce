use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean squared error and its gradient `2(p − t)/N`.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(f64, Tensor<S>)> {
    pred.ensure_same_dims(target, "mse operands")?;
    let n = pred.len().max(1) as f64;
    let mut sum = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            sum += d * d;
            S::from_f64(2.0 * d / n)
        })
        .collect();
    Ok((sum / n, Tensor::new(pred.dims().to_vec(), grad)?))
}

/// Mean softmax cross-entropy over rows of `(N, K)` logits.
pub fn cross_entropy<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<(f64, Tensor<S>)> {
    if logits.rank() != 2 || logits.dims()[0] != labels.len() {
        return Err(shape_err(format!(
            "cross entropy: logits {:?} vs {} labels",
            logits.dims(),
            labels.len()
        )));
    }
    let k = logits.dims()[1];
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in logits.data().chunks(k).zip(labels) {
        if y >= k {
            return Err(shape_err(format!("label {y} out of {k} classes")));
        }
        let m = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v.as_f64() - m).exp()).sum();
        loss += z.ln() + m - row[y].as_f64();
        for (j, v) in row.iter().enumerate() {
            let p = (v.as_f64() - m).exp() / z;
            let ind = if j == y { 1.0 } else { 0.0 };
            grad.push(S::from_f64((p - ind) / n));
        }
    }
    Ok((loss / n, Tensor::new(logits.dims().to_vec(), grad)?))
}
