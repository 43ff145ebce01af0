use std::collections::BTreeSet;

use super::{split_param_name, WEIGHT};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Row-wise softmax of `[N,C]` logits, stabilized by subtracting the row max.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, c] = logits.dims2("softmax")?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Mean negative log-likelihood over the batch and its gradient
/// `(softmax - onehot) / N`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let [n, c] = logits.dims2("softmax_cross_entropy")?;
    if labels.len() != n {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Data(format!("label {bad} out of range for {c} classes")));
    }
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(n * c);
    for (row, &label) in logits.data().chunks(c).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum_exp: T = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss = loss + (log_z - row[label]);
        for (j, &z) in row.iter().enumerate() {
            let p = (z - log_z).exp();
            let target = if j == label { T::one() } else { T::zero() };
            grad.push((p - target) * inv_n);
        }
    }
    Ok((loss * inv_n, Tensor::from_vec(&[n, c], grad)?))
}

/// L2 penalty value and per-parameter gradient contributions.
#[derive(Clone, Debug)]
pub struct L2Term<T: Real = f32> {
    pub loss: T,
    /// `(full parameter name, 2 * lambda * w)`.
    pub grads: Vec<(String, Tensor<T>)>,
}

/// `lambda * sum(w^2)` over the weight tensors (not biases) of the layers in
/// `scope`. Parameters are `(full name, tensor)` pairs such as `fc1.weight`.
pub fn l2_penalty<T: Real>(params: &[(&str, &Tensor<T>)], lambda: f64, scope: &BTreeSet<String>) -> Result<L2Term<T>> {
    let layers: BTreeSet<&str> = params
        .iter()
        .filter_map(|(name, _)| split_param_name(name).map(|(layer, _)| layer))
        .collect();
    if let Some(missing) = scope.iter().find(|s| !layers.contains(s.as_str())) {
        return Err(Error::Config(format!("L2 scope names unknown layer '{missing}'")));
    }
    let lam = T::from_f64(lambda);
    let two_lam = T::from_f64(2.0 * lambda);
    let mut loss = T::zero();
    let mut grads = Vec::new();
    for (name, w) in params {
        let Some((layer, suffix)) = split_param_name(name) else {
            continue;
        };
        if suffix != WEIGHT || !scope.contains(layer) {
            continue;
        }
        loss = loss + lam * w.data().iter().map(|&v| v * v).sum::<T>();
        grads.push((name.to_string(), w.scale(two_lam)));
    }
    Ok(L2Term { loss, grads })
}
