use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Numerically stable softmax of one logit vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(logits[0], T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Cross-entropy of one logit row against a class index. Writes
/// `softmax(logits) - onehot(target)` into `grad` and returns the loss.
pub fn cross_entropy_index<T: Scalar>(logits: &[T], target: usize, grad: &mut [T]) -> T {
    debug_assert_eq!(logits.len(), grad.len());
    let max = logits.iter().copied().fold(logits[0], T::max);
    let mut sum = T::ZERO;
    for (g, &z) in grad.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *g = e;
        sum += e;
    }
    for g in grad.iter_mut() {
        *g /= sum;
    }
    grad[target] -= T::ONE;
    // log-sum-exp minus the target logit, both shifted by max
    sum.ln() - (logits[target] - max)
}

/// Softmax cross-entropy against a one-hot target.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    logits.same_shape(target, "softmax_cross_entropy")?;
    if logits.rank() != 1 {
        return Err(Error::dim("softmax_cross_entropy", logits.shape(), &[logits.len()]));
    }
    let mut index = None;
    for (i, &v) in target.data().iter().enumerate() {
        if v == T::ONE && index.is_none() {
            index = Some(i);
        } else if v != T::ZERO {
            return Err(Error::Validation(format!(
                "target is not one-hot: entry {i} is {v}"
            )));
        }
    }
    let index = index.ok_or_else(|| Error::Validation("target is not one-hot: all zeros".into()))?;
    let mut grad = Tensor::zeros(logits.shape());
    let loss = cross_entropy_index(logits.data(), index, grad.data_mut());
    Ok((loss, grad))
}
