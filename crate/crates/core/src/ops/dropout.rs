use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Kept-element indicator from a training-mode dropout call.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep_prob: f64,
    pub kept: Vec<bool>,
}

impl DropoutMask {
    pub fn kept_fraction(&self) -> f64 {
        self.kept.iter().filter(|&&k| k).count() as f64 / self.kept.len().max(1) as f64
    }
}

fn check_keep(keep_prob: f64) -> Result<()> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Validation(format!(
            "keep probability {keep_prob} must be in (0, 1]"
        )));
    }
    Ok(())
}

/// Inverted dropout: kept elements are scaled by `1 / keep_prob` so that
/// evaluation mode is the identity.
pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    keep_prob: f64,
    rng: &mut RngStream,
    training: bool,
) -> Result<(Tensor<T>, DropoutMask)> {
    check_keep(keep_prob)?;
    if !training || keep_prob == 1.0 {
        let mask = DropoutMask {
            keep_prob,
            kept: alloc::vec![true; input.len()],
        };
        return Ok((input.clone(), mask));
    }
    let scale = T::from_f64(1.0 / keep_prob);
    let mut out = input.clone();
    let mut kept = Vec::with_capacity(input.len());
    for x in out.data_mut() {
        let keep = rng.bernoulli(keep_prob);
        kept.push(keep);
        *x = if keep { *x * scale } else { T::ZERO };
    }
    Ok((out, DropoutMask { keep_prob, kept }))
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor<T>, mask: &DropoutMask) -> Result<Tensor<T>> {
    if grad_out.len() != mask.kept.len() {
        return Err(Error::dim("dropout_backward", grad_out.shape(), &[mask.kept.len()]));
    }
    if mask.keep_prob == 1.0 {
        return Ok(grad_out.clone());
    }
    let scale = T::from_f64(1.0 / mask.keep_prob);
    let mut g = grad_out.clone();
    for (v, &k) in g.data_mut().iter_mut().zip(&mask.kept) {
        *v = if k { *v * scale } else { T::ZERO };
    }
    Ok(g)
}
