use alloc::vec::Vec;

use super::{image_dims, image_shape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Winning input offset for every pooled cell, recorded by the forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolMask {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    argmax: Vec<u32>,
}

impl PoolMask {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    /// Flat input index chosen for each output cell.
    pub fn winners(&self) -> &[u32] {
        &self.argmax
    }
}

/// Disjoint 2x2 max pooling. Ties go to the first position in row-major
/// window order.
pub fn maxpool2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolMask)> {
    let (b, h, w, c) = image_dims(input, "maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim("maxpool2", input.shape(), &[h + h % 2, w + w % 2, c]));
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(b * ho * wo * c);
    let mut argmax = Vec::with_capacity(b * ho * wo * c);
    for img in 0..b {
        let base = img * h * w * c;
        for i in 0..ho {
            for j in 0..wo {
                let corners = [
                    base + ((2 * i) * w + 2 * j) * c,
                    base + ((2 * i) * w + 2 * j + 1) * c,
                    base + ((2 * i + 1) * w + 2 * j) * c,
                    base + ((2 * i + 1) * w + 2 * j + 1) * c,
                ];
                for ch in 0..c {
                    let mut best = corners[0] + ch;
                    for &corner in &corners[1..] {
                        if x[corner + ch] > x[best] {
                            best = corner + ch;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best as u32);
                }
            }
        }
    }
    let output_shape = image_shape(input.rank(), b, ho, wo, c);
    Ok((
        Tensor::new(&output_shape, out)?,
        PoolMask {
            input_shape: input.shape().to_vec(),
            output_shape,
            argmax,
        },
    ))
}

/// Routes each upstream gradient to the position that won the forward max.
pub fn maxpool2_backward<T: Scalar>(grad_out: &Tensor<T>, mask: &PoolMask) -> Result<Tensor<T>> {
    if grad_out.shape() != mask.output_shape.as_slice() {
        return Err(Error::dim("maxpool2_backward", grad_out.shape(), &mask.output_shape));
    }
    let mut grad = Tensor::zeros(&mask.input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in mask.argmax.iter().zip(grad_out.data()) {
        g[idx as usize] += v;
    }
    Ok(grad)
}
