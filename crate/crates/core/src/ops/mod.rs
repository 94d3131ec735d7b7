//! Forward and backward passes for the layers the network uses.
//!
//! Image tensors are laid out `[H, W, C]`, optionally with a leading batch
//! dimension `[B, H, W, C]`. Dense layers accept `[K]` or `[B, K]`.

mod activation;
mod conv;
mod dense;
mod dropout;
mod loss;
mod pool;
mod regularize;

pub use activation::{relu, relu_backward, relu_in_place};
pub use conv::{
    conv2d_backward, conv2d_backward_from_patches, conv2d_forward, conv2d_forward_with_patches,
    conv_output_side, ConvGrads, Patches,
};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use loss::{cross_entropy_index, softmax, softmax_cross_entropy};
pub use pool::{maxpool2_backward, maxpool2_forward, PoolMask};
pub use regularize::{l2_penalty, l2_value};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

/// Splits an image tensor into `(batch, h, w, c)`; rank 3 means batch 1.
pub(crate) fn image_dims<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((1, h, w, c)),
        [b, h, w, c] => Ok((b, h, w, c)),
        _ => Err(Error::dim(op, t.shape(), &[0, 0, 0])),
    }
}

/// Rebuilds an image shape with the same batch convention as `like`.
pub(crate) fn image_shape(like_rank: usize, b: usize, h: usize, w: usize, c: usize) -> alloc::vec::Vec<usize> {
    if like_rank == 3 {
        alloc::vec![h, w, c]
    } else {
        alloc::vec![b, h, w, c]
    }
}
