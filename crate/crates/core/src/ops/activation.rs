use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::ZERO { x } else { T::ZERO })
}

pub fn relu_in_place<T: Scalar>(t: &mut Tensor<T>) {
    for x in t.data_mut() {
        if !(*x > T::ZERO) {
            *x = T::ZERO;
        }
    }
}

/// Passes the gradient where `input > 0`; the subgradient at zero is zero.
///
/// `input` may be either the pre-activation or the ReLU output, since both
/// are positive on the same set.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.same_shape(input, "relu_backward")?;
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if !(x > T::ZERO) {
            *gv = T::ZERO;
        }
    }
    Ok(g)
}
