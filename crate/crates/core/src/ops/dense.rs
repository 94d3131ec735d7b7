use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, Transpose};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (b, k) = match *input.shape() {
        [k] => (1, k),
        [b, k] => (b, k),
        _ => return Err(Error::dim("dense", input.shape(), weights.shape())),
    };
    match *weights.shape() {
        [wk, l] if wk == k => Ok((b, k, l)),
        _ => Err(Error::dim("dense", input.shape(), weights.shape())),
    }
}

fn out_shape(rank: usize, b: usize, l: usize) -> Vec<usize> {
    if rank == 1 {
        alloc::vec![l]
    } else {
        alloc::vec![b, l]
    }
}

/// `output = input * weights + bias`, for `[K]` or `[B, K]` inputs.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, k, l) = dims(input, weights)?;
    if bias.shape() != [l] {
        return Err(Error::dim("dense", weights.shape(), bias.shape()));
    }
    let mut out = Vec::with_capacity(b * l);
    for _ in 0..b {
        out.extend_from_slice(bias.data());
    }
    gemm(b, k, l, input.data(), Transpose::No, weights.data(), Transpose::No, T::ONE, &mut out);
    Tensor::new(&out_shape(input.rank(), b, l), out)
}

pub fn dense_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (b, k, l) = dims(input, weights)?;
    let expected = out_shape(input.rank(), b, l);
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::dim("dense_backward", grad_out.shape(), &expected));
    }
    let g = grad_out.data();
    let mut gb = alloc::vec![T::ZERO; l];
    for row in g.chunks_exact(l) {
        for (acc, &v) in gb.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut gw = alloc::vec![T::ZERO; k * l];
    gemm(k, b, l, input.data(), Transpose::Yes, g, Transpose::No, T::ZERO, &mut gw);
    let mut gi = alloc::vec![T::ZERO; b * k];
    gemm(b, l, k, g, Transpose::No, weights.data(), Transpose::Yes, T::ZERO, &mut gi);
    Ok(DenseGrads {
        input: Tensor::new(input.shape(), gi)?,
        weights: Tensor::new(weights.shape(), gw)?,
        bias: Tensor::new(&[l], gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::from_vec(vec![0.5f32, -2.0, 3.0]);
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let y = dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_arithmetic() {
        let x = Tensor::from_vec(vec![1.0f32, 2.0]);
        let w = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::from_vec(vec![10.0, 10.0]);
        assert_eq!(dense_forward(&x, &w, &b).unwrap().data(), &[11.0, 12.0]);
    }

    #[test]
    fn matches_naive_double_loop() {
        let x = Tensor::<f64>::from_fn(&[3, 5], |i| libm::cos(i as f64));
        let w = Tensor::<f64>::from_fn(&[5, 4], |i| libm::sin(i as f64 * 0.3));
        let b = Tensor::<f64>::from_fn(&[4], |i| i as f64);
        let y = dense_forward(&x, &w, &b).unwrap();
        for r in 0..3 {
            for j in 0..4 {
                let mut s = b.get(&[j]);
                for p in 0..5 {
                    s += x.get(&[r, p]) * w.get(&[p, j]);
                }
                assert!((y.get(&[r, j]) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bias_gradient_equals_upstream() {
        let x = Tensor::from_vec(vec![1.0f64, -1.0, 2.0]);
        let w = Tensor::<f64>::from_fn(&[3, 2], |i| i as f64);
        let g = Tensor::from_vec(vec![0.3, -0.7]);
        let grads = dense_backward(&g, &x, &w).unwrap();
        assert_eq!(grads.bias, g);

        let zero = dense_backward(&Tensor::zeros(&[2]), &x, &w).unwrap();
        assert!(zero.input.data().iter().chain(zero.weights.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_inner_dimension() {
        let x = Tensor::<f32>::zeros(&[3]);
        let w = Tensor::<f32>::zeros(&[4, 2]);
        assert!(matches!(
            dense_forward(&x, &w, &Tensor::zeros(&[2])),
            Err(Error::Dimension { .. })
        ));
    }
}
