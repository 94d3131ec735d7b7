use alloc::vec;
use alloc::vec::Vec;

use super::{image_dims, image_shape};
use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, Transpose};
use crate::tensor::Tensor;

/// Output side of a valid, stride-one convolution.
pub fn conv_output_side(input: usize, filter: usize) -> Option<usize> {
    (filter >= 1 && filter <= input).then(|| input - filter + 1)
}

/// Unrolled receptive fields: one row per output position (batch-major),
/// one column per `(a, b, ci)` filter tap.
#[derive(Debug, Clone)]
pub struct Patches<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
    input_shape: Vec<usize>,
    filter: usize,
}

impl<T: Scalar> Patches<T> {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub filters: Tensor<T>,
    pub bias: Tensor<T>,
}

fn filter_dims<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (b, h, w, cin) = image_dims(input, "conv2d")?;
    let (n, cout) = match *filters.shape() {
        [n, n2, fc, cout] if n == n2 && fc == cin => (n, cout),
        _ => return Err(Error::dim("conv2d", input.shape(), filters.shape())),
    };
    if n > h || n > w {
        return Err(Error::dim("conv2d", input.shape(), filters.shape()));
    }
    if let Some(bias) = bias {
        if bias.shape() != [cout] {
            return Err(Error::dim("conv2d", filters.shape(), bias.shape()));
        }
    }
    Ok((b, h, w, cin, n, cout))
}

fn im2col<T: Scalar>(input: &Tensor<T>, n: usize) -> Patches<T> {
    let (b, h, w, c) = image_dims(input, "im2col").expect("checked by caller");
    let (ho, wo) = (h - n + 1, w - n + 1);
    let run = n * c;
    let cols = n * run;
    let rows = b * ho * wo;
    let mut data = vec![T::ZERO; rows * cols];
    let src = input.data();
    let mut r = 0;
    for img in 0..b {
        let base = img * h * w * c;
        for i in 0..ho {
            for j in 0..wo {
                let dst = &mut data[r * cols..(r + 1) * cols];
                for a in 0..n {
                    let s = base + ((i + a) * w + j) * c;
                    dst[a * run..(a + 1) * run].copy_from_slice(&src[s..s + run]);
                }
                r += 1;
            }
        }
    }
    Patches {
        rows,
        cols,
        data,
        input_shape: input.shape().to_vec(),
        filter: n,
    }
}

/// Valid, stride-one 2D convolution.
///
/// `output[i, j, co] = bias[co] + sum_{a, b, ci} input[i + a, j + b, ci] * filters[a, b, ci, co]`
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    conv2d_forward_with_patches(input, filters, bias).map(|(out, _)| out)
}

/// Forward pass that also returns the unrolled input for reuse in backward.
pub fn conv2d_forward_with_patches<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, Patches<T>)> {
    let (b, h, w, _cin, n, cout) = filter_dims(input, filters, Some(bias))?;
    let (ho, wo) = (h - n + 1, w - n + 1);
    let patches = im2col(input, n);
    let mut out = Vec::with_capacity(patches.rows * cout);
    for _ in 0..patches.rows {
        out.extend_from_slice(bias.data());
    }
    gemm(
        patches.rows,
        patches.cols,
        cout,
        &patches.data,
        Transpose::No,
        filters.data(),
        Transpose::No,
        T::ONE,
        &mut out,
    );
    let shape = image_shape(input.rank(), b, ho, wo, cout);
    Ok((Tensor::new(&shape, out)?, patches))
}

/// Gradients of [`conv2d_forward`] with respect to input, filters and bias.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    filters: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (_, _, _, _, n, _) = filter_dims(input, filters, None)?;
    let patches = im2col(input, n);
    let grads = conv2d_backward_from_patches(grad_out, &patches, filters, true)?;
    Ok((grads.input.expect("requested"), grads.filters, grads.bias))
}

/// Backward pass from cached patches. The input gradient is skipped when
/// `need_input` is false (first layer).
pub fn conv2d_backward_from_patches<T: Scalar>(
    grad_out: &Tensor<T>,
    patches: &Patches<T>,
    filters: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let n = patches.filter;
    let shape = patches.input_shape();
    let (b, h, w, cin) = match *shape {
        [h, w, c] => (1, h, w, c),
        [b, h, w, c] => (b, h, w, c),
        _ => unreachable!(),
    };
    let cout = filters.shape()[3];
    let (ho, wo) = (h - n + 1, w - n + 1);
    let expected = image_shape(shape.len(), b, ho, wo, cout);
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::dim("conv2d_backward", grad_out.shape(), &expected));
    }
    if filters.shape() != [n, n, cin, cout] {
        return Err(Error::dim("conv2d_backward", shape, filters.shape()));
    }
    let g = grad_out.data();

    let mut gbias = vec![T::ZERO; cout];
    for row in g.chunks_exact(cout) {
        for (acc, &v) in gbias.iter_mut().zip(row) {
            *acc += v;
        }
    }

    let mut gfilters = vec![T::ZERO; patches.cols * cout];
    gemm(
        patches.cols,
        patches.rows,
        cout,
        &patches.data,
        Transpose::Yes,
        g,
        Transpose::No,
        T::ZERO,
        &mut gfilters,
    );

    let ginput = if need_input {
        let mut gpatch = vec![T::ZERO; patches.rows * patches.cols];
        gemm(
            patches.rows,
            cout,
            patches.cols,
            g,
            Transpose::No,
            filters.data(),
            Transpose::Yes,
            T::ZERO,
            &mut gpatch,
        );
        let mut gin = vec![T::ZERO; b * h * w * cin];
        let run = n * cin;
        let mut r = 0;
        for img in 0..b {
            let base = img * h * w * cin;
            for i in 0..ho {
                for j in 0..wo {
                    let src = &gpatch[r * patches.cols..(r + 1) * patches.cols];
                    for a in 0..n {
                        let d = base + ((i + a) * w + j) * cin;
                        for (acc, &v) in gin[d..d + run].iter_mut().zip(&src[a * run..(a + 1) * run]) {
                            *acc += v;
                        }
                    }
                    r += 1;
                }
            }
        }
        Some(Tensor::new(shape, gin)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: ginput,
        filters: Tensor::new(filters.shape(), gfilters)?,
        bias: Tensor::new(&[cout], gbias)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the defining sum.
    fn brute_conv(input: &Tensor<f64>, filters: &Tensor<f64>, bias: &Tensor<f64>) -> Tensor<f64> {
        let (h, w, cin) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (n, cout) = (filters.shape()[0], filters.shape()[3]);
        let (ho, wo) = (h - n + 1, w - n + 1);
        let mut out = Tensor::zeros(&[ho, wo, cout]);
        for i in 0..ho {
            for j in 0..wo {
                for co in 0..cout {
                    let mut s = bias.get(&[co]);
                    for a in 0..n {
                        for bb in 0..n {
                            for ci in 0..cin {
                                s += input.get(&[i + a, j + bb, ci]) * filters.get(&[a, bb, ci, co]);
                            }
                        }
                    }
                    out.set(&[i, j, co], s);
                }
            }
        }
        out
    }

    fn pseudo(shape: &[usize], salt: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| libm::sin(i as f64 * 1.37 + salt))
    }

    #[test]
    fn output_shape_follows_valid_convolution() {
        let input = Tensor::<f32>::zeros(&[32, 32, 1]);
        let filters = Tensor::<f32>::zeros(&[5, 5, 1, 80]);
        let bias = Tensor::<f32>::zeros(&[80]);
        let out = conv2d_forward(&input, &filters, &bias).unwrap();
        assert_eq!(out.shape(), &[28, 28, 80]);
    }

    #[test]
    fn unit_filter_is_identity() {
        let input = pseudo(&[4, 5, 1], 0.3);
        let filters = Tensor::full(&[1, 1, 1, 1], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &filters, &bias).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_window_sums_to_four() {
        let input = Tensor::<f32>::full(&[3, 3, 1], 1.0);
        let filters = Tensor::full(&[2, 2, 1, 1], 1.0);
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &filters, &bias).unwrap();
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert!(out.data().iter().all(|&v| v == 4.0));

        let (_, _, gb) = conv2d_backward(&Tensor::full(&[2, 2, 1], 1.0), &input, &filters).unwrap();
        assert_eq!(gb.data(), &[4.0]);
    }

    #[test]
    fn matches_brute_force_sum() {
        let input = pseudo(&[7, 6, 3], 0.1);
        let filters = pseudo(&[3, 3, 3, 4], 0.7);
        let bias = pseudo(&[4], 2.0);
        let fast = conv2d_forward(&input, &filters, &bias).unwrap();
        let slow = brute_conv(&input, &filters, &bias);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_equals_per_image() {
        let batch = pseudo(&[3, 6, 6, 2], 0.5);
        let filters = pseudo(&[3, 3, 2, 4], 1.1);
        let bias = pseudo(&[4], 0.9);
        let out = conv2d_forward(&batch, &filters, &bias).unwrap();
        let per = 6 * 6 * 2;
        let per_out = 4 * 4 * 4;
        for img in 0..3 {
            let single = Tensor::new(&[6, 6, 2], batch.data()[img * per..(img + 1) * per].to_vec()).unwrap();
            let o = conv2d_forward(&single, &filters, &bias).unwrap();
            assert_eq!(o.data(), &out.data()[img * per_out..(img + 1) * per_out]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let input = pseudo(&[5, 5, 2], 0.2);
        let filters = pseudo(&[2, 2, 2, 3], 0.4);
        let (gi, gf, gb) = conv2d_backward(&Tensor::zeros(&[4, 4, 3]), &input, &filters).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gf.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let input = Tensor::<f32>::zeros(&[4, 4, 2]);
        let filters = Tensor::<f32>::zeros(&[5, 5, 2, 1]);
        let err = conv2d_forward(&input, &filters, &Tensor::zeros(&[1])).unwrap_err();
        match err {
            Error::Dimension { left, right, .. } => {
                assert_eq!(left, vec![4, 4, 2]);
                assert_eq!(right, vec![5, 5, 2, 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let wrong_cin = Tensor::<f32>::zeros(&[2, 2, 3, 1]);
        assert!(conv2d_forward(&input, &wrong_cin, &Tensor::zeros(&[1])).is_err());
        let wrong_grad = Tensor::<f32>::zeros(&[2, 2, 1]);
        let ok_filters = Tensor::<f32>::zeros(&[2, 2, 2, 1]);
        assert!(conv2d_backward(&wrong_grad, &input, &ok_filters).is_err());
    }
}
