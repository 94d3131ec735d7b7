use alloc::format;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ParamRole, ParamTensor};

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!("L2 lambda {lambda} must be finite and >= 0")));
    }
    Ok(())
}

/// `lambda * sum(x^2)` over weight tensors; biases are excluded.
///
/// Accumulated in `f64` regardless of the parameter type.
pub fn l2_value<T: Scalar>(params: &[ParamTensor<T>], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0f64;
    for p in params.iter().filter(|p| p.role == ParamRole::Weight) {
        for &x in p.value.data() {
            let x = x.to_f64();
            sum += x * x;
        }
    }
    Ok(lambda * sum)
}

/// Returns the penalty and adds `2 * lambda * x` to every weight gradient.
pub fn l2_penalty<T: Scalar>(params: &mut [ParamTensor<T>], lambda: f64) -> Result<f64> {
    let penalty = l2_value(params, lambda)?;
    if lambda == 0.0 {
        return Ok(penalty);
    }
    let factor = T::from_f64(2.0 * lambda);
    for p in params.iter_mut().filter(|p| p.role == ParamRole::Weight) {
        for (g, &x) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
            *g += factor * x;
        }
    }
    Ok(penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use alloc::vec;

    #[test]
    fn zero_lambda_is_inert() {
        let mut params = vec![ParamTensor::new("w", ParamRole::Weight, Tensor::from_vec(vec![3.0f64]))];
        assert_eq!(l2_penalty(&mut params, 0.0).unwrap(), 0.0);
        assert_eq!(params[0].grad.data(), &[0.0]);
    }

    #[test]
    fn hand_arithmetic() {
        let mut params = vec![
            ParamTensor::new("w", ParamRole::Weight, Tensor::from_vec(vec![3.0f64])),
            ParamTensor::new("b", ParamRole::Bias, Tensor::from_vec(vec![100.0f64])),
        ];
        let penalty = l2_penalty(&mut params, 0.5).unwrap();
        assert_eq!(penalty, 4.5);
        assert_eq!(params[0].grad.data(), &[3.0]);
        assert_eq!(params[1].grad.data(), &[0.0]);
    }

    #[test]
    fn negative_lambda_rejected() {
        let mut params: alloc::vec::Vec<ParamTensor<f32>> = vec![];
        assert!(matches!(l2_penalty(&mut params, -0.1), Err(Error::Validation(_))));
    }
}
