//! Central finite-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::{domain, RngStream};
use crate::tensor::ParamTensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Tensors with at most this many entries are checked exhaustively.
    pub exhaustive_limit: usize,
    /// Coordinates sampled from each larger tensor.
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            exhaustive_limit: 300,
            samples_per_tensor: 48,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a kink and were replaced or
    /// dropped.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    /// The parameter holding the largest error.
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.per_param
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub loss: f64,
    /// Identifies the linear piece of a piecewise-smooth objective, e.g. a
    /// digest of ReLU signs and pooling winners. Smooth objectives return 0.
    pub pattern: u64,
}

impl From<f64> for Probe {
    fn from(loss: f64) -> Self {
        Probe { loss, pattern: 0 }
    }
}

/// `|a - n| / max(1, |a|, |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares analytic gradients against central differences.
///
/// `objective(params, with_grad)` evaluates the loss; when `with_grad` is
/// true it must also overwrite `grad` of every parameter with the analytic
/// gradient. It is called once with gradients and twice per checked
/// coordinate without.
///
/// A coordinate whose `+eps` or `-eps` probe lands on a different pattern
/// than the unperturbed point straddles a kink, where central differences
/// are meaningless. Such coordinates are skipped; sampled tensors draw a
/// replacement.
pub fn gradient_check<F, P>(
    params: &mut [ParamTensor<f64>],
    mut objective: F,
    options: GradCheckOptions,
) -> GradCheckReport
where
    F: FnMut(&mut [ParamTensor<f64>], bool) -> P,
    P: Into<Probe>,
{
    let base = objective(params, true).into();
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.data().to_vec()).collect();
    let mut rng = RngStream::new(options.seed, domain::GRADCHECK);
    let eps = options.epsilon;

    let mut report = GradCheckReport::default();
    for t in 0..params.len() {
        let len = params[t].value.len();
        let exhaustive = len <= options.exhaustive_limit;
        let target = if exhaustive { len } else { options.samples_per_tensor.min(len) };
        let mut check = ParamCheck {
            name: params[t].name.clone(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        let mut next = 0;
        let budget = 8 * target.max(1);
        while check.checked < target && check.checked + check.skipped < budget {
            let i = if exhaustive {
                if next == len {
                    break;
                }
                next += 1;
                next - 1
            } else {
                rng.below(len)
            };
            let orig = params[t].value.data()[i];
            params[t].value.data_mut()[i] = orig + eps;
            let plus = objective(params, false).into();
            params[t].value.data_mut()[i] = orig - eps;
            let minus = objective(params, false).into();
            params[t].value.data_mut()[i] = orig;
            if plus.pattern != base.pattern || minus.pattern != base.pattern {
                check.skipped += 1;
                continue;
            }
            check.checked += 1;
            let numeric = (plus.loss - minus.loss) / (2.0 * eps);
            let a = analytic[t][i];
            let err = relative_error(a, numeric);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        report.per_param.push(check);
    }
    // leave the analytic gradients in place for the caller
    for (p, g) in params.iter_mut().zip(analytic) {
        p.grad.data_mut().copy_from_slice(&g);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{dense_backward, dense_forward};
    use crate::tensor::{ParamRole, Tensor};
    use alloc::vec;

    fn linear_setup() -> (Vec<ParamTensor<f64>>, Tensor<f64>, Tensor<f64>) {
        let w = Tensor::from_fn(&[4, 3], |i| libm::sin(i as f64));
        let b = Tensor::from_fn(&[3], |i| i as f64 * 0.1);
        let x = Tensor::from_fn(&[2, 4], |i| libm::cos(i as f64 * 0.7));
        let c = Tensor::from_fn(&[2, 3], |i| 1.0 + i as f64);
        (
            vec![
                ParamTensor::new("w", ParamRole::Weight, w),
                ParamTensor::new("b", ParamRole::Bias, b),
            ],
            x,
            c,
        )
    }

    /// loss = sum(c * (x w + b)), linear in the parameters.
    fn linear_objective<'a>(x: &'a Tensor<f64>, c: &'a Tensor<f64>, flip: bool) -> impl FnMut(&mut [ParamTensor<f64>], bool) -> f64 + 'a {
        move |params, _| {
            let y = dense_forward(x, &params[0].value, &params[1].value).unwrap();
            let loss: f64 = y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
            let g = dense_backward(c, x, &params[0].value).unwrap();
            params[0].grad = g.weights;
            params[1].grad = g.bias;
            if flip {
                params[1].grad = params[1].grad.map(|v| -v);
            }
            loss
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let (mut params, x, c) = linear_setup();
        let report = gradient_check(&mut params, linear_objective(&x, &c, false), GradCheckOptions::default());
        assert!(report.max_rel_error() < 1e-8, "{report:?}");
        assert_eq!(report.per_param[0].checked, 12);
    }

    #[test]
    fn sign_flip_is_detected() {
        let (mut params, x, c) = linear_setup();
        let report = gradient_check(&mut params, linear_objective(&x, &c, true), GradCheckOptions::default());
        assert!(report.max_rel_error() > 1e-2);
        assert_eq!(report.worst().unwrap().name, "b");
    }

    #[test]
    fn kink_crossings_are_skipped() {
        // relu(w) at w = 0.5e-5 straddles the kink for eps = 1e-5
        let mut params = vec![ParamTensor::new("w", ParamRole::Weight, Tensor::from_vec(vec![0.5e-5, 2.0]))];
        let report = gradient_check(
            &mut params,
            |p, _| {
                let v = p[0].value.data().to_vec();
                p[0].grad = Tensor::from_vec(v.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect());
                Probe {
                    loss: v.iter().map(|&x| x.max(0.0)).sum(),
                    pattern: v.iter().fold(0, |acc, &x| acc * 2 + (x > 0.0) as u64),
                }
            },
            GradCheckOptions::default(),
        );
        assert_eq!(report.per_param[0].checked, 1);
        assert_eq!(report.per_param[0].skipped, 1);
        assert!(report.max_rel_error() < 1e-9);
    }

    #[test]
    fn relative_error_floor_is_one() {
        assert_eq!(relative_error(1e-3, 0.0), 1e-3);
        assert_eq!(relative_error(10.0, 5.0), 0.5);
    }
}
