//! Central finite-difference gradient checking.

use crate::params::Parameters;

/// Denominator floor for relative errors, so that entries whose true
/// gradient is ~0 are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Path and index of the worst element.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn empty() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: String::new(),
            checked: 0,
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol && self.max_rel_error.is_finite()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn check_one<T: Parameters + Clone>(
    value: &T,
    analytic: &T,
    eps: f64,
    label: &str,
    mut loss: impl FnMut(&T) -> f64,
) -> GradCheckReport {
    let names = value.tensor_sizes();
    let flat = value.flatten();
    let grad = analytic.flatten();
    assert_eq!(flat.len(), grad.len(), "analytic gradient layout mismatch");
    let mut probe = value.clone();
    let mut work = flat.clone();
    let mut report = GradCheckReport::empty();
    let mut tensor = 0;
    let mut tensor_start = 0;
    for i in 0..flat.len() {
        while i >= tensor_start + names[tensor].1 {
            tensor_start += names[tensor].1;
            tensor += 1;
        }
        work[i] = flat[i] + eps;
        probe.set_flat(&work);
        let plus = loss(&probe);
        work[i] = flat[i] - eps;
        probe.set_flat(&work);
        let minus = loss(&probe);
        work[i] = flat[i];
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(grad[i], numeric);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
            report.worst = format!("{label}{}[{}]", names[tensor].0, i - tensor_start);
        }
        report.checked += 1;
    }
    report
}

/// Compares analytic gradients of a scalar `loss(params, input)` against
/// central differences over every parameter and input element.
pub fn check_gradients<P, I>(
    params: &P,
    input: &I,
    grad_params: &P,
    grad_input: &I,
    eps: f64,
    loss: impl Fn(&P, &I) -> f64,
) -> GradCheckReport
where
    P: Parameters + Clone,
    I: Parameters + Clone,
{
    let mut report = check_one(params, grad_params, eps, "param:", |p| loss(p, input));
    report.merge(check_one(input, grad_input, eps, "input:", |x| loss(params, x)));
    report
}
