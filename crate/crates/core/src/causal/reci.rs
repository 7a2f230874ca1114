//! Regression-error direction coefficient.
//!
//! Both variables are min-max scaled to [0, 1], a least-squares polynomial
//! is fitted in each direction, and the coefficient compares the two mean
//! squared residuals:
//!
//! ```text
//! rho = (mse(x <- y) - mse(y <- x)) / (mse(x <- y) + mse(y <- x))
//! ```
//!
//! so `rho > 0` means `y` is better explained from `x` (x causes y), and
//! swapping the arguments negates `rho` exactly.

use nalgebra::{DMatrix, DVector};

use super::CausalError;

pub const DEFAULT_DEGREE: usize = 3;
pub const MIN_SAMPLES: usize = 10;

pub fn min_max_scale(v: &[f64]) -> Option<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0 && range.is_finite()) {
        return None;
    }
    Some(v.iter().map(|x| (x - lo) / range).collect())
}

/// Least-squares polynomial coefficients (constant term first) via the
/// normal equations. `None` when they are singular.
pub fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Option<Vec<f64>> {
    let n = x.len();
    let design = DMatrix::from_fn(n, degree + 1, |i, j| x[i].powi(j as i32));
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * DVector::from_column_slice(y);
    let chol = gram.cholesky()?;
    let coef = chol.solve(&rhs);
    coef.iter().all(|c| c.is_finite()).then(|| coef.iter().copied().collect())
}

pub fn eval_polynomial(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Mean squared residual of predicting `target` from `input`, falling back
/// to a straight line when the requested degree is singular.
pub fn regression_mse(input: &[f64], target: &[f64], degree: usize) -> Result<f64, CausalError> {
    let coef = fit_polynomial(input, target, degree)
        .or_else(|| if degree > 1 { fit_polynomial(input, target, 1) } else { None })
        .ok_or(CausalError::Singular)?;
    let sse: f64 = input.iter().zip(target).map(|(x, y)| (y - eval_polynomial(&coef, *x)).powi(2)).sum();
    Ok(sse / input.len() as f64)
}

pub fn reci_coefficient(x: &[f64], y: &[f64]) -> Result<f64, CausalError> {
    reci_coefficient_with_degree(x, y, DEFAULT_DEGREE)
}

pub fn reci_coefficient_with_degree(x: &[f64], y: &[f64], degree: usize) -> Result<f64, CausalError> {
    if x.len() != y.len() {
        return Err(CausalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < MIN_SAMPLES {
        return Err(CausalError::TooFewSamples(x.len()));
    }
    let xs = min_max_scale(x).ok_or(CausalError::ConstantColumn("x"))?;
    let ys = min_max_scale(y).ok_or(CausalError::ConstantColumn("y"))?;
    let mse_xy = regression_mse(&xs, &ys, degree)?;
    let mse_yx = regression_mse(&ys, &xs, degree)?;
    let total = mse_yx + mse_xy;
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(((mse_yx - mse_xy) / total).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_relation_gives_zero() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 * 0.37).collect();
        assert_eq!(reci_coefficient(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn polynomial_fit_recovers_exact_cubic() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 2.0 * v + 0.5 * v * v * v).collect();
        let c = fit_polynomial(&x, &y, 3).unwrap();
        for (got, want) in c.iter().zip([1.0, -2.0, 0.0, 0.5]) {
            assert!((got - want).abs() < 1e-8, "{c:?}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        assert!(matches!(reci_coefficient(&x, &[1.0; 12]), Err(CausalError::ConstantColumn("y"))));
        assert!(matches!(reci_coefficient(&x[..9], &x[..9]), Err(CausalError::TooFewSamples(9))));
        assert!(matches!(reci_coefficient(&x, &x[..11]), Err(CausalError::LengthMismatch(12, 11))));
    }

    #[test]
    fn falls_back_to_linear_when_cubic_is_singular() {
        // Two distinct x values: a line fits, a cubic does not.
        let x: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = (0..12).map(|i| i as f64).collect();
        assert!(fit_polynomial(&x, &y, 3).is_none());
        assert!(regression_mse(&x, &y, 3).is_ok());
    }
}
