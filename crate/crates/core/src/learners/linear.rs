//! L2-regularized logistic regression and linear SVM.
//!
//! Parameters are a weight vector plus an unpenalized bias. Both objectives
//! are averaged over rows:
//!
//! * logistic: `mean(softplus(z) - y z) + l2/2 |w|^2`, `y ∈ {0, 1}`
//! * hinge:    `mean(max(0, 1 - s z)) + l2/2 |w|^2`, `s ∈ {-1, +1}`
//!
//! where `z = w·x + b`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        LinearModel { weights: Array1::zeros(d), bias: 0.0 }
    }

    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        self.weights.dot(&x) + self.bias
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<bool> {
        x.rows().into_iter().map(|r| self.decision(r) > 0.0).collect()
    }

    /// Flattened `[w..., b]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.weights.to_vec();
        v.push(self.bias);
        v
    }

    pub fn from_slice(p: &[f64]) -> Self {
        let (w, b) = p.split_at(p.len() - 1);
        LinearModel { weights: Array1::from(w.to_vec()), bias: b[0] }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic objective and its gradient as `[dw..., db]`.
pub fn logistic_loss_grad(m: &LinearModel, x: &Array2<f64>, y: &[bool], l2: f64) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let d = x.ncols();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &label) in x.rows().into_iter().zip(y) {
        let z = m.decision(row);
        let t = if label { 1.0 } else { 0.0 };
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, v) in grad.iter_mut().zip(row.iter()) {
            *g += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * l2 * m.weights.dot(&m.weights);
    for (g, w) in grad.iter_mut().zip(m.weights.iter()) {
        *g += l2 * w;
    }
    (loss, grad)
}

/// Hinge objective and a subgradient as `[dw..., db]`. Rows with margin
/// `s z >= 1` contribute nothing to the gradient.
pub fn hinge_loss_grad(m: &LinearModel, x: &Array2<f64>, y: &[bool], l2: f64) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let d = x.ncols();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &label) in x.rows().into_iter().zip(y) {
        let s = if label { 1.0 } else { -1.0 };
        let margin = s * m.decision(row);
        if margin < 1.0 {
            loss += 1.0 - margin;
            for (g, v) in grad.iter_mut().zip(row.iter()) {
                *g -= s * v;
            }
            grad[d] -= s;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * l2 * m.weights.dot(&m.weights);
    for (g, w) in grad.iter_mut().zip(m.weights.iter()) {
        *g += l2 * w;
    }
    (loss, grad)
}

#[derive(Clone, Debug)]
pub struct LogRegParams {
    pub l2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { l2: 1e-3, max_iter: 10_000, grad_tol: 1e-6 }
    }
}

/// Full-batch gradient descent with Armijo backtracking.
pub fn fit_logistic(x: &Array2<f64>, y: &[bool], p: &LogRegParams) -> LinearModel {
    let mut model = LinearModel::zeros(x.ncols());
    let mut step = 1.0;
    for _ in 0..p.max_iter {
        let (loss, grad) = logistic_loss_grad(&model, x, y, p.l2);
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.sqrt() <= p.grad_tol {
            break;
        }
        let params = model.to_vec();
        loop {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let candidate = LinearModel::from_slice(&trial);
            let (trial_loss, _) = logistic_loss_grad(&candidate, x, y, p.l2);
            if trial_loss <= loss - 0.5 * step * gnorm2 || step < 1e-12 {
                model = candidate;
                break;
            }
            step *= 0.5;
        }
        step = (step * 2.0).min(64.0);
    }
    model
}

#[derive(Clone, Debug)]
pub struct SvmParams {
    pub l2: f64,
    pub epochs: usize,
    /// Step size in epoch `e` is `eta0 / (1 + e)`.
    pub eta0: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { l2: 1e-3, epochs: 50, eta0: 0.1 }
    }
}

/// Per-row hinge SGD over shuffled epochs.
pub fn fit_svm<R: Rng>(x: &Array2<f64>, y: &[bool], p: &SvmParams, rng: &mut R) -> LinearModel {
    let mut model = LinearModel::zeros(x.ncols());
    let mut order: Vec<usize> = (0..y.len()).collect();
    for epoch in 0..p.epochs {
        let eta = p.eta0 / (1.0 + epoch as f64);
        order.shuffle(rng);
        for &i in &order {
            let row = x.row(i);
            let s = if y[i] { 1.0 } else { -1.0 };
            let margin = s * model.decision(row);
            model.weights *= 1.0 - eta * p.l2;
            if margin < 1.0 {
                model.weights.scaled_add(eta * s, &row);
                model.bias += eta * s;
            }
        }
    }
    model
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_gradient_at_zero_has_closed_form() {
        let x = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 0.0, 1.0, 2.0, -1.0, -1.0, 3.0]).unwrap();
        let y = [true, false, true, true];
        let (loss, g) = logistic_loss_grad(&LinearModel::zeros(2), &x, &y, 0.1);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        let ybar = 0.75;
        assert!((g[2] - (0.5 - ybar)).abs() < 1e-15);
        for j in 0..2 {
            let expect: f64 = (0..4).map(|i| (0.5 - if y[i] { 1.0 } else { 0.0 }) * x[[i, j]]).sum::<f64>() / 4.0;
            assert!((g[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn hinge_rows_beyond_margin_contribute_zero() {
        let x = Array2::from_shape_vec((2, 1), vec![2.0, -3.0]).unwrap();
        let m = LinearModel { weights: Array1::from(vec![1.0]), bias: 0.0 };
        let (loss, g) = hinge_loss_grad(&m, &x, &[true, false], 0.0);
        assert_eq!(loss, 0.0);
        assert_eq!(g, [0.0, 0.0]);
        let (_, g) = hinge_loss_grad(&m, &x, &[true, false], 0.5);
        assert_eq!(g, [0.5, 0.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }
}
