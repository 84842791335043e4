//! Penalised logistic regression on basis expansions, fitted by damped
//! Newton iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::{Basis, Expansion};
use super::{Classifier, FeatureMatrix, MeanRegressor};
use crate::error::{Error, Result};
use crate::numeric::{sigmoid, softplus};

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-9;

struct NewtonFit {
    beta: DVector<f64>,
    /// Inverse penalised Hessian at the optimum.
    covariance: DMatrix<f64>,
}

fn design(exp: &Expansion, x: &FeatureMatrix) -> DMatrix<f64> {
    let p = exp.len();
    let mut m = DMatrix::zeros(x.rows(), p);
    let mut buf = Vec::with_capacity(p);
    for (i, row) in x.iter_rows().enumerate() {
        exp.expand(row, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

fn penalised_nll(xm: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = xm * beta;
    let nll: f64 = eta.iter().zip(y).map(|(e, t)| softplus(*e) - t * e).sum();
    let pen: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    nll + 0.5 * ridge * pen
}

fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut jitter = 0.0;
    let scale = h.diagonal().amax().max(1e-12);
    for _ in 0..8 {
        let mut hj = h.clone();
        for k in 0..hj.nrows() {
            hj[(k, k)] += jitter;
        }
        if let Some(ch) = hj.cholesky() {
            return Some((ch.solve(g), ch.inverse()));
        }
        jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 100.0 };
    }
    None
}

/// Targets may be fractional; the loss is the Bernoulli deviance.
fn newton(xm: &DMatrix<f64>, y: &[f64], ridge: f64) -> Result<NewtonFit> {
    let (n, p) = xm.shape();
    let ybar = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let mut beta = DVector::zeros(p);
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut penalty = DMatrix::identity(p, p) * ridge;
    penalty[(0, 0)] = 0.0;
    let mut obj = penalised_nll(xm, y, &beta, ridge);
    let mut hess = DMatrix::zeros(p, p);
    for _ in 0..MAX_ITER {
        let eta = xm * &beta;
        let mu: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let resid = DVector::from_iterator(n, mu.iter().zip(y).map(|(m, t)| t - m));
        let mut grad = xm.tr_mul(&resid);
        grad -= &penalty * &beta;
        let w = DVector::from_iterator(n, mu.iter().map(|m| (m * (1.0 - m)).max(1e-12)));
        let mut xw = xm.clone();
        for mut col in xw.column_iter_mut() {
            col.component_mul_assign(&w);
        }
        hess = xm.tr_mul(&xw) + &penalty;
        let (step, _) = solve_spd(&hess, &grad).ok_or_else(|| Error::Fit("singular logistic Hessian".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let cand_obj = penalised_nll(xm, y, &cand, ridge);
            if cand_obj.is_finite() && cand_obj <= obj + 1e-12 * obj.abs() {
                beta = cand;
                let improvement = obj - cand_obj;
                obj = cand_obj;
                accepted = true;
                if improvement.abs() <= TOL * (1.0 + obj.abs()) || (step.amax() * t) < TOL {
                    let cov = solve_spd(&hess, &DVector::zeros(p)).map(|(_, c)| c);
                    return finish(beta, cov);
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let cov = solve_spd(&hess, &DVector::zeros(p)).map(|(_, c)| c);
    finish(beta, cov)
}

fn finish(beta: DVector<f64>, cov: Option<DMatrix<f64>>) -> Result<NewtonFit> {
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numeric("logistic fit diverged".into()));
    }
    let covariance = cov.ok_or_else(|| Error::Fit("singular logistic Hessian".into()))?;
    Ok(NewtonFit { beta, covariance })
}

/// Logistic classifier with polynomial features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    expansion: Expansion,
    coef: Vec<f64>,
}

impl LogisticRegression {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[bool], degree: usize, ridge: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Argument("logistic degree must be at least 1".into()));
        }
        let expansion = Expansion::fit(&Basis::Polynomial { degree }, x);
        let xm = design(&expansion, x);
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
        let fit = newton(&xm, &yf, ridge.max(0.0))?;
        Ok(Self { expansion, coef: fit.beta.iter().copied().collect() })
    }
}

impl Classifier for LogisticRegression {
    fn logit(&self, features: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.coef.len());
        self.expansion.expand(features, &mut buf);
        buf.iter().zip(&self.coef).map(|(a, b)| a * b).sum()
    }
}

/// Logistic-link mean regression with delta-method uncertainty bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticMeanRegressor {
    expansion: Expansion,
    coef: Vec<f64>,
    /// Row-major covariance of `coef`; empty for a degenerate fit.
    covariance: Vec<f64>,
    /// Set when all targets were identical.
    constant: Option<f64>,
}

impl LogisticMeanRegressor {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[f64], basis: &Basis, ridge: f64) -> Result<Self> {
        let expansion = Expansion::fit(basis, x);
        if y.iter().all(|v| *v == y[0]) {
            return Ok(Self { expansion, coef: Vec::new(), covariance: Vec::new(), constant: Some(y[0]) });
        }
        let xm = design(&expansion, x);
        let fit = newton(&xm, y, ridge.max(0.0))?;
        Ok(Self {
            expansion,
            coef: fit.beta.iter().copied().collect(),
            covariance: fit.covariance.transpose().iter().copied().collect(),
            constant: None,
        })
    }

    fn linear(&self, point: &[f64]) -> (f64, f64) {
        let p = self.coef.len();
        let mut buf = Vec::with_capacity(p);
        self.expansion.expand(point, &mut buf);
        let eta: f64 = buf.iter().zip(&self.coef).map(|(a, b)| a * b).sum();
        let mut var = 0.0;
        for i in 0..p {
            let row = &self.covariance[i * p..(i + 1) * p];
            var += buf[i] * row.iter().zip(&buf).map(|(c, v)| c * v).sum::<f64>();
        }
        (eta, var.max(0.0).sqrt())
    }

    /// Standard error of the fitted linear predictor.
    pub fn linear_se(&self, point: &[f64]) -> f64 {
        if self.constant.is_some() {
            0.0
        } else {
            self.linear(point).1
        }
    }
}

impl MeanRegressor for LogisticMeanRegressor {
    fn predict(&self, point: &[f64]) -> f64 {
        match self.constant {
            Some(c) => c,
            None => sigmoid(self.linear(point).0),
        }
    }

    fn band(&self, point: &[f64], k: f64) -> Option<(f64, f64)> {
        Some(match self.constant {
            Some(c) => (c, c),
            None => {
                let (eta, se) = self.linear(point);
                (sigmoid(eta - k * se), sigmoid(eta + k * se))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_linear_logit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20000;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<bool> = xs.iter().map(|v| rng.random::<f64>() < sigmoid(0.5 + 1.5 * v)).collect();
        let x = FeatureMatrix::new(1, xs).unwrap();
        let m = LogisticRegression::fit(&x, &y, 1, 0.0).unwrap();
        for v in [-1.0, 0.0, 1.5] {
            assert!((m.logit(&[v]) - (0.5 + 1.5 * v)).abs() < 0.1, "v={v}");
        }
    }

    #[test]
    fn degenerate_targets_collapse_band() {
        let x = FeatureMatrix::new(1, (0..60).map(f64::from).collect()).unwrap();
        let m = LogisticMeanRegressor::fit(&x, &[1.0; 60], &Basis::default(), 1e-4).unwrap();
        assert_eq!(m.predict(&[3.0]), 1.0);
        assert_eq!(m.band(&[3.0], 2.0), Some((1.0, 1.0)));
    }

    #[test]
    fn band_contains_estimate_and_shrinks_with_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let width = |n: usize, rng: &mut ChaCha8Rng| {
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let y: Vec<f64> = xs.iter().map(|v| f64::from(u8::from(rng.random::<f64>() < 0.2 + 0.6 * v))).collect();
            let x = FeatureMatrix::new(1, xs).unwrap();
            let m = LogisticMeanRegressor::fit(&x, &y, &Basis::Spline { knots: 3 }, 1e-4).unwrap();
            let (lo, hi) = m.band(&[0.5], 2.0).unwrap();
            let mid = m.predict(&[0.5]);
            assert!(lo <= mid && mid <= hi);
            assert!((mid - 0.5).abs() < 0.1);
            hi - lo
        };
        let small = width(500, &mut rng);
        let large = width(8000, &mut rng);
        assert!(large < small);
    }

    #[test]
    fn fractional_targets_are_supported() {
        let xs: Vec<f64> = (0..100).map(|i| f64::from(i) / 100.0).collect();
        let y: Vec<f64> = xs.iter().map(|v| 0.25 + 0.5 * v).collect();
        let x = FeatureMatrix::new(1, xs).unwrap();
        let m = LogisticMeanRegressor::fit(&x, &y, &Basis::Polynomial { degree: 3 }, 0.0).unwrap();
        assert!((m.predict(&[0.5]) - 0.5).abs() < 0.01);
    }
}
