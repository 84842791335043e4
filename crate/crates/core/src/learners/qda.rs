//! Quadratic discriminant analysis: one Gaussian per class.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Classifier, FeatureMatrix, QuadraticLogit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qda {
    logit: QuadraticLogit,
}

struct ClassFit {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_det: f64,
}

fn class_fit(x: &FeatureMatrix, y: &[bool], class: bool, reg: f64) -> Result<ClassFit> {
    let p = x.cols();
    let rows: Vec<&[f64]> = x.iter_rows().zip(y).filter(|(_, c)| **c == class).map(|(r, _)| r).collect();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(p);
    for r in &rows {
        for j in 0..p {
            mean[j] += r[j] / n;
        }
    }
    let mut cov = DMatrix::zeros(p, p);
    for r in &rows {
        let d = DVector::from_iterator(p, r.iter().zip(mean.iter()).map(|(a, m)| a - m));
        cov += &d * d.transpose();
    }
    cov /= (n - 1.0).max(1.0);
    let scale = (cov.trace() / p as f64).max(1e-12);
    let mut eps = reg.max(0.0) * scale;
    for _ in 0..12 {
        let mut c = cov.clone();
        for k in 0..p {
            c[(k, k)] += eps;
        }
        if let Some(ch) = c.cholesky() {
            let log_det = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            return Ok(ClassFit { mean, precision: ch.inverse(), log_det });
        }
        eps = if eps == 0.0 { 1e-10 * scale } else { eps * 10.0 };
    }
    Err(Error::Fit("class covariance is singular".into()))
}

impl Qda {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[bool], regularization: f64) -> Result<Self> {
        let pos = y.iter().filter(|v| **v).count() as f64;
        let neg = y.len() as f64 - pos;
        let c1 = class_fit(x, y, true, regularization)?;
        let c0 = class_fit(x, y, false, regularization)?;
        let p = x.cols();
        let a = (&c1.precision - &c0.precision) * -0.5;
        let b = &c1.precision * &c1.mean - &c0.precision * &c0.mean;
        let q1 = c1.mean.dot(&(&c1.precision * &c1.mean));
        let q0 = c0.mean.dot(&(&c0.precision * &c0.mean));
        let c = -0.5 * (q1 - q0) - 0.5 * (c1.log_det - c0.log_det) + (pos / neg).ln();
        let mut a_flat = Vec::with_capacity(p * p);
        for i in 0..p {
            for j in 0..p {
                a_flat.push(0.5 * (a[(i, j)] + a[(j, i)]));
            }
        }
        if a_flat.iter().chain(b.iter()).any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::Numeric("non-finite discriminant".into()));
        }
        Ok(Self { logit: QuadraticLogit { dim: p, a: a_flat, b: b.iter().copied().collect(), c } })
    }

    pub fn quadratic(&self) -> &QuadraticLogit {
        &self.logit
    }
}

impl Classifier for Qda {
    fn logit(&self, features: &[f64]) -> f64 {
        self.logit.eval(features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::norm_logpdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn matches_true_gaussian_log_ratio() {
        // Class 1 ~ N(1, 1), class 0 ~ N(0, 4), equal sizes.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 40000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let pos = i % 2 == 0;
            xs.push(if pos { 1.0 + e } else { 2.0 * e });
            ys.push(pos);
        }
        let x = FeatureMatrix::new(1, xs).unwrap();
        let m = Qda::fit(&x, &ys, 1e-9).unwrap();
        for v in [-1.0, 0.0, 0.5, 2.0] {
            let truth = norm_logpdf(v - 1.0) - (norm_logpdf(v / 2.0) - 2f64.ln());
            assert!((m.logit(&[v]) - truth).abs() < 0.08, "v={v}: {} vs {truth}", m.logit(&[v]));
        }
    }

    #[test]
    fn quadratic_form_is_symmetric() {
        let x = FeatureMatrix::new(2, vec![0.0, 1.0, 1.0, 0.5, 2.0, 2.5, 0.3, 0.1, 1.5, 1.0, 3.0, 0.0]).unwrap();
        let y = [true, false, true, false, true, false];
        let m = Qda::fit(&x, &y, 1e-3).unwrap();
        let q = m.quadratic();
        assert!((q.a[1] - q.a[2]).abs() < 1e-12);
    }
}
