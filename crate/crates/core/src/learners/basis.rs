//! Feature expansions for the generalised linear learners.

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Basis {
    /// All monomials of total degree `<= degree` in standardised inputs.
    Polynomial { degree: usize },
    /// Additive cubic B-splines with `knots` equally spaced interior knots
    /// per input.
    Spline { knots: usize },
}

impl Default for Basis {
    fn default() -> Self {
        Basis::Spline { knots: 6 }
    }
}

/// A basis fitted to the input ranges of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Expansion {
    basis: Basis,
    center: Vec<f64>,
    scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Exponent tuples for the polynomial basis.
    #[serde(default)]
    monomials: Vec<Vec<u8>>,
}

impl Expansion {
    pub(crate) fn fit(basis: &Basis, x: &FeatureMatrix) -> Self {
        let d = x.cols();
        let n = x.rows() as f64;
        let mut center = vec![0.0; d];
        let mut scale = vec![0.0; d];
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for row in x.iter_rows() {
            for j in 0..d {
                center[j] += row[j] / n;
                lower[j] = lower[j].min(row[j]);
                upper[j] = upper[j].max(row[j]);
            }
        }
        for row in x.iter_rows() {
            for j in 0..d {
                scale[j] += (row[j] - center[j]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let monomials = match basis {
            Basis::Polynomial { degree } => monomials(d, *degree),
            Basis::Spline { .. } => Vec::new(),
        };
        Self { basis: basis.clone(), center, scale, lower, upper, monomials }
    }

    pub(crate) fn len(&self) -> usize {
        match self.basis {
            Basis::Polynomial { .. } => self.monomials.len(),
            Basis::Spline { knots } => 1 + self.center.len() * (knots + 3),
        }
    }

    /// Writes the expanded row, intercept first.
    pub(crate) fn expand(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self.basis {
            Basis::Polynomial { .. } => {
                let z: Vec<f64> = x.iter().enumerate().map(|(j, v)| (v - self.center[j]) / self.scale[j]).collect();
                for m in &self.monomials {
                    out.push(m.iter().zip(&z).map(|(e, v)| v.powi(i32::from(*e))).product());
                }
            }
            Basis::Spline { knots } => {
                out.push(1.0);
                let mut vals = vec![0.0; knots + 4];
                for (j, v) in x.iter().enumerate() {
                    let (lo, hi) = (self.lower[j], self.upper[j]);
                    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
                    cubic_bspline(t, knots, &mut vals);
                    out.extend_from_slice(&vals[1..]);
                }
            }
        }
    }
}

/// Exponent tuples over `d` variables with total degree `<= degree`,
/// constant term first.
fn monomials(d: usize, degree: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; d]];
    let mut frontier = vec![vec![0u8; d]];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &frontier {
            let last = m.iter().rposition(|e| *e > 0).unwrap_or(0);
            for j in last..d {
                let mut e = m.clone();
                e[j] += 1;
                next.push(e);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Values of the `knots + 4` clamped cubic B-splines on [0,1] at `t`.
fn cubic_bspline(t: f64, knots: usize, out: &mut [f64]) {
    const ORDER: usize = 4;
    let n_basis = knots + ORDER;
    let mut kv = Vec::with_capacity(n_basis + ORDER);
    kv.extend(std::iter::repeat_n(0.0, ORDER));
    kv.extend((1..=knots).map(|k| k as f64 / (knots + 1) as f64));
    kv.extend(std::iter::repeat_n(1.0, ORDER));
    // Degree-zero indicators; the right end is assigned to the last span.
    let mut b = vec![0.0; kv.len() - 1];
    let span = if t >= 1.0 {
        n_basis - 1
    } else {
        (ORDER - 1..n_basis).find(|&i| t >= kv[i] && t < kv[i + 1]).unwrap_or(n_basis - 1)
    };
    b[span] = 1.0;
    for k in 1..ORDER {
        for i in 0..kv.len() - 1 - k {
            let left = if kv[i + k] > kv[i] { (t - kv[i]) / (kv[i + k] - kv[i]) * b[i] } else { 0.0 };
            let right = if kv[i + k + 1] > kv[i + 1] {
                (kv[i + k + 1] - t) / (kv[i + k + 1] - kv[i + 1]) * b[i + 1]
            } else {
                0.0
            };
            b[i] = left + right;
        }
    }
    out.copy_from_slice(&b[..n_basis]);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monomial_count_matches_binomial() {
        // C(d + k, k) monomials of degree <= k in d variables.
        assert_eq!(monomials(1, 3).len(), 4);
        assert_eq!(monomials(2, 2).len(), 6);
        assert_eq!(monomials(3, 2).len(), 10);
        assert_eq!(monomials(4, 3).len(), 35);
    }

    proptest! {
        #[test]
        fn bsplines_partition_unity(t in 0.0f64..=1.0, knots in 0usize..10) {
            let mut v = vec![0.0; knots + 4];
            cubic_bspline(t, knots, &mut v);
            prop_assert!(v.iter().all(|b| *b >= -1e-12));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn spline_expansion_length() {
        let x = FeatureMatrix::new(2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let e = Expansion::fit(&Basis::Spline { knots: 5 }, &x);
        let mut out = Vec::new();
        e.expand(&[1.0, 2.0], &mut out);
        assert_eq!(out.len(), e.len());
        assert_eq!(out.len(), 1 + 2 * 8);
    }
}
