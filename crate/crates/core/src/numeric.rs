//! Small numerical helpers shared across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use libm::{erf, erfc};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `ln(Φ(u) − Φ(l))` for `l < u`, evaluated through the tail that keeps
/// precision.
pub fn ln_norm_interval(l: f64, u: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    let diff = if l > 0.0 {
        0.5 * (erfc(l / s) - erfc(u / s))
    } else if u < 0.0 {
        0.5 * (erfc(-u / s) - erfc(-l / s))
    } else {
        0.5 * (erf(u / s) - erf(l / s))
    };
    diff.max(f64::MIN_POSITIVE).ln()
}

/// Upper-tail chi-square quantile: the value `c` with `P(χ²_dof > c) = alpha`.
pub fn chi2_upper_quantile(alpha: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("dof >= 1")
        .inverse_cdf(1.0 - alpha)
}

pub fn chi2_cdf(x: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).expect("dof >= 1").cdf(x)
}

/// Linear-interpolation empirical quantile (type 7). `sorted` must be
/// ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

/// Standard error of the empirical `q`-quantile from the spread of the
/// order statistics at ranks `nq ± √(nq(1−q))` (one binomial standard
/// deviation on either side).
pub fn quantile_se(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let spread = (n * q * (1.0 - q)).sqrt();
    let lo = quantile_sorted(&v, ((n * q - spread) / n).max(0.0));
    let hi = quantile_sorted(&v, ((n * q + spread) / n).min(1.0));
    (hi - lo) / 2.0
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    if values.len() < 2 {
        return (m, f64::NAN);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// One-sample Kolmogorov–Smirnov test. Returns `(D, p-value)` using the
/// asymptotic Kolmogorov distribution with the Stephens small-sample
/// correction.
pub fn ks_test(values: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_sf(lambda))
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square goodness-of-fit p-value for observed bin counts versus
/// expected counts.
pub fn chi2_gof_pvalue(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let dof = observed.len().saturating_sub(1).max(1);
    1.0 - chi2_cdf(stat, dof)
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let (xm, xl) = (0.5 * (b + a), 0.5 * (b - a));
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = xm - xl * z;
        nodes[n - 1 - i] = xm + xl * z;
        weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_se_matches_asymptotic_formula() {
        // Exp(1) at q = 0.1: sqrt(q(1-q)/n) / f(F^{-1}(q)) with f = 1 - q.
        let n = 20_000;
        let v: Vec<f64> = (0..n).map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln()).collect();
        let exact = (0.1f64 * 0.9 / n as f64).sqrt() / 0.9;
        assert!((quantile_se(&v, 0.1) - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8, -1.0, 3.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(5)).sum();
        // ∫_{-1}^{3} x^5 dx = (729 - 1)/6
        assert!((integral - 728.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn interval_probability_tails() {
        let p = ln_norm_interval(-1.0, 1.0).exp();
        assert!((p - 0.682_689_492_137_086).abs() < 1e-12);
        // deep upper tail stays finite
        assert!(ln_norm_interval(30.0, 31.0).is_finite());
        assert!(ln_norm_interval(-31.0, -30.0).is_finite());
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[5.0], 0.1), 5.0);
    }

    #[test]
    fn ks_detects_shift() {
        let u: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        assert!(ks_test(&u, |x| x).1 > 0.99);
        let shifted: Vec<f64> = u.iter().map(|x| x * 0.8).collect();
        assert!(ks_test(&shifted, |x| x.clamp(0.0, 1.0)).1 < 1e-6);
    }

    #[test]
    fn softplus_matches_naive() {
        for z in [-30.0, -1.0, 0.0, 2.0, 40.0] {
            let naive = (1.0f64 + f64::exp(z)).ln();
            assert!((softplus(z) - naive).abs() < 1e-12 * naive.max(1.0));
        }
    }
}
