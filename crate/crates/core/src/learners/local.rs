//! Nearest-neighbour conditional quantiles in standardised parameter space.

use serde::{Deserialize, Serialize};

use super::{check_alpha, FeatureMatrix, QuantileRegressor};
use crate::error::{Error, Result};
use crate::numeric::quantile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBinQuantile {
    alpha: f64,
    neighbors: usize,
    dim: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Standardised training points, row-major.
    points: Vec<f64>,
    values: Vec<f64>,
}

impl LocalBinQuantile {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[f64], alpha: f64, neighbors: usize) -> Result<Self> {
        if neighbors == 0 {
            return Err(Error::Argument("neighbour count must be positive".into()));
        }
        let d = x.cols();
        let n = x.rows() as f64;
        let mut center = vec![0.0; d];
        for row in x.iter_rows() {
            for j in 0..d {
                center[j] += row[j] / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x.iter_rows() {
            for j in 0..d {
                scale[j] += (row[j] - center[j]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut points = Vec::with_capacity(x.rows() * d);
        for row in x.iter_rows() {
            points.extend(row.iter().enumerate().map(|(j, v)| (v - center[j]) / scale[j]));
        }
        Ok(Self { alpha, neighbors: neighbors.min(y.len()), dim: d, center, scale, points, values: y.to_vec() })
    }

    /// Sorted target values of the `k` training points nearest `point`.
    fn neighbourhood(&self, point: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = point.iter().enumerate().map(|(j, v)| (v - self.center[j]) / self.scale[j]).collect();
        let mut dist: Vec<(f64, usize)> = self
            .points
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        let k = self.neighbors;
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dist.truncate(k);
        }
        let mut vals: Vec<f64> = dist.iter().map(|(_, i)| self.values[*i]).collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    /// Local quantile at an arbitrary level, reusing the fitted neighbourhoods.
    pub fn predict_level(&self, point: &[f64], alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        Ok(quantile_sorted(&self.neighbourhood(point), alpha))
    }

    /// Fraction of neighbours with value strictly below `value`.
    pub fn cdf(&self, point: &[f64], value: f64) -> f64 {
        let vals = self.neighbourhood(point);
        vals.partition_point(|v| *v < value) as f64 / vals.len() as f64
    }
}

impl QuantileRegressor for LocalBinQuantile {
    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn predict(&self, point: &[f64]) -> f64 {
        quantile_sorted(&self.neighbourhood(point), self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_quantile_follows_location() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..1000 {
            let t = f64::from(i % 10);
            xs.push(t);
            ys.push(t * 10.0 + f64::from(i / 10) / 100.0);
        }
        let x = FeatureMatrix::new(1, xs).unwrap();
        let m = LocalBinQuantile::fit(&x, &ys, 0.5, 100).unwrap();
        for t in [0.0, 4.0, 9.0] {
            assert!((m.predict(&[t]) - (t * 10.0 + 0.495)).abs() < 1e-9);
        }
        assert!((m.cdf(&[4.0], 40.5) - 0.5).abs() < 1e-12);
        assert!(m.predict_level(&[4.0], 0.9).unwrap() > m.predict(&[4.0]));
    }
}
