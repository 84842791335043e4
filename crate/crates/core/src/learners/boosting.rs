//! Gradient-boosted trees: pinball loss for quantiles, squared loss for
//! means and Newton-step logistic loss for classification.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{BinnedMatrix, Tree, TreeParams};
use super::{Classifier, FeatureMatrix, MeanRegressor, QuantileRegressor};
use crate::error::{Error, Result};
use crate::numeric::quantile;
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub max_depth: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { max_depth: 3, rounds: 300, learning_rate: 0.1, subsample: 1.0, min_samples_leaf: 20, max_bins: 255 }
    }
}

impl BoostParams {
    fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.rounds == 0 {
            return Err(Error::Argument("boosting needs positive depth and rounds".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Argument(format!("learning rate {} outside (0,1]", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Argument(format!("subsample {} outside (0,1]", self.subsample)));
        }
        Ok(())
    }

    fn tree(&self) -> TreeParams {
        TreeParams { max_depth: self.max_depth, min_samples_leaf: self.min_samples_leaf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Ensemble {
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl Ensemble {
    fn raw(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Per-round row sample, all rows when `subsample == 1`.
fn round_rows(n: usize, frac: f64, rng: &mut impl Rng) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..n).collect();
    if frac >= 1.0 {
        return rows;
    }
    let k = ((n as f64 * frac).round() as usize).clamp(1, n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        rows.swap(i, j);
    }
    rows.truncate(k);
    rows.sort_unstable();
    rows
}

/// Shared boosting loop. `grad_hess` fills the negative gradient and
/// hessian at the current raw scores; `leaf` maps leaf rows to a step.
fn boost(
    x: &FeatureMatrix,
    init: f64,
    params: &BoostParams,
    seed: SeedStream,
    mut grad_hess: impl FnMut(&[f64], &mut [f64], &mut [f64]),
    mut leaf: impl FnMut(&[usize], &[f64]) -> f64,
) -> Ensemble {
    let n = x.rows();
    let binned = BinnedMatrix::new(x, params.max_bins);
    let mut raw = vec![init; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut rng = seed.rng();
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        grad_hess(&raw, &mut grad, &mut hess);
        let rows = round_rows(n, params.subsample, &mut rng);
        let raw_snapshot = &raw;
        let (tree, _) = Tree::grow(&binned, &grad, &hess, rows, params.tree(), &mut |r| leaf(r, raw_snapshot));
        for (i, r) in raw.iter_mut().enumerate() {
            *r += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ensemble { init, learning_rate: params.learning_rate, trees }
}

/// Conditional quantile via boosting on the pinball loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedQuantile {
    alpha: f64,
    model: Ensemble,
}

impl BoostedQuantile {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[f64], alpha: f64, params: &BoostParams, seed: SeedStream) -> Result<Self> {
        params.validate()?;
        let init = quantile(y, alpha);
        let mut resid = Vec::new();
        let model = boost(
            x,
            init,
            params,
            seed,
            |raw, g, h| {
                for i in 0..raw.len() {
                    g[i] = if y[i] < raw[i] { alpha - 1.0 } else { alpha };
                    h[i] = 1.0;
                }
            },
            |rows, raw| {
                resid.clear();
                resid.extend(rows.iter().map(|&i| y[i] - raw[i]));
                quantile(&resid, alpha)
            },
        );
        Ok(Self { alpha, model })
    }
}

impl QuantileRegressor for BoostedQuantile {
    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn predict(&self, point: &[f64]) -> f64 {
        self.model.raw(point)
    }
}

/// Conditional mean via boosting on squared loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedRegressor {
    clip_unit: bool,
    model: Ensemble,
}

impl BoostedRegressor {
    pub(crate) fn fit(
        x: &FeatureMatrix,
        y: &[f64],
        params: &BoostParams,
        clip_unit: bool,
        seed: SeedStream,
    ) -> Result<Self> {
        params.validate()?;
        let init = y.iter().sum::<f64>() / y.len() as f64;
        let model = boost(
            x,
            init,
            params,
            seed,
            |raw, g, h| {
                for i in 0..raw.len() {
                    g[i] = y[i] - raw[i];
                    h[i] = 1.0;
                }
            },
            |rows, raw| rows.iter().map(|&i| y[i] - raw[i]).sum::<f64>() / rows.len() as f64,
        );
        Ok(Self { clip_unit, model })
    }
}

impl MeanRegressor for BoostedRegressor {
    fn predict(&self, point: &[f64]) -> f64 {
        let v = self.model.raw(point);
        if self.clip_unit {
            v.clamp(0.0, 1.0)
        } else {
            v
        }
    }
}

const MAX_NEWTON_STEP: f64 = 8.0;

/// Binary classifier via Newton-boosted logistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedClassifier {
    model: Ensemble,
}

impl BoostedClassifier {
    pub(crate) fn fit(x: &FeatureMatrix, y: &[bool], params: &BoostParams, seed: SeedStream) -> Result<Self> {
        params.validate()?;
        let pos = y.iter().filter(|v| **v).count() as f64;
        let init = (pos / (y.len() as f64 - pos)).ln();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
        let model = boost(
            x,
            init,
            params,
            seed,
            |raw, g, h| {
                for i in 0..raw.len() {
                    let p = crate::numeric::sigmoid(raw[i]);
                    g[i] = yf[i] - p;
                    h[i] = (p * (1.0 - p)).max(1e-12);
                }
            },
            |rows, raw| {
                let (mut gs, mut hs) = (0.0, 0.0);
                for &i in rows {
                    let p = crate::numeric::sigmoid(raw[i]);
                    gs += yf[i] - p;
                    hs += p * (1.0 - p);
                }
                (gs / (hs + 1e-12)).clamp(-MAX_NEWTON_STEP, MAX_NEWTON_STEP)
            },
        );
        Ok(Self { model })
    }
}

impl Classifier for BoostedClassifier {
    fn logit(&self, features: &[f64]) -> f64 {
        self.model.raw(features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::pinball_loss;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn small() -> BoostParams {
        BoostParams { rounds: 100, ..BoostParams::default() }
    }

    #[test]
    fn constant_targets_give_constant_quantile() {
        let x = FeatureMatrix::new(1, (0..100).map(f64::from).collect()).unwrap();
        let y = vec![3.5; 100];
        let m = BoostedQuantile::fit(&x, &y, 0.05, &small(), SeedStream::new(1)).unwrap();
        for v in [0.0, 50.0, 1000.0] {
            assert!((m.predict(&[v]) - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn heteroscedastic_quantile_tracks_truth() {
        // y = θ + θ·ε, so the 0.9 quantile is θ(1 + z_0.9).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..3.0)).collect();
        let y: Vec<f64> = theta
            .iter()
            .map(|t| {
                let e: f64 = StandardNormal.sample(&mut rng);
                t + t * e
            })
            .collect();
        let x = FeatureMatrix::new(1, theta).unwrap();
        let m = BoostedQuantile::fit(&x, &y, 0.9, &BoostParams::default(), SeedStream::new(2)).unwrap();
        let z = 1.2815515655446004;
        for t in [1.25, 2.0, 2.75] {
            let truth = t * (1.0 + z);
            assert!((m.predict(&[t]) - truth).abs() < 0.35, "t={t} pred={} truth={truth}", m.predict(&[t]));
        }
    }

    #[test]
    fn boosting_reduces_pinball_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = xs.iter().map(|v| (6.0 * v).sin() + 0.1 * rng.random::<f64>()).collect();
        let x = FeatureMatrix::new(1, xs.clone()).unwrap();
        let m = BoostedQuantile::fit(&x, &y, 0.5, &small(), SeedStream::new(0)).unwrap();
        let init = quantile(&y, 0.5);
        let fitted: f64 = xs.iter().zip(&y).map(|(a, b)| pinball_loss(m.predict(&[*a]), *b, 0.5)).sum();
        let flat: f64 = y.iter().map(|b| pinball_loss(init, *b, 0.5)).sum();
        assert!(fitted < 0.3 * flat);
    }

    #[test]
    fn regressor_clips_to_unit_interval() {
        let xs: Vec<f64> = (0..200).map(f64::from).collect();
        let y: Vec<f64> = xs.iter().map(|v| if *v < 100.0 { 0.0 } else { 1.0 }).collect();
        let x = FeatureMatrix::new(1, xs).unwrap();
        let m = BoostedRegressor::fit(&x, &y, &small(), true, SeedStream::new(0)).unwrap();
        assert!(m.predict(&[10.0]) >= 0.0 && m.predict(&[10.0]) < 0.05);
        assert!(m.predict(&[150.0]) <= 1.0 && m.predict(&[150.0]) > 0.95);
    }

    #[test]
    fn classifier_separates_classes() {
        let xs: Vec<f64> = (0..400).map(|i| f64::from(i) / 400.0).collect();
        let y: Vec<bool> = xs.iter().map(|v| *v > 0.5).collect();
        let x = FeatureMatrix::new(1, xs).unwrap();
        let m = BoostedClassifier::fit(&x, &y, &small(), SeedStream::new(0)).unwrap();
        assert!(m.predict_proba(&[0.9]) > 0.95);
        assert!(m.predict_proba(&[0.1]) < 0.05);
    }

    #[test]
    fn subsampling_is_seed_deterministic() {
        let xs: Vec<f64> = (0..300).map(|i| f64::from(i % 17)).collect();
        let y: Vec<f64> = xs.iter().map(|v| v * 0.5).collect();
        let x = FeatureMatrix::new(1, xs).unwrap();
        let p = BoostParams { subsample: 0.5, rounds: 20, ..BoostParams::default() };
        let a = BoostedQuantile::fit(&x, &y, 0.3, &p, SeedStream::new(9)).unwrap();
        let b = BoostedQuantile::fit(&x, &y, 0.3, &p, SeedStream::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
