//! Self-contained supervised learners: probabilistic classifiers for odds
//! estimation, conditional-quantile regressors for critical values and
//! mean regressors for p-values and coverage.
//!
//! Every fitted model is a plain serialisable value, immutable after fit
//! and safe to share across threads.

mod basis;
mod boosting;
mod local;
mod logistic;
pub mod model_io;
mod qda;
mod tree;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub use basis::Basis;
pub use boosting::{BoostParams, BoostedClassifier, BoostedQuantile, BoostedRegressor};
pub use local::LocalBinQuantile;
pub use logistic::{LogisticMeanRegressor, LogisticRegression};
pub use qda::Qda;

/// Probability floor applied to every classifier output.
pub const PROB_CLAMP: f64 = 1e-6;

thread_local! {
    static FITS: Cell<u64> = const { Cell::new(0) };
}

/// Number of learner fits performed on the current thread.
pub fn fits_on_this_thread() -> u64 {
    FITS.with(Cell::get)
}

fn count_fit() {
    FITS.with(|c| c.set(c.get() + 1));
}

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::Argument(format!(
                "feature data of length {} is not a multiple of {cols} columns",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(Self { rows: data.len() / cols, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Argument("ragged feature rows".into()));
        }
        Self::new(cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols)
    }
}

/// Logit `zᵀAz + bᵀz + c` of a classifier whose log-odds are quadratic in
/// the features. Lets callers evaluate many `(θ, x)` pairs cheaply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLogit {
    pub dim: usize,
    /// Symmetric, row-major `dim × dim`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadraticLogit {
    pub fn eval(&self, z: &[f64]) -> f64 {
        let p = self.dim;
        let mut acc = self.c;
        for i in 0..p {
            let row = &self.a[i * p..(i + 1) * p];
            let az: f64 = row.iter().zip(z).map(|(a, v)| a * v).sum();
            acc += z[i] * az + self.b[i] * z[i];
        }
        acc
    }
}

pub trait Classifier {
    /// Unclamped log posterior odds `ln P(Y=1|z)/P(Y=0|z)`.
    fn logit(&self, features: &[f64]) -> f64;

    fn predict_proba(&self, features: &[f64]) -> f64 {
        crate::numeric::sigmoid(self.logit(features)).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    fn quadratic_logit(&self) -> Option<&QuadraticLogit> {
        None
    }
}

pub trait QuantileRegressor {
    fn alpha(&self) -> f64;
    fn predict(&self, point: &[f64]) -> f64;
}

pub trait MeanRegressor {
    fn predict(&self, point: &[f64]) -> f64;

    /// Pointwise band `mean ± k·σ` mapped to the response scale, when the
    /// learner carries uncertainty.
    fn band(&self, _point: &[f64], _k: f64) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierSpec {
    Qda {
        #[serde(default = "default_qda_reg")]
        regularization: f64,
    },
    Logistic {
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default = "default_classifier_ridge")]
        ridge: f64,
    },
    Boosted {
        #[serde(flatten, default)]
        params: BoostParams,
    },
}

fn default_qda_reg() -> f64 {
    1e-6
}

fn default_degree() -> usize {
    2
}

fn default_classifier_ridge() -> f64 {
    1e-6
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Qda { regularization: default_qda_reg() }
    }
}

impl ClassifierSpec {
    pub fn label(&self) -> String {
        match self {
            ClassifierSpec::Qda { .. } => "qda".into(),
            ClassifierSpec::Logistic { degree, .. } => format!("logistic-deg{degree}"),
            ClassifierSpec::Boosted { .. } => "boosted".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedClassifier {
    Qda(Qda),
    Logistic(LogisticRegression),
    Boosted(BoostedClassifier),
}

impl Classifier for FittedClassifier {
    fn logit(&self, features: &[f64]) -> f64 {
        match self {
            FittedClassifier::Qda(m) => m.logit(features),
            FittedClassifier::Logistic(m) => m.logit(features),
            FittedClassifier::Boosted(m) => m.logit(features),
        }
    }

    fn quadratic_logit(&self) -> Option<&QuadraticLogit> {
        match self {
            FittedClassifier::Qda(m) => Some(m.quadratic()),
            _ => None,
        }
    }
}

/// Fit a probabilistic classifier on `(features, label)` pairs.
pub fn fit_classifier(
    spec: &ClassifierSpec,
    x: &FeatureMatrix,
    y: &[bool],
    seed: SeedStream,
) -> Result<FittedClassifier> {
    if x.rows() != y.len() {
        return Err(Error::Argument("feature rows and labels differ in length".into()));
    }
    let pos = y.iter().filter(|v| **v).count();
    if pos < 2 || y.len() - pos < 2 {
        return Err(Error::Fit(format!(
            "classifier needs at least 2 examples per class (got {pos} positive, {} negative)",
            y.len() - pos
        )));
    }
    count_fit();
    Ok(match spec {
        ClassifierSpec::Qda { regularization } => FittedClassifier::Qda(Qda::fit(x, y, *regularization)?),
        ClassifierSpec::Logistic { degree, ridge } => {
            FittedClassifier::Logistic(LogisticRegression::fit(x, y, *degree, *ridge)?)
        }
        ClassifierSpec::Boosted { params } => FittedClassifier::Boosted(BoostedClassifier::fit(x, y, params, seed)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuantileSpec {
    Boosted {
        #[serde(flatten, default)]
        params: BoostParams,
    },
    LocalBin {
        #[serde(default = "default_neighbors")]
        neighbors: usize,
    },
}

fn default_neighbors() -> usize {
    200
}

impl Default for QuantileSpec {
    /// Shallow, heavily pooled boosting: the α-quantile of a leaf is much
    /// noisier than its mean, so leaves are kept large.
    fn default() -> Self {
        QuantileSpec::Boosted {
            params: BoostParams { rounds: 100, learning_rate: 0.05, min_samples_leaf: 200, ..BoostParams::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedQuantile {
    Boosted(BoostedQuantile),
    LocalBin(LocalBinQuantile),
}

impl QuantileRegressor for FittedQuantile {
    fn alpha(&self) -> f64 {
        match self {
            FittedQuantile::Boosted(m) => m.alpha(),
            FittedQuantile::LocalBin(m) => m.alpha(),
        }
    }

    fn predict(&self, point: &[f64]) -> f64 {
        match self {
            FittedQuantile::Boosted(m) => m.predict(point),
            FittedQuantile::LocalBin(m) => m.predict(point),
        }
    }
}

/// Fit the conditional `alpha`-quantile of `y` given the features.
pub fn fit_quantile(
    spec: &QuantileSpec,
    x: &FeatureMatrix,
    y: &[f64],
    alpha: f64,
    seed: SeedStream,
) -> Result<FittedQuantile> {
    check_alpha(alpha)?;
    check_regression_input(x, y)?;
    count_fit();
    Ok(match spec {
        QuantileSpec::Boosted { params } => FittedQuantile::Boosted(BoostedQuantile::fit(x, y, alpha, params, seed)?),
        QuantileSpec::LocalBin { neighbors } => {
            FittedQuantile::LocalBin(LocalBinQuantile::fit(x, y, alpha, *neighbors)?)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeanSpec {
    Boosted {
        #[serde(flatten, default)]
        params: BoostParams,
    },
    Logistic {
        #[serde(default)]
        basis: Basis,
        #[serde(default = "default_mean_ridge")]
        ridge: f64,
    },
}

fn default_mean_ridge() -> f64 {
    1e-4
}

impl Default for MeanSpec {
    fn default() -> Self {
        MeanSpec::Logistic { basis: Basis::default(), ridge: default_mean_ridge() }
    }
}

impl MeanSpec {
    /// Default regressor for p-value surfaces.
    pub fn pvalue_default() -> Self {
        MeanSpec::Boosted { params: BoostParams { rounds: 200, learning_rate: 0.05, min_samples_leaf: 50, ..BoostParams::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedMean {
    Boosted(BoostedRegressor),
    Logistic(LogisticMeanRegressor),
}

impl MeanRegressor for FittedMean {
    fn predict(&self, point: &[f64]) -> f64 {
        match self {
            FittedMean::Boosted(m) => m.predict(point),
            FittedMean::Logistic(m) => m.predict(point),
        }
    }

    fn band(&self, point: &[f64], k: f64) -> Option<(f64, f64)> {
        match self {
            FittedMean::Boosted(_) => None,
            FittedMean::Logistic(m) => m.band(point, k),
        }
    }
}

/// Fit `E[y | features]` for targets in `[0, 1]`.
pub fn fit_mean(spec: &MeanSpec, x: &FeatureMatrix, y: &[f64], seed: SeedStream) -> Result<FittedMean> {
    check_regression_input(x, y)?;
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Argument("mean regression targets must lie in [0, 1]".into()));
    }
    count_fit();
    Ok(match spec {
        MeanSpec::Boosted { params } => FittedMean::Boosted(BoostedRegressor::fit(x, y, params, true, seed)?),
        MeanSpec::Logistic { basis, ridge } => FittedMean::Logistic(LogisticMeanRegressor::fit(x, y, basis, *ridge)?),
    })
}

/// Pinball (quantile) loss of predicting `pred` when `actual` is observed.
pub fn pinball_loss(pred: f64, actual: f64, alpha: f64) -> f64 {
    let diff = actual - pred;
    if diff >= 0.0 {
        alpha * diff
    } else {
        (alpha - 1.0) * diff
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("level alpha must be in (0,1), got {alpha}")))
    }
}

const MIN_REGRESSION_PAIRS: usize = 50;

fn check_regression_input(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Argument("feature rows and targets differ in length".into()));
    }
    if y.len() < MIN_REGRESSION_PAIRS {
        return Err(Error::Argument(format!(
            "regression needs at least {MIN_REGRESSION_PAIRS} pairs, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite regression target".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_values() {
        assert_eq!(pinball_loss(0.0, 0.0, 0.1), 0.0);
        assert!((pinball_loss(0.0, 1.0, 0.1) - 0.1).abs() < 1e-15);
        assert!((pinball_loss(1.0, 0.0, 0.1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_fit_error() {
        let x = FeatureMatrix::new(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let err = fit_classifier(&ClassifierSpec::default(), &x, &[true, true, true, false], SeedStream::new(0));
        assert!(matches!(err, Err(Error::Fit(_))));
    }

    #[test]
    fn quantile_rejects_bad_alpha_and_small_data() {
        let x = FeatureMatrix::new(1, (0..100).map(f64::from).collect()).unwrap();
        let y = vec![0.0; 100];
        for alpha in [0.0, 1.0, -0.5] {
            assert!(fit_quantile(&QuantileSpec::default(), &x, &y, alpha, SeedStream::new(0)).is_err());
        }
        let xs = FeatureMatrix::new(1, vec![0.0; 10]).unwrap();
        assert!(fit_quantile(&QuantileSpec::default(), &xs, &[0.0; 10], 0.5, SeedStream::new(0)).is_err());
    }

    #[test]
    fn fit_counter_increments() {
        let before = fits_on_this_thread();
        let x = FeatureMatrix::new(1, (0..100).map(f64::from).collect()).unwrap();
        fit_quantile(&QuantileSpec::LocalBin { neighbors: 10 }, &x, &vec![1.0; 100], 0.5, SeedStream::new(0)).unwrap();
        assert_eq!(fits_on_this_thread(), before + 1);
    }

    #[test]
    fn spec_deserialises_with_defaults() {
        let s: QuantileSpec = serde_json::from_str(r#"{"kind":"boosted","rounds":50}"#).unwrap();
        match s {
            QuantileSpec::Boosted { params } => {
                assert_eq!(params.rounds, 50);
                assert_eq!(params.max_depth, 3);
            }
            _ => panic!(),
        }
    }
}
