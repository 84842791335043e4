//! Test statistics `λ(D;θ₀)`: ACORE and BFF built on an odds model, their
//! nuisance-parameter variants, and exact oracles for the isotropic
//! Gaussian benchmark. All products of odds are handled as sums of logs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_norm_interval, mean_se, LN_SQRT_2PI};
use crate::odds::OddsModel;
use crate::rng::SeedStream;
use crate::simulators::{Dataset, Proposal};
use crate::space::{Grid, ParamSpace};

/// `ln Σ exp(vᵢ)` without overflow. Returns `-∞` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticKind {
    Acore,
    Bff,
    ExactLrtMvg,
    ExactBfMvg,
    External,
    ProfiledAcore,
    MarginalizedBff,
}

impl StatisticKind {
    /// Whether the statistic carries a nuisance-parameter approximation.
    pub fn is_hybrid(self) -> bool {
        matches!(self, StatisticKind::ProfiledAcore | StatisticKind::MarginalizedBff)
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StatisticKind::Acore => "acore",
            StatisticKind::Bff => "bff",
            StatisticKind::ExactLrtMvg => "exact-lrt-mvg",
            StatisticKind::ExactBfMvg => "exact-bf-mvg",
            StatisticKind::External => "external",
            StatisticKind::ProfiledAcore => "h-acore",
            StatisticKind::MarginalizedBff => "h-bff",
        };
        f.write_str(s)
    }
}

/// Uniform contract over every statistic. Larger values favour the null.
pub trait TestStatistic: Send + Sync {
    fn kind(&self) -> StatisticKind;

    /// Dimension of the null points passed to [`TestStatistic::evaluate`]:
    /// the full parameter for simple statistics, the interest parameter
    /// for nuisance variants.
    fn null_dim(&self) -> usize;

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64>;

    /// `λ(D;θⱼ)` for every null point in `nulls`, sharing per-dataset work.
    fn evaluate_many(&self, data: &Dataset, nulls: &Grid) -> Result<Vec<f64>> {
        nulls.points().map(|t| self.evaluate(data, t)).collect()
    }
}

fn check_null(stat: &dyn TestStatistic, null: &[f64]) -> Result<()> {
    if null.len() != stat.null_dim() {
        return Err(Error::Argument(format!(
            "{} expects null points of dimension {}, got {}",
            stat.kind(),
            stat.null_dim(),
            null.len()
        )));
    }
    if null.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("null point is not finite".into()));
    }
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_nan() {
        Err(Error::Numeric(format!("{what} evaluated to NaN")))
    } else {
        Ok(v)
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Estimated likelihood-ratio statistic: log-odds sum at the null minus its
/// maximum over an evaluation grid (the null is always part of the grid).
#[derive(Clone)]
pub struct Acore {
    odds: Arc<dyn OddsModel>,
    grid: Grid,
}

impl Acore {
    pub fn new(odds: Arc<dyn OddsModel>, grid: Grid) -> Result<Self> {
        if grid.is_empty() || grid.dim() != odds.space().dims() {
            return Err(Error::Argument("ACORE grid must be nonempty and span the full parameter".into()));
        }
        Ok(Self { odds, grid })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn grid_max(&self, data: &Dataset) -> f64 {
        max_of(&self.odds.sum_log_odds_grid(data, &self.grid))
    }
}

impl TestStatistic for Acore {
    fn kind(&self) -> StatisticKind {
        StatisticKind::Acore
    }

    fn null_dim(&self) -> usize {
        self.grid.dim()
    }

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64> {
        check_null(self, null)?;
        let s0 = self.odds.sum_log_odds(data, null);
        finite(s0 - s0.max(self.grid_max(data)), "ACORE")
    }

    fn evaluate_many(&self, data: &Dataset, nulls: &Grid) -> Result<Vec<f64>> {
        if nulls.dim() != self.null_dim() {
            return Err(Error::Argument("null grid has the wrong dimension".into()));
        }
        let smax = self.grid_max(data);
        self.odds
            .sum_log_odds_grid(data, nulls)
            .into_iter()
            .map(|s0| finite(s0 - s0.max(smax), "ACORE"))
            .collect()
    }
}

/// Where the BFF denominator's parameter points come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Equal-weight average over a deterministic cell-centred grid.
    Riemann,
    /// Average over i.i.d. proposal draws.
    Draws,
}

/// Estimated Bayes factor: log-odds sum at the null minus the log of the
/// proposal-averaged odds product.
#[derive(Clone)]
pub struct Bff {
    odds: Arc<dyn OddsModel>,
    points: Grid,
    averaging: Averaging,
}

impl Bff {
    /// Riemann average over `per_dim` cell midpoints per axis of the
    /// proposal box.
    pub fn riemann(odds: Arc<dyn OddsModel>, prop: &Proposal, per_dim: usize) -> Result<Self> {
        if per_dim == 0 || prop.dim() != odds.space().dims() {
            return Err(Error::Argument("BFF needs a positive grid over the full parameter".into()));
        }
        let points = Grid::midpoints(prop.lower(), prop.upper(), per_dim);
        Ok(Self { odds, points, averaging: Averaging::Riemann })
    }

    /// Monte Carlo average over `m` proposal draws.
    pub fn with_draws(odds: Arc<dyn OddsModel>, prop: &Proposal, m: usize, seed: SeedStream) -> Result<Self> {
        if m == 0 || prop.dim() != odds.space().dims() {
            return Err(Error::Argument("BFF needs at least one proposal draw over the full parameter".into()));
        }
        let mut rng = seed.rng();
        let mut flat = vec![0.0; m * prop.dim()];
        for row in flat.chunks_exact_mut(prop.dim()) {
            prop.sample_into(&mut rng, row);
        }
        Ok(Self { odds, points: Grid::from_flat(prop.dim(), flat)?, averaging: Averaging::Draws })
    }

    pub fn averaging(&self) -> Averaging {
        self.averaging
    }

    pub fn points(&self) -> &Grid {
        &self.points
    }

    /// `ln[(1/m) Σⱼ Πᵢ Ô(xᵢ;θⱼ)]`, or `ln(p/(1−p))` when a single
    /// observation is contrasted with the marginal reference.
    pub fn log_denominator(&self, data: &Dataset) -> f64 {
        if data.n() == 1 && self.odds.reference_is_marginal() {
            let p = self.odds.training_p();
            return (p / (1.0 - p)).ln();
        }
        averaged_log_odds(self.odds.as_ref(), data, &self.points)
    }

    /// The same ratio computed with raw products, for comparison. Overflows
    /// for large samples.
    pub fn evaluate_direct(&self, data: &Dataset, null: &[f64]) -> f64 {
        let prod = |t: &[f64]| data.rows().map(|x| self.odds.log_odds(x, t).exp()).product::<f64>();
        let num = prod(null);
        let den = if data.n() == 1 && self.odds.reference_is_marginal() {
            let p = self.odds.training_p();
            p / (1.0 - p)
        } else {
            self.points.points().map(prod).sum::<f64>() / self.points.len() as f64
        };
        num / den
    }
}

fn averaged_log_odds(odds: &dyn OddsModel, data: &Dataset, points: &Grid) -> f64 {
    log_sum_exp(&odds.sum_log_odds_grid(data, points)) - (points.len() as f64).ln()
}

impl TestStatistic for Bff {
    fn kind(&self) -> StatisticKind {
        StatisticKind::Bff
    }

    fn null_dim(&self) -> usize {
        self.points.dim()
    }

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64> {
        check_null(self, null)?;
        finite(self.odds.sum_log_odds(data, null) - self.log_denominator(data), "BFF")
    }

    fn evaluate_many(&self, data: &Dataset, nulls: &Grid) -> Result<Vec<f64>> {
        if nulls.dim() != self.null_dim() {
            return Err(Error::Argument("null grid has the wrong dimension".into()));
        }
        let den = self.log_denominator(data);
        self.odds.sum_log_odds_grid(data, nulls).into_iter().map(|s| finite(s - den, "BFF")).collect()
    }
}

/// Monte Carlo estimate of the BFF denominator `(1/m) Σⱼ Πᵢ Ô(xᵢ;θⱼ)` on
/// the natural scale, with its standard error.
pub fn mc_denominator(odds: &dyn OddsModel, data: &Dataset, prop: &Proposal, m: usize, seed: SeedStream) -> (f64, f64) {
    let mut rng = seed.rng();
    let mut theta = vec![0.0; prop.dim()];
    let vals: Vec<f64> = (0..m)
        .map(|_| {
            prop.sample_into(&mut rng, &mut theta);
            odds.sum_log_odds(data, &theta).exp()
        })
        .collect();
    mean_se(&vals)
}

/// `−(n/2)‖x̄ − θ₀‖²`, the exact log likelihood ratio for `N(θ, I)` data.
#[derive(Debug, Clone, Copy)]
pub struct ExactLrtMvg {
    dim: usize,
}

impl ExactLrtMvg {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn value(xbar: &[f64], theta0: &[f64], n: usize) -> f64 {
        let d2: f64 = xbar.iter().zip(theta0).map(|(a, b)| (a - b).powi(2)).sum();
        -0.5 * n as f64 * d2
    }
}

impl TestStatistic for ExactLrtMvg {
    fn kind(&self) -> StatisticKind {
        StatisticKind::ExactLrtMvg
    }

    fn null_dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64> {
        check_null(self, null)?;
        Ok(Self::value(&data.mean(), null, data.n()))
    }

    fn evaluate_many(&self, data: &Dataset, nulls: &Grid) -> Result<Vec<f64>> {
        let xbar = data.mean();
        nulls.points().map(|t| Ok(Self::value(&xbar, t, data.n()))).collect()
    }
}

/// Exact log Bayes factor for `N(θ, I)` data under a uniform prior on
/// `[a, b]^d`.
#[derive(Debug, Clone, Copy)]
pub struct ExactBfMvg {
    dim: usize,
    a: f64,
    b: f64,
}

impl ExactBfMvg {
    pub fn new(dim: usize, a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Argument("prior box needs a < b".into()));
        }
        Ok(Self { dim, a, b })
    }

    pub fn value(&self, xbar: &[f64], theta0: &[f64], n: usize) -> f64 {
        let nf = n as f64;
        let rn = nf.sqrt();
        let d = xbar.len() as f64;
        let num = -d * LN_SQRT_2PI + 0.5 * d * nf.ln() + ExactLrtMvg::value(xbar, theta0, n);
        let den: f64 = xbar
            .iter()
            .map(|m| ln_norm_interval((self.a - m) * rn, (self.b - m) * rn) - (self.b - self.a).ln())
            .sum();
        num - den
    }
}

impl TestStatistic for ExactBfMvg {
    fn kind(&self) -> StatisticKind {
        StatisticKind::ExactBfMvg
    }

    fn null_dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64> {
        check_null(self, null)?;
        Ok(self.value(&data.mean(), null, data.n()))
    }
}

type ExternalFn = dyn Fn(&Dataset, &[f64]) -> f64 + Send + Sync;

/// User-supplied statistic.
#[derive(Clone)]
pub struct External {
    dim: usize,
    f: Arc<ExternalFn>,
}

impl External {
    pub fn new(dim: usize, f: impl Fn(&Dataset, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }
}

impl TestStatistic for External {
    fn kind(&self) -> StatisticKind {
        StatisticKind::External
    }

    fn null_dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64> {
        check_null(self, null)?;
        finite((self.f)(data, null), "external statistic")
    }
}

/// Points `(φ, ψₖ)` for every nuisance grid point.
pub(crate) fn nuisance_slice(space: &ParamSpace, phi: &[f64], psi_grid: &Grid) -> Grid {
    let mut flat = Vec::with_capacity(psi_grid.len() * space.dims());
    for psi in psi_grid.points() {
        flat.extend(space.compose(phi, psi));
    }
    Grid::from_flat(space.dims(), flat).expect("composed points have full dimension")
}

/// ACORE for an interest parameter, with the nuisance profiled out over a
/// grid: `max_ψ S(φ,ψ) − max_Θ S`.
#[derive(Clone)]
pub struct ProfiledAcore {
    odds: Arc<dyn OddsModel>,
    psi_grid: Grid,
    theta_grid: Grid,
}

impl ProfiledAcore {
    pub fn new(odds: Arc<dyn OddsModel>, psi_grid: Grid, theta_grid: Grid) -> Result<Self> {
        let space = odds.space();
        if psi_grid.is_empty() || psi_grid.dim() != space.nuisance_dims().len() {
            return Err(Error::Argument("nuisance grid must be nonempty and span the nuisance dims".into()));
        }
        if theta_grid.is_empty() || theta_grid.dim() != space.dims() {
            return Err(Error::Argument("evaluation grid must be nonempty and span the full parameter".into()));
        }
        Ok(Self { odds, psi_grid, theta_grid })
    }

    pub fn odds(&self) -> &Arc<dyn OddsModel> {
        &self.odds
    }

    pub fn psi_grid(&self) -> &Grid {
        &self.psi_grid
    }

    /// Index of the profiled nuisance point and the profiled log-odds sum.
    pub fn profile(&self, data: &Dataset, phi: &[f64]) -> (usize, f64) {
        let sums = self.odds.sum_log_odds_grid(data, &nuisance_slice(self.odds.space(), phi, &self.psi_grid));
        let mut best = (0, f64::NEG_INFINITY);
        for (k, s) in sums.into_iter().enumerate() {
            if s > best.1 {
                best = (k, s);
            }
        }
        best
    }
}

impl TestStatistic for ProfiledAcore {
    fn kind(&self) -> StatisticKind {
        StatisticKind::ProfiledAcore
    }

    fn null_dim(&self) -> usize {
        self.odds.space().interest_dims().len()
    }

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64> {
        check_null(self, null)?;
        let (_, s0) = self.profile(data, null);
        let smax = max_of(&self.odds.sum_log_odds_grid(data, &self.theta_grid));
        finite(s0 - s0.max(smax), "profiled ACORE")
    }

    fn evaluate_many(&self, data: &Dataset, nulls: &Grid) -> Result<Vec<f64>> {
        let smax = max_of(&self.odds.sum_log_odds_grid(data, &self.theta_grid));
        nulls
            .points()
            .map(|phi| {
                check_null(self, phi)?;
                let (_, s0) = self.profile(data, phi);
                finite(s0 - s0.max(smax), "profiled ACORE")
            })
            .collect()
    }
}

/// BFF for an interest parameter with the nuisance averaged out:
/// `ln mean_ψ Πᵢ Ô(xᵢ;(φ,ψ)) − ln mean_Θ Πᵢ Ô(xᵢ;θ)`.
#[derive(Clone)]
pub struct MarginalizedBff {
    odds: Arc<dyn OddsModel>,
    psi_grid: Grid,
    theta_points: Grid,
}

impl MarginalizedBff {
    /// Averages over nuisance and full-parameter cell midpoints of the
    /// proposal box.
    pub fn riemann(odds: Arc<dyn OddsModel>, prop: &Proposal, psi_per_dim: usize, theta_per_dim: usize) -> Result<Self> {
        let space = odds.space().clone();
        if !space.has_nuisance() {
            return Err(Error::Argument("marginalized BFF needs nuisance dimensions".into()));
        }
        if psi_per_dim == 0 || theta_per_dim == 0 {
            return Err(Error::Argument("averaging grids must be nonempty".into()));
        }
        let nuis = prop.marginal(space.nuisance_dims());
        let psi_grid = Grid::midpoints(nuis.lower(), nuis.upper(), psi_per_dim);
        let theta_points = Grid::midpoints(prop.lower(), prop.upper(), theta_per_dim);
        Ok(Self { odds, psi_grid, theta_points })
    }

    fn log_denominator(&self, data: &Dataset) -> f64 {
        if data.n() == 1 && self.odds.reference_is_marginal() {
            let p = self.odds.training_p();
            return (p / (1.0 - p)).ln();
        }
        averaged_log_odds(self.odds.as_ref(), data, &self.theta_points)
    }

    fn log_numerator(&self, data: &Dataset, phi: &[f64]) -> f64 {
        averaged_log_odds(self.odds.as_ref(), data, &nuisance_slice(self.odds.space(), phi, &self.psi_grid))
    }
}

impl TestStatistic for MarginalizedBff {
    fn kind(&self) -> StatisticKind {
        StatisticKind::MarginalizedBff
    }

    fn null_dim(&self) -> usize {
        self.odds.space().interest_dims().len()
    }

    fn evaluate(&self, data: &Dataset, null: &[f64]) -> Result<f64> {
        check_null(self, null)?;
        finite(self.log_numerator(data, null) - self.log_denominator(data), "marginalized BFF")
    }

    fn evaluate_many(&self, data: &Dataset, nulls: &Grid) -> Result<Vec<f64>> {
        let den = self.log_denominator(data);
        nulls
            .points()
            .map(|phi| {
                check_null(self, phi)?;
                finite(self.log_numerator(data, phi) - den, "marginalized BFF")
            })
            .collect()
    }
}

/// Write `(theta_0.., lambda)` rows.
pub fn write_statistic_csv<W: std::io::Write>(w: W, thetas: &Grid, lambdas: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..thetas.dim()).map(|j| format!("theta_{j}")).collect();
    header.push("lambda".into());
    wtr.write_record(&header)?;
    for (t, l) in thetas.points().zip(lambdas) {
        let mut row: Vec<String> = t.iter().map(|v| v.to_string()).collect();
        row.push(l.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
