//! Critical values and p-values calibrated by regression across the
//! parameter space, plus the per-grid Monte Carlo and chi-square baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::learners::{
    check_alpha, fit_mean, fit_quantile, FeatureMatrix, FittedMean, FittedQuantile, MeanRegressor, MeanSpec,
    QuantileRegressor, QuantileSpec,
};
use crate::numeric::{chi2_upper_quantile, quantile};
use crate::rng::{SeedStream, SimRng};
use crate::simulators::{simulate, Dataset, Proposal, Simulator};
use crate::space::Grid;
use crate::statistics::{StatisticKind, TestStatistic};

/// Smallest calibration sample accepted by the regression-based estimators.
pub const MIN_CALIBRATION_SIZE: usize = 100;

/// A critical value `C_θ` for every null point.
pub trait Cutoff: Send + Sync {
    fn cutoff(&self, null: &[f64]) -> f64;

    /// Statistic the cutoff was calibrated for, if it is tied to one.
    fn statistic_kind(&self) -> Option<StatisticKind> {
        None
    }
}

/// Cutoff for a composite null: the smallest cutoff over its grid points.
pub fn composite_cutoff(cutoff: &dyn Cutoff, null_set: &Grid) -> f64 {
    null_set.points().map(|t| cutoff.cutoff(t)).fold(f64::INFINITY, f64::min)
}

/// Simulated `(θᵢ, λᵢ)` pairs; `nulls` holds the coordinates the statistic
/// was evaluated at (the full parameter or only its interest part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSample {
    pub thetas: Grid,
    pub nulls: Grid,
    pub lambdas: Vec<f64>,
    pub n: usize,
}

impl StatisticSample {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    fn features(&self) -> Result<FeatureMatrix> {
        FeatureMatrix::new(self.nulls.dim(), self.nulls.as_flat().to_vec())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        crate::statistics::write_statistic_csv(w, &self.nulls, &self.lambdas)
    }
}

/// Simulate `b` pairs. `draw` picks the simulation parameter and the null
/// point for one draw from the supplied stream.
pub(crate) fn simulate_statistics<F>(
    sim: &dyn Simulator,
    stat: &dyn TestStatistic,
    b: usize,
    n: usize,
    seed: SeedStream,
    exec: Execution,
    draw: F,
) -> Result<StatisticSample>
where
    F: Fn(&mut SimRng) -> (Vec<f64>, Vec<f64>) + Sync,
{
    if n == 0 {
        return Err(Error::Argument("sample size n must be positive".into()));
    }
    let rows = exec.try_map(b, |i| {
        let mut rng = seed.child(i as u64).rng();
        let (theta, null) = draw(&mut rng);
        let data = simulate(sim, &theta, n, &mut rng);
        let lambda = stat.evaluate(&data, &null)?;
        Ok::<_, Error>((theta, null, lambda))
    })?;
    let td = rows.first().map_or(sim.space().dims(), |r| r.0.len());
    let nd = stat.null_dim();
    let mut thetas = Vec::with_capacity(b * td);
    let mut nulls = Vec::with_capacity(b * nd);
    let mut lambdas = Vec::with_capacity(b);
    for (t, z, l) in rows {
        thetas.extend(t);
        nulls.extend(z);
        lambdas.push(l);
    }
    Ok(StatisticSample { thetas: Grid::from_flat(td, thetas)?, nulls: Grid::from_flat(nd, nulls)?, lambdas, n })
}

fn check_null_dims(sim: &dyn Simulator, stat: &dyn TestStatistic, prop: &Proposal) -> Result<()> {
    if prop.dim() != sim.space().dims() {
        return Err(Error::Argument("proposal dimension does not match simulator".into()));
    }
    if stat.null_dim() != sim.space().dims() {
        return Err(Error::Argument(format!(
            "{} is evaluated on {} coordinates; use the nuisance-aware calibration",
            stat.kind(),
            stat.null_dim()
        )));
    }
    Ok(())
}

/// `θᵢ ~ π`, `Dᵢ ~ F_θᵢ`, `λᵢ = λ(Dᵢ;θᵢ)` for `i < b`.
pub fn simulate_calibration_sample(
    sim: &dyn Simulator,
    prop: &Proposal,
    stat: &dyn TestStatistic,
    b: usize,
    n: usize,
    seed: SeedStream,
    exec: Execution,
) -> Result<StatisticSample> {
    check_null_dims(sim, stat, prop)?;
    simulate_statistics(sim, stat, b, n, seed, exec, |rng| {
        let t = prop.sample(rng);
        (t.clone(), t)
    })
}

/// Amortised conditional `α`-quantile of the statistic, `Ĉ_θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub alpha: f64,
    pub train_size: usize,
    pub kind: StatisticKind,
    pub null_dim: usize,
    pub regressor: FittedQuantile,
    /// Set when the nuisance parameters were handled approximately.
    #[serde(default)]
    pub approximate: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Cutoff for CalibrationModel {
    fn cutoff(&self, null: &[f64]) -> f64 {
        self.regressor.predict(null)
    }

    fn statistic_kind(&self) -> Option<StatisticKind> {
        Some(self.kind)
    }
}

/// Fit `Ĉ_θ` on an existing statistic sample.
pub fn fit_critical_values(
    sample: &StatisticSample,
    kind: StatisticKind,
    alpha: f64,
    spec: &QuantileSpec,
    seed: SeedStream,
) -> Result<CalibrationModel> {
    check_alpha(alpha)?;
    if sample.len() < MIN_CALIBRATION_SIZE {
        return Err(Error::Argument(format!(
            "calibration needs B' >= {MIN_CALIBRATION_SIZE}, got {}",
            sample.len()
        )));
    }
    let mut warnings = Vec::new();
    if sample.lambdas.iter().all(|v| *v == sample.lambdas[0]) {
        warnings.push(format!("statistic is constant ({}); cutoff is constant", sample.lambdas[0]));
    }
    let regressor = fit_quantile(spec, &sample.features()?, &sample.lambdas, alpha, seed)?;
    Ok(CalibrationModel {
        alpha,
        train_size: sample.len(),
        kind,
        null_dim: sample.nulls.dim(),
        regressor,
        approximate: kind.is_hybrid(),
        warnings,
    })
}

/// Simulate a calibration sample and fit `Ĉ_θ` to it.
#[allow(clippy::too_many_arguments)]
pub fn estimate_critical_values(
    sim: &dyn Simulator,
    prop: &Proposal,
    stat: &dyn TestStatistic,
    b_prime: usize,
    n: usize,
    alpha: f64,
    spec: &QuantileSpec,
    seed: SeedStream,
    exec: Execution,
) -> Result<CalibrationModel> {
    check_alpha(alpha)?;
    check_size(b_prime)?;
    let sample = simulate_calibration_sample(sim, prop, stat, b_prime, n, seed.child(0), exec)?;
    fit_critical_values(&sample, stat.kind(), alpha, spec, seed.child(1))
}

pub(crate) fn check_size(b: usize) -> Result<()> {
    if b < MIN_CALIBRATION_SIZE {
        Err(Error::Argument(format!("B' must be at least {MIN_CALIBRATION_SIZE}, got {b}")))
    } else {
        Ok(())
    }
}

/// The same cutoff everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantCutoff {
    pub value: f64,
}

impl Cutoff for ConstantCutoff {
    fn cutoff(&self, _null: &[f64]) -> f64 {
        self.value
    }
}

/// Asymptotic chi-square cutoff for a log likelihood-ratio statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Cutoff {
    /// Upper `α` quantile of `χ²_dof`.
    pub raw: f64,
    /// The same on the log-ratio scale, `−raw/2`.
    pub lr_scale: f64,
}

pub fn chi2_cutoff(alpha: f64, dof: usize) -> Result<Chi2Cutoff> {
    check_alpha(alpha)?;
    if dof == 0 {
        return Err(Error::Argument("chi-square needs at least one degree of freedom".into()));
    }
    let raw = chi2_upper_quantile(alpha, dof);
    Ok(Chi2Cutoff { raw, lr_scale: -0.5 * raw })
}

impl Cutoff for Chi2Cutoff {
    fn cutoff(&self, _null: &[f64]) -> f64 {
        self.lr_scale
    }
}

/// Cutoffs tabulated on a grid. Queries between grid points interpolate
/// linearly in one dimension and take the nearest point otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCutoffs {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Cutoff for GridCutoffs {
    fn cutoff(&self, null: &[f64]) -> f64 {
        if self.grid.dim() == 1 {
            let pts = self.grid.as_flat();
            let x = null[0];
            let k = pts.partition_point(|p| *p < x);
            if k == 0 {
                return self.values[0];
            }
            if k == pts.len() {
                return self.values[pts.len() - 1];
            }
            let (x0, x1) = (pts[k - 1], pts[k]);
            let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
            return self.values[k - 1] * (1.0 - w) + self.values[k] * w;
        }
        let mut best = (f64::INFINITY, 0);
        for (j, p) in self.grid.points().enumerate() {
            let d: f64 = p.iter().zip(null).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        self.values[best.1]
    }
}

/// Monte Carlo cutoffs: the empirical `α`-quantile of `draws_per_point`
/// statistics simulated at each grid point.
#[allow(clippy::too_many_arguments)]
pub fn mc_critical_values(
    sim: &dyn Simulator,
    grid: &Grid,
    stat: &dyn TestStatistic,
    alpha: f64,
    draws_per_point: usize,
    n: usize,
    seed: SeedStream,
    exec: Execution,
) -> Result<GridCutoffs> {
    check_alpha(alpha)?;
    if draws_per_point < MIN_CALIBRATION_SIZE {
        return Err(Error::Argument(format!("need at least {MIN_CALIBRATION_SIZE} draws per grid point")));
    }
    if n == 0 || grid.is_empty() {
        return Err(Error::Argument("need a nonempty grid and positive n".into()));
    }
    for t in grid.points() {
        sim.space().check(t)?;
    }
    let lambdas = mc_statistics(sim, grid, stat, draws_per_point, n, seed, exec)?;
    let values = lambdas.iter().map(|l| quantile(l, alpha)).collect();
    Ok(GridCutoffs { grid: grid.clone(), values })
}

/// Statistic draws at each grid point, `draws` per point.
pub fn mc_statistics(
    sim: &dyn Simulator,
    grid: &Grid,
    stat: &dyn TestStatistic,
    draws: usize,
    n: usize,
    seed: SeedStream,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let total = grid.len() * draws;
    let flat = exec.try_map(total, |k| {
        let (j, _) = (k / draws, k % draws);
        let theta = grid.point(j);
        let mut rng = seed.child(k as u64).rng();
        let data = simulate(sim, theta, n, &mut rng);
        stat.evaluate(&data, theta)
    })?;
    Ok(flat.chunks(draws).map(<[f64]>::to_vec).collect())
}

/// Estimated p-value surface `p̂(D_obs;θ)` for one observed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueModel {
    pub observed: Dataset,
    pub train_size: usize,
    pub kind: StatisticKind,
    pub regressor: FittedMean,
    #[serde(default)]
    pub approximate: bool,
}

impl PValueModel {
    pub fn pvalue(&self, null: &[f64]) -> f64 {
        self.regressor.predict(null).clamp(0.0, 1.0)
    }

    /// Composite null: the largest p-value over its grid points.
    pub fn composite_pvalue(&self, null_set: &Grid) -> f64 {
        null_set.points().map(|t| self.pvalue(t)).fold(0.0, f64::max)
    }
}

/// Fit `p̂(D_obs;·)` from a simulated sample:
/// `Zᵢ = 1{λᵢ < λ(D_obs;θᵢ)}` regressed on the null coordinates.
pub fn fit_pvalues(
    observed: &Dataset,
    sample: &StatisticSample,
    stat: &dyn TestStatistic,
    spec: &MeanSpec,
    seed: SeedStream,
) -> Result<PValueModel> {
    if sample.len() < MIN_CALIBRATION_SIZE {
        return Err(Error::Argument(format!("p-value estimation needs B' >= {MIN_CALIBRATION_SIZE}")));
    }
    let observed_lambdas = stat.evaluate_many(observed, &sample.nulls)?;
    let z: Vec<f64> = sample
        .lambdas
        .iter()
        .zip(&observed_lambdas)
        .map(|(l, o)| f64::from(u8::from(l < o)))
        .collect();
    let regressor = fit_mean(spec, &sample.features()?, &z, seed)?;
    Ok(PValueModel {
        observed: observed.clone(),
        train_size: sample.len(),
        kind: stat.kind(),
        regressor,
        approximate: stat.kind().is_hybrid(),
    })
}

/// Simulate a sample and fit the p-value surface for `observed`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_pvalues(
    observed: &Dataset,
    sim: &dyn Simulator,
    prop: &Proposal,
    stat: &dyn TestStatistic,
    b_prime: usize,
    n: usize,
    spec: &MeanSpec,
    seed: SeedStream,
    exec: Execution,
) -> Result<PValueModel> {
    check_size(b_prime)?;
    let sample = simulate_calibration_sample(sim, prop, stat, b_prime, n, seed.child(0), exec)?;
    fit_pvalues(observed, &sample, stat, spec, seed.child(1))
}

/// Write `(theta_0.., c_hat)` rows for every grid point.
pub fn write_cutoff_csv<W: std::io::Write>(w: W, grid: &Grid, cutoff: &dyn Cutoff) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..grid.dim()).map(|j| format!("theta_{j}")).collect();
    header.push("c_hat".into());
    wtr.write_record(&header)?;
    for t in grid.points() {
        let mut row: Vec<String> = t.iter().map(|v| v.to_string()).collect();
        row.push(cutoff.cutoff(t).to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::BoostParams;
    use crate::simulators::{sample_forward, IsotropicGaussian};
    use crate::statistics::{ExactLrtMvg, External};

    fn qr() -> QuantileSpec {
        QuantileSpec::Boosted { params: BoostParams { rounds: 100, ..BoostParams::default() } }
    }

    #[test]
    fn chi2_table_values() {
        assert!((chi2_cutoff(0.1, 1).unwrap().raw - 2.705_543_454_095_404).abs() < 1e-9);
        let c = chi2_cutoff(0.1, 2).unwrap();
        assert!((c.raw + 2.0 * 0.1f64.ln()).abs() < 1e-9);
        assert!((c.lr_scale - 0.1f64.ln()).abs() < 1e-9);
        let near_one = chi2_cutoff(0.999_999, 3).unwrap().lr_scale;
        assert!(near_one < 0.0 && near_one > -1e-3);
        assert!(chi2_cutoff(0.5, 3).unwrap().lr_scale < chi2_cutoff(0.9, 3).unwrap().lr_scale);
        assert!(chi2_cutoff(0.1, 0).is_err());
    }

    #[test]
    fn constant_statistic_gives_constant_cutoff() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = External::new(1, |_, _| 1.5);
        let m = estimate_critical_values(&sim, &prop, &stat, 200, 3, 0.1, &qr(), SeedStream::new(1), Execution::Parallel).unwrap();
        assert_eq!(m.cutoff(&[-4.0]), 1.5);
        assert_eq!(m.cutoff(&[2.2]), 1.5);
        assert_eq!(m.warnings.len(), 1);
        let mc = mc_critical_values(&sim, &Grid::lattice(&[-5.0], &[5.0], 3), &stat, 0.1, 100, 3, SeedStream::new(1), Execution::Parallel).unwrap();
        assert!(mc.values.iter().all(|v| *v == 1.5));
    }

    #[test]
    fn small_calibration_budget_is_rejected() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = External::new(1, |_, _| 1.5);
        assert!(estimate_critical_values(&sim, &prop, &stat, 50, 3, 0.1, &qr(), SeedStream::new(1), Execution::Parallel).is_err());
        assert!(estimate_critical_values(&sim, &prop, &stat, 500, 3, 1.0, &qr(), SeedStream::new(1), Execution::Parallel).is_err());
    }

    #[test]
    fn exact_lrt_cutoff_is_flat_chi_square() {
        let sim = IsotropicGaussian::new(2, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = ExactLrtMvg::new(2);
        let target = -chi2_upper_quantile(0.1, 2) / 2.0;
        let grid = Grid::lattice(&[-5.0, -5.0], &[5.0, 5.0], 11);
        // Pointwise error is dominated by leaf-level quantile noise, so check
        // the grid average and that it shrinks with the budget.
        let err = |b: usize| {
            let m = estimate_critical_values(&sim, &prop, &stat, b, 10, 0.1, &QuantileSpec::default(), SeedStream::new(2), Execution::Parallel).unwrap();
            grid.points().map(|t| (m.cutoff(t) - target).abs()).sum::<f64>() / grid.len() as f64
        };
        let (small, large) = (err(500), err(5000));
        assert!(large < 0.2, "mean error {large}");
        assert!(large < small, "{large} vs {small}");
    }

    #[test]
    fn sequential_and_parallel_calibration_agree() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = ExactLrtMvg::new(1);
        let a = simulate_calibration_sample(&sim, &prop, &stat, 300, 4, SeedStream::new(3), Execution::Sequential).unwrap();
        let b = simulate_calibration_sample(&sim, &prop, &stat, 300, 4, SeedStream::new(3), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_observation_has_zero_pvalue() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        // Observed statistic far below anything simulated.
        let stat = External::new(1, |d: &Dataset, _: &[f64]| if d.row(0)[0] > 100.0 { -1e9 } else { -1.0 });
        let obs = Dataset::from_rows(&[vec![1000.0]]).unwrap();
        let pv = estimate_pvalues(&obs, &sim, &prop, &stat, 200, 1, &MeanSpec::default(), SeedStream::new(4), Execution::Parallel).unwrap();
        for t in [-4.0, 0.0, 3.0] {
            assert_eq!(pv.pvalue(&[t]), 0.0);
        }
    }

    #[test]
    fn exact_lrt_pvalue_matches_chi_square_tail() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = ExactLrtMvg::new(1);
        let obs = sample_forward(&sim, &[0.0], 1, SeedStream::new(9)).unwrap();
        let pv = estimate_pvalues(&obs, &sim, &prop, &stat, 5000, 1, &MeanSpec::pvalue_default(), SeedStream::new(5), Execution::Parallel).unwrap();
        let errs: Vec<f64> = crate::space::linspace(-3.0, 3.0, 31)
            .into_iter()
            .map(|t| {
                let exact = 1.0 - crate::numeric::chi2_cdf((obs.mean()[0] - t).powi(2), 1);
                (pv.pvalue(&[t]) - exact).abs()
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let max = errs.iter().cloned().fold(0.0, f64::max);
        // The true surface has a cusp at p = 1 which any smoother rounds off.
        assert!(mean < 0.04 && max < 0.15, "mean {mean}, max {max}");
    }

    #[test]
    fn calibrated_cutoffs_agree_with_monte_carlo_oracle() {
        let sim = IsotropicGaussian::new(2, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = ExactLrtMvg::new(2);
        // Wide kNN pooling: leaf-level boosting noise alone is about 2 MC
        // standard errors at this budget.
        let wide = QuantileSpec::LocalBin { neighbors: 1000 };
        let m = estimate_critical_values(&sim, &prop, &stat, 5000, 10, 0.1, &wide, SeedStream::new(6), Execution::Parallel).unwrap();
        let grid = Grid::lattice(&[-4.0, -4.0], &[4.0, 4.0], 5);
        let draws = mc_statistics(&sim, &grid, &stat, 1000, 10, SeedStream::new(7), Execution::Parallel).unwrap();
        let close = grid
            .points()
            .zip(&draws)
            .filter(|(t, l)| (m.cutoff(t) - quantile(l, 0.1)).abs() < 3.0 * crate::numeric::quantile_se(l, 0.1))
            .count();
        assert!(close as f64 >= 0.9 * grid.len() as f64, "{close}/25");
    }

    #[test]
    fn calibrated_test_has_nominal_size() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = ExactLrtMvg::new(1);
        let alpha = 0.1;
        let wide = QuantileSpec::LocalBin { neighbors: 2000 };
        let m = estimate_critical_values(&sim, &prop, &stat, 5000, 10, alpha, &wide, SeedStream::new(8), Execution::Parallel).unwrap();
        let nulls = Grid::lattice(&[-4.5], &[4.5], 10);
        let draws = mc_statistics(&sim, &nulls, &stat, 1000, 10, SeedStream::new(9), Execution::Parallel).unwrap();
        let sigma = (alpha * (1.0 - alpha) / 1000.0).sqrt();
        let mut inside = 0;
        for (t, l) in nulls.points().zip(&draws) {
            let c = m.cutoff(t);
            let size = l.iter().filter(|v| **v < c).count() as f64 / l.len() as f64;
            // Two-sigma bands miss about 5% of the time even for an exact test,
            // and the fitted cutoff adds its own error.
            if (size - alpha).abs() <= 2.0 * sigma {
                inside += 1;
            }
        }
        assert!(inside >= 7, "{inside}/10 null points within the binomial band");
    }

    #[test]
    fn pvalue_and_cutoff_decisions_agree() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let stat = ExactLrtMvg::new(1);
        let sample = simulate_calibration_sample(&sim, &prop, &stat, 5000, 1, SeedStream::new(10), Execution::Parallel).unwrap();
        let cut = fit_critical_values(&sample, StatisticKind::ExactLrtMvg, 0.1, &QuantileSpec::default(), SeedStream::new(11)).unwrap();
        let mut agree = 0;
        let total = 200;
        for r in 0..total {
            let mut rng = SeedStream::new(12).child(r).rng();
            let theta = prop.sample(&mut rng);
            let obs = sample_forward(&sim, &theta, 1, SeedStream::new(13).child(r)).unwrap();
            let pv = fit_pvalues(&obs, &sample, &stat, &MeanSpec::pvalue_default(), SeedStream::new(14)).unwrap();
            let by_pvalue = pv.pvalue(&theta) <= 0.1;
            let by_cutoff = stat.evaluate(&obs, &theta).unwrap() < cut.cutoff(&theta);
            agree += usize::from(by_pvalue == by_cutoff);
        }
        assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn grid_cutoffs_interpolate_and_compose() {
        let g = GridCutoffs { grid: Grid::lattice(&[0.0], &[1.0], 3), values: vec![-1.0, -2.0, -4.0] };
        assert_eq!(g.cutoff(&[0.25]), -1.5);
        assert_eq!(g.cutoff(&[-1.0]), -1.0);
        assert_eq!(composite_cutoff(&g, &Grid::lattice(&[0.0], &[1.0], 3)), -4.0);
        let mut buf = Vec::new();
        write_cutoff_csv(&mut buf, &Grid::lattice(&[0.0], &[1.0], 2), &g).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "theta_0,c_hat\n0,-1\n1,-4\n");
    }
}
