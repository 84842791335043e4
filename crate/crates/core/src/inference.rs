//! Neyman inversion of calibrated tests into confidence sets, and the
//! hybrid treatments of nuisance parameters (profiling and averaging).

use serde::{Deserialize, Serialize};

use crate::calibration::{
    check_size, fit_critical_values, fit_pvalues, simulate_statistics, CalibrationModel, Cutoff, PValueModel,
    StatisticSample,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::learners::{MeanSpec, QuantileSpec};
use crate::odds::OddsModel;
use crate::rng::SeedStream;
use crate::simulators::{Dataset, Proposal, Simulator};
use crate::space::{Grid, ParamSpace};
use crate::statistics::{nuisance_slice, TestStatistic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetMode {
    CriticalValue,
    PValue,
}

/// A confidence set stored as a mask over an evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub grid: Grid,
    pub accepted: Vec<bool>,
    pub lambda: Vec<f64>,
    /// `Ĉ_θ` in critical-value mode, `p̂(D;θ)` in p-value mode.
    pub threshold: Vec<f64>,
    pub alpha: f64,
    pub mode: SetMode,
    /// True when nuisance parameters were handled by a hybrid scheme.
    pub approximate: bool,
}

/// Interval summary of a one-dimensional set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub phi_lo: Option<f64>,
    pub phi_hi: Option<f64>,
    pub length_pct: f64,
    pub approximate: bool,
}

impl ConfidenceSet {
    pub fn size(&self) -> usize {
        self.accepted.iter().filter(|a| **a).count()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    pub fn accepted_points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.grid.points().zip(&self.accepted).filter(|(_, a)| **a).map(|(p, _)| p)
    }

    /// Whether the grid point nearest `theta` is accepted.
    pub fn covers(&self, theta: &[f64]) -> bool {
        let mut best = (f64::INFINITY, false);
        for (p, a) in self.grid.points().zip(&self.accepted) {
            let d: f64 = p.iter().zip(theta).map(|(x, y)| (x - y).powi(2)).sum();
            if d < best.0 {
                best = (d, *a);
            }
        }
        best.1
    }

    /// Smallest interval containing the accepted points (one dimension).
    pub fn hull(&self) -> Option<(f64, f64)> {
        if self.grid.dim() != 1 {
            return None;
        }
        let mut it = self.accepted_points().map(|p| p[0]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    /// Hull length as a percentage of `[lower, upper]`.
    pub fn interval_summary(&self, lower: f64, upper: f64) -> IntervalSummary {
        let hull = self.hull();
        let length_pct = hull.map_or(0.0, |(lo, hi)| 100.0 * (hi - lo) / (upper - lower));
        IntervalSummary {
            phi_lo: hull.map(|h| h.0),
            phi_hi: hull.map(|h| h.1),
            length_pct,
            approximate: self.approximate,
        }
    }

    /// Fraction of the grid accepted; a proxy for set volume.
    pub fn grid_fraction(&self) -> f64 {
        self.size() as f64 / self.accepted.len() as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.grid.dim()).map(|j| format!("theta_{j}")).collect();
        header.extend(["accepted".to_string(), "lambda".to_string()]);
        header.push(match self.mode {
            SetMode::CriticalValue => "c_hat".into(),
            SetMode::PValue => "p_hat".into(),
        });
        wtr.write_record(&header)?;
        for (j, p) in self.grid.points().enumerate() {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(u8::from(self.accepted[j]).to_string());
            row.push(self.lambda[j].to_string());
            row.push(self.threshold[j].to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `{θ in grid : λ(D;θ) ≥ C_θ}`.
pub fn invert(
    stat: &dyn TestStatistic,
    cutoff: &dyn Cutoff,
    data: &Dataset,
    grid: &Grid,
    alpha: f64,
) -> Result<ConfidenceSet> {
    if grid.is_empty() {
        return Err(Error::Argument("inversion grid is empty".into()));
    }
    if let Some(kind) = cutoff.statistic_kind() {
        if kind != stat.kind() {
            return Err(Error::Argument(format!("cutoffs were calibrated for {kind}, not {}", stat.kind())));
        }
    }
    let lambda = stat.evaluate_many(data, grid)?;
    let threshold: Vec<f64> = grid.points().map(|t| cutoff.cutoff(t)).collect();
    let accepted = lambda.iter().zip(&threshold).map(|(l, c)| l >= c).collect();
    Ok(ConfidenceSet {
        grid: grid.clone(),
        accepted,
        lambda,
        threshold,
        alpha,
        mode: SetMode::CriticalValue,
        approximate: stat.kind().is_hybrid(),
    })
}

/// `{θ in grid : p̂(D;θ) > α}` for the dataset the p-values were fitted to.
pub fn invert_pvalues(stat: &dyn TestStatistic, pvalues: &PValueModel, grid: &Grid, alpha: f64) -> Result<ConfidenceSet> {
    if grid.is_empty() {
        return Err(Error::Argument("inversion grid is empty".into()));
    }
    if pvalues.kind != stat.kind() {
        return Err(Error::Argument(format!("p-values were fitted for {}, not {}", pvalues.kind, stat.kind())));
    }
    let lambda = stat.evaluate_many(&pvalues.observed, grid)?;
    let threshold: Vec<f64> = grid.points().map(|t| pvalues.pvalue(t)).collect();
    let accepted = threshold.iter().map(|p| *p > alpha).collect();
    Ok(ConfidenceSet {
        grid: grid.clone(),
        accepted,
        lambda,
        threshold,
        alpha,
        mode: SetMode::PValue,
        approximate: pvalues.approximate,
    })
}

/// Nuisance value maximising the summed log-odds at a fixed interest value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceProfile {
    pub phi: Vec<f64>,
    pub psi_hat: Vec<f64>,
    pub psi_grid_size: usize,
}

pub fn profile_nuisance(odds: &dyn OddsModel, data: &Dataset, phi: &[f64], psi_grid: &Grid) -> Result<NuisanceProfile> {
    let space = odds.space();
    if !space.has_nuisance() {
        return Err(Error::Argument("parameter space has no nuisance dimensions".into()));
    }
    if psi_grid.is_empty() {
        return Err(Error::Argument("nuisance grid is empty".into()));
    }
    if phi.len() != space.interest_dims().len() || psi_grid.dim() != space.nuisance_dims().len() {
        return Err(Error::Argument("interest point or nuisance grid has the wrong dimension".into()));
    }
    let sums = odds.sum_log_odds_grid(data, &nuisance_slice(space, phi, psi_grid));
    let mut best = 0;
    for (k, s) in sums.iter().enumerate() {
        if *s > sums[best] {
            best = k;
        }
    }
    Ok(NuisanceProfile { phi: phi.to_vec(), psi_hat: psi_grid.point(best).to_vec(), psi_grid_size: psi_grid.len() })
}

/// Profiles at every point of an interest grid.
pub fn profile_grid(
    odds: &dyn OddsModel,
    data: &Dataset,
    phi_grid: &Grid,
    psi_grid: &Grid,
    exec: Execution,
) -> Result<Vec<NuisanceProfile>> {
    exec.try_map(phi_grid.len(), |j| profile_nuisance(odds, data, phi_grid.point(j), psi_grid))
}

fn nearest_profile<'a>(profiles: &'a [NuisanceProfile], phi: &[f64]) -> &'a NuisanceProfile {
    let mut best = (f64::INFINITY, 0);
    for (k, p) in profiles.iter().enumerate() {
        let d: f64 = p.phi.iter().zip(phi).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best.0 {
            best = (d, k);
        }
    }
    &profiles[best.1]
}

/// Sample from `π(φ)·δ(ψ = ψ̂_φ)`, with `ψ̂` taken from the profile at the
/// nearest interest grid point.
#[allow(clippy::too_many_arguments)]
pub fn simulate_hybrid_sample(
    sim: &dyn Simulator,
    interest_prop: &Proposal,
    profiles: &[NuisanceProfile],
    stat: &dyn TestStatistic,
    b: usize,
    n: usize,
    seed: SeedStream,
    exec: Execution,
) -> Result<StatisticSample> {
    let space = sim.space();
    if profiles.is_empty() && space.has_nuisance() {
        return Err(Error::Argument("no nuisance profiles supplied".into()));
    }
    if interest_prop.dim() != space.interest_dims().len() || stat.null_dim() != interest_prop.dim() {
        return Err(Error::Argument("interest proposal and statistic must span the interest dims".into()));
    }
    simulate_statistics(sim, stat, b, n, seed, exec, |rng| {
        let phi = interest_prop.sample(rng);
        let psi = if space.has_nuisance() { nearest_profile(profiles, &phi).psi_hat.clone() } else { Vec::new() };
        (space.compose(&phi, &psi), phi)
    })
}

/// Hybrid cutoffs: calibrate at the profiled nuisance values of the
/// observed data and regress on the interest parameter only.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_critical_values(
    sim: &dyn Simulator,
    interest_prop: &Proposal,
    profiles: &[NuisanceProfile],
    stat: &dyn TestStatistic,
    b_prime: usize,
    n: usize,
    alpha: f64,
    spec: &QuantileSpec,
    seed: SeedStream,
    exec: Execution,
) -> Result<CalibrationModel> {
    check_size(b_prime)?;
    let sample = simulate_hybrid_sample(sim, interest_prop, profiles, stat, b_prime, n, seed.child(0), exec)?;
    let mut model = fit_critical_values(&sample, stat.kind(), alpha, spec, seed.child(1))?;
    model.approximate = sim.space().has_nuisance();
    Ok(model)
}

/// Hybrid p-values for the observed data the profiles were computed from.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_pvalues(
    observed: &Dataset,
    sim: &dyn Simulator,
    interest_prop: &Proposal,
    profiles: &[NuisanceProfile],
    stat: &dyn TestStatistic,
    b_prime: usize,
    n: usize,
    spec: &MeanSpec,
    seed: SeedStream,
    exec: Execution,
) -> Result<PValueModel> {
    check_size(b_prime)?;
    let sample = simulate_hybrid_sample(sim, interest_prop, profiles, stat, b_prime, n, seed.child(0), exec)?;
    let mut model = fit_pvalues(observed, &sample, stat, spec, seed.child(1))?;
    model.approximate = sim.space().has_nuisance();
    Ok(model)
}

/// `θᵢ ~ π` over the full space, statistic evaluated at the interest part.
pub fn simulate_marginal_sample(
    sim: &dyn Simulator,
    prop: &Proposal,
    stat: &dyn TestStatistic,
    b: usize,
    n: usize,
    seed: SeedStream,
    exec: Execution,
) -> Result<StatisticSample> {
    let space: &ParamSpace = sim.space();
    if prop.dim() != space.dims() || stat.null_dim() != space.interest_dims().len() {
        return Err(Error::Argument("proposal must span the full space and the statistic the interest dims".into()));
    }
    simulate_statistics(sim, stat, b, n, seed, exec, |rng| {
        let theta = prop.sample(rng);
        let phi = space.interest_of(&theta);
        (theta, phi)
    })
}

/// Cutoffs for a statistic that integrates out the nuisance: calibration
/// draws cover all of Θ, and the fit uses the interest coordinates only.
#[allow(clippy::too_many_arguments)]
pub fn marginal_critical_values(
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
    check_size(b_prime)?;
    let sample = simulate_marginal_sample(sim, prop, stat, b_prime, n, seed.child(0), exec)?;
    let mut model = fit_critical_values(&sample, stat.kind(), alpha, spec, seed.child(1))?;
    model.approximate = sim.space().has_nuisance();
    Ok(model)
}

/// P-value counterpart of [`marginal_critical_values`].
#[allow(clippy::too_many_arguments)]
pub fn marginal_pvalues(
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
    let sample = simulate_marginal_sample(sim, prop, stat, b_prime, n, seed.child(0), exec)?;
    let mut model = fit_pvalues(observed, &sample, stat, spec, seed.child(1))?;
    model.approximate = sim.space().has_nuisance();
    Ok(model)
}
