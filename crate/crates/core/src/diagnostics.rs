//! Conditional coverage diagnostics: regress coverage indicators on the
//! parameter and label each region of the parameter space.

use serde::{Deserialize, Serialize};

use crate::calibration::{check_size, Cutoff};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::learners::{fit_mean, FeatureMatrix, FittedMean, MeanRegressor, MeanSpec};
use crate::rng::SeedStream;
use crate::simulators::{simulate, Dataset, Proposal, Simulator};
use crate::space::Grid;
use crate::statistics::TestStatistic;

/// Width of the reported band in standard deviations.
pub const BAND_SIGMAS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    /// Under-coverage: the whole band lies below the nominal level.
    UC,
    /// Correct coverage: the band contains the nominal level.
    CC,
    /// Over-coverage: the whole band lies above the nominal level.
    OC,
}

impl RegionLabel {
    pub fn classify(lo: f64, hi: f64, nominal: f64) -> Self {
        if hi < nominal {
            RegionLabel::UC
        } else if lo > nominal {
            RegionLabel::OC
        } else {
            RegionLabel::CC
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub grid: Grid,
    pub mean: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub labels: Vec<RegionLabel>,
    pub nominal: f64,
    pub b_double_prime: usize,
    /// Average of the simulated coverage indicators.
    pub indicator_mean: f64,
}

/// Label shares in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFractions {
    pub uc_pct: f64,
    pub cc_pct: f64,
    pub oc_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub nominal: f64,
    pub b_double_prime: usize,
    pub grid_points: usize,
    pub indicator_mean: f64,
    pub surface_mean: f64,
    #[serde(flatten)]
    pub fractions: RegionFractions,
}

impl CoverageReport {
    /// Build a report from simulated `(θ, W)` pairs.
    pub fn fit(
        thetas: &Grid,
        indicators: &[bool],
        report_grid: &Grid,
        nominal: f64,
        spec: &MeanSpec,
        seed: SeedStream,
    ) -> Result<(Self, FittedMean)> {
        let x = FeatureMatrix::new(thetas.dim(), thetas.as_flat().to_vec())?;
        let w: Vec<f64> = indicators.iter().map(|v| f64::from(u8::from(*v))).collect();
        let model = fit_mean(spec, &x, &w, seed)?;
        let mut mean = Vec::with_capacity(report_grid.len());
        let mut band_lo = Vec::with_capacity(report_grid.len());
        let mut band_hi = Vec::with_capacity(report_grid.len());
        let mut labels = Vec::with_capacity(report_grid.len());
        for t in report_grid.points() {
            let m = model.predict(t).clamp(0.0, 1.0);
            let (lo, hi) = model.band(t, BAND_SIGMAS).unwrap_or((m, m));
            let (lo, hi) = (lo.min(m), hi.max(m));
            mean.push(m);
            band_lo.push(lo);
            band_hi.push(hi);
            labels.push(RegionLabel::classify(lo, hi, nominal));
        }
        let indicator_mean = w.iter().sum::<f64>() / w.len() as f64;
        Ok((
            Self {
                grid: report_grid.clone(),
                mean,
                band_lo,
                band_hi,
                labels,
                nominal,
                b_double_prime: indicators.len(),
                indicator_mean,
            },
            model,
        ))
    }

    pub fn summary(&self) -> CoverageSummary {
        CoverageSummary {
            nominal: self.nominal,
            b_double_prime: self.b_double_prime,
            grid_points: self.grid.len(),
            indicator_mean: self.indicator_mean,
            surface_mean: self.mean.iter().sum::<f64>() / self.mean.len() as f64,
            fractions: classify_regions(self, self.nominal),
        }
    }

    /// Share of report points whose band contains `level`.
    pub fn band_contains_fraction(&self, level: f64) -> f64 {
        let hits = self.band_lo.iter().zip(&self.band_hi).filter(|(lo, hi)| **lo <= level && level <= **hi).count();
        hits as f64 / self.mean.len() as f64
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.grid.dim()).map(|j| format!("theta_{j}")).collect();
        header.extend(["mean", "lo", "hi", "label"].map(String::from));
        wtr.write_record(&header)?;
        for (j, t) in self.grid.points().enumerate() {
            let mut row: Vec<String> = t.iter().map(|v| v.to_string()).collect();
            row.push(self.mean[j].to_string());
            row.push(self.band_lo[j].to_string());
            row.push(self.band_hi[j].to_string());
            row.push(format!("{:?}", self.labels[j]));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Percentages of report points labelled UC, CC and OC against `nominal`.
pub fn classify_regions(report: &CoverageReport, nominal: f64) -> RegionFractions {
    let n = report.mean.len() as f64;
    let mut counts = [0usize; 3];
    for (lo, hi) in report.band_lo.iter().zip(&report.band_hi) {
        match RegionLabel::classify(*lo, *hi, nominal) {
            RegionLabel::UC => counts[0] += 1,
            RegionLabel::CC => counts[1] += 1,
            RegionLabel::OC => counts[2] += 1,
        }
    }
    RegionFractions {
        uc_pct: 100.0 * counts[0] as f64 / n,
        cc_pct: 100.0 * counts[1] as f64 / n,
        oc_pct: 100.0 * counts[2] as f64 / n,
    }
}

/// Simulate `θ'ᵢ ~ π`, `D'ᵢ ~ F_θ'ᵢ` and record the coverage indicator
/// `covered(D'ᵢ, θ'ᵢ)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_indicators<F>(
    sim: &dyn Simulator,
    prop: &Proposal,
    b: usize,
    n: usize,
    seed: SeedStream,
    exec: Execution,
    covered: F,
) -> Result<(Grid, Vec<bool>)>
where
    F: Fn(&Dataset, &[f64]) -> Result<bool> + Sync,
{
    if n == 0 {
        return Err(Error::Argument("sample size n must be positive".into()));
    }
    let rows = exec.try_map(b, |i| {
        let mut rng = seed.child(i as u64).rng();
        let theta = prop.sample(&mut rng);
        let data = simulate(sim, &theta, n, &mut rng);
        let w = covered(&data, &theta)?;
        Ok::<_, Error>((theta, w))
    })?;
    let mut flat = Vec::with_capacity(b * prop.dim());
    let mut ws = Vec::with_capacity(b);
    for (t, w) in rows {
        flat.extend(t);
        ws.push(w);
    }
    Ok((Grid::from_flat(prop.dim(), flat)?, ws))
}

/// Coverage of an arbitrary set-construction procedure, summarised by a
/// regression of the indicators on the full parameter.
#[allow(clippy::too_many_arguments)]
pub fn estimate_coverage_with<F>(
    sim: &dyn Simulator,
    prop: &Proposal,
    b_double_prime: usize,
    n: usize,
    nominal: f64,
    spec: &MeanSpec,
    report_grid: &Grid,
    seed: SeedStream,
    exec: Execution,
    covered: F,
) -> Result<CoverageReport>
where
    F: Fn(&Dataset, &[f64]) -> Result<bool> + Sync,
{
    check_size(b_double_prime)?;
    if report_grid.dim() != prop.dim() {
        return Err(Error::Argument("report grid must span the full parameter".into()));
    }
    let (thetas, ws) = simulate_indicators(sim, prop, b_double_prime, n, seed.child(0), exec, covered)?;
    Ok(CoverageReport::fit(&thetas, &ws, report_grid, nominal, spec, seed.child(1))?.0)
}

/// Coverage of the amortised sets `{θ : λ(D;θ) ≥ Ĉ_θ}`. For statistics on
/// the interest parameter only, the indicator tests the interest part of
/// the true parameter.
#[allow(clippy::too_many_arguments)]
pub fn estimate_coverage(
    sim: &dyn Simulator,
    prop: &Proposal,
    stat: &dyn TestStatistic,
    cutoff: &dyn Cutoff,
    b_double_prime: usize,
    n: usize,
    nominal: f64,
    spec: &MeanSpec,
    report_grid: &Grid,
    seed: SeedStream,
    exec: Execution,
) -> Result<CoverageReport> {
    let space = sim.space();
    let project = stat.null_dim() != space.dims();
    if project && stat.null_dim() != space.interest_dims().len() {
        return Err(Error::Argument("statistic dimension matches neither the full nor the interest space".into()));
    }
    estimate_coverage_with(sim, prop, b_double_prime, n, nominal, spec, report_grid, seed, exec, |data, theta| {
        let null = if project { space.interest_of(theta) } else { theta.to_vec() };
        Ok(stat.evaluate(data, &null)? >= cutoff.cutoff(&null))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{chi2_cutoff, ConstantCutoff};
    use crate::learners::{fits_on_this_thread, Basis};
    use crate::simulators::IsotropicGaussian;
    use crate::statistics::ExactLrtMvg;
    use rand::Rng;

    fn logistic() -> MeanSpec {
        MeanSpec::Logistic { basis: Basis::Spline { knots: 4 }, ridge: 1e-4 }
    }

    #[test]
    fn never_rejecting_is_all_overcoverage() {
        let sim = IsotropicGaussian::new(1, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let grid = Grid::lattice(&[-5.0], &[5.0], 21);
        let r = estimate_coverage(&sim, &prop, &ExactLrtMvg::new(1), &ConstantCutoff { value: -1e300 }, 200, 5, 0.9, &logistic(), &grid, SeedStream::new(1), Execution::Parallel).unwrap();
        assert!(r.mean.iter().all(|m| *m == 1.0));
        let f = classify_regions(&r, 0.9);
        assert_eq!((f.uc_pct, f.cc_pct, f.oc_pct), (0.0, 0.0, 100.0));
    }

    #[test]
    fn exact_test_is_correctly_covered() {
        let sim = IsotropicGaussian::new(2, -5.0, 5.0).unwrap();
        let prop = Proposal::uniform(sim.space());
        let grid = Grid::lattice(&[-5.0, -5.0], &[5.0, 5.0], 11);
        let before = fits_on_this_thread();
        let cut = chi2_cutoff(0.1, 2).unwrap();
        let r = estimate_coverage(&sim, &prop, &ExactLrtMvg::new(2), &cut, 1000, 10, 0.9, &logistic(), &grid, SeedStream::new(2), Execution::Sequential).unwrap();
        assert_eq!(fits_on_this_thread(), before + 1);
        let f = classify_regions(&r, 0.9);
        assert!(f.cc_pct >= 95.0, "{f:?}");
        assert!((r.summary().surface_mean - r.indicator_mean).abs() < 0.02);
        for j in 0..r.mean.len() {
            assert!(r.band_lo[j] <= r.mean[j] && r.mean[j] <= r.band_hi[j]);
        }
    }

    #[test]
    fn bernoulli_targets_give_correct_coverage() {
        let mut rng = SeedStream::new(3).rng();
        let thetas: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..5.0)).collect();
        let ws: Vec<bool> = (0..1000).map(|_| rng.random::<f64>() < 0.9).collect();
        let grid = Grid::lattice(&[0.0], &[5.0], 51);
        let linear = MeanSpec::Logistic { basis: Basis::Polynomial { degree: 1 }, ridge: 1e-4 };
        let (r, _) = CoverageReport::fit(&Grid::from_flat(1, thetas).unwrap(), &ws, &grid, 0.9, &linear, SeedStream::new(0)).unwrap();
        let inside = r.mean.iter().filter(|m| (0.88..=0.92).contains(*m)).count();
        assert!(inside as f64 >= 0.95 * 51.0, "{:?}", r.mean);
        assert!(r.band_contains_fraction(0.9) >= 0.9);
        assert!(classify_regions(&r, 0.9).cc_pct >= 90.0);
    }

    #[test]
    fn label_rules() {
        assert_eq!(RegionLabel::classify(0.8, 0.85, 0.9), RegionLabel::UC);
        assert_eq!(RegionLabel::classify(0.91, 0.95, 0.9), RegionLabel::OC);
        assert_eq!(RegionLabel::classify(0.85, 0.95, 0.9), RegionLabel::CC);
        assert_eq!(RegionLabel::classify(0.9, 0.9, 0.9), RegionLabel::CC);
    }

    #[test]
    fn report_csv_columns() {
        let grid = Grid::lattice(&[0.0], &[1.0], 2);
        let r = CoverageReport {
            grid,
            mean: vec![0.9, 0.7],
            band_lo: vec![0.85, 0.6],
            band_hi: vec![0.95, 0.8],
            labels: vec![RegionLabel::CC, RegionLabel::UC],
            nominal: 0.9,
            b_double_prime: 100,
            indicator_mean: 0.8,
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "theta_0,mean,lo,hi,label\n0,0.9,0.85,0.95,CC\n1,0.7,0.6,0.8,UC\n");
        let s = serde_json::to_value(r.summary()).unwrap();
        assert_eq!(s["uc_pct"], 50.0);
    }
}
