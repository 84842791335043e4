//! Odds `O(x;θ) = P(Y=1|θ,x) / P(Y=0|θ,x)` from a fitted classifier or from
//! analytic densities, plus the two loss functionals used to compare odds
//! models.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{Classifier, FittedClassifier, QuadraticLogit, PROB_CLAMP};
use crate::numeric::{mean_se, softplus};
use crate::rng::SeedStream;
use crate::simulators::{Dataset, LabeledSample, Proposal, Reference, Simulator};
use crate::space::{Grid, ParamSpace};

/// Log-odds bound implied by clamping probabilities to `[c, 1-c]`.
pub fn logit_bound(clamp: f64) -> f64 {
    ((1.0 - clamp) / clamp).ln()
}

pub trait OddsModel: Send + Sync {
    fn space(&self) -> &ParamSpace;

    /// Bernoulli parameter `p` the classifier was trained with.
    fn training_p(&self) -> f64;

    fn reference_is_marginal(&self) -> bool;

    /// `ln O(x;θ)`.
    fn log_odds(&self, x: &[f64], theta: &[f64]) -> f64;

    /// `Σᵢ ln O(xᵢ;θ)`.
    fn sum_log_odds(&self, data: &Dataset, theta: &[f64]) -> f64 {
        data.rows().map(|x| self.log_odds(x, theta)).sum()
    }

    /// `Σᵢ ln O(xᵢ;θⱼ)` for every point of `grid`.
    fn sum_log_odds_grid(&self, data: &Dataset, grid: &Grid) -> Vec<f64> {
        grid.points().map(|t| self.sum_log_odds(data, t)).collect()
    }
}

/// Odds from a fitted classifier on features `(θ, x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedOdds {
    classifier: FittedClassifier,
    space: ParamSpace,
    p: f64,
    clamp: f64,
    reference_is_marginal: bool,
}

impl FittedOdds {
    pub fn new(classifier: FittedClassifier, space: ParamSpace, p: f64, reference: &Reference) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Argument(format!("training p must be in (0,1), got {p}")));
        }
        Ok(Self { classifier, space, p, clamp: PROB_CLAMP, reference_is_marginal: reference.is_marginal() })
    }

    pub fn classifier(&self) -> &FittedClassifier {
        &self.classifier
    }

    pub fn probability(&self, x: &[f64], theta: &[f64]) -> f64 {
        crate::numeric::sigmoid(self.log_odds(x, theta))
    }

    fn features(theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(theta.len() + x.len());
        z.extend_from_slice(theta);
        z.extend_from_slice(x);
        z
    }

    /// Per-observation terms of a quadratic logit that do not depend on θ.
    fn quadratic_prep(q: &QuadraticLogit, td: usize, data: &Dataset) -> Vec<f64> {
        let p = q.dim;
        data.rows()
            .map(|x| {
                let mut acc = 0.0;
                for (a, xa) in x.iter().enumerate() {
                    let i = td + a;
                    acc += q.b[i] * xa;
                    for (b, xb) in x.iter().enumerate() {
                        acc += q.a[i * p + td + b] * xa * xb;
                    }
                }
                acc
            })
            .collect()
    }

    fn quadratic_sum(&self, q: &QuadraticLogit, prep: &[f64], data: &Dataset, theta: &[f64]) -> f64 {
        let p = q.dim;
        let td = theta.len();
        let mut konst = q.c;
        for i in 0..td {
            konst += q.b[i] * theta[i];
            for j in 0..td {
                konst += q.a[i * p + j] * theta[i] * theta[j];
            }
        }
        let slope: Vec<f64> = (0..p - td)
            .map(|a| (0..td).map(|i| 2.0 * q.a[i * p + td + a] * theta[i]).sum())
            .collect();
        let bound = logit_bound(self.clamp);
        data.rows()
            .zip(prep)
            .map(|(x, r)| {
                let l = konst + r + slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>();
                l.clamp(-bound, bound)
            })
            .sum()
    }
}

impl OddsModel for FittedOdds {
    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn training_p(&self) -> f64 {
        self.p
    }

    fn reference_is_marginal(&self) -> bool {
        self.reference_is_marginal
    }

    fn log_odds(&self, x: &[f64], theta: &[f64]) -> f64 {
        let bound = logit_bound(self.clamp);
        self.classifier.logit(&Self::features(theta, x)).clamp(-bound, bound)
    }

    fn sum_log_odds(&self, data: &Dataset, theta: &[f64]) -> f64 {
        match self.classifier.quadratic_logit() {
            Some(q) => self.quadratic_sum(q, &Self::quadratic_prep(q, theta.len(), data), data, theta),
            None => data.rows().map(|x| self.log_odds(x, theta)).sum(),
        }
    }

    fn sum_log_odds_grid(&self, data: &Dataset, grid: &Grid) -> Vec<f64> {
        match self.classifier.quadratic_logit() {
            Some(q) => {
                let prep = Self::quadratic_prep(q, grid.dim(), data);
                grid.points().map(|t| self.quadratic_sum(q, &prep, data, t)).collect()
            }
            None => grid.points().map(|t| self.sum_log_odds(data, t)).collect(),
        }
    }
}

/// Odds computed from the simulator's analytic likelihood and reference
/// density: `ln O = ln(p/(1-p)) + ln f(x|θ) − ln g(x)`.
#[derive(Debug, Clone)]
pub struct OracleOdds {
    sim: Arc<dyn Simulator>,
    prop: Proposal,
    reference: Reference,
    p: f64,
    /// Optional probability clamp; oracle odds are unclamped by default.
    clamp: Option<f64>,
}

impl OracleOdds {
    pub fn new(sim: Arc<dyn Simulator>, prop: Proposal, reference: Reference, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Argument(format!("p must be in (0,1), got {p}")));
        }
        let probe = vec![0.0; sim.obs_dim()];
        let mid: Vec<f64> = prop.lower().iter().zip(prop.upper()).map(|(a, b)| 0.5 * (a + b)).collect();
        if sim.log_likelihood(&probe, &mid).is_none() || reference.log_density(sim.as_ref(), &prop, &probe).is_none() {
            return Err(Error::Argument(format!("simulator `{}` has no closed-form densities", sim.name())));
        }
        Ok(Self { sim, prop, reference, p, clamp: None })
    }

    pub fn with_clamp(mut self, clamp: f64) -> Self {
        self.clamp = Some(clamp);
        self
    }

    fn log_prior_odds(&self) -> f64 {
        (self.p / (1.0 - self.p)).ln()
    }

    fn log_reference(&self, x: &[f64]) -> f64 {
        self.reference.log_density(self.sim.as_ref(), &self.prop, x).unwrap_or(f64::NAN)
    }

    fn finish(&self, l: f64) -> f64 {
        match self.clamp {
            Some(c) => {
                let b = logit_bound(c);
                l.clamp(-b, b)
            }
            None => l,
        }
    }
}

impl OddsModel for OracleOdds {
    fn space(&self) -> &ParamSpace {
        self.sim.space()
    }

    fn training_p(&self) -> f64 {
        self.p
    }

    fn reference_is_marginal(&self) -> bool {
        self.reference.is_marginal()
    }

    fn log_odds(&self, x: &[f64], theta: &[f64]) -> f64 {
        let lf = self.sim.log_likelihood(x, theta).unwrap_or(f64::NAN);
        self.finish(self.log_prior_odds() + lf - self.log_reference(x))
    }

    fn sum_log_odds_grid(&self, data: &Dataset, grid: &Grid) -> Vec<f64> {
        let lg: Vec<f64> = data.rows().map(|x| self.log_reference(x)).collect();
        let lp = self.log_prior_odds();
        grid.points()
            .map(|t| {
                data.rows()
                    .zip(&lg)
                    .map(|(x, g)| self.finish(lp + self.sim.log_likelihood(x, t).unwrap_or(f64::NAN) - g))
                    .sum()
            })
            .collect()
    }
}

fn check_theta(model: &dyn OddsModel, theta: &[f64]) -> Result<()> {
    model.space().check(theta)
}

/// `O(x;θ)`.
pub fn odds(model: &dyn OddsModel, x: &[f64], theta: &[f64]) -> Result<f64> {
    check_theta(model, theta)?;
    Ok(model.log_odds(x, theta).exp())
}

/// `O(x;θ₀) / O(x;θ₁)`.
pub fn odds_ratio(model: &dyn OddsModel, x: &[f64], theta0: &[f64], theta1: &[f64]) -> Result<f64> {
    check_theta(model, theta0)?;
    check_theta(model, theta1)?;
    Ok((model.log_odds(x, theta0) - model.log_odds(x, theta1)).exp())
}

/// Mean held-out cross-entropy of the class probabilities implied by the
/// odds, computed from log-probabilities.
pub fn cross_entropy(model: &dyn OddsModel, heldout: &LabeledSample) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::Argument("held-out sample is empty".into()));
    }
    let total: f64 = heldout
        .iter()
        .map(|ex| {
            let l = model.log_odds(ex.x, ex.theta);
            // −ln P = softplus(−l), −ln(1−P) = softplus(l)
            if ex.y {
                softplus(-l)
            } else {
                softplus(l)
            }
        })
        .sum();
    Ok(total / heldout.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsLoss {
    pub estimate: f64,
    pub se: f64,
}

pub const MIN_ODDS_LOSS_DRAWS: usize = 1000;

/// Monte Carlo estimate of `∫∫ (Ô(x;θ) − O(x;θ))² dG(x) dπ(θ)` from i.i.d.
/// pairs `x ~ G`, `θ ~ π`.
#[allow(clippy::too_many_arguments)]
pub fn integrated_odds_loss(
    model: &dyn OddsModel,
    target: &dyn OddsModel,
    sim: &dyn Simulator,
    reference: &Reference,
    prop: &Proposal,
    mc_draws: usize,
    seed: SeedStream,
) -> Result<OddsLoss> {
    if mc_draws < MIN_ODDS_LOSS_DRAWS {
        return Err(Error::Argument(format!("integrated odds loss needs at least {MIN_ODDS_LOSS_DRAWS} draws")));
    }
    let mut rng = seed.rng();
    let mut theta = vec![0.0; prop.dim()];
    let mut scratch = vec![0.0; prop.dim()];
    let mut x = vec![0.0; sim.obs_dim()];
    let mut sq = Vec::with_capacity(mc_draws);
    for _ in 0..mc_draws {
        reference.draw_into(sim, prop, &mut rng, &mut scratch, &mut x);
        prop.sample_into(&mut rng, &mut theta);
        let d = model.log_odds(&x, &theta).exp() - target.log_odds(&x, &theta).exp();
        sq.push(d * d);
    }
    let (estimate, se) = mean_se(&sq);
    if !estimate.is_finite() {
        return Err(Error::Numeric("integrated odds loss is not finite".into()));
    }
    Ok(OddsLoss { estimate, se })
}

/// One row of a model-comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub classifier: String,
    #[serde(rename = "B")]
    pub b: usize,
    pub ce_loss: f64,
    pub odds_loss: Option<f64>,
    pub se: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit_classifier, ClassifierSpec, FeatureMatrix};
    use crate::numeric::norm_logpdf;
    use crate::simulators::{generate_labeled_sample, IsotropicGaussian};
    use crate::space::linspace;
    use crate::exec::Execution;

    fn mvg_oracle(d: usize) -> (Arc<dyn Simulator>, OracleOdds) {
        let sim: Arc<dyn Simulator> = Arc::new(IsotropicGaussian::new(d, -5.0, 5.0).unwrap());
        let prop = Proposal::uniform(sim.space());
        let o = OracleOdds::new(sim.clone(), prop, Reference::Marginal, 0.5).unwrap();
        (sim, o)
    }

    /// Constant log-odds shifted by a fixed amount from another model.
    struct Shifted<'a> {
        inner: &'a dyn OddsModel,
        shift: f64,
    }

    impl OddsModel for Shifted<'_> {
        fn space(&self) -> &ParamSpace {
            self.inner.space()
        }
        fn training_p(&self) -> f64 {
            0.5
        }
        fn reference_is_marginal(&self) -> bool {
            true
        }
        fn log_odds(&self, x: &[f64], theta: &[f64]) -> f64 {
            (self.inner.log_odds(x, theta).exp() + self.shift).ln()
        }
    }

    struct Constant(ParamSpace, f64);

    impl OddsModel for Constant {
        fn space(&self) -> &ParamSpace {
            &self.0
        }
        fn training_p(&self) -> f64 {
            0.5
        }
        fn reference_is_marginal(&self) -> bool {
            true
        }
        fn log_odds(&self, _: &[f64], _: &[f64]) -> f64 {
            self.1
        }
    }

    #[test]
    fn indifferent_classifier_has_unit_odds() {
        let c = Constant(ParamSpace::new(vec![0.0], vec![1.0]).unwrap(), 0.0);
        assert_eq!(odds(&c, &[0.3], &[0.5]).unwrap(), 1.0);
        assert!(odds(&c, &[0.3], &[1.5]).is_err());
    }

    #[test]
    fn oracle_matches_density_ratio() {
        let (_, o) = mvg_oracle(1);
        for (x, t) in [(0.0, 0.0), (1.3, -2.0), (4.9, 4.0)] {
            // marginal density by midpoint quadrature over θ
            let grid = linspace(-5.0, 5.0, 200_001);
            let h = grid[1] - grid[0];
            let g: f64 = grid.iter().map(|th| norm_logpdf(x - th).exp() * h / 10.0).sum::<f64>()
                - 0.5 * h / 10.0 * (norm_logpdf(x + 5.0).exp() + norm_logpdf(x - 5.0).exp());
            let truth = norm_logpdf(x - t).exp() / g;
            let got = odds(&o, &[x], &[t]).unwrap();
            assert!((got / truth - 1.0).abs() < 1e-6, "{got} vs {truth}");
        }
    }

    #[test]
    fn odds_peak_at_observation() {
        let (_, o) = mvg_oracle(1);
        let grid = linspace(-2.0, 2.0, 401);
        let x = 0.37;
        let best = grid.iter().copied().max_by(|a, b| o.log_odds(&[x], &[*a]).total_cmp(&o.log_odds(&[x], &[*b]))).unwrap();
        assert!((best - x).abs() <= 0.005 + 1e-12);
    }

    #[test]
    fn odds_ratio_identities() {
        let (_, o) = mvg_oracle(2);
        let x = [0.4, -1.0];
        let (a, b) = ([1.0, 0.0], [-0.5, 2.0]);
        assert!((odds_ratio(&o, &x, &a, &a).unwrap() - 1.0).abs() < 1e-15);
        let r = odds_ratio(&o, &x, &a, &b).unwrap() * odds_ratio(&o, &x, &b, &a).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let lr = (norm_logpdf(x[0] - a[0]) + norm_logpdf(x[1] - a[1]) - norm_logpdf(x[0] - b[0]) - norm_logpdf(x[1] - b[1])).exp();
        assert!((odds_ratio(&o, &x, &a, &b).unwrap() / lr - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_of_constant_half_is_ln2() {
        let (sim, _) = mvg_oracle(1);
        let prop = Proposal::uniform(sim.space());
        let s = generate_labeled_sample(sim.as_ref(), &prop, &Reference::Marginal, 200, 0.5, SeedStream::new(1), Execution::Sequential).unwrap();
        let c = Constant(sim.space().clone(), 0.0);
        assert!((cross_entropy(&c, &s).unwrap() - 2f64.ln()).abs() < 1e-12);
        let sure = Constant(sim.space().clone(), logit_bound(PROB_CLAMP));
        let ys = s.labels().to_vec();
        let all_pos = LabeledSample::new(1, 1, s.iter().map(|e| e.theta[0]).collect(), s.iter().map(|e| e.x[0]).collect(), vec![true; ys.len()]).unwrap();
        assert!(cross_entropy(&sure, &all_pos).unwrap() < 2e-6);
    }

    #[test]
    fn odds_loss_self_and_offset() {
        let (sim, o) = mvg_oracle(1);
        let prop = Proposal::uniform(sim.space());
        let l = integrated_odds_loss(&o, &o, sim.as_ref(), &Reference::Marginal, &prop, 2000, SeedStream::new(2)).unwrap();
        assert_eq!(l.estimate, 0.0);
        let s = Shifted { inner: &o, shift: 0.3 };
        let l = integrated_odds_loss(&s, &o, sim.as_ref(), &Reference::Marginal, &prop, 2000, SeedStream::new(2)).unwrap();
        assert!((l.estimate - 0.09).abs() < 1e-9);
        assert!(integrated_odds_loss(&o, &o, sim.as_ref(), &Reference::Marginal, &prop, 10, SeedStream::new(2)).is_err());
    }

    #[test]
    fn odds_times_complement_is_probability() {
        let (sim, _) = mvg_oracle(1);
        let prop = Proposal::uniform(sim.space());
        let s = generate_labeled_sample(sim.as_ref(), &prop, &Reference::Marginal, 2000, 0.5, SeedStream::new(3), Execution::Sequential).unwrap();
        let (f, _) = s.feature_matrix();
        let x = FeatureMatrix::new(2, f).unwrap();
        let c = fit_classifier(&ClassifierSpec::default(), &x, s.labels(), SeedStream::new(0)).unwrap();
        let m = FittedOdds::new(c, sim.space().clone(), 0.5, &Reference::Marginal).unwrap();
        for (x, t) in [(0.0, 0.0), (3.0, -1.0), (-4.0, 4.0)] {
            let p = m.probability(&[x], &[t]);
            let o = odds(&m, &[x], &[t]).unwrap();
            assert!((o * (1.0 - p) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_fast_path_matches_pointwise() {
        let (sim, _) = mvg_oracle(2);
        let prop = Proposal::uniform(sim.space());
        let s = generate_labeled_sample(sim.as_ref(), &prop, &Reference::Marginal, 3000, 0.5, SeedStream::new(4), Execution::Sequential).unwrap();
        let (f, _) = s.feature_matrix();
        let x = FeatureMatrix::new(4, f).unwrap();
        let c = fit_classifier(&ClassifierSpec::default(), &x, s.labels(), SeedStream::new(0)).unwrap();
        let m = FittedOdds::new(c, sim.space().clone(), 0.5, &Reference::Marginal).unwrap();
        let data = Dataset::from_rows(&[vec![0.1, 0.2], vec![-1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        let grid = Grid::lattice(&[-5.0, -5.0], &[5.0, 5.0], 7);
        let fast = m.sum_log_odds_grid(&data, &grid);
        for (j, t) in grid.points().enumerate() {
            let slow: f64 = data.rows().map(|x| m.log_odds(x, t)).sum();
            assert!((fast[j] - slow).abs() < 1e-9 * (1.0 + slow.abs()));
        }
    }
}
