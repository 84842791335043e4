use rand::Rng;

use super::{std_normal, Proposal, Simulator};
use crate::error::{Error, Result};
use crate::numeric::{norm_cdf, norm_logpdf};
use crate::rng::SimRng;
use crate::space::ParamSpace;

/// One-dimensional two-component mixture `w·N(θ,1) + (1−w)·N(−θ,1)`.
#[derive(Debug, Clone)]
pub struct GaussianMixture1d {
    weight: f64,
    space: ParamSpace,
}

impl GaussianMixture1d {
    pub fn new(weight: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(weight > 0.0 && weight < 1.0) {
            return Err(Error::Argument(format!("mixing weight must be in (0,1), got {weight}")));
        }
        Ok(Self {
            weight,
            space: ParamSpace::new(vec![lower], vec![upper])?,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl Simulator for GaussianMixture1d {
    fn name(&self) -> &str {
        "gmm"
    }

    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn draw_into(&self, theta: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        let center = if rng.random::<f64>() < self.weight { theta[0] } else { -theta[0] };
        out[0] = center + std_normal(rng);
    }

    fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        let a = self.weight.ln() + norm_logpdf(x[0] - theta[0]);
        let b = (1.0 - self.weight).ln() + norm_logpdf(x[0] + theta[0]);
        let m = a.max(b);
        Some(m + ((a - m).exp() + (b - m).exp()).ln())
    }

    fn log_marginal(&self, x: &[f64], prop: &Proposal) -> Option<f64> {
        let (a, b) = (prop.lower()[0], prop.upper()[0]);
        let x = x[0];
        let plus = norm_cdf(x - a) - norm_cdf(x - b);
        let minus = norm_cdf(x + b) - norm_cdf(x + a);
        let dens = (self.weight * plus + (1.0 - self.weight) * minus) / (b - a);
        Some(dens.max(f64::MIN_POSITIVE).ln())
    }
}
