use rand_distr::{Distribution, Poisson};
use statrs::function::gamma::ln_gamma;

use super::{Proposal, Simulator};
use crate::error::{Error, Result};
use crate::numeric::gauss_legendre;
use crate::rng::SimRng;
use crate::space::ParamSpace;
use crate::statistics::log_sum_exp;

/// Counting experiment with a control region and a signal region:
/// `M ~ Pois(γ·b)`, `N ~ Pois(b + ε·s)` with `θ = (s, b, ε)`.
///
/// `s` is the parameter of interest, `b` and `ε` are nuisance parameters.
#[derive(Debug, Clone)]
pub struct PoissonCounting {
    gamma: f64,
    space: ParamSpace,
}

const QUAD_NODES: usize = 16;

impl PoissonCounting {
    /// Default ranges `s ∈ [0,20]`, `b ∈ [90,110]`, `ε ∈ [0.5,1]`.
    pub fn new(gamma: f64) -> Result<Self> {
        Self::with_space(
            gamma,
            ParamSpace::with_nuisance(vec![0.0, 90.0, 0.5], vec![20.0, 110.0, 1.0], vec![0])?,
        )
    }

    pub fn with_space(gamma: f64, space: ParamSpace) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Argument(format!("gamma must be positive, got {gamma}")));
        }
        if space.dims() != 3 || space.lower()[1] <= 0.0 {
            return Err(Error::Argument("poisson space is (s, b, eps) with b > 0".into()));
        }
        Ok(Self { gamma, space })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

fn ln_pois(k: f64, rate: f64) -> f64 {
    if rate <= 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k * rate.ln() - rate - ln_gamma(k + 1.0)
}

fn draw_pois(rate: f64, rng: &mut SimRng) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    Poisson::new(rate).map(|p| p.sample(rng)).unwrap_or(0.0)
}

impl Simulator for PoissonCounting {
    fn name(&self) -> &str {
        "poisson"
    }

    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn draw_into(&self, theta: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        let (s, b, eps) = (theta[0], theta[1], theta[2]);
        out[0] = draw_pois(self.gamma * b, rng);
        out[1] = draw_pois(b + eps * s, rng);
    }

    fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        let (s, b, eps) = (theta[0], theta[1], theta[2]);
        Some(ln_pois(x[0], self.gamma * b) + ln_pois(x[1], b + eps * s))
    }

    /// Gauss–Legendre product rule over the proposal box.
    fn log_marginal(&self, x: &[f64], prop: &Proposal) -> Option<f64> {
        let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..3)
            .map(|d| gauss_legendre(QUAD_NODES, prop.lower()[d], prop.upper()[d]))
            .collect();
        let mut terms = Vec::with_capacity(QUAD_NODES.pow(3));
        for (s, ws) in axes[0].0.iter().zip(&axes[0].1) {
            for (b, wb) in axes[1].0.iter().zip(&axes[1].1) {
                for (e, we) in axes[2].0.iter().zip(&axes[2].1) {
                    let ll = self.log_likelihood(x, &[*s, *b, *e])?;
                    terms.push(ll + (ws * wb * we).ln());
                }
            }
        }
        Some(log_sum_exp(&terms) - prop.volume().ln())
    }
}
