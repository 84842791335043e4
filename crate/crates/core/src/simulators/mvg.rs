use super::{std_normal, Proposal, Simulator};
use crate::error::{Error, Result};
use crate::numeric::{ln_norm_interval, LN_SQRT_2PI};
use crate::rng::SimRng;
use crate::space::ParamSpace;

/// `X ~ N(θ, I_d)` with a box parameter space `[lower, upper]^d`.
#[derive(Debug, Clone)]
pub struct IsotropicGaussian {
    space: ParamSpace,
}

impl IsotropicGaussian {
    pub fn new(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        Ok(Self {
            space: ParamSpace::new(vec![lower; dim], vec![upper; dim])?,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dims()
    }
}

impl Simulator for IsotropicGaussian {
    fn name(&self) -> &str {
        "mvg"
    }

    fn space(&self) -> &ParamSpace {
        &self.space
    }

    fn obs_dim(&self) -> usize {
        self.space.dims()
    }

    fn draw_into(&self, theta: &[f64], rng: &mut SimRng, out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(theta) {
            *o = t + std_normal(rng);
        }
    }

    fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> Option<f64> {
        let sq: f64 = x.iter().zip(theta).map(|(a, b)| (a - b).powi(2)).sum();
        Some(-0.5 * sq - x.len() as f64 * LN_SQRT_2PI)
    }

    /// Product over coordinates of `(Φ(b−x) − Φ(a−x)) / (b − a)`.
    fn log_marginal(&self, x: &[f64], prop: &Proposal) -> Option<f64> {
        Some(
            x.iter()
                .zip(prop.lower().iter().zip(prop.upper()))
                .map(|(xi, (a, b))| ln_norm_interval(a - xi, b - xi) - (b - a).ln())
                .sum(),
        )
    }
}
