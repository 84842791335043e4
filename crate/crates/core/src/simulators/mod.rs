//! Forward simulators, proposal distributions and the labeled / marginal
//! sample generators that feed every other module.

mod gmm;
mod mvg;
mod poisson;
mod proposal;
mod sampling;

use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{SeedStream, SimRng};
use crate::space::ParamSpace;

pub use gmm::GaussianMixture1d;
pub use mvg::IsotropicGaussian;
pub use poisson::PoissonCounting;
pub use proposal::Proposal;
pub use sampling::{
    generate_labeled_sample, sample_marginal, LabeledExample, LabeledSample, Reference,
};

/// Stochastic forward model `F_θ`.
///
/// Implementations must be pure given `(θ, rng state)`; they are shared
/// across worker threads.
pub trait Simulator: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn space(&self) -> &ParamSpace;

    /// Dimension of a single observation.
    fn obs_dim(&self) -> usize;

    /// Draw one observation from `F_θ` into `out` (length `obs_dim`).
    /// `theta` is assumed to be inside the space.
    fn draw_into(&self, theta: &[f64], rng: &mut SimRng, out: &mut [f64]);

    /// Log density of one observation, when it is available in closed form.
    fn log_likelihood(&self, _x: &[f64], _theta: &[f64]) -> Option<f64> {
        None
    }

    /// Log density of the marginal `∫ f(x|θ) dπ(θ)` of one observation.
    fn log_marginal(&self, _x: &[f64], _prop: &Proposal) -> Option<f64> {
        None
    }
}

/// `n` i.i.d. observations, one row each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::Argument(format!(
                "dataset needs at least one row of dimension {dim} (got {} values)",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite observation in row {}", bad / dim)));
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Argument("ragged dataset rows".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((0..self.dim).map(|j| format!("x_{j}")))?;
        for r in self.rows() {
            out.write_record(r.iter().map(f64::to_string))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let dim = rdr.headers()?.len();
        let mut values = Vec::new();
        for rec in rdr.records() {
            for field in rec?.iter() {
                values.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::Argument(format!("bad number `{field}` in dataset: {e}"))
                })?);
            }
        }
        Self::new(dim, values)
    }
}

/// Simulate `n` observations from `F_θ` with a reproducible stream.
pub fn sample_forward(
    sim: &dyn Simulator,
    theta: &[f64],
    n: usize,
    seed: SeedStream,
) -> Result<Dataset> {
    sim.space().check(theta)?;
    if n == 0 {
        return Err(Error::Argument("sample size n must be positive".into()));
    }
    let mut rng = seed.rng();
    Ok(simulate(sim, theta, n, &mut rng))
}

/// Unchecked variant used inside simulation loops.
pub(crate) fn simulate(sim: &dyn Simulator, theta: &[f64], n: usize, rng: &mut SimRng) -> Dataset {
    let d = sim.obs_dim();
    let mut values = vec![0.0; n * d];
    for row in values.chunks_exact_mut(d) {
        sim.draw_into(theta, rng, row);
    }
    Dataset { dim: d, values }
}

pub(crate) fn std_normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Built-in simulators, selectable from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimulatorSpec {
    Gmm {
        #[serde(default = "default_weight")]
        mixing_weight: f64,
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
    Mvg {
        dim: usize,
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
    },
    Poisson {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
}

fn default_weight() -> f64 {
    0.5
}

fn default_gamma() -> f64 {
    1.0
}

impl SimulatorSpec {
    pub fn build(&self) -> Result<Box<dyn Simulator>> {
        Ok(match self {
            SimulatorSpec::Gmm { mixing_weight, lower, upper } => Box::new(GaussianMixture1d::new(
                *mixing_weight,
                lower.unwrap_or(0.0),
                upper.unwrap_or(5.0),
            )?),
            SimulatorSpec::Mvg { dim, lower, upper } => Box::new(IsotropicGaussian::new(
                *dim,
                lower.unwrap_or(-5.0),
                upper.unwrap_or(5.0),
            )?),
            SimulatorSpec::Poisson { gamma } => Box::new(PoissonCounting::new(*gamma)?),
        })
    }
}
