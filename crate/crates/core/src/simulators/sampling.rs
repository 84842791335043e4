use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Proposal, Simulator};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{SeedStream, SimRng};

/// Reference distribution `G` that simulator draws are contrasted with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    /// The marginal of `F_θ` under the proposal.
    #[default]
    Marginal,
    /// Uniform on a box in observation space.
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
}

impl Reference {
    pub fn is_marginal(&self) -> bool {
        matches!(self, Reference::Marginal)
    }

    pub(crate) fn draw_into(
        &self,
        sim: &dyn Simulator,
        prop: &Proposal,
        rng: &mut SimRng,
        theta_scratch: &mut [f64],
        out: &mut [f64],
    ) {
        match self {
            Reference::Marginal => {
                prop.sample_into(rng, theta_scratch);
                sim.draw_into(theta_scratch, rng, out);
            }
            Reference::Uniform { lower, upper } => {
                for (o, (lo, hi)) in out.iter_mut().zip(lower.iter().zip(upper)) {
                    *o = lo + (hi - lo) * rng.random::<f64>();
                }
            }
        }
    }

    /// Log density of one observation under `G`, when available.
    pub fn log_density(&self, sim: &dyn Simulator, prop: &Proposal, x: &[f64]) -> Option<f64> {
        match self {
            Reference::Marginal => sim.log_marginal(x, prop),
            Reference::Uniform { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(v, (lo, hi))| v >= lo && v <= hi);
                let vol: f64 = lower.iter().zip(upper).map(|(lo, hi)| hi - lo).product();
                Some(if inside { -vol.ln() } else { f64::NEG_INFINITY })
            }
        }
    }

    fn validate(&self, sim: &dyn Simulator) -> Result<()> {
        if let Reference::Uniform { lower, upper } = self {
            if lower.len() != sim.obs_dim() || upper.len() != sim.obs_dim() {
                return Err(Error::Argument("uniform reference box has wrong dimension".into()));
            }
            if lower.iter().zip(upper).any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::Argument("uniform reference box must have positive width".into()));
            }
        }
        Ok(())
    }
}

/// One draw from the marginal `F_X`: `θ ~ π`, then `X ~ F_θ`.
pub fn sample_marginal(sim: &dyn Simulator, prop: &Proposal, seed: SeedStream) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut theta = vec![0.0; prop.dim()];
    let mut x = vec![0.0; sim.obs_dim()];
    Reference::Marginal.draw_into(sim, prop, &mut rng, &mut theta, &mut x);
    x
}

/// One labeled training example for odds estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample<'a> {
    pub theta: &'a [f64],
    pub x: &'a [f64],
    pub y: bool,
}

/// Labeled sample `T = {(θᵢ, Xᵢ, Yᵢ)}` stored column-block-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    theta_dim: usize,
    x_dim: usize,
    thetas: Vec<f64>,
    xs: Vec<f64>,
    ys: Vec<bool>,
}

impl LabeledSample {
    pub fn new(theta_dim: usize, x_dim: usize, thetas: Vec<f64>, xs: Vec<f64>, ys: Vec<bool>) -> Result<Self> {
        if thetas.len() != theta_dim * ys.len() || xs.len() != x_dim * ys.len() {
            return Err(Error::Argument("labeled sample blocks have inconsistent lengths".into()));
        }
        Ok(Self { theta_dim, x_dim, thetas, xs, ys })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn get(&self, i: usize) -> LabeledExample<'_> {
        LabeledExample {
            theta: &self.thetas[i * self.theta_dim..(i + 1) * self.theta_dim],
            x: &self.xs[i * self.x_dim..(i + 1) * self.x_dim],
            y: self.ys[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = LabeledExample<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn labels(&self) -> &[bool] {
        &self.ys
    }

    /// Classifier features `(θ, x)` of example `i`.
    pub fn features(&self, i: usize) -> Vec<f64> {
        let e = self.get(i);
        let mut f = Vec::with_capacity(self.theta_dim + self.x_dim);
        f.extend_from_slice(e.theta);
        f.extend_from_slice(e.x);
        f
    }

    /// Row-major feature matrix and label vector.
    pub fn feature_matrix(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.theta_dim + self.x_dim;
        let mut feats = Vec::with_capacity(self.len() * p);
        for i in 0..self.len() {
            feats.extend(self.features(i));
        }
        let y = self.ys.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        (feats, y)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> = (0..self.theta_dim)
            .map(|j| format!("theta_{j}"))
            .chain((0..self.x_dim).map(|j| format!("x_{j}")))
            .chain(std::iter::once("y".to_string()))
            .collect();
        out.write_record(&header)?;
        for e in self.iter() {
            let row: Vec<String> = e
                .theta
                .iter()
                .chain(e.x)
                .map(f64::to_string)
                .chain(std::iter::once(u8::from(e.y).to_string()))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, theta_dim: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let width = rdr.headers()?.len();
        if width < theta_dim + 2 {
            return Err(Error::Argument("labeled sample CSV has too few columns".into()));
        }
        let x_dim = width - theta_dim - 1;
        let (mut thetas, mut xs, mut ys) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Argument(format!("bad number `{f}`: {e}"))))
                .collect::<Result<_>>()?;
            thetas.extend_from_slice(&nums[..theta_dim]);
            xs.extend_from_slice(&nums[theta_dim..theta_dim + x_dim]);
            ys.push(nums[width - 1] != 0.0);
        }
        Self::new(theta_dim, x_dim, thetas, xs, ys)
    }
}

/// Simulate `B` labeled examples: `θᵢ ~ π`, `Yᵢ ~ Ber(p)`, `Xᵢ ~ F_θᵢ` if
/// `Yᵢ = 1` and `Xᵢ ~ G` otherwise.
pub fn generate_labeled_sample(
    sim: &dyn Simulator,
    prop: &Proposal,
    reference: &Reference,
    b: usize,
    p: f64,
    seed: SeedStream,
    exec: Execution,
) -> Result<LabeledSample> {
    if b == 0 {
        return Err(Error::Argument("labeled sample size B must be positive".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("Bernoulli parameter must be in (0,1), got {p}")));
    }
    if prop.dim() != sim.space().dims() {
        return Err(Error::Argument("proposal dimension does not match simulator".into()));
    }
    reference.validate(sim)?;
    let (td, xd) = (prop.dim(), sim.obs_dim());
    let rows = exec.map(b, |i| {
        let mut rng = seed.child(i as u64).rng();
        let mut theta = vec![0.0; td];
        let mut x = vec![0.0; xd];
        prop.sample_into(&mut rng, &mut theta);
        let y = rng.random::<f64>() < p;
        if y {
            sim.draw_into(&theta, &mut rng, &mut x);
        } else {
            let mut scratch = vec![0.0; td];
            reference.draw_into(sim, prop, &mut rng, &mut scratch, &mut x);
        }
        (theta, x, y)
    });
    let mut thetas = Vec::with_capacity(b * td);
    let mut xs = Vec::with_capacity(b * xd);
    let mut ys = Vec::with_capacity(b);
    for (t, x, y) in rows {
        thetas.extend(t);
        xs.extend(x);
        ys.push(y);
    }
    LabeledSample::new(td, xd, thetas, xs, ys)
}
