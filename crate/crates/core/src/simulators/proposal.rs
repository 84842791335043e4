use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::space::ParamSpace;

/// Uniform proposal distribution `π` on an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Proposal {
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Argument("proposal bounds must be non-empty and equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::Argument(format!(
                "proposal box must have positive finite width: [{lower:?}, {upper:?}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Uniform over the whole parameter space.
    pub fn uniform(space: &ParamSpace) -> Self {
        Self {
            lower: space.lower().to_vec(),
            upper: space.upper().to_vec(),
        }
    }

    /// Restriction to a sub-box, renormalised.
    pub fn restrict(&self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != self.dim() || upper.len() != self.dim() {
            return Err(Error::Argument("restriction has wrong dimension".into()));
        }
        let inside = lower
            .iter()
            .zip(&upper)
            .zip(self.lower.iter().zip(&self.upper))
            .all(|((lo, hi), (plo, phi))| lo >= plo && hi <= phi);
        if !inside {
            return Err(Error::Domain("restriction box exceeds proposal support".into()));
        }
        Self::uniform_box(lower, upper)
    }

    /// Marginal over a subset of coordinates.
    pub fn marginal(&self, dims: &[usize]) -> Self {
        Self {
            lower: dims.iter().map(|&d| self.lower[d]).collect(),
            upper: dims.iter().map(|&d| self.upper[d]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        let inside = theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(t, (lo, hi))| t >= lo && t <= hi);
        if inside {
            1.0 / self.volume()
        } else {
            0.0
        }
    }

    pub fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        for (o, (lo, hi)) in out.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *o = lo + (hi - lo) * rng.random::<f64>();
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn density_integrates_to_one() {
        let p = Proposal::uniform_box(vec![-5.0, 0.0], vec![5.0, 2.0]).unwrap();
        assert!((p.density(&[0.0, 1.0]) * p.volume() - 1.0).abs() < 1e-15);
        assert_eq!(p.density(&[6.0, 1.0]), 0.0);
        let r = p.restrict(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((r.density(&[0.5, 0.5]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_width_box_rejected() {
        assert!(Proposal::uniform_box(vec![1.0], vec![1.0]).is_err());
        let p = Proposal::uniform_box(vec![0.0], vec![1.0]).unwrap();
        assert!(p.restrict(vec![0.5], vec![1.5]).is_err());
    }

    #[test]
    fn samples_stay_in_box() {
        let p = Proposal::uniform_box(vec![90.0, 0.5], vec![110.0, 1.0]).unwrap();
        let mut rng = SeedStream::new(3).rng();
        for _ in 0..1000 {
            let t = p.sample(&mut rng);
            assert!(p.density(&t) > 0.0);
        }
    }
}
