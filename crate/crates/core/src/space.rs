//! Box-bounded parameter spaces, interest/nuisance splits and point grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A box `[lower, upper]` in parameter space, split into interest
/// coordinates (Φ) and nuisance coordinates (Ψ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    interest_dims: Vec<usize>,
    nuisance_dims: Vec<usize>,
    grid_points_per_dim: usize,
}

impl ParamSpace {
    /// A space with every coordinate of interest.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let dims = lower.len();
        Self::with_nuisance(lower, upper, (0..dims).collect())
    }

    /// A space whose interest coordinates are `interest_dims`; the remaining
    /// coordinates are nuisance.
    pub fn with_nuisance(lower: Vec<f64>, upper: Vec<f64>, interest_dims: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Argument(format!(
                "bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Argument(format!(
                    "dimension {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        let dims = lower.len();
        let mut seen = vec![false; dims];
        for &d in &interest_dims {
            if d >= dims || seen[d] {
                return Err(Error::Argument(format!("invalid interest dimension index {d}")));
            }
            seen[d] = true;
        }
        if interest_dims.is_empty() {
            return Err(Error::Argument("at least one interest dimension is required".into()));
        }
        let nuisance_dims = (0..dims).filter(|d| !seen[*d]).collect();
        let grid_points_per_dim = match interest_dims.len() {
            1 | 2 => 51,
            _ => 25,
        };
        Ok(Self {
            lower,
            upper,
            interest_dims,
            nuisance_dims,
            grid_points_per_dim,
        })
    }

    pub fn with_grid_points(mut self, per_dim: usize) -> Result<Self> {
        if per_dim == 0 {
            return Err(Error::Argument("grid points per dimension must be positive".into()));
        }
        self.grid_points_per_dim = per_dim;
        Ok(self)
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn interest_dims(&self) -> &[usize] {
        &self.interest_dims
    }

    pub fn nuisance_dims(&self) -> &[usize] {
        &self.nuisance_dims
    }

    pub fn has_nuisance(&self) -> bool {
        !self.nuisance_dims.is_empty()
    }

    pub fn grid_points_per_dim(&self) -> usize {
        self.grid_points_per_dim
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dims()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (lo, hi))| *t >= *lo && *t <= *hi)
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dims() {
            return Err(Error::Domain(format!(
                "parameter has {} coordinates, space has {}",
                theta.len(),
                self.dims()
            )));
        }
        if !self.contains(theta) {
            return Err(Error::Domain(format!(
                "parameter {theta:?} outside [{:?}, {:?}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Bounds restricted to the given coordinates.
    pub fn bounds_of(&self, dims: &[usize]) -> (Vec<f64>, Vec<f64>) {
        (
            dims.iter().map(|&d| self.lower[d]).collect(),
            dims.iter().map(|&d| self.upper[d]).collect(),
        )
    }

    /// Interest coordinates of a full parameter vector.
    pub fn interest_of(&self, theta: &[f64]) -> Vec<f64> {
        self.interest_dims.iter().map(|&d| theta[d]).collect()
    }

    pub fn nuisance_of(&self, theta: &[f64]) -> Vec<f64> {
        self.nuisance_dims.iter().map(|&d| theta[d]).collect()
    }

    /// Assemble a full parameter vector from interest and nuisance parts.
    pub fn compose(&self, phi: &[f64], psi: &[f64]) -> Vec<f64> {
        debug_assert_eq!(phi.len(), self.interest_dims.len());
        debug_assert_eq!(psi.len(), self.nuisance_dims.len());
        let mut theta = vec![0.0; self.dims()];
        for (v, &d) in phi.iter().zip(&self.interest_dims) {
            theta[d] = *v;
        }
        for (v, &d) in psi.iter().zip(&self.nuisance_dims) {
            theta[d] = *v;
        }
        theta
    }

    /// Endpoint-inclusive lattice over the interest coordinates with
    /// `grid_points_per_dim` points per axis.
    pub fn interest_grid(&self) -> Grid {
        let (lo, hi) = self.bounds_of(&self.interest_dims);
        Grid::lattice(&lo, &hi, self.grid_points_per_dim)
    }

    /// Endpoint-inclusive lattice over the nuisance coordinates.
    pub fn nuisance_grid(&self, per_dim: usize) -> Grid {
        let (lo, hi) = self.bounds_of(&self.nuisance_dims);
        Grid::lattice(&lo, &hi, per_dim)
    }

    /// Endpoint-inclusive lattice over all coordinates.
    pub fn full_grid(&self, per_dim: usize) -> Grid {
        Grid::lattice(&self.lower, &self.upper, per_dim)
    }
}

/// A finite set of equal-length points stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn from_points(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::Argument(format!(
                    "grid point has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            values.extend_from_slice(p);
        }
        Ok(Self { dim, values })
    }

    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::Argument("flat grid length must be a multiple of dim".into()));
        }
        Ok(Self { dim, values })
    }

    /// Zero-dimensional grid holding exactly one (empty) point; the nuisance
    /// grid of a space without nuisance parameters.
    pub fn unit() -> Self {
        Self { dim: 0, values: Vec::new() }
    }

    /// Endpoint-inclusive tensor lattice; a single point per axis sits at
    /// the midpoint.
    pub fn lattice(lower: &[f64], upper: &[f64], per_dim: usize) -> Self {
        let axes: Vec<Vec<f64>> = lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| linspace(lo, hi, per_dim))
            .collect();
        Self::tensor(&axes)
    }

    /// Cell-centred tensor lattice: the midpoints of `per_dim` equal cells per
    /// axis. Averages over it are midpoint-rule integrals against the uniform
    /// distribution on the box.
    pub fn midpoints(lower: &[f64], upper: &[f64], per_dim: usize) -> Self {
        let axes: Vec<Vec<f64>> = lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| {
                let h = (hi - lo) / per_dim as f64;
                (0..per_dim).map(|i| lo + (i as f64 + 0.5) * h).collect()
            })
            .collect();
        Self::tensor(&axes)
    }

    pub fn tensor(axes: &[Vec<f64>]) -> Self {
        let dim = axes.len();
        if dim == 0 {
            return Self::unit();
        }
        let total: usize = axes.iter().map(Vec::len).product();
        let mut values = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            for (d, &i) in idx.iter().enumerate() {
                values.push(axes[d][i]);
            }
            // odometer, last axis fastest
            for d in (0..dim).rev() {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            1
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.dim > 0 && self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + i as f64 * h })
                .collect()
        }
    }
}
