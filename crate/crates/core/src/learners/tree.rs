//! Histogram-binned regression trees grown on gradient/hessian statistics.

use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

/// Features quantised to at most 256 bins, stored column-major.
#[derive(Debug, Clone)]
pub(crate) struct BinnedMatrix {
    rows: usize,
    cols: usize,
    bins: Vec<u8>,
    /// Per feature, split thresholds; bin `k` holds values `<= thresholds[k]`.
    thresholds: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub(crate) fn new(x: &FeatureMatrix, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let (rows, cols) = (x.rows(), x.cols());
        let mut bins = vec![0u8; rows * cols];
        let mut thresholds = Vec::with_capacity(cols);
        for j in 0..cols {
            let mut col: Vec<f64> = (0..rows).map(|i| x.row(i)[j]).collect();
            col.sort_by(f64::total_cmp);
            col.dedup();
            let cuts: Vec<f64> = if col.len() <= max_bins {
                col.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut cuts: Vec<f64> = (1..max_bins)
                    .map(|k| {
                        let idx = k * col.len() / max_bins;
                        0.5 * (col[idx - 1] + col[idx])
                    })
                    .collect();
                cuts.dedup();
                cuts
            };
            for i in 0..rows {
                let v = x.row(i)[j];
                bins[j * rows + i] = cuts.partition_point(|c| *c < v) as u8;
            }
            thresholds.push(cuts);
        }
        Self { rows, cols, bins, thresholds }
    }

    fn column(&self, j: usize) -> &[u8] {
        &self.bins[j * self.rows..(j + 1) * self.rows]
    }

    fn n_bins(&self, j: usize) -> usize {
        self.thresholds[j].len() + 1
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    idx = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    /// Grow a tree on the rows in `rows`. `leaf_value` maps the rows of a
    /// finished leaf to its output; it is also told the leaf's position in
    /// `leaf_of` so callers can update their cached predictions.
    pub(crate) fn grow(
        binned: &BinnedMatrix,
        grad: &[f64],
        hess: &[f64],
        rows: Vec<usize>,
        params: TreeParams,
        leaf_value: &mut dyn FnMut(&[usize]) -> f64,
    ) -> (Tree, Vec<(Vec<usize>, f64)>) {
        let mut tree = Tree { nodes: Vec::new() };
        let mut leaves = Vec::new();
        tree.build(binned, grad, hess, rows, 0, params, leaf_value, &mut leaves);
        (tree, leaves)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        binned: &BinnedMatrix,
        grad: &[f64],
        hess: &[f64],
        rows: Vec<usize>,
        depth: usize,
        params: TreeParams,
        leaf_value: &mut dyn FnMut(&[usize]) -> f64,
        leaves: &mut Vec<(Vec<usize>, f64)>,
    ) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf(0.0));
        let split = if depth < params.max_depth && rows.len() >= 2 * params.min_samples_leaf.max(1) {
            best_split(binned, grad, hess, &rows, params.min_samples_leaf.max(1))
        } else {
            None
        };
        match split {
            None => {
                let v = leaf_value(&rows);
                self.nodes[id as usize] = Node::Leaf(v);
                leaves.push((rows, v));
            }
            Some((feature, bin)) => {
                let col = binned.column(feature);
                let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| (col[i] as usize) <= bin);
                let left = self.build(binned, grad, hess, l, depth + 1, params, leaf_value, leaves);
                let right = self.build(binned, grad, hess, r, depth + 1, params, leaf_value, leaves);
                self.nodes[id as usize] = Node::Split {
                    feature: feature as u32,
                    threshold: binned.thresholds[feature][bin],
                    left,
                    right,
                };
            }
        }
        id
    }
}

fn best_split(
    binned: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    min_leaf: usize,
) -> Option<(usize, usize)> {
    let (g_tot, h_tot) = rows.iter().fold((0.0, 0.0), |(g, h), &i| (g + grad[i], h + hess[i]));
    if h_tot <= 0.0 {
        return None;
    }
    let parent = g_tot * g_tot / h_tot;
    let tol = 1e-12 * (1.0 + parent.abs());
    let mut best: Option<(f64, usize, usize)> = None;
    let mut hg = Vec::new();
    let mut hh = Vec::new();
    let mut hc = Vec::new();
    for j in 0..binned.cols {
        let nb = binned.n_bins(j);
        if nb < 2 {
            continue;
        }
        hg.clear();
        hg.resize(nb, 0.0);
        hh.clear();
        hh.resize(nb, 0.0);
        hc.clear();
        hc.resize(nb, 0usize);
        let col = binned.column(j);
        for &i in rows {
            let b = col[i] as usize;
            hg[b] += grad[i];
            hh[b] += hess[i];
            hc[b] += 1;
        }
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
        for b in 0..nb - 1 {
            gl += hg[b];
            hl += hh[b];
            cl += hc[b];
            let cr = rows.len() - cl;
            if cl < min_leaf {
                continue;
            }
            if cr < min_leaf {
                break;
            }
            let hr = h_tot - hl;
            if hl <= 0.0 || hr <= 0.0 {
                continue;
            }
            let gr = g_tot - gl;
            let gain = gl * gl / hl + gr * gr / hr - parent;
            if gain > tol && best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, j, b));
            }
        }
    }
    best.map(|(_, j, b)| (j, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_respects_order_and_cap() {
        let x = FeatureMatrix::new(1, (0..1000).map(|i| f64::from(i) * 0.5).collect()).unwrap();
        let b = BinnedMatrix::new(&x, 16);
        assert!(b.n_bins(0) <= 16);
        let col = b.column(0);
        assert!(col.windows(2).all(|w| w[0] <= w[1]));
        let few = FeatureMatrix::new(1, vec![1.0, 2.0, 2.0, 3.0]).unwrap();
        let b = BinnedMatrix::new(&few, 255);
        assert_eq!(b.column(0), &[0, 1, 1, 2]);
    }

    #[test]
    fn step_function_is_found() {
        let xs: Vec<f64> = (0..200).map(|i| f64::from(i) / 200.0).collect();
        let y: Vec<f64> = xs.iter().map(|v| if *v < 0.3 { -1.0 } else { 2.0 }).collect();
        let x = FeatureMatrix::new(1, xs).unwrap();
        let binned = BinnedMatrix::new(&x, 255);
        let hess = vec![1.0; 200];
        let params = TreeParams { max_depth: 1, min_samples_leaf: 5 };
        let (tree, leaves) = Tree::grow(&binned, &y, &hess, (0..200).collect(), params, &mut |r| {
            r.iter().map(|&i| y[i]).sum::<f64>() / r.len() as f64
        });
        assert_eq!(leaves.len(), 2);
        assert!((tree.predict(&[0.1]) + 1.0).abs() < 1e-12);
        assert!((tree.predict(&[0.9]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_does_not_split() {
        let x = FeatureMatrix::new(1, (0..100).map(f64::from).collect()).unwrap();
        let binned = BinnedMatrix::new(&x, 255);
        let g = vec![0.3; 100];
        let h = vec![1.0; 100];
        let params = TreeParams { max_depth: 3, min_samples_leaf: 1 };
        let (_, leaves) = Tree::grow(&binned, &g, &h, (0..100).collect(), params, &mut |_| 0.0);
        assert_eq!(leaves.len(), 1);
    }
}
