//! Circular splits, the splits matrix and nonnegative split weights.
//!
//! For an ordering `x_0 .. x_{n-1}` every circular split is an arc
//! `{x_start ..= x_end}` with `start <= end <= n - 2`, so the arc never holds
//! the last taxon and each bipartition appears exactly once. There are
//! `n (n - 1) / 2` of them.
//!
//! Rows of the splits matrix are position pairs `(p, q)`, `p < q`, in
//! lexicographic order. Products with the matrix and its transpose never
//! materialise it: both run in `O(n^2)` using the interval structure.

mod nnls;

pub use nnls::{nnls, DenseMatrix, LinearOperator, NnlsOptions, NnlsResult};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::DistanceMatrix;
use crate::nnet::CircularOrdering;

#[derive(Debug, Error, PartialEq)]
pub enum SplitsError {
    #[error("dimension mismatch: expected {expected} entries, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid split {start}..={end} for {n} taxa")]
    InvalidSplit { start: usize, end: usize, n: usize },
    #[error("split weights did not converge: {0}")]
    NotConverged(String),
    #[error("invalid split system: {0}")]
    Invalid(String),
}

/// An arc of the circular ordering together with its weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub weight: f64,
}

impl Split {
    pub fn new(start: usize, end: usize) -> Split {
        Split { start, end, weight: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_position(&self, p: usize) -> bool {
        self.start <= p && p <= self.end
    }

    /// True when exactly one of the two positions lies in the arc.
    pub fn separates(&self, p: usize, q: usize) -> bool {
        self.contains_position(p) != self.contains_position(q)
    }

    /// A split with one taxon on a side.
    pub fn is_trivial(&self, n: usize) -> bool {
        self.len() == 1 || self.len() == n - 1
    }

    /// Column index of this arc in [`circular_splits`] order.
    pub fn index(&self, n: usize) -> usize {
        // arcs starting before `start`: sum over s < start of (n - 1 - s)
        self.start * (n - 1) - self.start * self.start.saturating_sub(1) / 2 + (self.end - self.start)
    }

    fn validate(&self, n: usize) -> Result<(), SplitsError> {
        if n < 2 || self.start > self.end || self.end > n - 2 {
            return Err(SplitsError::InvalidSplit { start: self.start, end: self.end, n });
        }
        Ok(())
    }
}

/// All `n (n - 1) / 2` circular splits of an ordering on `n` taxa, by start then end.
pub fn circular_splits(n: usize) -> Vec<Split> {
    (0..n.saturating_sub(1)).flat_map(|s| (s..n - 1).map(move |e| Split::new(s, e))).collect()
}

/// Row index of the position pair `(p, q)`, `p < q`.
pub fn pair_index(n: usize, p: usize, q: usize) -> usize {
    debug_assert!(p < q && q < n);
    p * n - p * (p + 1) / 2 + (q - p - 1)
}

/// Observed distances in row order: pairs of ordering positions.
pub fn distance_vector(d: &DistanceMatrix, ordering: &CircularOrdering) -> Vec<f64> {
    let o = ordering.as_slice();
    let n = o.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for p in 0..n {
        for q in p + 1..n {
            out.push(d.get(o[p], o[q]));
        }
    }
    out
}

/// The 0/1 splits matrix of a list of circular splits on `n` taxa.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitsMatrix {
    n: usize,
    splits: Vec<(usize, usize)>,
}

impl SplitsMatrix {
    pub fn new(splits: &[Split], n: usize) -> Result<SplitsMatrix, SplitsError> {
        for s in splits {
            s.validate(n)?;
        }
        Ok(SplitsMatrix { n, splits: splits.iter().map(|s| (s.start, s.end)).collect() })
    }

    pub fn n_taxa(&self) -> usize {
        self.n
    }

    pub fn n_rows(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2
    }

    pub fn n_cols(&self) -> usize {
        self.splits.len()
    }

    /// `X[(p,q), k]`.
    pub fn entry(&self, p: usize, q: usize, k: usize) -> u8 {
        let (s, e) = self.splits[k];
        Split::new(s, e).separates(p, q) as u8
    }

    /// Explicit matrix, row-major. For small `n` only.
    pub fn to_dense(&self) -> DenseMatrix {
        let rows = self.n_rows();
        let cols = self.n_cols();
        let mut data = vec![0.0; rows * cols];
        for p in 0..self.n {
            for q in p + 1..self.n {
                let r = pair_index(self.n, p, q);
                for k in 0..cols {
                    data[r * cols + k] = self.entry(p, q, k) as f64;
                }
            }
        }
        DenseMatrix::new(rows, cols, data)
    }

    /// `X w`, one entry per position pair.
    pub fn mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        self.apply(w, &mut out);
        out
    }

    /// `X^T y`, one entry per split.
    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols()];
        self.apply_t(y, &mut out);
        out
    }
}

impl LinearOperator for SplitsMatrix {
    fn rows(&self) -> usize {
        self.n_rows()
    }

    fn cols(&self) -> usize {
        self.n_cols()
    }

    fn apply(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n;
        if n < 2 {
            return;
        }
        // Split (s, e) cuts the circle at gaps s and e + 1; gap g sits just
        // before position g. Pair (p, q) is separated iff exactly one cut lies
        // in gaps p+1 ..= q, so its distance is the cut function of that gap
        // interval, built by inclusion-exclusion over shorter intervals.
        let mut gap = vec![0.0; n * n];
        for (&(s, e), &wk) in self.splits.iter().zip(w) {
            gap[s * n + e + 1] += wk;
            gap[(e + 1) * n + s] += wk;
        }
        let row_sum: Vec<f64> = (0..n).map(|g| gap[g * n..(g + 1) * n].iter().sum()).collect();
        // cut[a][b] for gap interval a..=b, 1 <= a <= b <= n-1; stored by pair index.
        for len in 1..n {
            for p in 0..n - len {
                let q = p + len;
                let v = if len == 1 {
                    row_sum[p + 1]
                } else {
                    let inner = if len == 2 { 0.0 } else { out[pair_index(n, p + 1, q - 1)] };
                    out[pair_index(n, p, q - 1)] + out[pair_index(n, p + 1, q)] - inner - 2.0 * gap[(p + 1) * n + q]
                };
                out[pair_index(n, p, q)] = v;
            }
        }
    }

    fn apply_t(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        if n < 2 {
            return;
        }
        // Pairs are gap intervals [a, b] = [p+1, q]. For cuts g1 < g2:
        //   (X^T y)(g1, g2) = C(g1) + C(g2) - 2 B(g1, g2)
        // where B(g1, g2) sums y over intervals with a <= g1 and b >= g2 and
        // C(g) = B(g, g) sums over intervals containing g.
        let cum = cumulative_b(n, y);
        for (k, &(s, e)) in self.splits.iter().enumerate() {
            let (g1, g2) = (s, e + 1);
            out[k] = cum(g1, g1) + cum(g2, g2) - 2.0 * cum(g1, g2);
        }
    }

    fn gram(&self, cols: &[usize]) -> Option<Vec<f64>> {
        // Two arcs A, B separate a pair both at once when it joins A∩B to
        // the complement of A∪B, or A\B to B\A.
        let n = self.n as i64;
        let k = cols.len();
        let arcs: Vec<(i64, i64)> = cols.iter().map(|&c| (self.splits[c].0 as i64, self.splits[c].1 as i64)).collect();
        let mut g = vec![0.0; k * k];
        g.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
            let (s1, e1) = arcs[i];
            let la = e1 - s1 + 1;
            for (j, &(s2, e2)) in arcs.iter().enumerate() {
                let lb = e2 - s2 + 1;
                let both = (e1.min(e2) - s1.max(s2) + 1).max(0);
                let only_a = la - both;
                let only_b = lb - both;
                let neither = n - la - lb + both;
                row[j] = (both * neither + only_a * only_b) as f64;
            }
        });
        Some(g)
    }

    fn column_norms_sq(&self) -> Vec<f64> {
        // a 0/1 column has one entry per separated pair
        self.splits.iter().map(|&(s, e)| ((e - s + 1) * (self.n - (e - s + 1))) as f64).collect()
    }
}

/// `B(g1, g2) = sum of y over gap intervals [a, b]` with `a <= g1`, `b >= g2`.
fn cumulative_b(n: usize, y: &[f64]) -> impl Fn(usize, usize) -> f64 {
    let stride = n + 1;
    let mut table = vec![0.0; stride * stride];
    // table[g1][g2] for 0 <= g1, g2 <= n, zero outside 1 <= a <= b <= n-1.
    for g1 in 1..n {
        for g2 in (1..n).rev() {
            let own = if g1 <= g2 { y[pair_index(n, g1 - 1, g2)] } else { 0.0 };
            table[g1 * stride + g2] =
                own + table[(g1 - 1) * stride + g2] + table[g1 * stride + g2 + 1] - table[(g1 - 1) * stride + g2 + 1];
        }
    }
    move |g1, g2| table[g1 * stride + g2]
}

/// Minimises `||X w - d||` over `w >= 0` with the default solver options.
pub fn estimate_weights(x: &SplitsMatrix, dvec: &[f64]) -> Result<Vec<f64>, SplitsError> {
    if dvec.len() != x.n_rows() {
        return Err(SplitsError::DimensionMismatch { expected: x.n_rows(), found: dvec.len() });
    }
    let warm = full_circular_inverse(x, dvec);
    let res = nnls(x, dvec, warm.as_deref(), &NnlsOptions::default());
    if !res.converged {
        return Err(SplitsError::NotConverged(format!(
            "{} outer iterations, max KKT violation {:e}",
            res.iterations, res.kkt_violation
        )));
    }
    Ok(res.weights)
}

/// When `x` holds every circular split in canonical order the system is
/// square and invertible, with the closed form
/// `w[i..=j] = (d(i-1, j) + d(i, j+1) - d(i, j) - d(i-1, j+1)) / 2`
/// over positions modulo `n`. Used as the solver's starting point.
fn full_circular_inverse(x: &SplitsMatrix, dvec: &[f64]) -> Option<Vec<f64>> {
    let n = x.n;
    if n < 3 || x.splits.len() != n * (n - 1) / 2 {
        return None;
    }
    let canonical = circular_splits(n);
    if canonical.iter().zip(&x.splits).any(|(c, &(s, e))| (c.start, c.end) != (s, e)) {
        return None;
    }
    let dist = |a: usize, b: usize| -> f64 {
        let (a, b) = (a % n, b % n);
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => dvec[pair_index(n, a, b)],
            std::cmp::Ordering::Greater => dvec[pair_index(n, b, a)],
        }
    };
    Some(
        x.splits
            .iter()
            .map(|&(i, j)| {
                let im1 = i + n - 1;
                0.5 * (dist(im1, j) + dist(i, j + 1) - dist(i, j) - dist(im1, j + 1))
            })
            .collect(),
    )
}

/// An ordering with weighted circular splits and the residual of the fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitSystem {
    pub taxa: Vec<String>,
    pub ordering: CircularOrdering,
    pub splits: Vec<Split>,
    /// Euclidean norm of `X w - d` over all taxon pairs.
    pub fit: f64,
    #[serde(skip)]
    observed: Option<Vec<f64>>,
}

impl PartialEq for SplitSystem {
    fn eq(&self, other: &Self) -> bool {
        self.taxa == other.taxa && self.ordering == other.ordering && self.splits == other.splits && self.fit == other.fit
    }
}

impl SplitSystem {
    /// Assembles a system and checks its invariants.
    pub fn new(taxa: Vec<String>, ordering: CircularOrdering, splits: Vec<Split>, fit: f64) -> Result<SplitSystem, SplitsError> {
        let sys = SplitSystem { taxa, ordering, splits, fit, observed: None };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<(), SplitsError> {
        let n = self.taxa.len();
        if self.ordering.len() != n {
            return Err(SplitsError::Invalid(format!("ordering covers {} of {n} taxa", self.ordering.len())));
        }
        for s in &self.splits {
            s.validate(n)?;
            if !(s.weight >= 0.0) {
                return Err(SplitsError::Invalid(format!("negative weight on split {}..={}", s.start, s.end)));
            }
        }
        Ok(())
    }

    /// Fits nonnegative weights for every circular split of `ordering`.
    pub fn fit(d: &DistanceMatrix, ordering: CircularOrdering) -> Result<SplitSystem, SplitsError> {
        let n = d.len();
        if ordering.len() != n {
            return Err(SplitsError::DimensionMismatch { expected: n, found: ordering.len() });
        }
        let dvec = distance_vector(d, &ordering);
        let mut splits = circular_splits(n);
        if !splits.is_empty() {
            let x = SplitsMatrix::new(&splits, n)?;
            let w = estimate_weights(&x, &dvec)?;
            for (s, wk) in splits.iter_mut().zip(w) {
                s.weight = wk.max(0.0);
            }
        }
        let mut sys = SplitSystem { taxa: d.labels().to_vec(), ordering, splits, fit: 0.0, observed: Some(dvec) };
        sys.fit = sys.residual_norm().unwrap_or(0.0);
        Ok(sys)
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn matrix(&self) -> SplitsMatrix {
        SplitsMatrix { n: self.n_taxa(), splits: self.splits.iter().map(|s| (s.start, s.end)).collect() }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.splits.iter().map(|s| s.weight).collect()
    }

    /// Taxa on the arc side of a split.
    pub fn arc_taxa(&self, split: &Split) -> Vec<usize> {
        self.ordering.as_slice()[split.start..=split.end].to_vec()
    }

    /// The side not holding taxon 0, sorted. Identifies the bipartition
    /// independently of the ordering's rotation or reflection.
    pub fn bipartition_key(&self, split: &Split) -> Vec<usize> {
        let mut side = self.arc_taxa(split);
        if side.contains(&0) {
            let arc: std::collections::BTreeSet<usize> = side.iter().copied().collect();
            side = (0..self.n_taxa()).filter(|t| !arc.contains(t)).collect();
        }
        side.sort_unstable();
        side
    }

    /// `X w` as a taxon-indexed distance table.
    pub fn induced_distances(&self) -> ndarray::Array2<f64> {
        let n = self.n_taxa();
        let v = self.matrix().mul(&self.weights());
        let o = self.ordering.as_slice();
        let mut out = ndarray::Array2::zeros((n, n));
        for p in 0..n {
            for q in p + 1..n {
                let val = v[pair_index(n, p, q)];
                out[(o[p], o[q])] = val;
                out[(o[q], o[p])] = val;
            }
        }
        out
    }

    /// Residual norm against the distances the system was fitted to, when known.
    pub fn residual_norm(&self) -> Option<f64> {
        let obs = self.observed.as_ref()?;
        let pred = self.matrix().mul(&self.weights());
        Some(pred.iter().zip(obs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    /// Drops splits with weight `<= threshold`. The fit is recomputed when
    /// the observed distances are known (systems built by [`SplitSystem::fit`]).
    pub fn prune(&self, threshold: f64) -> SplitSystem {
        let mut out = self.clone();
        out.splits.retain(|s| s.weight > threshold);
        if let Some(fit) = out.residual_norm() {
            out.fit = fit;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split system serializes")
    }

    pub fn from_json(text: &str) -> Result<SplitSystem, SplitsError> {
        let sys: SplitSystem = serde_json::from_str(text).map_err(|e| SplitsError::Invalid(e.to_string()))?;
        sys.validate()?;
        Ok(sys)
    }
}

/// Default prune threshold.
pub const DEFAULT_PRUNE: f64 = 1e-8;
