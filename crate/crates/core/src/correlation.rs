//! Per-period Pearson correlation and the `d = sqrt(2 (1 - rho))` distance.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt15;
use crate::market_data::{PeriodSpec, ReturnMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum CorrelationError {
    #[error("ticker {0} has zero variance in the period")]
    ZeroVariance(String),
    #[error("period {period} has {found} weekly observations, need at least 3")]
    TooFewObservations { period: u32, found: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
}

/// Symmetric correlation matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub rho: Array2<f64>,
}

/// Symmetric, nonnegative, zero-diagonal distances between taxa.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    d: Array2<f64>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, d: Array2<f64>) -> Result<DistanceMatrix, CorrelationError> {
        let n = labels.len();
        if d.dim() != (n, n) {
            return Err(CorrelationError::InvalidMatrix(format!("expected {n}x{n}, got {:?}", d.dim())));
        }
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(CorrelationError::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (d[(i, j)], d[(j, i)]);
                if !(a >= 0.0) || !a.is_finite() || a != b {
                    return Err(CorrelationError::InvalidMatrix(format!("entry ({i},{j}) is {a} / {b}")));
                }
            }
        }
        Ok(DistanceMatrix { labels, d })
    }

    /// Builds a matrix from a closure over `i < j`, labelling taxa `t0, t1, ...`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<DistanceMatrix, CorrelationError> {
        let mut d = Array2::zeros((n, n));
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        DistanceMatrix::new((0..n).map(|i| format!("t{i}")).collect(), d)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    /// Multiplies every distance by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> DistanceMatrix {
        DistanceMatrix { labels: self.labels.clone(), d: &self.d * factor }
    }

    /// Relabels taxa so that new taxon `k` is old taxon `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> DistanceMatrix {
        let n = self.len();
        DistanceMatrix {
            labels: perm.iter().map(|&p| self.labels[p].clone()).collect(),
            d: Array2::from_shape_fn((n, n), |(i, j)| self.d[(perm[i], perm[j])]),
        }
    }

    pub fn to_csv(&self) -> String {
        square_csv(&self.labels, &self.d)
    }
}

impl CorrelationMatrix {
    pub fn to_csv(&self) -> String {
        square_csv(&self.labels, &self.rho)
    }

    /// Off-diagonal summary: count, mean, standard deviation, min, median, max.
    pub fn summary(&self) -> CorrelationSummary {
        let n = self.labels.len();
        let mut v: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.rho[(i, j)]).collect();
        v.sort_by(f64::total_cmp);
        let count = v.len();
        if count == 0 {
            return CorrelationSummary::default();
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let var = if count > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64 } else { 0.0 };
        let median = if count % 2 == 1 { v[count / 2] } else { 0.5 * (v[count / 2 - 1] + v[count / 2]) };
        CorrelationSummary { pairs: count, mean, std_dev: var.sqrt(), min: v[0], median, max: v[count - 1] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub pairs: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

fn square_csv(labels: &[String], m: &Array2<f64>) -> String {
    let mut out = String::from("ticker");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(l);
        for j in 0..labels.len() {
            out.push(',');
            out.push_str(&fmt15(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Pearson product-moment correlation. `None` if either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise Pearson correlation of the weekly returns inside `period`,
/// over the tickers with complete data in that period.
pub fn estimate_correlation(returns: &ReturnMatrix, period: &PeriodSpec) -> Result<CorrelationMatrix, CorrelationError> {
    let rows = returns.period_rows(period);
    if rows.len() < 3 {
        return Err(CorrelationError::TooFewObservations { period: period.index, found: rows.len() });
    }
    let universe = returns.universe(period);
    let series: Vec<Vec<f64>> = universe.iter().map(|&c| returns.column_in(period, c)).collect();
    let labels: Vec<String> = universe.iter().map(|&c| returns.tickers[c].label()).collect();

    // Center and normalize once; correlations are then dot products.
    let mut unit = Vec::with_capacity(series.len());
    for (s, label) in series.iter().zip(&labels) {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let centered: Vec<f64> = s.iter().map(|v| v - m).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        // treat rounding residue of a constant series as zero
        let scale = s.iter().fold(0.0f64, |a, v| a.max(v.abs())) * (s.len() as f64).sqrt();
        if norm <= 1e-12 * scale {
            return Err(CorrelationError::ZeroVariance(label.clone()));
        }
        unit.push(centered.into_iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    let n = unit.len();
    let mut rho = Array2::eye(n);
    for i in 0..n {
        for j in 0..i {
            let r = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
    }
    Ok(CorrelationMatrix { labels, rho })
}

/// The correlation-to-distance transform `sqrt(2 (1 - rho))`.
pub fn rho_to_distance(rho: f64) -> f64 {
    (2.0 * (1.0 - rho)).max(0.0).sqrt()
}

/// Elementwise [`rho_to_distance`], with an exact zero diagonal.
pub fn to_distance(c: &CorrelationMatrix) -> DistanceMatrix {
    let n = c.labels.len();
    let d = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { rho_to_distance(c.rho[(i, j)]) });
    DistanceMatrix { labels: c.labels.clone(), d }
}
