//! Nonnegative least squares over a matrix-free operator.
//!
//! Lawson-Hanson active set method. The unconstrained subproblem on the free
//! set is solved by CGLS, so only products with the operator and its
//! transpose are needed.

use rayon::prelude::*;

/// A real matrix known through its products.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = A^T y`
    fn apply_t(&self, y: &[f64], out: &mut [f64]);

    /// Gram matrix `A_S^T A_S` of the columns in `cols`, row-major, when it
    /// can be formed cheaply.
    fn gram(&self, _cols: &[usize]) -> Option<Vec<f64>> {
        None
    }

    /// Squared Euclidean norm of every column.
    fn column_norms_sq(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.cols()];
        let mut col = vec![0.0; self.rows()];
        (0..self.cols())
            .map(|k| {
                e[k] = 1.0;
                self.apply(&e, &mut col);
                e[k] = 0.0;
                col.iter().map(|v| v * v).sum()
            })
            .collect()
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> DenseMatrix {
        assert_eq!(data.len(), rows * cols, "dense matrix shape");
        DenseMatrix { rows, cols, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl LinearOperator for DenseMatrix {
    fn gram(&self, cols: &[usize]) -> Option<Vec<f64>> {
        let k = cols.len();
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v: f64 = (0..self.rows).map(|r| self.get(r, cols[i]) * self.get(r, cols[j])).sum();
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        Some(g)
    }

    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.data[r * self.cols..(r + 1) * self.cols].iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(&self.data[r * self.cols..(r + 1) * self.cols]) {
                *o += a * yr;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct NnlsOptions {
    /// Absolute KKT tolerance on the gradient. Raised to a floating point
    /// floor proportional to `||A^T b||_inf` for large problems.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions { tol: 1e-8, max_outer: 10_000, max_inner: 200_000 }
    }
}

#[derive(Clone, Debug)]
pub struct NnlsResult {
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// Largest KKT violation of the returned weights.
    pub kkt_violation: f64,
    pub converged: bool,
}

/// Gradient `A^T (A x - b)`.
pub fn gradient<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut ax = vec![0.0; a.rows()];
    a.apply(x, &mut ax);
    for (v, bi) in ax.iter_mut().zip(b) {
        *v -= bi;
    }
    let mut g = vec![0.0; a.cols()];
    a.apply_t(&ax, &mut g);
    g
}

/// Largest violation of `x >= 0`, `g >= 0` and `x_i g_i = 0` (through `|g_i|` on positive `x_i`).
pub fn kkt_violation<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64]) -> f64 {
    let g = gradient(a, b, x);
    x.iter()
        .zip(&g)
        .map(|(&xi, &gi)| {
            let sign = (-xi).max(0.0);
            let grad = if xi > 0.0 { gi.abs() } else { (-gi).max(0.0) };
            sign.max(grad)
        })
        .fold(0.0, f64::max)
}

/// Minimises `||A x - b||_2` subject to `x >= 0`.
///
/// Block principal pivoting: every iteration solves the unconstrained
/// problem on the free set and then swaps all infeasible variables at once
/// (free ones gone negative, bound ones with negative gradient). When the
/// number of infeasible variables stops shrinking the method falls back to
/// swapping one variable per iteration, which terminates.
///
/// `warm` is an optional starting point; its positive entries seed the free set.
pub fn nnls<A: LinearOperator + ?Sized>(a: &A, b: &[f64], warm: Option<&[f64]>, opts: &NnlsOptions) -> NnlsResult {
    let m = a.cols();
    let mut atb = vec![0.0; m];
    a.apply_t(b, &mut atb);
    let scale = atb.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = opts.tol.max(1e-12 * scale);
    let precond: Vec<f64> = a.column_norms_sq().iter().map(|&c| if c > 0.0 { 1.0 / c } else { 1.0 }).collect();

    let mut x = vec![0.0; m];
    let mut free = vec![false; m];
    if let Some(w) = warm {
        for i in 0..m {
            if w[i] > 0.0 {
                x[i] = w[i];
                free[i] = true;
            }
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut best_infeasible = usize::MAX;
    let mut backups = 3;
    while iterations < opts.max_outer {
        iterations += 1;
        // Large free sets only steer the pivoting, so a rough iterative solve
        // does; the answer is confirmed with a tight solve before accepting it.
        let mut rough = false;
        if free.iter().any(|&f| f) {
            if let Some(direct) = direct_solve(a, &atb, &free) {
                x = direct;
                x = cgls(a, b, &x, &free, &precond, tol * 0.1, opts.max_inner);
            } else {
                rough = true;
                x = cgls(a, b, &x, &free, &precond, (1e-6 * scale).max(tol * 0.1), opts.max_inner);
            }
        } else {
            x.iter_mut().for_each(|v| *v = 0.0);
        }
        // a free variable is infeasible once clearly negative; rounding-level
        // negatives are clamped at the end
        let x_floor = -tol * 1e-3;
        let mut infeasible = infeasible_set(a, b, &x, &free, tol, x_floor);
        if rough && infeasible.is_empty() {
            x = cgls(a, b, &x, &free, &precond, tol * 0.1, opts.max_inner);
            infeasible = infeasible_set(a, b, &x, &free, tol, x_floor);
        }
        if infeasible.is_empty() {
            converged = true;
            break;
        }
        let swap: Vec<usize> = if infeasible.len() < best_infeasible {
            best_infeasible = infeasible.len();
            backups = 3;
            infeasible
        } else if backups > 0 {
            backups -= 1;
            infeasible
        } else {
            vec![*infeasible.last().expect("nonempty")]
        };
        for i in swap {
            free[i] = !free[i];
            if !free[i] {
                x[i] = 0.0;
            }
        }
    }

    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let kkt = kkt_violation(a, b, &x);
    NnlsResult { weights: x, iterations, kkt_violation: kkt, converged: converged && kkt <= tol * 10.0 }
}

fn infeasible_set<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x: &[f64], free: &[bool], tol: f64, x_floor: f64) -> Vec<usize> {
    let g = gradient(a, b, x);
    (0..x.len()).filter(|&i| if free[i] { x[i] < x_floor } else { g[i] < -tol }).collect()
}

/// Free sets up to this size are solved through the normal equations.
const DIRECT_LIMIT: usize = 4000;

/// Normal-equation solve on the free set by Cholesky, when the operator
/// provides its Gram matrix and that matrix is positive definite.
fn direct_solve<A: LinearOperator + ?Sized>(a: &A, atb: &[f64], free: &[bool]) -> Option<Vec<f64>> {
    let cols: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    if cols.len() > DIRECT_LIMIT {
        return None;
    }
    let mut g = a.gram(&cols)?;
    let mut rhs: Vec<f64> = cols.iter().map(|&i| atb[i]).collect();
    if !cholesky_solve(&mut g, cols.len(), &mut rhs) {
        return None;
    }
    let mut x = vec![0.0; free.len()];
    for (&i, v) in cols.iter().zip(rhs) {
        x[i] = v;
    }
    Some(x)
}

/// Solves `G y = rhs` in place for symmetric positive definite `G` (row-major,
/// overwritten by its lower Cholesky factor). False when `G` is not positive
/// definite.
fn cholesky_solve(g: &mut [f64], k: usize, rhs: &mut [f64]) -> bool {
    for j in 0..k {
        let row_j = &g[j * k..j * k + j];
        let diag = g[j * k + j] - row_j.iter().map(|v| v * v).sum::<f64>();
        if !(diag > 0.0) {
            return false;
        }
        let diag = diag.sqrt();
        g[j * k + j] = diag;
        let pivot_row: Vec<f64> = g[j * k..j * k + j].to_vec();
        g[(j + 1) * k..].par_chunks_mut(k).for_each(|row_i| {
            let dot: f64 = row_i[..j].iter().zip(&pivot_row).map(|(a, b)| a * b).sum();
            row_i[j] = (row_i[j] - dot) / diag;
        });
    }
    for i in 0..k {
        let dot: f64 = (0..i).map(|t| g[i * k + t] * rhs[t]).sum();
        rhs[i] = (rhs[i] - dot) / g[i * k + i];
    }
    for i in (0..k).rev() {
        let dot: f64 = (i + 1..k).map(|t| g[t * k + i] * rhs[t]).sum();
        rhs[i] = (rhs[i] - dot) / g[i * k + i];
    }
    true
}

/// Jacobi-preconditioned CGLS for `min ||A x - b||` over the coordinates flagged in `free`, the
/// rest held at zero. Starts from `x0` and stops once the restricted
/// gradient is below `tol` in the max norm.
fn cgls<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x0: &[f64],
    free: &[bool],
    precond: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let (nr, nc) = (a.rows(), a.cols());
    let mask = |v: &mut [f64]| {
        for (vi, &f) in v.iter_mut().zip(free) {
            if !f {
                *vi = 0.0;
            }
        }
    };
    let mut x = x0.to_vec();
    mask(&mut x);
    let residual = |x: &[f64]| {
        let mut r = vec![0.0; nr];
        a.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r
    };
    let mut r = residual(&x);
    let mut s = vec![0.0; nc];
    a.apply_t(&r, &mut s);
    mask(&mut s);
    let scaled = |s: &[f64]| -> Vec<f64> { s.iter().zip(precond).map(|(v, c)| v * c).collect() };
    let mut p = scaled(&s);
    let mut gamma: f64 = s.iter().zip(&p).map(|(u, v)| u * v).sum();
    let mut q = vec![0.0; nr];
    let mut best = (max_abs(&s), x.clone());

    for it in 0..max_iter {
        if best.0 <= tol || gamma == 0.0 {
            break;
        }
        a.apply(&p, &mut q);
        let qq: f64 = q.iter().map(|v| v * v).sum();
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        if (it + 1) % 50 == 0 {
            r = residual(&x);
        } else {
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= alpha * qi;
            }
        }
        a.apply_t(&r, &mut s);
        mask(&mut s);
        let z = scaled(&s);
        let g_new: f64 = s.iter().zip(&z).map(|(u, v)| u * v).sum();
        let norm = max_abs(&s);
        if norm < best.0 {
            best = (norm, x.clone());
        } else if it > 20 && norm > 1e6 * best.0 {
            // lost orthogonality; restart from the best iterate
            x = best.1.clone();
            r = residual(&x);
            a.apply_t(&r, &mut s);
            mask(&mut s);
            p = scaled(&s);
            gamma = s.iter().zip(&p).map(|(u, v)| u * v).sum();
            continue;
        }
        let beta = g_new / gamma;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        gamma = g_new;
    }
    best.1
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
