//! Neighbor-Net agglomeration.
//!
//! Every taxon starts as a singleton cluster. Each step picks the pair of
//! clusters minimising
//!
//! ```text
//! Q(Ci, Cj) = (m - 2) d(Ci, Cj) - sum_{k != i} d(Ci, Ck) - sum_{k != j} d(Cj, Ck)
//! ```
//!
//! then the pair of member nodes minimising the same criterion over the
//! ground set in which the two chosen clusters are broken into singletons.
//! The two nodes become neighbours. Whenever a node ends up with two
//! neighbours, the three nodes are reduced to two new nodes. The process
//! stops when a single cluster is left, and the log of reductions is replayed
//! backwards to read off the circular ordering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::DistanceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum NnetError {
    #[error("reduction parameters must be nonnegative and sum to 1, got ({0}, {1}, {2})")]
    InvalidParams(f64, f64, f64),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
}

/// Convex weights of the 3-to-2 distance reduction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl ReductionParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<ReductionParams, NnetError> {
        let ok = [alpha, beta, gamma].iter().all(|v| v.is_finite() && *v >= 0.0)
            && (alpha + beta + gamma - 1.0).abs() <= 1e-12;
        if !ok {
            return Err(NnetError::InvalidParams(alpha, beta, gamma));
        }
        Ok(ReductionParams { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams { alpha: 1.0 / 3.0, beta: 1.0 / 3.0, gamma: 1.0 / 3.0 }
    }
}

/// A permutation of the taxa read around the circle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CircularOrdering(Vec<usize>);

impl CircularOrdering {
    /// Fails unless `order` is a permutation of `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<CircularOrdering, NnetError> {
        let mut seen = vec![false; order.len()];
        for &t in &order {
            if t >= order.len() || std::mem::replace(&mut seen[t], true) {
                return Err(NnetError::PreconditionViolation(format!("{order:?} is not a permutation")));
            }
        }
        Ok(CircularOrdering(order))
    }

    pub fn identity(n: usize) -> CircularOrdering {
        CircularOrdering((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `position[taxon]`, the inverse permutation.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (p, &t) in self.0.iter().enumerate() {
            pos[t] = p;
        }
        pos
    }

    /// Canonical representative under rotation and reflection: starts at
    /// taxon 0 and continues towards the smaller of its two neighbours.
    pub fn canonical(&self) -> Vec<usize> {
        let n = self.0.len();
        if n < 3 {
            let mut v = self.0.clone();
            v.sort_unstable();
            return v;
        }
        let start = self.positions()[0];
        let fwd: Vec<usize> = (0..n).map(|k| self.0[(start + k) % n]).collect();
        let bwd: Vec<usize> = (0..n).map(|k| self.0[(start + n - k) % n]).collect();
        if fwd[1] <= bwd[1] {
            fwd
        } else {
            bwd
        }
    }

    /// Same circle up to rotation and reflection.
    pub fn equivalent(&self, other: &CircularOrdering) -> bool {
        self.canonical() == other.canonical()
    }
}

impl TryFrom<Vec<usize>> for CircularOrdering {
    type Error = NnetError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        CircularOrdering::new(v)
    }
}

impl From<CircularOrdering> for Vec<usize> {
    fn from(o: CircularOrdering) -> Self {
        o.0
    }
}

/// One entry of the agglomeration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// Two clusters were selected and the chosen nodes became neighbours.
    Join { clusters: [Vec<usize>; 2], nodes: [usize; 2] },
    /// Path `x - y - z` was replaced by `u - v`.
    Reduce { x: usize, y: usize, z: usize, u: usize, v: usize },
}

/// Average distance between the members of two disjoint clusters.
pub fn cluster_distance(ci: &[usize], cj: &[usize], d: impl Fn(usize, usize) -> f64) -> f64 {
    let total: f64 = ci.iter().flat_map(|&x| cj.iter().map(move |&y| (x, y))).map(|(x, y)| d(x, y)).sum();
    total / (ci.len() * cj.len()) as f64
}

/// Strict improvement beyond rounding. Criterion values that agree to 12
/// digits count as tied, so ties fall to the pair enumerated first whatever
/// order the sums were accumulated in. Three clusters always tie exactly.
fn improves(q: f64, best: f64) -> bool {
    if best == f64::INFINITY {
        return true;
    }
    q < best - 1e-12 * q.abs().max(best.abs()).max(1e-300)
}

/// Working state of the agglomeration. Nodes `0..n` are the taxa; reductions
/// allocate fresh ids above that.
#[derive(Clone, Debug)]
pub struct AgglomState {
    n_taxa: usize,
    capacity: usize,
    dist: Vec<f64>,
    active: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
    next_id: usize,
    trace: Vec<TraceEvent>,
}

impl AgglomState {
    pub fn new(d: &DistanceMatrix) -> AgglomState {
        let n = d.len();
        let capacity = (3 * n).max(1);
        let mut dist = vec![0.0; capacity * capacity];
        for i in 0..n {
            for j in 0..n {
                dist[i * capacity + j] = d.get(i, j);
            }
        }
        let mut active = vec![false; capacity];
        active[..n].iter_mut().for_each(|a| *a = true);
        AgglomState {
            n_taxa: n,
            capacity,
            dist,
            active,
            neighbors: vec![Vec::new(); capacity],
            next_id: n,
            trace: Vec::new(),
        }
    }

    pub fn n_taxa(&self) -> usize {
        self.n_taxa
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.capacity + b]
    }

    fn set_distance(&mut self, a: usize, b: usize, v: f64) {
        self.dist[a * self.capacity + b] = v;
        self.dist[b * self.capacity + a] = v;
    }

    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.next_id).filter(|&i| self.active[i]).collect()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Connected components of the neighbour relation, members ascending,
    /// clusters ordered by their smallest member.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.next_id];
        let mut out = Vec::new();
        for start in self.active_nodes() {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in &self.neighbors[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_done(&self) -> bool {
        self.clusters().len() <= 1
    }

    fn cdist(&self, ci: &[usize], cj: &[usize]) -> f64 {
        cluster_distance(ci, cj, |a, b| self.distance(a, b))
    }

    /// Indices into `clusters` of the pair minimising Q; the lowest index
    /// pair wins ties. Needs at least two clusters.
    pub fn select_cluster_pair(&self, clusters: &[Vec<usize>]) -> (usize, usize) {
        let m = clusters.len();
        assert!(m >= 2, "cluster selection needs two clusters");
        if m == 2 {
            return (0, 1);
        }
        let mut cd = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..i {
                let v = self.cdist(&clusters[i], &clusters[j]);
                cd[i * m + j] = v;
                cd[j * m + i] = v;
            }
        }
        let row: Vec<f64> = (0..m).map(|i| cd[i * m..(i + 1) * m].iter().sum()).collect();
        let mut best = (0, 1);
        let mut best_q = f64::INFINITY;
        for i in 0..m {
            for j in i + 1..m {
                let q = (m as f64 - 2.0) * cd[i * m + j] - row[i] - row[j];
                if improves(q, best_q) {
                    best_q = q;
                    best = (i, j);
                }
            }
        }
        best
    }

    /// The member pair `(x, y)`, `x` in `ci` and `y` in `cj`, minimising the
    /// node-level criterion over the ground set made of every other cluster
    /// plus the individual members of `ci` and `cj`.
    pub fn select_node_pair(&self, clusters: &[Vec<usize>], ci: usize, cj: usize) -> (usize, usize) {
        let (a, b) = (&clusters[ci], &clusters[cj]);
        if a.len() == 1 && b.len() == 1 {
            return (a[0], b[0]);
        }
        let others: Vec<&Vec<usize>> = clusters.iter().enumerate().filter(|(k, _)| *k != ci && *k != cj).map(|(_, c)| c).collect();
        let m_hat = (clusters.len() - 2 + a.len() + b.len()) as f64;
        // Row sum of one node over the ground set; its own singleton adds zero.
        let row = |x: usize| -> f64 {
            let singles: f64 = a.iter().chain(b.iter()).map(|&s| self.distance(x, s)).sum();
            let grouped: f64 = others.iter().map(|c| self.cdist(&[x], c)).sum();
            singles + grouped
        };
        let mut best = (a[0], b[0]);
        let mut best_q = f64::INFINITY;
        for &x in a {
            let rx = row(x);
            for &y in b {
                let q = (m_hat - 2.0) * self.distance(x, y) - rx - row(y);
                if improves(q, best_q) {
                    best_q = q;
                    best = (x, y);
                }
            }
        }
        best
    }

    fn link(&mut self, x: usize, y: usize) {
        self.neighbors[x].push(y);
        self.neighbors[y].push(x);
    }

    /// Replaces the path `x - y - z` by two new nodes `u - v`. `u` takes over
    /// the other neighbour of `x`, `v` that of `z`. Returns `(u, v)`.
    pub fn reduce(&mut self, x: usize, y: usize, z: usize, params: &ReductionParams) -> Result<(usize, usize), NnetError> {
        let nb = &self.neighbors[y];
        if nb.len() != 2 || !(nb.contains(&x) && nb.contains(&z)) || x == z {
            return Err(NnetError::PreconditionViolation(format!(
                "node {y} must have exactly the two neighbours {x} and {z}, has {nb:?}"
            )));
        }
        if self.next_id + 2 > self.capacity {
            return Err(NnetError::PreconditionViolation("node capacity exhausted".into()));
        }
        let (al, be, ga) = (params.alpha, params.beta, params.gamma);
        let (u, v) = (self.next_id, self.next_id + 1);
        self.next_id += 2;
        for a in self.active_nodes() {
            if a == x || a == y || a == z {
                continue;
            }
            let (dxa, dya, dza) = (self.distance(x, a), self.distance(y, a), self.distance(z, a));
            self.set_distance(u, a, (al + be) * dxa + ga * dya);
            self.set_distance(v, a, al * dya + (be + ga) * dza);
        }
        let duv = al * self.distance(x, y) + be * self.distance(x, z) + ga * self.distance(y, z);
        self.set_distance(u, v, duv);

        let x_out: Vec<usize> = self.neighbors[x].iter().copied().filter(|&w| w != y).collect();
        let z_out: Vec<usize> = self.neighbors[z].iter().copied().filter(|&w| w != y).collect();
        for (old, new, outs) in [(x, u, &x_out), (z, v, &z_out)] {
            for &w in outs.iter() {
                for slot in self.neighbors[w].iter_mut() {
                    if *slot == old {
                        *slot = new;
                    }
                }
            }
        }
        self.neighbors[u] = x_out;
        self.neighbors[u].push(v);
        self.neighbors[v] = vec![u];
        self.neighbors[v].extend(z_out);
        for old in [x, y, z] {
            self.active[old] = false;
            self.neighbors[old].clear();
        }
        self.active[u] = true;
        self.active[v] = true;
        self.trace.push(TraceEvent::Reduce { x, y, z, u, v });
        Ok((u, v))
    }

    /// One agglomeration step: select, link, and reduce until every node has
    /// at most one neighbour inside its path. No-op once a single cluster remains.
    pub fn step(&mut self, params: &ReductionParams) -> Result<(), NnetError> {
        let clusters = self.clusters();
        if clusters.len() < 2 {
            return Ok(());
        }
        let (ci, cj) = self.select_cluster_pair(&clusters);
        let (x, y) = self.select_node_pair(&clusters, ci, cj);
        self.link(x, y);
        self.trace.push(TraceEvent::Join { clusters: [clusters[ci].clone(), clusters[cj].clone()], nodes: [x, y] });

        let mut candidates = vec![x, y];
        while let Some(center) = candidates.iter().copied().find(|&c| self.active[c] && self.neighbors[c].len() == 2) {
            let (a, b) = (self.neighbors[center][0], self.neighbors[center][1]);
            let (u, v) = self.reduce(a, center, b, params)?;
            candidates = vec![v, u];
        }
        Ok(())
    }

    /// Expands the reduction log into the circular ordering. Only valid once
    /// [`is_done`](Self::is_done).
    pub fn ordering(&self) -> CircularOrdering {
        let clusters = self.clusters();
        debug_assert!(clusters.len() <= 1);
        let mut order: Vec<usize> = match clusters.first() {
            None => Vec::new(),
            Some(c) => path_order(c, &self.neighbors),
        };
        for ev in self.trace.iter().rev() {
            let TraceEvent::Reduce { x, y, z, u, v } = *ev else { continue };
            let len = order.len();
            let pu = order.iter().position(|&w| w == u).expect("u present during expansion");
            let pv = order.iter().position(|&w| w == v).expect("v present during expansion");
            let forward = order[(pu + 1) % len] == v;
            assert!(forward || order[(pv + 1) % len] == u, "reduced nodes must be adjacent");
            let mut next = Vec::with_capacity(len + 1);
            for &w in &order {
                match (w == u, w == v, forward) {
                    (true, _, true) => next.extend([x, y, z]),
                    (_, true, false) => next.extend([z, y, x]),
                    (true, _, false) | (_, true, true) => {}
                    _ => next.push(w),
                }
            }
            order = next;
        }
        CircularOrdering(order)
    }
}

fn path_order(cluster: &[usize], neighbors: &[Vec<usize>]) -> Vec<usize> {
    let Some(&start) = cluster.iter().find(|&&c| neighbors[c].len() <= 1) else {
        return cluster.to_vec();
    };
    let mut out = vec![start];
    let mut prev = usize::MAX;
    let mut cur = start;
    while let Some(&next) = neighbors[cur].iter().find(|&&w| w != prev) {
        out.push(next);
        prev = cur;
        cur = next;
    }
    out
}

/// Result of a full Neighbor-Net run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborNetRun {
    pub ordering: CircularOrdering,
    pub trace: Vec<TraceEvent>,
}

/// Runs the agglomeration to a single cluster and returns the ordering and log.
pub fn neighbor_net(d: &DistanceMatrix, params: &ReductionParams) -> NeighborNetRun {
    let n = d.len();
    if n <= 3 {
        return NeighborNetRun { ordering: CircularOrdering::identity(n), trace: Vec::new() };
    }
    let mut state = AgglomState::new(d);
    while !state.is_done() {
        state.step(params).expect("selection keeps the reduction precondition");
    }
    let ordering = state.ordering();
    assert_eq!(ordering.len(), n, "ordering must cover every taxon once");
    NeighborNetRun { ordering, trace: state.trace }
}

/// The circular ordering alone.
pub fn neighbor_net_ordering(d: &DistanceMatrix, params: &ReductionParams) -> CircularOrdering {
    neighbor_net(d, params).ordering
}
