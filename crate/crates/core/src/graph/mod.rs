//! Splits graph construction, equal-angle layout and export.
//!
//! A circular split `{x_s ..= x_e}` is drawn as the chord of the unit circle
//! joining the gaps before `x_s` and after `x_e`, taxa sitting evenly around
//! the circle. The splits graph is the dual of this chord arrangement: one
//! vertex per region of the disk, one edge per chord segment between two
//! regions. A region is identified by the side it takes of every split.
//!
//! Each split's edges are translates of `weight * u`, `u` the chord normal
//! pointing at the arc (the direction of the arc midpoint). Region `R` sits at
//! the sum of `weight * u` over the splits whose arc side holds `R`, which is
//! the gradient of a convex piecewise linear function on that region. The
//! drawing is therefore the dual subdivision of the arrangement and is planar
//! for any positive weights.
//!
//! Gap angles carry a small fixed jitter so that no three chords meet in a
//! point, which regular spacing would otherwise produce.

mod nexus;

pub use nexus::{parse_nexus, write_nexus, NexusError};

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::format::fmt_sig;
use crate::nnet::CircularOrdering;
use crate::splits::{Split, SplitSystem};

pub const GRAPH_SCHEMA: &str = "splitfolio.graph/1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Index of the split in the system's split list.
    pub split: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphLayout {
    pub vertices: Vec<[f64; 2]>,
    pub edges: Vec<Edge>,
    /// Vertex holding each taxon, indexed by taxon id.
    pub anchors: Vec<usize>,
}

/// Bit vector recording, per split, whether a region lies on the arc side.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Sides(Vec<u64>);

impl Sides {
    fn new(words: usize) -> Sides {
        Sides(vec![0; words])
    }
    fn get(&self, k: usize) -> bool {
        self.0[k / 64] >> (k % 64) & 1 == 1
    }
    fn set(&mut self, k: usize, v: bool) {
        if v {
            self.0[k / 64] |= 1 << (k % 64);
        } else {
            self.0[k / 64] &= !(1 << (k % 64));
        }
    }
}

/// Angle of the gap just before ordering position `g`.
fn gap_angle(g: usize, n: usize) -> f64 {
    let jitter = 0.01 * ((g as f64 * 0.618_033_988_749_895).fract() - 0.5);
    2.0 * PI * (g as f64 - 0.5 + jitter) / n as f64
}

fn chord(split: &Split, n: usize) -> ([f64; 2], [f64; 2]) {
    let (a, b) = (gap_angle(split.start, n), gap_angle(split.end + 1, n));
    ([a.cos(), a.sin()], [b.cos(), b.sin()])
}

/// Unit normal of a split's chord, pointing toward its arc.
pub fn split_direction(split: &Split, n: usize) -> [f64; 2] {
    let theta = 0.5 * (gap_angle(split.start, n) + gap_angle(split.end + 1, n));
    [theta.cos(), theta.sin()]
}

/// Two arcs cross when exactly one end of the second lies strictly inside the first.
fn arcs_cross(s: &Split, t: &Split) -> bool {
    let (a1, a2, b1, b2) = (s.start, s.end + 1, t.start, t.end + 1);
    (a1 < b1 && b1 < a2 && a2 < b2) || (b1 < a1 && a1 < b2 && b2 < a2)
}

/// Parameter along chord `p0 -> p1` where it meets chord `q0 -> q1`.
fn crossing_param(p: ([f64; 2], [f64; 2]), q: ([f64; 2], [f64; 2])) -> f64 {
    let r = [p.1[0] - p.0[0], p.1[1] - p.0[1]];
    let s = [q.1[0] - q.0[0], q.1[1] - q.0[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    let w = [q.0[0] - p.0[0], q.0[1] - p.0[1]];
    (w[0] * s[1] - w[1] * s[0]) / denom
}

/// Builds the splits graph of `system` and places it by equal angles.
pub fn layout(system: &SplitSystem) -> GraphLayout {
    let n = system.n_taxa();
    let splits = &system.splits;
    let m = splits.len();
    let words = m.div_ceil(64).max(1);
    let pos = system.ordering.positions();

    let taxon_sides: Vec<Sides> = (0..n)
        .map(|t| {
            let mut s = Sides::new(words);
            for (k, sp) in splits.iter().enumerate() {
                s.set(k, sp.contains_position(pos[t]));
            }
            s
        })
        .collect();

    let mut regions: Vec<Sides> = Vec::new();
    let mut index: HashMap<Sides, usize> = HashMap::new();
    let mut intern = |v: Sides, regions: &mut Vec<Sides>| -> usize {
        *index.entry(v.clone()).or_insert_with(|| {
            regions.push(v);
            regions.len() - 1
        })
    };
    let mut edges = Vec::new();
    let chords: Vec<_> = splits.iter().map(|s| chord(s, n)).collect();

    for (k, sk) in splits.iter().enumerate() {
        // sides of the splits that do not cross this chord are fixed along it
        let mut base = Sides::new(words);
        let mut crossings: Vec<(f64, usize, bool)> = Vec::new();
        for (j, sj) in splits.iter().enumerate() {
            if j == k {
                continue;
            }
            if arcs_cross(sk, sj) {
                // the chord's far end lies on the arc side of sj or not
                let far_end = sk.end + 1;
                let far_inside = sj.start < far_end && far_end <= sj.end;
                crossings.push((crossing_param(chords[k], chords[j]), j, far_inside));
                base.set(j, !far_inside);
            } else {
                base.set(j, sj.start <= sk.start && sk.end <= sj.end);
            }
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut side = base;
        for step in 0..=crossings.len() {
            if step > 0 {
                let (_, j, far_inside) = crossings[step - 1];
                side.set(j, far_inside);
            }
            let outer = intern(side.clone(), &mut regions);
            let mut arc = side.clone();
            arc.set(k, true);
            let inner = intern(arc, &mut regions);
            edges.push(Edge { a: outer, b: inner, split: k });
        }
    }
    if regions.is_empty() {
        regions.push(Sides::new(words));
        index.insert(Sides::new(words), 0);
    }
    edges.sort_by_key(|e| (e.split, e.a, e.b));
    edges.dedup();

    let dirs: Vec<[f64; 2]> = splits.iter().map(|s| split_direction(s, n)).collect();
    let mut coords: Vec<[f64; 2]> = regions
        .iter()
        .map(|v| {
            let mut p = [0.0, 0.0];
            for (k, s) in splits.iter().enumerate() {
                if v.get(k) {
                    p[0] += s.weight * dirs[k][0];
                    p[1] += s.weight * dirs[k][1];
                }
            }
            p
        })
        .collect();
    let anchors: Vec<usize> = taxon_sides
        .iter()
        .map(|s| *index.get(s).expect("every taxon borders a region"))
        .collect();

    if n > 0 {
        let cx = anchors.iter().map(|&a| coords[a][0]).sum::<f64>() / n as f64;
        let cy = anchors.iter().map(|&a| coords[a][1]).sum::<f64>() / n as f64;
        for c in coords.iter_mut() {
            c[0] -= cx;
            c[1] -= cy;
        }
    }
    GraphLayout { vertices: coords, edges, anchors }
}

impl GraphLayout {
    /// Shortest path length between the anchors of two taxa, counting each
    /// edge at the weight of its split.
    pub fn path_length(&self, system: &SplitSystem, from: usize, to: usize) -> f64 {
        let nv = self.vertices.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for e in &self.edges {
            let w = system.splits[e.split].weight;
            adj[e.a].push((e.b, w));
            adj[e.b].push((e.a, w));
        }
        let (src, dst) = (self.anchors[from], self.anchors[to]);
        let mut dist = vec![f64::INFINITY; nv];
        let mut done = vec![false; nv];
        dist[src] = 0.0;
        // dense Dijkstra; graphs here have at most a few thousand vertices
        for _ in 0..nv {
            let Some(u) = (0..nv).filter(|&v| !done[v] && dist[v].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            else {
                break;
            };
            if u == dst {
                break;
            }
            done[u] = true;
            for &(v, w) in &adj[u] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
        dist[dst]
    }

    /// Pairs of edges that cross away from shared endpoints.
    pub fn crossings(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.edges.len() {
            for j in i + 1..self.edges.len() {
                let (e, f) = (self.edges[i], self.edges[j]);
                if e.a == f.a || e.a == f.b || e.b == f.a || e.b == f.b {
                    continue;
                }
                let p = [self.vertices[e.a], self.vertices[e.b]];
                let q = [self.vertices[f.a], self.vertices[f.b]];
                if segments_cross(p, q) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Proper crossing test with a small tolerance, so that edges that merely
/// touch or run along each other within rounding do not count.
fn segments_cross(p: [[f64; 2]; 2], q: [[f64; 2]; 2]) -> bool {
    let scale = p.iter().chain(q.iter()).flat_map(|v| v.iter()).fold(1.0f64, |a, v| a.max(v.abs()));
    let eps = 1e-9 * scale * scale;
    let d1 = orient(q[0], q[1], p[0]);
    let d2 = orient(q[0], q[1], p[1]);
    let d3 = orient(p[0], p[1], q[0]);
    let d4 = orient(p[0], p[1], q[1]);
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

/// Taxon entry of the graph document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphTaxon {
    pub id: usize,
    pub label: String,
    pub industry: Option<String>,
    pub vertex: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSplit {
    pub id: usize,
    pub start: usize,
    pub end: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphVertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// Everything a viewer needs: taxa in circular order, the weighted splits,
/// and the drawn graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub schema: String,
    pub fit: f64,
    pub taxa: Vec<GraphTaxon>,
    /// Taxon ids in circular order.
    pub ordering: Vec<usize>,
    pub splits: Vec<GraphSplit>,
    pub vertices: Vec<GraphVertex>,
    pub edges: Vec<Edge>,
}

impl GraphDocument {
    pub fn new(system: &SplitSystem, layout: &GraphLayout, industries: &BTreeMap<String, String>) -> GraphDocument {
        GraphDocument {
            schema: GRAPH_SCHEMA.to_string(),
            fit: system.fit,
            taxa: system
                .taxa
                .iter()
                .enumerate()
                .map(|(id, label)| GraphTaxon {
                    id,
                    label: label.clone(),
                    industry: industries.get(label).cloned(),
                    vertex: layout.anchors[id],
                })
                .collect(),
            ordering: system.ordering.as_slice().to_vec(),
            splits: system
                .splits
                .iter()
                .enumerate()
                .map(|(id, s)| GraphSplit { id, start: s.start, end: s.end, weight: s.weight })
                .collect(),
            vertices: layout.vertices.iter().enumerate().map(|(id, v)| GraphVertex { id, x: v[0], y: v[1] }).collect(),
            edges: layout.edges.clone(),
        }
    }

    /// Recovers the split system (without observed distances) from the document.
    pub fn system(&self) -> Result<SplitSystem, crate::splits::SplitsError> {
        let ordering = CircularOrdering::new(self.ordering.clone())
            .map_err(|e| crate::splits::SplitsError::Invalid(e.to_string()))?;
        SplitSystem::new(
            self.taxa.iter().map(|t| t.label.clone()).collect(),
            ordering,
            self.splits.iter().map(|s| Split { start: s.start, end: s.end, weight: s.weight }).collect(),
            self.fit,
        )
    }
}

pub fn export_json(system: &SplitSystem, layout: &GraphLayout, industries: &BTreeMap<String, String>) -> String {
    let mut text = serde_json::to_string_pretty(&GraphDocument::new(system, layout, industries)).expect("graph serializes");
    text.push('\n');
    text
}

pub fn parse_graph_json(text: &str) -> Result<GraphDocument, serde_json::Error> {
    serde_json::from_str(text)
}

/// Static drawing of the graph: edges as lines, taxa labelled at their anchors.
pub fn export_svg(system: &SplitSystem, layout: &GraphLayout) -> String {
    let size = 800.0;
    let margin = 80.0;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &layout.vertices {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if span > 0.0 { (size - 2.0 * margin) / span } else { 1.0 };
    let pt = |v: [f64; 2]| -> (String, String) {
        let x = margin + (v[0] - lo[0]) * scale;
        // screen y grows downward
        let y = size - margin - (v[1] - lo[1]) * scale;
        (fmt_sig(x, 6), fmt_sig(y, 6))
    };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    );
    out.push_str("<g stroke=\"black\" stroke-width=\"1\">\n");
    for e in &layout.edges {
        let (x1, y1) = pt(layout.vertices[e.a]);
        let (x2, y2) = pt(layout.vertices[e.b]);
        out.push_str(&format!("<line x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" data-split=\"{}\"/>\n", e.split));
    }
    out.push_str("</g>\n<g font-family=\"sans-serif\" font-size=\"10\">\n");
    for (t, label) in system.taxa.iter().enumerate() {
        let (x, y) = pt(layout.vertices[layout.anchors[t]]);
        out.push_str(&format!("<text x=\"{x}\" y=\"{y}\">{}</text>\n", xml_escape(label)));
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::DistanceMatrix;
    use crate::splits::circular_splits;

    fn system(n: usize, splits: Vec<Split>) -> SplitSystem {
        SplitSystem::new((0..n).map(|i| format!("t{i}")).collect(), CircularOrdering::identity(n), splits, 0.0).unwrap()
    }

    fn weighted(s: usize, e: usize, w: f64) -> Split {
        Split { start: s, end: e, weight: w }
    }

    fn length(l: &GraphLayout, e: &Edge) -> f64 {
        let (p, q) = (l.vertices[e.a], l.vertices[e.b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    #[test]
    fn two_taxa_single_edge() {
        let sys = system(2, vec![weighted(0, 0, 0.7)]);
        let l = layout(&sys);
        assert_eq!(l.vertices.len(), 2);
        assert_eq!(l.edges.len(), 1);
        assert!((length(&l, &l.edges[0]) - 0.7).abs() < 1e-12);
        assert_ne!(l.anchors[0], l.anchors[1]);
    }

    #[test]
    fn star_has_one_hub() {
        let sys = system(4, (0..3).map(|i| weighted(i, i, 1.0)).chain([weighted(0, 2, 1.0)]).collect());
        let l = layout(&sys);
        assert_eq!(l.vertices.len(), 5);
        assert_eq!(l.edges.len(), 4);
        for e in &l.edges {
            assert!((length(&l, e) - 1.0).abs() < 1e-12);
        }
        let mut degree = vec![0; 5];
        for e in &l.edges {
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        assert_eq!(degree.iter().filter(|&&d| d == 4).count(), 1);
    }

    #[test]
    fn compatible_pair_has_no_box() {
        // {0,1} and {0} are compatible: a path, three vertices
        let l = layout(&system(4, vec![weighted(0, 1, 1.0), weighted(0, 0, 1.0)]));
        assert_eq!(l.vertices.len(), 3);
        assert_eq!(l.edges.len(), 2);
    }

    #[test]
    fn incompatible_pair_makes_one_parallelogram() {
        // {0,1} and {1,2} cross
        let l = layout(&system(4, vec![weighted(0, 1, 1.0), weighted(1, 2, 2.0)]));
        assert_eq!(l.vertices.len(), 4);
        assert_eq!(l.edges.len(), 4);
        for k in 0..2 {
            let class: Vec<&Edge> = l.edges.iter().filter(|e| e.split == k).collect();
            assert_eq!(class.len(), 2);
            let d = |e: &Edge| {
                let (p, q) = (l.vertices[e.a], l.vertices[e.b]);
                [q[0] - p[0], q[1] - p[1]]
            };
            let (u, v) = (d(class[0]), d(class[1]));
            assert!((u[0] - v[0]).abs() < 1e-9 && (u[1] - v[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn full_circular_system_realizes_metric() {
        let n = 7;
        let splits: Vec<Split> =
            circular_splits(n).into_iter().enumerate().map(|(k, s)| weighted(s.start, s.end, 0.1 + (k % 5) as f64 * 0.2)).collect();
        let sys = system(n, splits);
        let l = layout(&sys);
        let d = sys.induced_distances();
        for p in 0..n {
            for q in 0..n {
                assert!((l.path_length(&sys, p, q) - d[(p, q)]).abs() < 1e-9);
            }
        }
        assert!(l.crossings().is_empty());
    }

    #[test]
    fn empty_split_list() {
        let sys = system(3, vec![]);
        let l = layout(&sys);
        assert_eq!(l.vertices.len(), 1);
        assert!(l.edges.is_empty());
        let doc = parse_graph_json(&export_json(&sys, &l, &BTreeMap::new())).unwrap();
        assert_eq!(doc.ordering, vec![0, 1, 2]);
        assert!(doc.edges.is_empty());
    }

    #[test]
    fn json_round_trip() {
        let d = DistanceMatrix::from_fn(5, |i, j| 1.0 + ((i * 7 + j * 3) % 5) as f64 * 0.1 + (i + j) as f64 * 0.01).unwrap();
        let sys = SplitSystem::fit(&d, CircularOrdering::identity(5)).unwrap().prune(1e-8);
        let l = layout(&sys);
        let industries: BTreeMap<String, String> = [("t0".to_string(), "A".to_string())].into();
        let text = export_json(&sys, &l, &industries);
        let doc = parse_graph_json(&text).unwrap();
        assert_eq!(doc, GraphDocument::new(&sys, &l, &industries));
        assert_eq!(doc.system().unwrap(), sys);
        assert_eq!(doc.taxa[0].industry.as_deref(), Some("A"));
    }

    #[test]
    fn svg_mentions_every_taxon() {
        let sys = system(3, (0..2).map(|i| weighted(i, i, 1.0)).chain([weighted(0, 1, 1.0)]).collect());
        let svg = export_svg(&sys, &layout(&sys));
        for t in &sys.taxa {
            assert!(svg.contains(&format!(">{t}<")));
        }
        assert_eq!(svg.matches("<line").count(), 3);
    }
}
