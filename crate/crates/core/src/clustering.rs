//! Correlation clusters as contiguous arcs of the circular ordering.
//!
//! A [`ClusterAssignment`] cuts the circle at `k` positions. Cluster ids run
//! `1..=k` clockwise. Pairing, industry division and merging of small groups
//! all work on arcs, so merged groups can be paired the same way as clusters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::sha256_hex;
use crate::splits::SplitSystem;

pub const CLUSTERS_SCHEMA: &str = "splitfolio.clusters/1";

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("pairing needs at least two clusters")]
    SingleCluster,
    #[error("cannot cut {n} taxa into {k} clusters")]
    KTooLarge { k: usize, n: usize },
    #[error("suggesting clusters needs k of at least 2")]
    InvalidK,
    #[error("taxon {0} has no industry code")]
    MissingIndustry(String),
    #[error("invalid cluster assignment: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("cluster assignment JSON: {0}")]
    Json(String),
}

/// One reason an assignment is rejected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptyOrdering,
    DuplicateTaxon(String),
    HashMismatch { expected: String, found: String },
    NoClusters,
    LabelCount { boundaries: usize, labels: usize },
    BoundaryOutOfRange(usize),
    BoundariesNotIncreasing,
    /// The cluster appears on several disjoint arcs.
    SplitCluster(u32),
    IdOutOfRange(u32),
    NotClockwise { after: u32, found: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyOrdering => write!(f, "ordering is empty"),
            Violation::DuplicateTaxon(t) => write!(f, "taxon {t} appears twice in the ordering"),
            Violation::HashMismatch { expected, found } => {
                write!(f, "ordering_hash {found} does not match the ordering (expected {expected})")
            }
            Violation::NoClusters => write!(f, "no boundaries given"),
            Violation::LabelCount { boundaries, labels } => {
                write!(f, "{boundaries} boundaries but {labels} labels")
            }
            Violation::BoundaryOutOfRange(b) => write!(f, "boundary {b} is outside the ordering"),
            Violation::BoundariesNotIncreasing => write!(f, "boundaries must be strictly increasing"),
            Violation::SplitCluster(c) => write!(f, "cluster {c} occupies more than one arc"),
            Violation::IdOutOfRange(c) => write!(f, "cluster id {c} is outside 1..=k"),
            Violation::NotClockwise { after, found } => {
                write!(f, "cluster {found} follows cluster {after}; ids must run clockwise")
            }
        }
    }
}

/// Hash identifying a circular ordering: SHA-256 of the labels joined by newlines.
pub fn ordering_hash(labels: &[String]) -> String {
    sha256_hex(labels.join("\n").as_bytes())
}

/// Clusters as arcs of a labelled circular ordering.
///
/// `boundaries[i]` is the ordering position where the arc labelled
/// `labels[i]` starts; the arc runs up to the next boundary, the last one
/// wrapping around to the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub schema: String,
    pub ordering_hash: String,
    pub ordering: Vec<String>,
    pub boundaries: Vec<usize>,
    pub labels: Vec<u32>,
}

/// A contiguous stretch of the circle: `len` positions from `start`, wrapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcSpan {
    pub start: usize,
    pub len: usize,
}

impl ArcSpan {
    /// Midpoint in position units, a taxon at position `p` covering `[p, p + 1)`.
    pub fn midpoint(&self) -> f64 {
        self.start as f64 + self.len as f64 / 2.0
    }
}

impl ClusterAssignment {
    /// Cuts `ordering` (labels in circular order) at the sorted positions `cuts`.
    /// The arc starting at the first cut gets id 1.
    pub fn from_cuts(ordering: Vec<String>, mut cuts: Vec<usize>) -> Result<ClusterAssignment, ClusterError> {
        cuts.sort_unstable();
        cuts.dedup();
        let k = cuts.len() as u32;
        let a = ClusterAssignment {
            schema: CLUSTERS_SCHEMA.to_string(),
            ordering_hash: ordering_hash(&ordering),
            ordering,
            boundaries: cuts,
            labels: (1..=k).collect(),
        };
        a.check()?;
        Ok(a)
    }

    pub fn k(&self) -> usize {
        self.boundaries.len()
    }

    pub fn n_taxa(&self) -> usize {
        self.ordering.len()
    }

    /// Every rule an assignment must satisfy; empty when valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.ordering.len();
        if n == 0 {
            out.push(Violation::EmptyOrdering);
        }
        let mut seen = BTreeSet::new();
        for t in &self.ordering {
            if !seen.insert(t) {
                out.push(Violation::DuplicateTaxon(t.clone()));
            }
        }
        let expected = ordering_hash(&self.ordering);
        if self.ordering_hash != expected {
            out.push(Violation::HashMismatch { expected, found: self.ordering_hash.clone() });
        }
        let k = self.boundaries.len();
        if k == 0 {
            out.push(Violation::NoClusters);
        }
        if self.labels.len() != k {
            out.push(Violation::LabelCount { boundaries: k, labels: self.labels.len() });
        }
        for &b in &self.boundaries {
            if b >= n.max(1) {
                out.push(Violation::BoundaryOutOfRange(b));
            }
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            out.push(Violation::BoundariesNotIncreasing);
        }
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &c in &self.labels {
            *counts.entry(c).or_default() += 1;
        }
        for (&c, &count) in &counts {
            if count > 1 {
                out.push(Violation::SplitCluster(c));
            }
            if c == 0 || c as usize > self.labels.len() {
                out.push(Violation::IdOutOfRange(c));
            }
        }
        let len = self.labels.len();
        if counts.len() == len && counts.keys().all(|&c| c >= 1 && c as usize <= len) {
            for i in 0..len {
                let (a, b) = (self.labels[i], self.labels[(i + 1) % len]);
                if len > 1 && b != a % len as u32 + 1 {
                    out.push(Violation::NotClockwise { after: a, found: b });
                    break;
                }
            }
        }
        out
    }

    fn check(&self) -> Result<(), ClusterError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ClusterError::Invalid(v))
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("assignment serializes");
        s.push('\n');
        s
    }

    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<ClusterAssignment, ClusterError> {
        let a: ClusterAssignment = serde_json::from_str(text).map_err(|e| ClusterError::Json(e.to_string()))?;
        a.check()?;
        Ok(a)
    }

    /// Arc of every cluster, indexed by `id - 1`.
    pub fn arcs(&self) -> Vec<ArcSpan> {
        let n = self.n_taxa();
        let k = self.k();
        let mut out = vec![ArcSpan { start: 0, len: 0 }; k];
        for i in 0..k {
            let start = self.boundaries[i];
            let end = if i + 1 < k { self.boundaries[i + 1] } else { self.boundaries[0] + n };
            out[self.labels[i] as usize - 1] = ArcSpan { start, len: end - start };
        }
        out
    }

    /// Members of cluster `id` in clockwise order.
    pub fn members(&self, id: u32) -> Vec<String> {
        let arc = self.arcs()[id as usize - 1];
        let n = self.n_taxa();
        (0..arc.len).map(|i| self.ordering[(arc.start + i) % n].clone()).collect()
    }

    /// Cluster id of every taxon label.
    pub fn cluster_of(&self) -> BTreeMap<String, u32> {
        let mut out = BTreeMap::new();
        for id in 1..=self.k() as u32 {
            for m in self.members(id) {
                out.insert(m, id);
            }
        }
        out
    }
}

/// Partner of every cluster. Not necessarily symmetric for odd `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingMap {
    pub partner: BTreeMap<u32, u32>,
}

/// Partner index for arcs listed in clockwise order around a circle of `n`
/// positions. With an even count the partner sits half way round the list;
/// with an odd count it is the arc whose midpoint is angularly closest to the
/// antipode of this arc's midpoint, ties to the lower index.
pub fn pair_arcs(arcs: &[ArcSpan], n: usize) -> Result<Vec<usize>, ClusterError> {
    let k = arcs.len();
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    if k % 2 == 0 {
        return Ok((0..k).map(|i| (i + k / 2) % k).collect());
    }
    let nf = n as f64;
    let circ = |a: f64, b: f64| {
        let d = (a - b).rem_euclid(nf);
        d.min(nf - d)
    };
    Ok((0..k)
        .map(|i| {
            let target = arcs[i].midpoint() + nf / 2.0;
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (j, arc) in arcs.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = circ(arc.midpoint(), target);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect())
}

pub fn pair_clusters(a: &ClusterAssignment) -> Result<PairingMap, ClusterError> {
    let partners = pair_arcs(&a.arcs(), a.n_taxa())?;
    Ok(PairingMap { partner: partners.iter().enumerate().map(|(i, &p)| (i as u32 + 1, p as u32 + 1)).collect() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndustryTag {
    Dominant,
    NonDominant,
}

/// Dominant industry of each cluster and the resulting tag of each taxon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndustryDivision {
    pub dominant: BTreeMap<u32, String>,
    pub tags: BTreeMap<String, IndustryTag>,
}

/// Modal industry per cluster; ties go to the industry with more members in
/// the whole ordering, then to the lexicographically smaller code.
pub fn split_dominant(a: &ClusterAssignment, industries: &BTreeMap<String, String>) -> Result<IndustryDivision, ClusterError> {
    let code = |t: &String| industries.get(t).ok_or_else(|| ClusterError::MissingIndustry(t.clone()));
    let mut market: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &a.ordering {
        *market.entry(code(t)?.as_str()).or_default() += 1;
    }
    let mut dominant = BTreeMap::new();
    let mut tags = BTreeMap::new();
    for id in 1..=a.k() as u32 {
        let members = a.members(id);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &members {
            *counts.entry(code(t)?.as_str()).or_default() += 1;
        }
        // BTreeMap iterates codes in order, so strict comparison keeps the smaller code
        let mut best: Option<(&str, usize)> = None;
        for (&c, &count) in &counts {
            let better = match best {
                None => true,
                Some((b, bc)) => count > bc || (count == bc && market[c] > market[b]),
            };
            if better {
                best = Some((c, count));
            }
        }
        let dom = best.map(|(c, _)| c.to_string()).unwrap_or_default();
        for t in &members {
            let tag = if code(t)? == &dom { IndustryTag::Dominant } else { IndustryTag::NonDominant };
            tags.insert(t.clone(), tag);
        }
        dominant.insert(id, dom);
    }
    Ok(IndustryDivision { dominant, tags })
}

/// A run of consecutive clusters (clockwise) with the members drawn from them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub clusters: Vec<u32>,
    pub members: Vec<String>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Span of the clusters a group covers.
pub fn group_span(a: &ClusterAssignment, group: &Group) -> ArcSpan {
    let arcs = a.arcs();
    let first = arcs[group.clusters[0] as usize - 1];
    let len = group.clusters.iter().map(|&c| arcs[c as usize - 1].len).sum();
    ArcSpan { start: first.start, len }
}

/// The per-cluster subsets carrying `tag`, one group per cluster in id order.
pub fn tagged_groups(a: &ClusterAssignment, division: &IndustryDivision, tag: IndustryTag) -> Vec<Group> {
    (1..=a.k() as u32)
        .map(|id| Group {
            clusters: vec![id],
            members: a.members(id).into_iter().filter(|t| division.tags.get(t) == Some(&tag)).collect(),
        })
        .collect()
}

/// Merges groups (listed clockwise) until every group has at least
/// `min_size` members or a single group remains. The smallest group goes
/// first (ties to the lowest index) and joins whichever circular neighbour has
/// fewer members, ties to the clockwise one.
pub fn merge_groups(mut groups: Vec<Group>, min_size: usize) -> Vec<Group> {
    while groups.len() > 1 {
        let Some(i) = (0..groups.len()).filter(|&i| groups[i].len() < min_size).min_by_key(|&i| (groups[i].len(), i)) else {
            break;
        };
        let len = groups.len();
        let (prev, next) = ((i + len - 1) % len, (i + 1) % len);
        let (first, second) = if groups[prev].len() < groups[next].len() { (prev, i) } else { (i, next) };
        let mut merged = groups[first].clone();
        merged.clusters.extend(groups[second].clusters.iter().copied());
        merged.members.extend(groups[second].members.iter().cloned());
        if second == 0 {
            // the merge wraps past the end of the list; keep the result first
            groups.remove(first);
            groups[0] = merged;
        } else {
            groups[first] = merged;
            groups.remove(second);
        }
    }
    groups
}

/// Dominant or non-dominant subsets of every cluster, merged along the
/// ordering until each holds at least `min_size` stocks.
pub fn merge_small(a: &ClusterAssignment, division: &IndustryDivision, tag: IndustryTag, min_size: usize) -> Vec<Group> {
    merge_groups(tagged_groups(a, division, tag), min_size)
}

/// Weight of splits cut at each gap: entry `g` sums the splits with an end
/// at the boundary just before ordering position `g`.
pub fn gap_weights(system: &SplitSystem) -> Vec<f64> {
    let n = system.n_taxa();
    let mut gaps = vec![0.0; n];
    for s in &system.splits {
        gaps[s.start] += s.weight;
        gaps[(s.end + 1) % n] += s.weight;
    }
    gaps
}

/// Cuts the ordering at its `k` heaviest gaps, ties to lower positions.
pub fn suggest_clusters(system: &SplitSystem, k: usize) -> Result<ClusterAssignment, ClusterError> {
    let n = system.n_taxa();
    if k < 2 {
        return Err(ClusterError::InvalidK);
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let gaps = gap_weights(system);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gaps[b].total_cmp(&gaps[a]).then(a.cmp(&b)));
    let cuts = order[..k].to_vec();
    let labels: Vec<String> = system.ordering.as_slice().iter().map(|&t| system.taxa[t].clone()).collect();
    ClusterAssignment::from_cuts(labels, cuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::CircularOrdering;
    use crate::splits::Split;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    fn by_sizes(sizes: &[usize]) -> ClusterAssignment {
        let n = sizes.iter().sum();
        let mut cuts = vec![0];
        for s in &sizes[..sizes.len() - 1] {
            cuts.push(cuts.last().unwrap() + s);
        }
        ClusterAssignment::from_cuts(names(n), cuts).unwrap()
    }

    #[test]
    fn single_cluster_is_valid() {
        let a = ClusterAssignment::from_cuts(names(5), vec![2]).unwrap();
        assert!(a.validate().is_empty());
        assert_eq!(a.members(1), vec!["s02", "s03", "s04", "s00", "s01"]);
    }

    #[test]
    fn eight_arcs_on_twenty() {
        let a = ClusterAssignment::from_cuts(names(20), vec![0, 2, 5, 7, 10, 12, 15, 18]).unwrap();
        assert!(a.validate().is_empty());
        assert_eq!(a.arcs().iter().map(|s| s.len).sum::<usize>(), 20);
    }

    #[test]
    fn split_cluster_is_named() {
        let mut a = by_sizes(&[3, 3, 4]);
        a.labels = vec![1, 2, 1];
        let v = a.validate();
        assert!(v.contains(&Violation::SplitCluster(1)), "{v:?}");
        assert!(v.iter().any(|x| x.to_string().contains("cluster 1")));
    }

    #[test]
    fn labels_may_start_anywhere_but_run_clockwise() {
        let mut a = by_sizes(&[3, 3, 4]);
        a.labels = vec![2, 3, 1];
        assert!(a.validate().is_empty());
        assert_eq!(a.members(1), vec!["s06", "s07", "s08", "s09"]);
        a.labels = vec![1, 3, 2];
        assert!(matches!(a.validate()[0], Violation::NotClockwise { .. }));
    }

    #[test]
    fn hash_checked() {
        let mut a = by_sizes(&[2, 2]);
        a.ordering.swap(0, 1);
        assert!(matches!(a.validate()[0], Violation::HashMismatch { .. }));
    }

    #[test]
    fn json_round_trip() {
        let a = by_sizes(&[2, 3, 1]);
        assert_eq!(ClusterAssignment::from_json(&a.to_json()).unwrap(), a);
        assert!(matches!(ClusterAssignment::from_json("{}"), Err(ClusterError::Json(_))));
    }

    #[test]
    fn even_pairing() {
        let p = pair_clusters(&by_sizes(&[2; 8])).unwrap();
        for (c, q) in [(1, 5), (2, 6), (3, 7), (4, 8), (5, 1), (6, 2), (7, 3), (8, 4)] {
            assert_eq!(p.partner[&c], q);
        }
        let p2 = pair_clusters(&by_sizes(&[3, 7])).unwrap();
        assert_eq!(p2.partner[&1], 2);
        assert_eq!(p2.partner[&2], 1);
    }

    #[test]
    fn odd_pairing_example() {
        let p = pair_clusters(&by_sizes(&[5, 8, 6, 6, 15])).unwrap();
        let got: Vec<u32> = (1..=5).map(|c| p.partner[&c]).collect();
        assert_eq!(got, vec![4, 5, 5, 1, 2]);
    }

    #[test]
    fn single_cluster_cannot_pair() {
        assert_eq!(pair_clusters(&by_sizes(&[4])), Err(ClusterError::SingleCluster));
    }

    fn industries(a: &ClusterAssignment, codes: &[&str]) -> BTreeMap<String, String> {
        a.ordering.iter().cloned().zip(codes.iter().map(|c| c.to_string())).collect()
    }

    #[test]
    fn dominant_majority() {
        let a = by_sizes(&[5]);
        let ind = industries(&a, &["F", "F", "F", "M", "E"]);
        let d = split_dominant(&a, &ind).unwrap();
        assert_eq!(d.dominant[&1], "F");
        let tags: Vec<IndustryTag> = a.ordering.iter().map(|t| d.tags[t]).collect();
        use IndustryTag::*;
        assert_eq!(tags, vec![Dominant, Dominant, Dominant, NonDominant, NonDominant]);
    }

    #[test]
    fn dominant_single_industry() {
        let a = by_sizes(&[3]);
        let d = split_dominant(&a, &industries(&a, &["K", "K", "K"])).unwrap();
        assert!(d.tags.values().all(|&t| t == IndustryTag::Dominant));
        assert!(tagged_groups(&a, &d, IndustryTag::NonDominant)[0].is_empty());
    }

    #[test]
    fn dominant_tie_uses_market_count() {
        // cluster 1 ties 2 F vs 2 M; cluster 2 adds F, so F is larger market-wide
        let a = by_sizes(&[4, 2]);
        let d = split_dominant(&a, &industries(&a, &["M", "F", "M", "F", "F", "A"])).unwrap();
        assert_eq!(d.dominant[&1], "F");
        // full tie falls back to the smaller code
        let b = by_sizes(&[2]);
        let d = split_dominant(&b, &industries(&b, &["Z", "B"])).unwrap();
        assert_eq!(d.dominant[&1], "B");
    }

    #[test]
    fn missing_industry() {
        let a = by_sizes(&[2]);
        assert!(matches!(split_dominant(&a, &BTreeMap::new()), Err(ClusterError::MissingIndustry(_))));
    }

    fn groups(sizes: &[usize]) -> Vec<Group> {
        let mut next = 0;
        sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let members = (next..next + s).map(|m| format!("m{m}")).collect();
                next += s;
                Group { clusters: vec![i as u32 + 1], members }
            })
            .collect()
    }

    fn sizes(g: &[Group]) -> Vec<usize> {
        g.iter().map(Group::len).collect()
    }

    #[test]
    fn merge_examples() {
        assert_eq!(sizes(&merge_groups(groups(&[3, 4, 5]), 3)), vec![3, 4, 5]);
        let m = merge_groups(groups(&[1, 9, 10]), 2);
        assert_eq!(sizes(&m), vec![10, 10]);
        assert_eq!(m[0].clusters, vec![1, 2]);
        let m = merge_groups(groups(&[1, 1, 8]), 3);
        assert_eq!(sizes(&m), vec![10]);
        assert_eq!(m[0].clusters, vec![1, 2, 3]);
    }

    #[test]
    fn merge_wraps_clockwise() {
        // last group is small, both neighbours equal: joins clockwise, i.e. group 1
        let m = merge_groups(groups(&[4, 6, 4, 1]), 2);
        assert_eq!(sizes(&m), vec![5, 6, 4]);
        assert_eq!(m[0].clusters, vec![4, 1]);
    }

    #[test]
    fn merged_group_span() {
        let a = by_sizes(&[2, 3, 4]);
        let g = Group { clusters: vec![3, 1], members: vec![] };
        assert_eq!(group_span(&a, &g), ArcSpan { start: 5, len: 6 });
    }

    fn system(n: usize, splits: Vec<Split>) -> SplitSystem {
        SplitSystem::new(names(n), CircularOrdering::identity(n), splits, 0.0).unwrap()
    }

    #[test]
    fn suggest_cuts_between_blocks() {
        // blocks {0..3} and {4..7} separated by a heavy split
        let mut splits: Vec<Split> = (0..7).map(|i| Split { start: i, end: i, weight: 0.1 }).collect();
        splits.push(Split { start: 0, end: 3, weight: 2.0 });
        splits.push(Split { start: 0, end: 6, weight: 0.1 });
        let a = suggest_clusters(&system(8, splits), 2).unwrap();
        assert_eq!(a.boundaries, vec![0, 4]);
    }

    #[test]
    fn suggest_singletons_and_ties() {
        let n = 6;
        let splits: Vec<Split> = (0..n - 1).map(|i| Split { start: i, end: i, weight: 1.0 }).chain([Split { start: 0, end: n - 2, weight: 1.0 }]).collect();
        let sys = system(n, splits);
        assert_eq!(suggest_clusters(&sys, n).unwrap().k(), n);
        assert_eq!(suggest_clusters(&sys, 3).unwrap().boundaries, vec![0, 1, 2]);
        assert_eq!(suggest_clusters(&sys, 7), Err(ClusterError::KTooLarge { k: 7, n: 6 }));
    }
}
