//! Monte-Carlo simulation of the portfolio selection strategies.
//!
//! Every strategy draws equal-weighted portfolios from the test period's
//! universe. Replication `r` of a run uses its own ChaCha stream derived from
//! the master seed, the strategy and the portfolio size, so results do not
//! depend on how replications are scheduled across threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    group_span, merge_small, pair_arcs, pair_clusters, split_dominant, ClusterAssignment, ClusterError, IndustryTag,
};
use crate::format::fmt15;
use crate::market_data::{period_return_of, PeriodSpec, ReturnMatrix, Ticker};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("universe has {available} stocks, portfolio size is {size}")]
    UniverseTooSmall { size: usize, available: usize },
    #[error("group {group} has {available} stocks left, {needed} needed")]
    GroupTooSmall { group: String, needed: usize, available: usize },
    #[error("cluster {cluster} ran out of stocks")]
    ClusterTooSmall { cluster: String },
    #[error("no return for {0} in the test period")]
    MissingReturn(String),
    #[error("invalid strategy: {0}")]
    InvalidSpec(String),
    #[error("replication {index}: {source}")]
    Replication { index: usize, source: Box<SimError> },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("raw replication CSV: {0}")]
    Csv(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Random,
    Industry,
    Cluster,
    ClusterDominant,
    #[serde(rename = "cluster-nondominant")]
    ClusterNonDominant,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::Industry,
        StrategyKind::Cluster,
        StrategyKind::ClusterDominant,
        StrategyKind::ClusterNonDominant,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Industry => "industry",
            StrategyKind::Cluster => "cluster",
            StrategyKind::ClusterDominant => "cluster-dominant",
            StrategyKind::ClusterNonDominant => "cluster-nondominant",
        }
    }

    pub fn needs_clusters(&self) -> bool {
        !matches!(self, StrategyKind::Random | StrategyKind::Industry)
    }
}

impl FromStr for StrategyKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub size: usize,
    pub replications: usize,
    pub seed: u64,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, size: usize, replications: usize, seed: u64) -> Result<StrategySpec, SimError> {
        let spec = StrategySpec { kind, size, replications, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.size < 2 {
            return Err(SimError::InvalidSpec(format!("portfolio size {} is below 2", self.size)));
        }
        if self.replications == 0 {
            return Err(SimError::InvalidSpec("replications must be at least 1".into()));
        }
        Ok(())
    }

    /// Generator for replication `index` (1-based).
    pub fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut h = self.seed;
        for word in [self.kind as u64 + 1, self.size as u64] {
            h = splitmix64(h ^ splitmix64(word));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        rng.set_stream(index as u64);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub tickers: Vec<String>,
    pub return_pct: f64,
    pub weekly_vol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub strategy: StrategyKind,
    pub size: usize,
    pub replications: Vec<Replication>,
    pub mean_return: f64,
    /// Sample standard deviation of the replication returns; 0 for one replication.
    pub std_return: f64,
    /// `mean_return / std_return`, absent when the std is zero.
    pub sharpe: Option<f64>,
    pub mean_weekly_vol: f64,
    /// Set when there are too few replications for a spread.
    pub degenerate: bool,
}

/// Sum of the values in ascending order, so the result ignores input order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

impl SimulationSummary {
    pub fn from_replications(strategy: StrategyKind, size: usize, mut replications: Vec<Replication>) -> SimulationSummary {
        replications.sort_by_key(|r| r.index);
        let n = replications.len() as f64;
        let mut returns: Vec<f64> = replications.iter().map(|r| r.return_pct).collect();
        let mean_return = ordered_sum(&mut returns) / n;
        let mut sq: Vec<f64> = returns.iter().map(|r| (r - mean_return).powi(2)).collect();
        let degenerate = replications.len() < 2;
        let std_return = if degenerate { 0.0 } else { (ordered_sum(&mut sq) / (n - 1.0)).sqrt() };
        let sharpe = (std_return > 0.0).then(|| mean_return / std_return);
        let mut vols: Vec<f64> = replications.iter().map(|r| r.weekly_vol).collect();
        let mean_weekly_vol = ordered_sum(&mut vols) / n;
        SimulationSummary { strategy, size, replications, mean_return, std_return, sharpe, mean_weekly_vol, degenerate }
    }

    /// Replication returns in replication order.
    pub fn returns(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.return_pct).collect()
    }
}

/// A named pool of stock indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Pool {
    pub name: String,
    pub members: Vec<usize>,
}

/// Uniform sample of `size` distinct entries of `universe`.
pub fn sample_random<R: Rng + ?Sized>(universe: &[usize], size: usize, rng: &mut R) -> Result<Vec<usize>, SimError> {
    if universe.len() < size {
        return Err(SimError::UniverseTooSmall { size, available: universe.len() });
    }
    Ok(sample(rng, universe.len(), size).into_iter().map(|i| universe[i]).collect())
}

/// How many stocks each group contributes. With more groups than stocks,
/// `size` groups give one each; otherwise every group gives the quotient and
/// randomly chosen groups give one extra for the remainder.
pub fn allocate<R: Rng + ?Sized>(groups: usize, size: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0; groups];
    if groups == 0 {
        return counts;
    }
    let (q, r) = if size <= groups { (0, size) } else { (size / groups, size % groups) };
    counts.iter_mut().for_each(|c| *c = q);
    for g in sample(rng, groups, r) {
        counts[g] += 1;
    }
    counts
}

/// One stock from each of `size` random groups, or the quotient/remainder
/// allocation when the portfolio is larger than the number of groups.
pub fn sample_by_groups<R: Rng + ?Sized>(groups: &[Pool], size: usize, rng: &mut R) -> Result<Vec<usize>, SimError> {
    let total: usize = groups.iter().map(|g| g.members.len()).sum();
    if groups.is_empty() || total < size {
        return Err(SimError::UniverseTooSmall { size, available: total });
    }
    let counts = allocate(groups.len(), size, rng);
    let mut out = Vec::with_capacity(size);
    for (g, &c) in groups.iter().zip(&counts) {
        if c > g.members.len() {
            return Err(SimError::GroupTooSmall { group: g.name.clone(), needed: c, available: g.members.len() });
        }
        out.extend(sample(rng, g.members.len(), c).into_iter().map(|i| g.members[i]));
    }
    Ok(out)
}

/// Draws `⌈size/2⌉` seed clusters; each adds one stock from itself and one
/// from its partner, except that an odd-sized portfolio's last seed adds only
/// its own stock. Seeds are distinct while there are enough clusters; beyond
/// that further random permutations of the clusters are appended.
pub fn sample_by_cluster_pairs<R: Rng + ?Sized>(
    clusters: &[Pool],
    partner: &[usize],
    size: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SimError> {
    let k = clusters.len();
    if k == 0 || partner.len() != k || partner.iter().any(|&p| p >= k) {
        return Err(SimError::InvalidSpec("pairing does not match the clusters".into()));
    }
    let n_seeds = size.div_ceil(2);
    let mut seeds = Vec::with_capacity(n_seeds);
    while seeds.len() < n_seeds {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(rng);
        seeds.extend(perm.into_iter().take(n_seeds - seeds.len()));
    }
    let mut taken: Vec<Vec<bool>> = clusters.iter().map(|c| vec![false; c.members.len()]).collect();
    let mut out = Vec::with_capacity(size);
    let mut draw = |c: usize, rng: &mut R, out: &mut Vec<usize>| -> Result<(), SimError> {
        let free: Vec<usize> = (0..clusters[c].members.len()).filter(|&i| !taken[c][i]).collect();
        if free.is_empty() {
            return Err(SimError::ClusterTooSmall { cluster: clusters[c].name.clone() });
        }
        let i = free[rng.gen_range(0..free.len())];
        taken[c][i] = true;
        out.push(clusters[c].members[i]);
        Ok(())
    };
    for (s, &c) in seeds.iter().enumerate() {
        draw(c, rng, &mut out)?;
        if !(size % 2 == 1 && s + 1 == n_seeds) {
            draw(partner[c], rng, &mut out)?;
        }
    }
    Ok(out)
}

/// Equal-weighted mean of the constituents' period returns.
pub fn portfolio_period_return(tickers: &[String], returns: &BTreeMap<String, f64>) -> Result<f64, SimError> {
    let mut sum = 0.0;
    for t in tickers {
        sum += returns.get(t).ok_or_else(|| SimError::MissingReturn(t.clone()))?;
    }
    Ok(sum / tickers.len() as f64)
}

/// The stocks tradable over a test period with their returns.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketView {
    pub tickers: Vec<Ticker>,
    /// Compounded return over the period, percent.
    pub period_returns: Vec<f64>,
    /// Weekly returns, one row per week, one column per ticker.
    pub weekly: Array2<f64>,
}

impl MarketView {
    /// Restricts `returns` to the tickers with a complete history in `test`.
    pub fn new(returns: &ReturnMatrix, test: &PeriodSpec) -> Result<MarketView, SimError> {
        let cols = returns.universe(test);
        let rows = returns.period_rows(test);
        let tickers = cols.iter().map(|&c| returns.tickers[c].clone()).collect();
        let period_returns = cols
            .iter()
            .map(|&c| period_return_of(returns, test, c).map_err(|_| SimError::MissingReturn(returns.tickers[c].label())))
            .collect::<Result<Vec<_>, _>>()?;
        let weekly = Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| returns.values[(rows.start + r, cols[c])]);
        Ok(MarketView { tickers, period_returns, weekly })
    }

    pub fn len(&self) -> usize {
        self.tickers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickers.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.tickers.iter().map(Ticker::label).collect()
    }

    pub fn portfolio_return(&self, stocks: &[usize]) -> f64 {
        stocks.iter().map(|&s| self.period_returns[s]).sum::<f64>() / stocks.len() as f64
    }

    /// Sample standard deviation of the equal-weighted weekly returns, in percent.
    pub fn weekly_vol(&self, stocks: &[usize]) -> f64 {
        let weeks = self.weekly.nrows();
        if weeks < 2 {
            return 0.0;
        }
        let series: Vec<f64> =
            (0..weeks).map(|w| stocks.iter().map(|&s| self.weekly[(w, s)]).sum::<f64>() / stocks.len() as f64).collect();
        let mean = series.iter().sum::<f64>() / weeks as f64;
        let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (weeks - 1) as f64;
        100.0 * var.sqrt()
    }

    /// Industry groups of the view, ordered by code.
    pub fn industry_pools(&self) -> Vec<Pool> {
        let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.tickers.iter().enumerate() {
            by.entry(t.industry.as_str()).or_default().push(i);
        }
        by.into_iter().map(|(name, members)| Pool { name: name.to_string(), members }).collect()
    }
}

/// The sampling scheme a strategy resolves to for one portfolio size.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplingPlan {
    Uniform(Vec<usize>),
    Groups(Vec<Pool>),
    Pairs { clusters: Vec<Pool>, partner: Vec<usize> },
}

impl SamplingPlan {
    pub fn draw<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<usize>, SimError> {
        match self {
            SamplingPlan::Uniform(u) => sample_random(u, size, rng),
            SamplingPlan::Groups(g) => sample_by_groups(g, size, rng),
            SamplingPlan::Pairs { clusters, partner } => sample_by_cluster_pairs(clusters, partner, size, rng),
        }
    }
}

/// Resolves `kind` against the test-period view. Cluster members missing
/// from the view are dropped. Dominant and non-dominant runs merge subsets
/// smaller than the portfolio size with neighbours and pair the merged groups
/// by their arcs; a single merged group pairs with itself.
pub fn plan(
    kind: StrategyKind,
    size: usize,
    view: &MarketView,
    assignment: Option<&ClusterAssignment>,
) -> Result<SamplingPlan, SimError> {
    let index: BTreeMap<String, usize> = view.labels().into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    let to_pool = |name: String, members: &[String]| Pool { name, members: members.iter().filter_map(|m| index.get(m).copied()).collect() };
    let need = || assignment.ok_or_else(|| SimError::InvalidSpec(format!("strategy {} needs a cluster assignment", kind.name())));
    match kind {
        StrategyKind::Random => Ok(SamplingPlan::Uniform((0..view.len()).collect())),
        StrategyKind::Industry => Ok(SamplingPlan::Groups(view.industry_pools())),
        StrategyKind::Cluster => {
            let a = need()?;
            let pairing = pair_clusters(a)?;
            let clusters = (1..=a.k() as u32).map(|id| to_pool(format!("cluster {id}"), &a.members(id))).collect();
            let partner = (1..=a.k() as u32).map(|id| pairing.partner[&id] as usize - 1).collect();
            Ok(SamplingPlan::Pairs { clusters, partner })
        }
        StrategyKind::ClusterDominant | StrategyKind::ClusterNonDominant => {
            let a = need()?;
            let industries = a
                .ordering
                .iter()
                .map(|l| {
                    Ticker::parse(l, None)
                        .map(|t| (l.clone(), t.industry))
                        .ok_or_else(|| SimError::Cluster(ClusterError::MissingIndustry(l.clone())))
                })
                .collect::<Result<BTreeMap<_, _>, _>>()?;
            let division = split_dominant(a, &industries)?;
            let tag = if kind == StrategyKind::ClusterDominant { IndustryTag::Dominant } else { IndustryTag::NonDominant };
            let groups = merge_small(a, &division, tag, size);
            let partner = if groups.len() == 1 {
                vec![0]
            } else {
                let spans: Vec<_> = groups.iter().map(|g| group_span(a, g)).collect();
                pair_arcs(&spans, a.n_taxa())?
            };
            let clusters = groups
                .iter()
                .map(|g| {
                    let ids: Vec<String> = g.clusters.iter().map(u32::to_string).collect();
                    to_pool(format!("clusters {}", ids.join("+")), &g.members)
                })
                .collect();
            Ok(SamplingPlan::Pairs { clusters, partner })
        }
    }
}

/// Runs every replication of `spec`; replications execute in parallel.
pub fn run_simulation(
    spec: &StrategySpec,
    view: &MarketView,
    assignment: Option<&ClusterAssignment>,
) -> Result<SimulationSummary, SimError> {
    spec.validate()?;
    let plan = plan(spec.kind, spec.size, view, assignment)?;
    let labels = view.labels();
    let reps = (1..=spec.replications)
        .into_par_iter()
        .map(|index| {
            let mut rng = spec.rng(index);
            let mut stocks = plan.draw(spec.size, &mut rng).map_err(|e| SimError::Replication { index, source: Box::new(e) })?;
            stocks.sort_unstable();
            Ok(Replication {
                index,
                tickers: stocks.iter().map(|&s| labels[s].clone()).collect(),
                return_pct: view.portfolio_return(&stocks),
                weekly_vol: view.weekly_vol(&stocks),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(SimulationSummary::from_replications(spec.kind, spec.size, reps))
}

/// Which model period's clusters are tested on which later period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodMapping {
    pub model: u32,
    pub test: u32,
}

fn default_replications() -> usize {
    1000
}

fn default_sizes() -> Vec<usize> {
    vec![2, 4, 8]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub periods: Vec<PeriodMapping>,
}

impl SimulationConfig {
    pub fn specs(&self) -> Result<Vec<StrategySpec>, SimError> {
        let mut out = Vec::new();
        for &kind in &self.strategies {
            for &size in &self.sizes {
                out.push(StrategySpec::new(kind, size, self.replications, self.seed)?);
            }
        }
        Ok(out)
    }
}

pub const RAW_HEADER: &str = "strategy,size,replication,return_pct,weekly_vol";

/// Raw replication rows for every summary.
pub fn raw_csv(summaries: &[SimulationSummary]) -> String {
    let mut out = format!("{RAW_HEADER}\n");
    for s in summaries {
        for r in &s.replications {
            let _ = writeln!(out, "{},{},{},{},{}", s.strategy.name(), s.size, r.index, fmt15(r.return_pct), fmt15(r.weekly_vol));
        }
    }
    out
}

/// Rebuilds summaries from [`raw_csv`] output. Tickers are not part of the
/// raw file and come back empty.
pub fn parse_raw_csv(text: &str) -> Result<Vec<SimulationSummary>, SimError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| SimError::Csv(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != RAW_HEADER {
        return Err(SimError::Csv(format!("expected header {RAW_HEADER}, found {header}")));
    }
    let mut groups: BTreeMap<(StrategyKind, usize), Vec<Replication>> = BTreeMap::new();
    let mut order = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| SimError::Csv(e.to_string()))?;
        let field = |i: usize, name: &str| -> Result<&str, SimError> {
            rec.get(i).ok_or_else(|| SimError::Csv(format!("row {}: missing {name}", line + 2)))
        };
        let bad = |name: &str| SimError::Csv(format!("row {}: bad {name}", line + 2));
        let kind: StrategyKind = field(0, "strategy")?.parse()?;
        let size: usize = field(1, "size")?.parse().map_err(|_| bad("size"))?;
        let index: usize = field(2, "replication")?.parse().map_err(|_| bad("replication"))?;
        let return_pct: f64 = field(3, "return_pct")?.parse().map_err(|_| bad("return_pct"))?;
        let weekly_vol: f64 = field(4, "weekly_vol")?.parse().map_err(|_| bad("weekly_vol"))?;
        let key = (kind, size);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(Replication { index, tickers: Vec::new(), return_pct, weekly_vol });
    }
    Ok(order
        .into_iter()
        .map(|key| SimulationSummary::from_replications(key.0, key.1, groups.remove(&key).expect("present")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn pools(sizes: &[usize]) -> Vec<Pool> {
        let mut next = 0;
        sizes
            .iter()
            .enumerate()
            .map(|(g, &s)| {
                let members = (next..next + s).collect();
                next += s;
                Pool { name: format!("g{g}"), members }
            })
            .collect()
    }

    #[test]
    fn whole_universe() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut got = sample_random(&[3, 5, 7], 3, &mut rng).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![3, 5, 7]);
        assert!(matches!(sample_random(&[1], 2, &mut rng), Err(SimError::UniverseTooSmall { .. })));
    }

    #[test]
    fn allocation_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = allocate(5, 8, &mut rng);
        a.sort_unstable();
        assert_eq!(a, vec![1, 1, 2, 2, 2]);
        assert_eq!(allocate(8, 8, &mut rng), vec![1; 8]);
        assert_eq!(allocate(8, 2, &mut rng).iter().sum::<usize>(), 2);
    }

    #[test]
    fn group_too_small_names_group() {
        let g = pools(&[1, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match sample_by_groups(&g, 6, &mut rng) {
            Err(SimError::GroupTooSmall { group, .. }) => assert_eq!(group, "g0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pairs_take_partner_stock() {
        let c = pools(&[3, 3, 3, 3]);
        let partner = vec![2, 3, 0, 1];
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let got = sample_by_cluster_pairs(&c, &partner, 2, &mut rng).unwrap();
            let (a, b) = (got[0] / 3, got[1] / 3);
            assert_eq!(partner[a], b);
        }
    }

    #[test]
    fn odd_size_last_seed_alone() {
        let c = pools(&[4, 4, 4, 4]);
        let partner = vec![2, 3, 0, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let got = sample_by_cluster_pairs(&c, &partner, 3, &mut rng).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(got.iter().collect::<BTreeSet<_>>().len(), 3);
    }

    #[test]
    fn exhausted_cluster() {
        let c = pools(&[1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(sample_by_cluster_pairs(&c, &[1, 0], 4, &mut rng), Err(SimError::ClusterTooSmall { .. })));
    }

    #[test]
    fn single_group_is_uniform() {
        let c = pools(&[5]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let got = sample_by_cluster_pairs(&c, &[0], 5, &mut rng).unwrap();
        assert_eq!(got.iter().collect::<BTreeSet<_>>().len(), 5);
    }

    #[test]
    fn portfolio_returns() {
        let r: BTreeMap<String, f64> = [("a".to_string(), 10.0), ("b".to_string(), 20.0), ("c".to_string(), -10.0)].into();
        assert_eq!(portfolio_period_return(&["a".into(), "b".into()], &r).unwrap(), 15.0);
        assert_eq!(portfolio_period_return(&["a".into()], &r).unwrap(), 10.0);
        assert_eq!(portfolio_period_return(&["a".into(), "c".into()], &r).unwrap(), 0.0);
        assert!(matches!(portfolio_period_return(&["z".into()], &r), Err(SimError::MissingReturn(_))));
    }

    #[test]
    fn single_replication_is_degenerate() {
        let s = SimulationSummary::from_replications(
            StrategyKind::Random,
            2,
            vec![Replication { index: 1, tickers: vec![], return_pct: 4.0, weekly_vol: 1.5 }],
        );
        assert!(s.degenerate);
        assert_eq!((s.mean_return, s.std_return, s.sharpe, s.mean_weekly_vol), (4.0, 0.0, None, 1.5));
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn raw_csv_round_trip() {
        let reps = (1..=3).map(|i| Replication { index: i, tickers: vec![], return_pct: i as f64 / 4.0, weekly_vol: 0.5 * i as f64 }).collect();
        let s = SimulationSummary::from_replications(StrategyKind::Cluster, 4, reps);
        let text = raw_csv(std::slice::from_ref(&s));
        let back = parse_raw_csv(&text).unwrap();
        assert_eq!(back, vec![s]);
    }

    #[test]
    fn spec_rejects_bad_values() {
        assert!(StrategySpec::new(StrategyKind::Random, 1, 10, 0).is_err());
        assert!(StrategySpec::new(StrategyKind::Random, 2, 0, 0).is_err());
    }
}
