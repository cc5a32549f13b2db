//! File-based stages behind the `splitfolio` command.
//!
//! Each stage reads its predecessor's artifacts and writes its own into an
//! output directory. JSON artifacts record the SHA-256 of every input file
//! under `inputs`, so a later stage can tell when a file in the chain was
//! replaced. Nothing written depends on the clock or the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{suggest_clusters, ClusterAssignment, ClusterError};
use crate::correlation::{estimate_correlation, to_distance, CorrelationSummary, DistanceMatrix};
use crate::format::sha256_hex;
use crate::graph::{export_json, export_svg, layout, write_nexus};
use crate::market_data::{parse_price_csv, weekly_returns, PanelConfig, PeriodSpec, ReturnMatrix, SynthConfig, Ticker};
use crate::nnet::{neighbor_net_ordering, ReductionParams};
use crate::sim::{parse_raw_csv, raw_csv, run_simulation, MarketView, SimulationConfig, SimulationSummary, StrategySpec};
use crate::splits::SplitSystem;
use crate::stats::{scatter_csv, summarize, Centering};

pub const RETURNS_SCHEMA: &str = "splitfolio.returns/1";
pub const DISTANCES_SCHEMA: &str = "splitfolio.distances/1";
pub const SPLITS_SCHEMA: &str = "splitfolio.splits/1";
pub const SIMULATION_SCHEMA: &str = "splitfolio.simulation/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// An input file is malformed or violates an invariant.
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    /// Arguments or artifacts are inconsistent with each other.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Failed(String),
}

impl PipelineError {
    /// 2 for validation failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Invalid { .. } | PipelineError::Validation(_) => 2,
            PipelineError::Io { .. } | PipelineError::Failed(_) => 1,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn invalid(path: &Path, msg: impl ToString) -> PipelineError {
    PipelineError::Invalid { path: path.display().to_string(), msg: msg.to_string() }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

fn write(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| PipelineError::Io { path: parent.display().to_string(), source })?;
    }
    fs::write(path, text).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    Ok(path.to_path_buf())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

/// Reads a JSON artifact and checks its schema tag.
fn read_artifact<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<(T, String)> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| invalid(path, e))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s == schema => {}
        Some(s) => return Err(invalid(path, format!("schema is {s}, expected {schema}"))),
        None => return Err(invalid(path, format!("missing field `schema` (expected {schema})"))),
    }
    let parsed = serde_json::from_value(value).map_err(|e| invalid(path, e))?;
    Ok((parsed, sha256_hex(text.as_bytes())))
}

/// Parses a JSON configuration file.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Caps rayon's pool at `SPLITFOLIO_THREADS` when that variable is set.
pub fn configure_threads_from_env() -> Result<()> {
    let Ok(value) = std::env::var("SPLITFOLIO_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| PipelineError::Validation(format!("SPLITFOLIO_THREADS={value:?} is not a positive integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Writes a synthetic panel as `prices.csv` plus `panel.json`.
pub fn synth(config: &SynthConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let panel = config.generate().map_err(|e| PipelineError::Validation(format!("synth config: {e}")))?;
    let panel_cfg = PanelConfig { periods: panel.periods().to_vec(), industries: None };
    Ok(vec![write(&out.join("prices.csv"), &panel.to_csv())?, write(&out.join("panel.json"), &to_json(&panel_cfg))?])
}

/// Weekly returns of a validated panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnsArtifact {
    pub schema: String,
    pub inputs: BTreeMap<String, String>,
    pub periods: Vec<PeriodSpec>,
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Row per date; `null` where a price is missing.
    pub values: Vec<Vec<Option<f64>>>,
}

impl ReturnsArtifact {
    pub fn returns(&self, path: &Path) -> Result<ReturnMatrix> {
        let tickers = self
            .tickers
            .iter()
            .map(|l| Ticker::parse(l, None).ok_or_else(|| invalid(path, format!("bad ticker label {l}"))))
            .collect::<Result<Vec<_>>>()?;
        let cols = tickers.len();
        if self.values.len() != self.dates.len() || self.values.iter().any(|r| r.len() != cols) {
            return Err(invalid(path, "values do not match dates x tickers"));
        }
        let values = Array2::from_shape_fn((self.dates.len(), cols), |(r, c)| self.values[r][c].unwrap_or(f64::NAN));
        Ok(ReturnMatrix { tickers, dates: self.dates.clone(), values })
    }

    pub fn period(&self, index: u32) -> Result<PeriodSpec> {
        self.periods
            .iter()
            .find(|p| p.index == index)
            .copied()
            .ok_or_else(|| PipelineError::Validation(format!("period {index} is not defined")))
    }
}

/// Validates a price CSV against its period config and writes `returns.json`.
pub fn ingest(prices: &Path, config: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let cfg_text = read(config)?;
    let cfg = PanelConfig::from_json(&cfg_text).map_err(|e| invalid(config, e))?;
    let price_text = read(prices)?;
    let panel = parse_price_csv(price_text.as_bytes(), &cfg).map_err(|e| invalid(prices, e))?;
    let r = weekly_returns(&panel);
    let artifact = ReturnsArtifact {
        schema: RETURNS_SCHEMA.into(),
        inputs: BTreeMap::from([
            (file_name(prices), sha256_hex(price_text.as_bytes())),
            (file_name(config), sha256_hex(cfg_text.as_bytes())),
        ]),
        periods: panel.periods().to_vec(),
        tickers: r.tickers.iter().map(Ticker::label).collect(),
        dates: r.dates.clone(),
        values: r.values.rows().into_iter().map(|row| row.iter().map(|v| v.is_finite().then_some(*v)).collect()).collect(),
    };
    Ok(vec![write(&out.join("returns.json"), &to_json(&artifact))?])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistancesArtifact {
    pub schema: String,
    pub inputs: BTreeMap<String, String>,
    pub period: u32,
    pub summary: CorrelationSummary,
    pub distances: DistanceMatrix,
}

/// Correlation distances over the period's complete-history universe.
pub fn distances(returns_path: &Path, period: u32, out: &Path) -> Result<Vec<PathBuf>> {
    let (art, sha): (ReturnsArtifact, _) = read_artifact(returns_path, RETURNS_SCHEMA)?;
    let returns = art.returns(returns_path)?;
    let spec = art.period(period)?;
    let c = estimate_correlation(&returns, &spec).map_err(|e| PipelineError::Validation(format!("period {period}: {e}")))?;
    let artifact = DistancesArtifact {
        schema: DISTANCES_SCHEMA.into(),
        inputs: BTreeMap::from([(file_name(returns_path), sha)]),
        period,
        summary: c.summary(),
        distances: to_distance(&c),
    };
    Ok(vec![write(&out.join(format!("distances_p{period}.json")), &to_json(&artifact))?])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitsArtifact {
    pub schema: String,
    pub inputs: BTreeMap<String, String>,
    pub period: u32,
    pub params: ReductionParams,
    pub prune: f64,
    pub system: SplitSystem,
}

impl SplitsArtifact {
    /// Taxon labels in circular order.
    pub fn ordering_labels(&self) -> Vec<String> {
        self.system.ordering.as_slice().iter().map(|&t| self.system.taxa[t].clone()).collect()
    }
}

/// Neighbor-Net ordering and NNLS split weights: writes the split system as
/// JSON and Nexus plus the labelled ordering.
pub fn nnet(distances_path: &Path, params: ReductionParams, prune: f64, out: &Path) -> Result<Vec<PathBuf>> {
    if !(prune >= 0.0) || !prune.is_finite() {
        return Err(PipelineError::Validation(format!("prune threshold {prune} must be a finite nonnegative number")));
    }
    let (art, sha): (DistancesArtifact, _) = read_artifact(distances_path, DISTANCES_SCHEMA)?;
    let d = DistanceMatrix::new(art.distances.labels().to_vec(), art.distances.matrix().clone())
        .map_err(|e| invalid(distances_path, e))?;
    let ordering = neighbor_net_ordering(&d, &params);
    let system = SplitSystem::fit(&d, ordering).map_err(|e| PipelineError::Failed(format!("split weights: {e}")))?.prune(prune);
    let period = art.period;
    let artifact = SplitsArtifact {
        schema: SPLITS_SCHEMA.into(),
        inputs: BTreeMap::from([(file_name(distances_path), sha)]),
        period,
        params,
        prune,
        system,
    };
    let ordering = serde_json::json!({ "period": period, "ordering": artifact.ordering_labels() });
    Ok(vec![
        write(&out.join(format!("splits_p{period}.json")), &to_json(&artifact))?,
        write(&out.join(format!("splits_p{period}.nex")), &write_nexus(&artifact.system))?,
        write(&out.join(format!("ordering_p{period}.json")), &to_json(&ordering))?,
    ])
}

pub fn read_splits(path: &Path) -> Result<(SplitsArtifact, String)> {
    let (art, sha): (SplitsArtifact, String) = read_artifact(path, SPLITS_SCHEMA)?;
    art.system.validate().map_err(|e| invalid(path, e))?;
    Ok((art, sha))
}

fn industries_of(labels: &[String]) -> BTreeMap<String, String> {
    labels.iter().filter_map(|l| Ticker::parse(l, None).map(|t| (l.clone(), t.industry))).collect()
}

/// Splits-graph layout as the viewer's JSON document and a static SVG.
pub fn graph(splits_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let (art, _) = read_splits(splits_path)?;
    let g = layout(&art.system);
    let industries = industries_of(&art.system.taxa);
    let p = art.period;
    Ok(vec![
        write(&out.join(format!("graph_p{p}.json")), &export_json(&art.system, &g, &industries))?,
        write(&out.join(format!("graph_p{p}.svg")), &export_svg(&art.system, &g))?,
    ])
}

fn cluster_error(e: ClusterError) -> PipelineError {
    PipelineError::Validation(e.to_string())
}

/// Cuts the ordering at the `k` heaviest gaps.
pub fn clusters_suggest(splits_path: &Path, k: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let (art, _) = read_splits(splits_path)?;
    let a = suggest_clusters(&art.system, k).map_err(cluster_error)?;
    Ok(vec![write(&out.join(format!("clusters_p{}.json", art.period)), &a.to_json())?])
}

/// Checks a cluster file, and when a split system is given, that it cuts
/// that system's ordering. Returns a one-line description on success.
pub fn clusters_validate(clusters_path: &Path, splits_path: Option<&Path>) -> Result<String> {
    let text = read(clusters_path)?;
    let a = ClusterAssignment::from_json(&text).map_err(|e| invalid(clusters_path, e))?;
    if let Some(sp) = splits_path {
        let (art, _) = read_splits(sp)?;
        if art.ordering_labels() != a.ordering {
            return Err(invalid(clusters_path, format!("ordering differs from the ordering in {}", sp.display())));
        }
    }
    Ok(format!("{}: {} clusters over {} taxa", clusters_path.display(), a.k(), a.n_taxa()))
}

/// Aggregates of one strategy and size, as recorded in the simulation manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub strategy: String,
    pub size: usize,
    pub replications: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub sharpe: Option<f64>,
    pub mean_weekly_vol: f64,
    pub degenerate: bool,
}

impl From<&SimulationSummary> for SummaryRecord {
    fn from(s: &SimulationSummary) -> Self {
        SummaryRecord {
            strategy: s.strategy.name().into(),
            size: s.size,
            replications: s.replications.len(),
            mean_return: s.mean_return,
            std_return: s.std_return,
            sharpe: s.sharpe,
            mean_weekly_vol: s.mean_weekly_vol,
            degenerate: s.degenerate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub schema: String,
    pub inputs: BTreeMap<String, String>,
    pub model_period: u32,
    pub test_period: u32,
    pub config: SimulationConfig,
    /// Raw replication CSV written next to this manifest, with its hash.
    pub raw: String,
    pub raw_sha256: String,
    pub summaries: Vec<SummaryRecord>,
}

/// Runs every configured strategy and size on the test period, with clusters
/// cut on the model period's ordering.
pub fn simulate(
    returns_path: &Path,
    clusters_path: Option<&Path>,
    config: &SimulationConfig,
    model: u32,
    test: u32,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let specs = config.specs().map_err(|e| PipelineError::Validation(e.to_string()))?;
    if specs.is_empty() {
        return Err(PipelineError::Validation("no strategies configured".into()));
    }
    let (art, returns_sha): (ReturnsArtifact, _) = read_artifact(returns_path, RETURNS_SCHEMA)?;
    art.period(model)?;
    let returns = art.returns(returns_path)?;
    let view = MarketView::new(&returns, &art.period(test)?).map_err(|e| PipelineError::Failed(e.to_string()))?;
    let mut inputs = BTreeMap::from([(file_name(returns_path), returns_sha)]);
    let assignment = match clusters_path {
        Some(p) => {
            let text = read(p)?;
            inputs.insert(file_name(p), sha256_hex(text.as_bytes()));
            Some(ClusterAssignment::from_json(&text).map_err(|e| invalid(p, e))?)
        }
        None => None,
    };
    if assignment.is_none() {
        if let Some(s) = specs.iter().find(|s| s.kind.needs_clusters()) {
            return Err(PipelineError::Validation(format!("strategy {} needs a cluster file", s.kind.name())));
        }
    }
    let summaries = specs
        .iter()
        .map(|spec: &StrategySpec| {
            run_simulation(spec, &view, assignment.as_ref())
                .map_err(|e| PipelineError::Failed(format!("{} size {}: {e}", spec.kind.name(), spec.size)))
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = raw_csv(&summaries);
    let raw_name = format!("raw_p{test}.csv");
    let mut portfolios = String::from("strategy,size,replication,tickers\n");
    for s in &summaries {
        for r in &s.replications {
            portfolios.push_str(&format!("{},{},{},{}\n", s.strategy.name(), s.size, r.index, r.tickers.join(" ")));
        }
    }
    let manifest = SimulationManifest {
        schema: SIMULATION_SCHEMA.into(),
        inputs,
        model_period: model,
        test_period: test,
        config: config.clone(),
        raw: raw_name.clone(),
        raw_sha256: sha256_hex(raw.as_bytes()),
        summaries: summaries.iter().map(SummaryRecord::from).collect(),
    };
    Ok(vec![
        write(&out.join(&raw_name), &raw)?,
        write(&out.join(format!("portfolios_p{test}.csv")), &portfolios)?,
        write(&out.join(format!("simulation_p{test}.json")), &to_json(&manifest))?,
    ])
}

/// Report tables, one per simulation manifest, plus scatter data for every
/// strategy and size. Refuses a raw file whose hash differs from the one its
/// manifest recorded.
pub fn report(manifests: &[PathBuf], centering: Centering, out: &Path) -> Result<Vec<PathBuf>> {
    if manifests.is_empty() {
        return Err(PipelineError::Validation("no simulation manifests given".into()));
    }
    let mut written = Vec::new();
    let mut combined = String::new();
    for path in manifests {
        let (m, _): (SimulationManifest, _) = read_artifact(path, SIMULATION_SCHEMA)?;
        let raw_path = path.parent().unwrap_or(Path::new(".")).join(&m.raw);
        let raw = read(&raw_path)?;
        let found = sha256_hex(raw.as_bytes());
        if found != m.raw_sha256 {
            return Err(PipelineError::Validation(format!(
                "{}: hash {found} does not match {} recorded in {}",
                raw_path.display(),
                m.raw_sha256,
                path.display()
            )));
        }
        let summaries = parse_raw_csv(&raw).map_err(|e| invalid(&raw_path, e))?;
        let table = summarize(m.test_period, &summaries, centering).map_err(|e| invalid(&raw_path, e))?;
        let t = m.test_period;
        written.push(write(&out.join(format!("report_p{t}.csv")), &table.to_csv())?);
        let text = table.to_text();
        written.push(write(&out.join(format!("report_p{t}.txt")), &text)?);
        combined.push_str(&text);
        combined.push('\n');
        for s in &summaries {
            let name = format!("scatter_p{t}_{}_{}.csv", s.strategy.name(), s.size);
            written.push(write(&out.join(name), &scatter_csv(s))?);
        }
    }
    written.push(write(&out.join("report.txt"), &combined)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Validation("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::Failed("x".into()).exit_code(), 1);
        assert_eq!(invalid(Path::new("a.json"), "bad").exit_code(), 2);
    }

    #[test]
    fn schema_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        fs::write(&p, r#"{"schema": "other/1"}"#).unwrap();
        let err = read_artifact::<serde_json::Value>(&p, RETURNS_SCHEMA).unwrap_err();
        assert!(err.to_string().contains("expected splitfolio.returns/1"));
    }
}
