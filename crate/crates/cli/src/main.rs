use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splitfolio::market_data::{BlockSpec, SynthConfig};
use splitfolio::pipeline::{self, PipelineError};
use splitfolio::sim::{PeriodMapping, SimulationConfig, StrategyKind};
use splitfolio::splits::DEFAULT_PRUNE;
use splitfolio::{Centering, ReductionParams};

/// Correlation-network portfolio laboratory.
///
/// Stages communicate through files in the output directory; each stage
/// reads its inputs from there unless given explicit paths.
#[derive(Parser)]
#[command(name = "splitfolio", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Working directory for inputs and outputs.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic block-correlated price panel.
    Synth {
        /// Synthetic market config JSON (blocks, weeks, seed, periods).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Validate prices and compute weekly returns.
    Ingest {
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Period config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Correlation distances for one period.
    Distances {
        #[arg(long)]
        returns: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        period: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Neighbor-Net ordering and split weights.
    Nnet {
        #[arg(long)]
        distances: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        period: u32,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        gamma: f64,
        /// Drop splits with weight at or below this value.
        #[arg(long, default_value_t = DEFAULT_PRUNE)]
        prune: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Lay out the splits graph (JSON for the viewer, SVG).
    Graph {
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        period: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Cut the ordering into k clusters at the heaviest gaps.
    ClustersSuggest {
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        period: u32,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Check a cluster assignment file; exits 2 when it is invalid.
    ClustersValidate {
        file: PathBuf,
        /// Split system whose ordering the assignment must cut.
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Simulate the portfolio strategies on a test period.
    Simulate {
        #[arg(long)]
        returns: Option<PathBuf>,
        /// Cluster assignment cut on the model period.
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Simulation config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        /// Test period.
        #[arg(long, default_value_t = 2)]
        period: u32,
        /// Model period the clusters come from; defaults to the config's
        /// mapping for the test period, else the period before it.
        #[arg(long)]
        model: Option<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Report tables and scatter data from simulation runs.
    Report {
        /// Simulation manifests; defaults to every simulation_p*.json in --out.
        #[arg(long, num_args = 1..)]
        simulations: Vec<PathBuf>,
        #[arg(long, default_value = "mean")]
        centering: Centering,
        #[command(flatten)]
        common: Common,
    },
}

fn or_default(given: Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    given.unwrap_or_else(|| dir.join(name))
}

fn default_synth(seed: u64) -> SynthConfig {
    SynthConfig::new(vec![BlockSpec { size: 50, rho: 0.8 }, BlockSpec { size: 50, rho: 0.8 }], 200, seed)
}

fn simulation_config(
    file: Option<PathBuf>,
    seed: Option<u64>,
    replications: Option<usize>,
    sizes: Option<Vec<usize>>,
    strategies: Option<Vec<String>>,
) -> Result<SimulationConfig, PipelineError> {
    let mut cfg = match file {
        Some(path) => pipeline::read_config::<SimulationConfig>(&path)?,
        None => {
            let seed = seed.ok_or_else(|| PipelineError::Validation("simulate needs --seed or a --config with a seed".into()))?;
            SimulationConfig {
                strategies: StrategyKind::ALL.to_vec(),
                sizes: vec![2, 4, 8],
                replications: 1000,
                seed,
                periods: Vec::new(),
            }
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    if let Some(s) = sizes {
        cfg.sizes = s;
    }
    if let Some(names) = strategies {
        cfg.strategies = names
            .iter()
            .map(|n| n.parse::<StrategyKind>().map_err(|e| PipelineError::Validation(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    Ok(cfg)
}

fn simulation_manifests(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = std::fs::read_dir(dir).map_err(|source| PipelineError::Io { path: dir.display().to_string(), source })?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("simulation_p") && name.ends_with(".json")
        })
        .collect();
    found.sort();
    Ok(found)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, PipelineError> {
    pipeline::configure_threads_from_env()?;
    match cli.command {
        Command::Synth { config, seed, common } => {
            let mut cfg = match config {
                Some(path) => pipeline::read_config::<SynthConfig>(&path)?,
                None => default_synth(seed.unwrap_or(42)),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            pipeline::synth(&cfg, &common.out)
        }
        Command::Ingest { prices, config, common } => {
            let dir = &common.out;
            pipeline::ingest(&or_default(prices, dir, "prices.csv"), &or_default(config, dir, "panel.json"), dir)
        }
        Command::Distances { returns, period, common } => {
            let dir = &common.out;
            pipeline::distances(&or_default(returns, dir, "returns.json"), period, dir)
        }
        Command::Nnet { distances, period, alpha, beta, gamma, prune, common } => {
            let params = ReductionParams::new(alpha, beta, gamma).map_err(|e| PipelineError::Validation(e.to_string()))?;
            let dir = &common.out;
            pipeline::nnet(&or_default(distances, dir, &format!("distances_p{period}.json")), params, prune, dir)
        }
        Command::Graph { splits, period, common } => {
            let dir = &common.out;
            pipeline::graph(&or_default(splits, dir, &format!("splits_p{period}.json")), dir)
        }
        Command::ClustersSuggest { splits, period, k, common } => {
            let dir = &common.out;
            pipeline::clusters_suggest(&or_default(splits, dir, &format!("splits_p{period}.json")), k, dir)
        }
        Command::ClustersValidate { file, splits } => {
            let msg = pipeline::clusters_validate(&file, splits.as_deref())?;
            println!("valid: {msg}");
            Ok(Vec::new())
        }
        Command::Simulate { returns, clusters, config, seed, replications, sizes, strategies, period, model, common } => {
            let cfg = simulation_config(config, seed, replications, sizes, strategies)?;
            let model = model
                .or_else(|| cfg.periods.iter().find(|m: &&PeriodMapping| m.test == period).map(|m| m.model))
                .unwrap_or_else(|| period.saturating_sub(1));
            let dir = &common.out;
            let needs = cfg.strategies.iter().any(StrategyKind::needs_clusters);
            let clusters = match clusters {
                Some(p) => Some(p),
                None if needs => Some(dir.join(format!("clusters_p{model}.json"))),
                None => None,
            };
            pipeline::simulate(&or_default(returns, dir, "returns.json"), clusters.as_deref(), &cfg, model, period, dir)
        }
        Command::Report { simulations, centering, common } => {
            let manifests = if simulations.is_empty() { simulation_manifests(&common.out)? } else { simulations };
            pipeline::report(&manifests, centering, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("splitfolio: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
