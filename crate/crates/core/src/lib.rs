//! Correlation-network portfolio laboratory.
//!
//! The pipeline runs weekly prices through Pearson correlation and the
//! `sqrt(2(1 - rho))` distance into Neighbor-Net, which produces a circular
//! ordering and a weighted circular split system. Analysts cut that ordering
//! into correlation clusters, and the clusters drive Monte-Carlo simulations
//! of risk-based portfolio selection strategies compared with Levene tests.
//!
//! Module map:
//!
//! - [`market_data`]: price panels, weekly and period returns, synthetic panels
//! - [`correlation`]: correlation estimation and the distance transform
//! - [`nnet`]: the Neighbor-Net agglomeration and circular ordering
//! - [`splits`]: circular splits, the splits matrix and NNLS split weights
//! - [`graph`]: splits-graph layout plus Nexus, JSON and SVG export
//! - [`clustering`]: cluster assignments, pairing, industry division, merging
//! - [`sim`]: portfolio sampling strategies and replication summaries
//! - [`stats`]: Levene tests, the F distribution and report tables
//! - [`pipeline`]: file-based stage handoff used by the command line tool

pub mod clustering;
pub mod correlation;
pub mod format;
pub mod graph;
pub mod market_data;
pub mod nnet;
pub mod pipeline;
pub mod sim;
pub mod splits;
pub mod stats;

pub use clustering::{ClusterAssignment, IndustryDivision, PairingMap};
pub use correlation::{CorrelationMatrix, DistanceMatrix};
pub use market_data::{PeriodSpec, PricePanel, ReturnMatrix, Ticker};
pub use nnet::{CircularOrdering, ReductionParams};
pub use sim::{SimulationSummary, StrategyKind, StrategySpec};
pub use splits::{Split, SplitSystem, SplitsMatrix};
pub use stats::{Centering, LeveneResult};
