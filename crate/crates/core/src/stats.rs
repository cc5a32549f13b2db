//! Levene tests, the F distribution and the strategy report tables.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt15;
use crate::sim::{SimulationSummary, StrategyKind};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("Levene test needs at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is degenerate: it needs two observations and some spread in the absolute deviations")]
    DegenerateGroup(usize),
    #[error("report input: {0}")]
    Report(String),
}

/// Center used for the absolute deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    /// Classic Levene test.
    #[default]
    Mean,
    /// Brown-Forsythe variant.
    Median,
}

impl FromStr for Centering {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Centering::Mean),
            "median" => Ok(Centering::Median),
            other => Err(format!("unknown centering {other:?}; use mean or median")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeveneResult {
    pub w: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
    pub centering: Centering,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Levene's test for equal spread across `groups`.
pub fn levene(groups: &[&[f64]], centering: Centering) -> Result<LeveneResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups(k));
    }
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(StatsError::DegenerateGroup(i));
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let c = match centering {
                Centering::Mean => mean(g),
                Centering::Median => median(g),
            };
            g.iter().map(|x| (x - c).abs()).collect()
        })
        .collect();
    let n_total: usize = groups.iter().map(|g| g.len()).sum();
    let group_means: Vec<f64> = z.iter().map(|g| mean(g)).collect();
    let grand = z.iter().flatten().sum::<f64>() / n_total as f64;
    let between: f64 = z.iter().zip(&group_means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum();
    let within: f64 = z.iter().zip(&group_means).map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sum();
    let df1 = (k - 1) as f64;
    let df2 = (n_total - k) as f64;
    let (w, p) = if within > 0.0 {
        let w = df2 / df1 * between / within;
        (w, f_sf(w, df1, df2))
    } else if between == 0.0 {
        (0.0, 1.0)
    } else {
        let i = z.iter().zip(&group_means).position(|(g, m)| g.iter().all(|v| v == m)).unwrap_or(0);
        return Err(StatsError::DegenerateGroup(i));
    };
    Ok(LeveneResult { w, df1, df2, p, centering })
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // the fraction converges fast on the side of the mean
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Upper tail `P(F > x)` of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x)).clamp(0.0, 1.0)
}

/// Row kinds of the report table, in display order within a size block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    StdDev,
    Sharpe,
    Levene,
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Mean => "Mean return",
            Statistic::StdDev => "Std. Dev.",
            Statistic::Sharpe => "Sharpe Ratio",
            Statistic::Levene => "Levene Tests",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub size: usize,
    pub statistic: Statistic,
    /// One cell per column; empty where the statistic does not apply.
    pub cells: Vec<String>,
}

/// One test period's table. Columns are strategies in display order: the
/// random, cluster and industry block, then the dominant/non-dominant block.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub period: u32,
    pub columns: Vec<StrategyKind>,
    pub rows: Vec<ReportRow>,
}

fn block_of(kind: StrategyKind) -> usize {
    match kind {
        StrategyKind::Random | StrategyKind::Cluster | StrategyKind::Industry => 0,
        StrategyKind::ClusterDominant | StrategyKind::ClusterNonDominant => 1,
    }
}

fn display_rank(kind: StrategyKind) -> usize {
    match kind {
        StrategyKind::Random => 0,
        StrategyKind::Cluster => 1,
        StrategyKind::Industry => 2,
        StrategyKind::ClusterDominant => 3,
        StrategyKind::ClusterNonDominant => 4,
    }
}

/// Builds the table for one test period. Within each column block the
/// lowest standard deviation is flagged with `*` (every tied column), and
/// the joint Levene p-value of the block's strategies goes in the block's
/// last column. Blocks with a single strategy get no Levene value.
pub fn summarize(period: u32, summaries: &[SimulationSummary], centering: Centering) -> Result<ReportTable, StatsError> {
    let mut columns: Vec<StrategyKind> = summaries.iter().map(|s| s.strategy).collect();
    columns.sort_by_key(|&k| display_rank(k));
    columns.dedup();
    let mut sizes: Vec<usize> = summaries.iter().map(|s| s.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let find = |kind: StrategyKind, size: usize| summaries.iter().find(|s| s.strategy == kind && s.size == size);
    for &size in &sizes {
        for &kind in &columns {
            if find(kind, size).is_none() {
                return Err(StatsError::Report(format!("no {} summary for size {size}", kind.name())));
            }
        }
    }
    let blocks: Vec<Vec<usize>> = (0..2).map(|b| (0..columns.len()).filter(|&c| block_of(columns[c]) == b).collect()).collect();
    let any_levene = blocks.iter().any(|b| b.len() >= 2);

    let mut rows = Vec::new();
    for &size in &sizes {
        let cols: Vec<&SimulationSummary> = columns.iter().map(|&k| find(k, size).expect("checked")).collect();
        rows.push(ReportRow { size, statistic: Statistic::Mean, cells: cols.iter().map(|s| fmt15(s.mean_return)).collect() });
        let mut std_cells: Vec<String> = cols.iter().map(|s| fmt15(s.std_return)).collect();
        for block in &blocks {
            let Some(lowest) = block.iter().map(|&c| cols[c].std_return).min_by(f64::total_cmp) else {
                continue;
            };
            if block.len() < 2 {
                continue;
            }
            for &c in block {
                if cols[c].std_return == lowest {
                    std_cells[c].push('*');
                }
            }
        }
        rows.push(ReportRow { size, statistic: Statistic::StdDev, cells: std_cells });
        rows.push(ReportRow {
            size,
            statistic: Statistic::Sharpe,
            cells: cols.iter().map(|s| s.sharpe.map(fmt15).unwrap_or_else(|| "NA".into())).collect(),
        });
        if any_levene {
            let mut cells = vec![String::new(); columns.len()];
            for block in &blocks {
                if block.len() < 2 {
                    continue;
                }
                let samples: Vec<Vec<f64>> = block.iter().map(|&c| cols[c].returns()).collect();
                let refs: Vec<&[f64]> = samples.iter().map(|v| v.as_slice()).collect();
                let cell = match levene(&refs, centering) {
                    Ok(r) => fmt15(r.p),
                    Err(_) => "NA".into(),
                };
                cells[*block.last().expect("nonempty")] = cell;
            }
            rows.push(ReportRow { size, statistic: Statistic::Levene, cells });
        }
    }
    Ok(ReportTable { period, columns, rows })
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period,size,statistic");
        for c in &self.columns {
            out.push(',');
            out.push_str(c.name());
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", self.period, r.size, r.statistic.name());
            for c in &r.cells {
                out.push(',');
                out.push_str(c);
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text rendering with values at four decimals.
    pub fn to_text(&self) -> String {
        let short = |cell: &str| -> String {
            let (num, star) = match cell.strip_suffix('*') {
                Some(n) => (n, "*"),
                None => (cell, ""),
            };
            match num.parse::<f64>() {
                Ok(v) => format!("{v:.4}{star}"),
                Err(_) => cell.to_string(),
            }
        };
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["Size".to_string(), String::new()];
        header.extend(self.columns.iter().map(|c| c.name().to_string()));
        grid.push(header);
        for r in &self.rows {
            let mut line = vec![r.size.to_string(), r.statistic.name().to_string()];
            line.extend(r.cells.iter().map(|c| short(c)));
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len()).map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0)).collect();
        let mut out = format!("Test period {}\n", self.period);
        for row in &grid {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, v)| if c < 2 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// `return_pct,weekly_vol` per replication.
pub fn scatter_csv(summary: &SimulationSummary) -> String {
    let mut out = String::from("return_pct,weekly_vol\n");
    for r in &summary.replications {
        let _ = writeln!(out, "{},{}", fmt15(r.return_pct), fmt15(r.weekly_vol));
    }
    out
}

/// Parses [`scatter_csv`] output.
pub fn parse_scatter_csv(text: &str) -> Result<Vec<(f64, f64)>, StatsError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| StatsError::Report(e.to_string()))?;
            let get = |i: usize| -> Result<f64, StatsError> {
                rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| StatsError::Report(format!("bad scatter row {rec:?}")))
            };
            Ok((get(0)?, get(1)?))
        })
        .collect()
}
