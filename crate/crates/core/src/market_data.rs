//! Weekly price panels, returns and study periods.
//!
//! Prices arrive as a long CSV (`date,ticker,price,dividend`). A ticker label
//! carries its industry group as a suffix, e.g. `CBA_F` is symbol `CBA` in
//! industry `F`. Missing observations are stored as `NaN` in the panel and
//! propagate into the returns; a ticker with any missing return inside a
//! period is left out of that period's universe.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("missing column `{0}` in price header")]
    MissingColumn(String),
    #[error("line {line}: non-positive price {price} for ticker {ticker}")]
    NonPositivePrice { line: usize, ticker: String, price: f64 },
    #[error("line {line}: negative dividend {dividend} for ticker {ticker}")]
    NegativeDividend { line: usize, ticker: String, dividend: f64 },
    #[error("line {line}: dates for ticker {ticker} are not strictly increasing")]
    UnsortedDates { line: usize, ticker: String },
    #[error("line {line}: ticker `{ticker}` has no known industry suffix")]
    UnknownIndustryCode { line: usize, ticker: String },
    #[error("line {line}: bad `{column}` value `{value}`")]
    BadValue { line: usize, column: String, value: String },
    #[error("invalid period configuration: {0}")]
    InvalidPeriods(String),
    #[error("period {0} contains no weekly returns")]
    EmptyPeriod(u32),
    #[error("ticker {ticker} has missing data in period {period}")]
    MissingData { ticker: String, period: u32 },
    #[error("invalid correlation {0}: must lie in (-1, 1) and keep the block positive definite")]
    InvalidCorrelation(f64),
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MarketDataError> = std::result::Result<T, E>;

/// A stock symbol together with its industry-group code.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ticker {
    pub symbol: String,
    pub industry: String,
}

impl Ticker {
    /// Splits `CBA_F` into symbol `CBA` and industry `F`.
    ///
    /// The suffix must be one or two ASCII letters, and must belong to
    /// `industries` when a configured set is given.
    pub fn parse(label: &str, industries: Option<&BTreeSet<String>>) -> Option<Ticker> {
        let (symbol, industry) = label.rsplit_once('_')?;
        if symbol.is_empty()
            || industry.is_empty()
            || industry.len() > 2
            || !industry.chars().all(|c| c.is_ascii_alphabetic())
        {
            return None;
        }
        if let Some(set) = industries {
            if !set.contains(industry) {
                return None;
            }
        }
        Some(Ticker { symbol: symbol.to_string(), industry: industry.to_string() })
    }

    /// The suffixed label, `SYMBOL_IND`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.symbol, self.industry)
    }
}

impl fmt::Display for Ticker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.symbol, self.industry)
    }
}

/// One study period. A weekly return dated `t` belongs to the period when
/// `start < t <= end`, so abutting periods partition the returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub index: u32,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl PeriodSpec {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start < date && date <= self.end
    }
}

/// Period boundaries plus the optional set of admissible industry codes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub periods: Vec<PeriodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub industries: Option<BTreeSet<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PanelConfigFile {
    Periods(Vec<PeriodSpec>),
    Full(PanelConfig),
}

impl PanelConfig {
    /// Accepts either a bare JSON list of periods or a full config object.
    pub fn from_json(text: &str) -> Result<PanelConfig> {
        Ok(match serde_json::from_str::<PanelConfigFile>(text)? {
            PanelConfigFile::Periods(periods) => PanelConfig { periods, industries: None },
            PanelConfigFile::Full(cfg) => cfg,
        })
    }
}

/// Weekly prices and dividends, `[date x ticker]`. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePanel {
    tickers: Vec<Ticker>,
    dates: Vec<NaiveDate>,
    prices: Array2<f64>,
    dividends: Array2<f64>,
    periods: Vec<PeriodSpec>,
}

impl PricePanel {
    /// Builds a panel, checking every invariant. `NaN` prices mark missing
    /// observations; their dividends must be zero.
    pub fn new(
        tickers: Vec<Ticker>,
        dates: Vec<NaiveDate>,
        prices: Array2<f64>,
        dividends: Array2<f64>,
        periods: Vec<PeriodSpec>,
    ) -> Result<PricePanel> {
        let shape = (dates.len(), tickers.len());
        if prices.dim() != shape || dividends.dim() != shape {
            return Err(MarketDataError::InvalidPanel(format!(
                "matrix shapes {:?}/{:?} do not match {} dates x {} tickers",
                prices.dim(),
                dividends.dim(),
                shape.0,
                shape.1
            )));
        }
        let mut seen = BTreeSet::new();
        for t in &tickers {
            if t.symbol.is_empty() || !seen.insert(t.label()) {
                return Err(MarketDataError::InvalidPanel(format!("duplicate or empty ticker {t}")));
            }
        }
        if let Some(w) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(MarketDataError::UnsortedDates { line: w + 2, ticker: "*".into() });
        }
        for ((row, col), &p) in prices.indexed_iter() {
            if !p.is_nan() && p <= 0.0 {
                return Err(MarketDataError::NonPositivePrice {
                    line: row + 1,
                    ticker: tickers[col].label(),
                    price: p,
                });
            }
            let div = dividends[(row, col)];
            if !(div >= 0.0) {
                return Err(MarketDataError::NegativeDividend {
                    line: row + 1,
                    ticker: tickers[col].label(),
                    dividend: div,
                });
            }
        }
        validate_periods(&periods, &dates)?;
        Ok(PricePanel { tickers, dates, prices, dividends, periods })
    }

    pub fn tickers(&self) -> &[Ticker] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn dividends(&self) -> &Array2<f64> {
        &self.dividends
    }

    pub fn periods(&self) -> &[PeriodSpec] {
        &self.periods
    }

    pub fn period(&self, index: u32) -> Option<&PeriodSpec> {
        self.periods.iter().find(|p| p.index == index)
    }

    /// Serializes back to the long CSV layout, skipping missing cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,ticker,price,dividend\n");
        for (row, date) in self.dates.iter().enumerate() {
            for (col, t) in self.tickers.iter().enumerate() {
                let p = self.prices[(row, col)];
                if p.is_nan() {
                    continue;
                }
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    date,
                    t.label(),
                    crate::format::fmt15(p),
                    crate::format::fmt15(self.dividends[(row, col)])
                ));
            }
        }
        out
    }
}

fn validate_periods(periods: &[PeriodSpec], dates: &[NaiveDate]) -> Result<()> {
    let (Some(first), Some(last)) = (dates.first(), dates.last()) else {
        if periods.is_empty() {
            return Ok(());
        }
        return Err(MarketDataError::InvalidPeriods("panel has no dates".into()));
    };
    for (k, p) in periods.iter().enumerate() {
        if p.start >= p.end {
            return Err(MarketDataError::InvalidPeriods(format!("period {} has start >= end", p.index)));
        }
        if p.start < *first || p.end > *last {
            return Err(MarketDataError::InvalidPeriods(format!(
                "period {} ({} .. {}) lies outside the data span {} .. {}",
                p.index, p.start, p.end, first, last
            )));
        }
        if k > 0 {
            let prev = &periods[k - 1];
            if prev.end != p.start {
                return Err(MarketDataError::InvalidPeriods(format!(
                    "period {} does not start where period {} ends",
                    p.index, prev.index
                )));
            }
            if p.index != prev.index + 1 {
                return Err(MarketDataError::InvalidPeriods("period indices must be consecutive".into()));
            }
        }
    }
    Ok(())
}

/// Reads and validates a long-format price CSV.
pub fn load_price_panel(csv_path: impl AsRef<Path>, config: &PanelConfig) -> Result<PricePanel> {
    let file = std::fs::File::open(csv_path)?;
    parse_price_csv(file, config)
}

/// Same as [`load_price_panel`] over any reader.
pub fn parse_price_csv<R: Read>(reader: R, config: &PanelConfig) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
    };
    let (c_date, c_ticker, c_price, c_div) = (column("date")?, column("ticker")?, column("price")?, column("dividend")?);

    struct Obs {
        date: NaiveDate,
        ticker: usize,
        price: f64,
        dividend: f64,
    }
    let mut ticker_index: HashMap<String, usize> = HashMap::new();
    let mut tickers: Vec<Ticker> = Vec::new();
    let mut last_date: Vec<NaiveDate> = Vec::new();
    let mut observations = Vec::new();

    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let field = |c: usize| record.get(c).unwrap_or("");
        let bad = |col: &str, value: &str| MarketDataError::BadValue {
            line,
            column: col.to_string(),
            value: value.to_string(),
        };
        let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d").map_err(|_| bad("date", field(c_date)))?;
        let label = field(c_ticker);
        let price: f64 = field(c_price).parse().map_err(|_| bad("price", field(c_price)))?;
        let dividend: f64 = match field(c_div) {
            "" => 0.0,
            s => s.parse().map_err(|_| bad("dividend", s))?,
        };
        let idx = match ticker_index.get(label) {
            Some(&i) => i,
            None => {
                let ticker = Ticker::parse(label, config.industries.as_ref())
                    .ok_or_else(|| MarketDataError::UnknownIndustryCode { line, ticker: label.to_string() })?;
                tickers.push(ticker);
                last_date.push(NaiveDate::MIN);
                ticker_index.insert(label.to_string(), tickers.len() - 1);
                tickers.len() - 1
            }
        };
        if !(price > 0.0) || !price.is_finite() {
            return Err(MarketDataError::NonPositivePrice { line, ticker: label.to_string(), price });
        }
        if !(dividend >= 0.0) || !dividend.is_finite() {
            return Err(MarketDataError::NegativeDividend { line, ticker: label.to_string(), dividend });
        }
        if date <= last_date[idx] {
            return Err(MarketDataError::UnsortedDates { line, ticker: label.to_string() });
        }
        last_date[idx] = date;
        observations.push(Obs { date, ticker: idx, price, dividend });
    }

    let dates: Vec<NaiveDate> = observations.iter().map(|o| o.date).collect::<BTreeSet<_>>().into_iter().collect();
    let date_row: BTreeMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut prices = Array2::from_elem((dates.len(), tickers.len()), f64::NAN);
    let mut dividends = Array2::zeros((dates.len(), tickers.len()));
    for o in &observations {
        let row = date_row[&o.date];
        prices[(row, o.ticker)] = o.price;
        dividends[(row, o.ticker)] = o.dividend;
    }
    PricePanel::new(tickers, dates, prices, dividends, config.periods.clone())
}

/// Weekly simple returns, one row per panel date after the first.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnMatrix {
    pub tickers: Vec<Ticker>,
    pub dates: Vec<NaiveDate>,
    /// `NaN` where either endpoint price is missing.
    pub values: Array2<f64>,
}

impl ReturnMatrix {
    /// Row range of the returns that fall inside `period`.
    pub fn period_rows(&self, period: &PeriodSpec) -> Range<usize> {
        let lo = self.dates.partition_point(|d| *d <= period.start);
        let hi = self.dates.partition_point(|d| *d <= period.end);
        lo..hi.max(lo)
    }

    pub fn ticker_index(&self, ticker: &Ticker) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Columns with a complete return history inside `period`.
    pub fn universe(&self, period: &PeriodSpec) -> Vec<usize> {
        let rows = self.period_rows(period);
        if rows.is_empty() {
            return Vec::new();
        }
        (0..self.tickers.len())
            .filter(|&c| rows.clone().all(|r| self.values[(r, c)].is_finite()))
            .collect()
    }

    /// Weekly returns of column `col` inside `period`.
    pub fn column_in(&self, period: &PeriodSpec, col: usize) -> Vec<f64> {
        self.period_rows(period).map(|r| self.values[(r, col)]).collect()
    }
}

/// `r[t] = (price[t] + dividend[t]) / price[t-1] - 1`, dividends credited in
/// the week they are paid.
pub fn weekly_returns(panel: &PricePanel) -> ReturnMatrix {
    let (rows, cols) = panel.prices.dim();
    let n = rows.saturating_sub(1);
    let values = Array2::from_shape_fn((n, cols), |(t, k)| {
        let prev = panel.prices[(t, k)];
        let cur = panel.prices[(t + 1, k)];
        (cur + panel.dividends[(t + 1, k)]) / prev - 1.0
    });
    ReturnMatrix {
        tickers: panel.tickers.clone(),
        dates: panel.dates.iter().skip(1).copied().collect(),
        values,
    }
}

/// Compounded return of one ticker over a period, in percent.
pub fn period_return(returns: &ReturnMatrix, period: &PeriodSpec, ticker: &Ticker) -> Result<f64> {
    let col = returns
        .ticker_index(ticker)
        .ok_or_else(|| MarketDataError::InvalidPanel(format!("unknown ticker {ticker}")))?;
    period_return_of(returns, period, col)
}

/// [`period_return`] by column index.
pub fn period_return_of(returns: &ReturnMatrix, period: &PeriodSpec, col: usize) -> Result<f64> {
    let rows = returns.period_rows(period);
    if rows.is_empty() {
        return Err(MarketDataError::EmptyPeriod(period.index));
    }
    let mut growth = 1.0;
    for r in rows {
        let v = returns.values[(r, col)];
        if !v.is_finite() {
            return Err(MarketDataError::MissingData { ticker: returns.tickers[col].label(), period: period.index });
        }
        growth *= 1.0 + v;
    }
    Ok(100.0 * (growth - 1.0))
}

/// `n` equicorrelated stocks at correlation `rho`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub size: usize,
    pub rho: f64,
}

/// Parameters of a synthetic market. Blocks are mutually independent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub blocks: Vec<BlockSpec>,
    pub weeks: usize,
    pub seed: u64,
    /// Number of equal-length study periods the weeks are cut into.
    #[serde(default = "default_periods")]
    pub periods: usize,
    /// Probability that a stock carries its block's home industry code.
    #[serde(default = "default_purity")]
    pub industry_purity: f64,
    #[serde(default = "default_vol")]
    pub weekly_vol: f64,
    #[serde(default = "default_drift")]
    pub weekly_drift: f64,
}

fn default_periods() -> usize {
    2
}
fn default_purity() -> f64 {
    0.75
}
fn default_vol() -> f64 {
    0.03
}
fn default_drift() -> f64 {
    0.001
}

const INDUSTRY_CODES: [&str; 11] = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K"];

impl SynthConfig {
    pub fn new(blocks: Vec<BlockSpec>, weeks: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            blocks,
            weeks,
            seed,
            periods: default_periods(),
            industry_purity: default_purity(),
            weekly_vol: default_vol(),
            weekly_drift: default_drift(),
        }
    }

    pub fn generate(&self) -> Result<PricePanel> {
        if self.weeks == 0 || self.periods == 0 || self.periods > self.weeks {
            return Err(MarketDataError::InvalidPanel("need weeks >= periods >= 1".into()));
        }
        let factors = self
            .blocks
            .iter()
            .map(|b| {
                if b.size == 0 {
                    return Err(MarketDataError::InvalidPanel("block size must be >= 1".into()));
                }
                equicorrelation_cholesky(b.size, b.rho).ok_or(MarketDataError::InvalidCorrelation(b.rho))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let coin = Uniform::new(0.0, 1.0);
        let mut tickers = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let home = INDUSTRY_CODES[b % INDUSTRY_CODES.len()];
            for s in 0..block.size {
                let industry = if coin.sample(&mut rng) < self.industry_purity {
                    home
                } else {
                    let others: Vec<&str> = INDUSTRY_CODES.iter().copied().filter(|c| *c != home).collect();
                    others[Uniform::new(0, others.len()).sample(&mut rng)]
                };
                tickers.push(Ticker { symbol: format!("B{:02}S{:03}", b + 1, s + 1), industry: industry.to_string() });
            }
        }

        let n = tickers.len();
        let start = NaiveDate::from_ymd_opt(2000, 5, 3).expect("valid date");
        let dates: Vec<NaiveDate> = (0..=self.weeks).map(|w| start + Duration::weeks(w as i64)).collect();
        let mut prices = Array2::zeros((self.weeks + 1, n));
        prices.row_mut(0).fill(100.0);
        let mut z: Vec<f64> = Vec::new();
        for w in 0..self.weeks {
            let mut col = 0;
            for (block, chol) in self.blocks.iter().zip(&factors) {
                z.clear();
                z.extend((0..block.size).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)));
                for i in 0..block.size {
                    let shock: f64 = (0..=i).map(|j| chol[i * block.size + j] * z[j]).sum();
                    let r = (self.weekly_drift + self.weekly_vol * shock).max(-0.95);
                    prices[(w + 1, col + i)] = prices[(w, col + i)] * (1.0 + r);
                }
                col += block.size;
            }
        }
        let dividends = Array2::zeros(prices.dim());
        let periods = (0..self.periods)
            .map(|p| PeriodSpec {
                index: p as u32 + 1,
                start: dates[p * self.weeks / self.periods],
                end: dates[(p + 1) * self.weeks / self.periods],
            })
            .collect();
        PricePanel::new(tickers, dates, prices, dividends, periods)
    }
}

/// Gaussian weekly returns with block correlation structure, priced from 100.
/// Deterministic in `(blocks, weeks, seed)`.
pub fn synth_panel(blocks: &[BlockSpec], weeks: usize, seed: u64) -> Result<PricePanel> {
    SynthConfig::new(blocks.to_vec(), weeks, seed).generate()
}

/// Lower Cholesky factor (row-major) of `(1 - rho) I + rho 11^T`, or `None`
/// when that matrix is not positive definite.
fn equicorrelation_cholesky(size: usize, rho: f64) -> Option<Vec<f64>> {
    if !(rho > -1.0 && rho < 1.0) {
        return None;
    }
    let a = |i: usize, j: usize| if i == j { 1.0 } else { rho };
    let mut l = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * size + k] * l[j * size + k]).sum();
            if i == j {
                let v = a(i, i) - s;
                if v <= 1e-12 {
                    return None;
                }
                l[i * size + j] = v.sqrt();
            } else {
                l[i * size + j] = (a(i, j) - s) / l[j * size + j];
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn one_period(start: &str, end: &str) -> PanelConfig {
        PanelConfig { periods: vec![PeriodSpec { index: 1, start: d(start), end: d(end) }], industries: None }
    }

    #[test]
    fn loads_identity_fixture() {
        let csv = "date,ticker,price,dividend\n\
                   2001-01-03,AAA_F,100,0\n2001-01-03,BBB_M,100,0\n\
                   2001-01-10,AAA_F,100,0\n2001-01-10,BBB_M,100,0\n\
                   2001-01-17,AAA_F,100,0\n2001-01-17,BBB_M,100,0\n";
        let panel = parse_price_csv(csv.as_bytes(), &one_period("2001-01-03", "2001-01-17")).unwrap();
        assert_eq!(panel.tickers().len(), 2);
        assert_eq!(panel.dates().len(), 3);
        assert!(panel.dividends().iter().all(|&x| x == 0.0));
        assert_eq!(panel.tickers()[0], Ticker { symbol: "AAA".into(), industry: "F".into() });
    }

    #[test]
    fn zero_price_names_the_line() {
        let csv = "date,ticker,price,dividend\n2001-01-03,AAA_F,100,0\n2001-01-10,AAA_F,0,0\n";
        match parse_price_csv(csv.as_bytes(), &PanelConfig::default()) {
            Err(MarketDataError::NonPositivePrice { line, ticker, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(ticker, "AAA_F");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_order_errors() {
        let csv = "date,ticker,price\n2001-01-03,AAA_F,100\n";
        assert!(matches!(
            parse_price_csv(csv.as_bytes(), &PanelConfig::default()),
            Err(MarketDataError::MissingColumn(c)) if c == "dividend"
        ));
        let csv = "date,ticker,price,dividend\n2001-01-10,AAA_F,100,0\n2001-01-03,AAA_F,100,0\n";
        assert!(matches!(
            parse_price_csv(csv.as_bytes(), &PanelConfig::default()),
            Err(MarketDataError::UnsortedDates { line: 3, .. })
        ));
        let csv = "date,ticker,price,dividend\n2001-01-10,AAA,100,0\n";
        assert!(matches!(
            parse_price_csv(csv.as_bytes(), &PanelConfig::default()),
            Err(MarketDataError::UnknownIndustryCode { line: 2, .. })
        ));
        let cfg = PanelConfig { periods: vec![], industries: Some(["F".to_string()].into()) };
        let csv = "date,ticker,price,dividend\n2001-01-10,AAA_M,100,0\n";
        assert!(matches!(parse_price_csv(csv.as_bytes(), &cfg), Err(MarketDataError::UnknownIndustryCode { .. })));
    }

    #[test]
    fn ticker_suffix() {
        let t = Ticker::parse("CBA_F", None).unwrap();
        assert_eq!(t.symbol, "CBA");
        assert_eq!(t.industry, "F");
        assert_eq!(Ticker::parse("BHP_MM", None).unwrap().industry, "MM");
        assert!(Ticker::parse("BHP_MMM", None).is_none());
        assert!(Ticker::parse("_F", None).is_none());
        assert_eq!(t.label(), "CBA_F");
    }

    fn single_series(prices: &[f64], dividends: &[f64]) -> PricePanel {
        let dates: Vec<NaiveDate> = (0..prices.len()).map(|w| d("2001-01-03") + Duration::weeks(w as i64)).collect();
        PricePanel::new(
            vec![Ticker { symbol: "X".into(), industry: "F".into() }],
            dates.clone(),
            Array2::from_shape_vec((prices.len(), 1), prices.to_vec()).unwrap(),
            Array2::from_shape_vec((prices.len(), 1), dividends.to_vec()).unwrap(),
            vec![PeriodSpec { index: 1, start: dates[0], end: *dates.last().unwrap() }],
        )
        .unwrap()
    }

    #[test]
    fn weekly_return_examples() {
        let r = weekly_returns(&single_series(&[100.0, 110.0], &[0.0, 0.0]));
        assert_abs_diff_eq!(r.values[(0, 0)], 0.10, epsilon = 1e-15);
        let r = weekly_returns(&single_series(&[100.0, 95.0], &[0.0, 5.0]));
        assert_abs_diff_eq!(r.values[(0, 0)], 0.0, epsilon = 1e-15);
        let r = weekly_returns(&single_series(&[100.0, 100.0], &[0.0, 2.0]));
        assert_abs_diff_eq!(r.values[(0, 0)], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn period_return_examples() {
        let panel = single_series(&[100.0, 110.0, 121.0], &[0.0; 3]);
        let r = weekly_returns(&panel);
        let t = &panel.tickers()[0];
        assert_abs_diff_eq!(period_return(&r, &panel.periods()[0], t).unwrap(), 21.0, epsilon = 1e-9);

        let panel = single_series(&[100.0, 150.0, 75.0], &[0.0; 3]);
        let r = weekly_returns(&panel);
        assert_abs_diff_eq!(period_return(&r, &panel.periods()[0], t).unwrap(), -25.0, epsilon = 1e-9);

        let panel = single_series(&[100.0; 4], &[0.0; 4]);
        let r = weekly_returns(&panel);
        assert_eq!(period_return(&r, &panel.periods()[0], t).unwrap(), 0.0);
    }

    #[test]
    fn empty_period_is_an_error() {
        let panel = single_series(&[100.0, 101.0, 102.0], &[0.0; 3]);
        let r = weekly_returns(&panel);
        let p = PeriodSpec { index: 9, start: panel.dates()[0] - Duration::days(3), end: panel.dates()[0] };
        assert!(matches!(period_return_of(&r, &p, 0), Err(MarketDataError::EmptyPeriod(9))));
    }

    #[test]
    fn missing_cells_leave_the_universe() {
        let csv = "date,ticker,price,dividend\n\
                   2001-01-03,AAA_F,100,0\n2001-01-03,BBB_M,100,0\n\
                   2001-01-10,AAA_F,101,0\n\
                   2001-01-17,AAA_F,102,0\n2001-01-17,BBB_M,99,0\n";
        let panel = parse_price_csv(csv.as_bytes(), &one_period("2001-01-03", "2001-01-17")).unwrap();
        let r = weekly_returns(&panel);
        assert_eq!(r.universe(&panel.periods()[0]), vec![0]);
        assert!(matches!(period_return_of(&r, &panel.periods()[0], 1), Err(MarketDataError::MissingData { .. })));
    }

    #[test]
    fn periods_must_abut() {
        let cfg = PanelConfig {
            periods: vec![
                PeriodSpec { index: 1, start: d("2001-01-03"), end: d("2001-01-10") },
                PeriodSpec { index: 2, start: d("2001-01-11"), end: d("2001-01-17") },
            ],
            industries: None,
        };
        let csv = "date,ticker,price,dividend\n2001-01-03,AAA_F,100,0\n2001-01-10,AAA_F,101,0\n2001-01-17,AAA_F,102,0\n";
        assert!(matches!(parse_price_csv(csv.as_bytes(), &cfg), Err(MarketDataError::InvalidPeriods(_))));
    }

    #[test]
    fn config_accepts_bare_list() {
        let cfg = PanelConfig::from_json(r#"[{"index":1,"start":"2001-01-03","end":"2001-02-03"}]"#).unwrap();
        assert_eq!(cfg.periods.len(), 1);
        let cfg =
            PanelConfig::from_json(r#"{"periods":[{"index":1,"start":"2001-01-03","end":"2001-02-03"}],"industries":["F"]}"#)
                .unwrap();
        assert!(cfg.industries.unwrap().contains("F"));
    }

    #[test]
    fn synth_is_deterministic() {
        let blocks = [BlockSpec { size: 3, rho: 0.5 }, BlockSpec { size: 2, rho: -0.4 }];
        let a = synth_panel(&blocks, 50, 11).unwrap();
        let b = synth_panel(&blocks, 50, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a, synth_panel(&blocks, 50, 12).unwrap());
    }

    #[test]
    fn synth_rejects_bad_correlations() {
        for rho in [1.0, -1.0, 1.5] {
            assert!(matches!(
                synth_panel(&[BlockSpec { size: 2, rho }], 10, 1),
                Err(MarketDataError::InvalidCorrelation(_))
            ));
        }
        // equicorrelation below -1/(n-1) is not positive definite
        assert!(synth_panel(&[BlockSpec { size: 3, rho: -0.6 }], 10, 1).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_panel() {
        let panel = synth_panel(&[BlockSpec { size: 2, rho: 0.3 }], 12, 5).unwrap();
        let cfg = PanelConfig { periods: panel.periods().to_vec(), industries: None };
        let back = parse_price_csv(panel.to_csv().as_bytes(), &cfg).unwrap();
        assert_eq!(back.tickers(), panel.tickers());
        for (a, b) in back.prices().iter().zip(panel.prices().iter()) {
            assert!(((a - b) / b).abs() < 1e-14);
        }
    }
}
