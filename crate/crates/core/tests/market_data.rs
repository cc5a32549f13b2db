use chrono::{Duration, NaiveDate};
use ndarray::Array2;
use proptest::prelude::*;
use splitfolio::correlation::{estimate_correlation, rho_to_distance, to_distance, CorrelationMatrix};
use splitfolio::market_data::{period_return_of, weekly_returns, BlockSpec, PeriodSpec, PricePanel, SynthConfig, Ticker};

fn dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2001, 1, 5).unwrap();
    (0..n).map(|w| start + Duration::weeks(w as i64)).collect()
}

fn panel(prices: Array2<f64>) -> PricePanel {
    let (rows, cols) = prices.dim();
    let tickers = (0..cols).map(|c| Ticker { symbol: format!("S{c}"), industry: "F".into() }).collect();
    PricePanel::new(tickers, dates(rows), prices, Array2::zeros((rows, cols)), vec![]).unwrap()
}

fn one_period(cfg: &SynthConfig) -> (splitfolio::ReturnMatrix, PeriodSpec) {
    let p = cfg.generate().unwrap();
    let spec = *p.period(1).unwrap();
    (weekly_returns(&p), spec)
}

proptest! {
    #[test]
    fn returns_rebuild_prices(raw in prop::collection::vec(1.0f64..500.0, 2..40)) {
        let n = raw.len();
        let prices = Array2::from_shape_vec((n, 1), raw.clone()).unwrap();
        let r = weekly_returns(&panel(prices));
        let mut p = raw[0];
        for (t, want) in raw.iter().enumerate().skip(1) {
            p *= 1.0 + r.values[(t - 1, 0)];
            prop_assert!(((p - want) / want).abs() <= 1e-9);
        }
    }

    #[test]
    fn period_returns_compound(raw in prop::collection::vec(1.0f64..500.0, 4..30), cut in 0.1f64..0.9) {
        let n = raw.len();
        let d = dates(n);
        let mid = 1 + ((n - 2) as f64 * cut) as usize;
        let whole = PeriodSpec { index: 1, start: d[0], end: d[n - 1] };
        let first = PeriodSpec { index: 1, start: d[0], end: d[mid] };
        let second = PeriodSpec { index: 2, start: d[mid], end: d[n - 1] };
        let r = weekly_returns(&panel(Array2::from_shape_vec((n, 1), raw).unwrap()));
        let (a, b) = (period_return_of(&r, &first, 0).unwrap(), period_return_of(&r, &second, 0).unwrap());
        let joined = 100.0 * ((1.0 + a / 100.0) * (1.0 + b / 100.0) - 1.0);
        let w = period_return_of(&r, &whole, 0).unwrap();
        prop_assert!((joined - w).abs() <= 1e-9 * w.abs().max(1.0));
    }

    #[test]
    fn correlation_ignores_affine_maps(scale in 0.01f64..100.0, shift in -5.0f64..5.0, seed in 0u64..50) {
        let mut cfg = SynthConfig::new(vec![BlockSpec { size: 4, rho: 0.5 }], 60, seed);
        cfg.periods = 1;
        let (mut r, period) = one_period(&cfg);
        let before = estimate_correlation(&r, &period).unwrap();
        r.values.column_mut(2).mapv_inplace(|v| v * scale + shift);
        let after = estimate_correlation(&r, &period).unwrap();
        for (x, y) in before.rho.iter().zip(after.rho.iter()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn distance_round_trips(rho in -1.0f64..=1.0) {
        let d = rho_to_distance(rho);
        prop_assert!((1.0 - d * d / 2.0 - rho).abs() <= 1e-12);
    }
}

#[test]
fn distance_is_strictly_decreasing_on_a_matrix() {
    let rho = ndarray::arr2(&[[1.0, 0.9, -0.2], [0.9, 1.0, 0.3], [-0.2, 0.3, 1.0]]);
    let d = to_distance(&CorrelationMatrix { labels: vec!["a".into(), "b".into(), "c".into()], rho });
    assert!(d.get(0, 1) < d.get(1, 2) && d.get(1, 2) < d.get(0, 2));
}

#[test]
fn synth_is_a_pure_function() {
    let cfg = SynthConfig::new(vec![BlockSpec { size: 3, rho: 0.4 }, BlockSpec { size: 2, rho: 0.0 }], 30, 9);
    assert_eq!(cfg.generate().unwrap(), cfg.generate().unwrap());
    let other = SynthConfig { seed: 10, ..cfg.clone() };
    assert_ne!(cfg.generate().unwrap(), other.generate().unwrap());
}

#[test]
fn tight_block_is_highly_correlated() {
    let mut cfg = SynthConfig::new(vec![BlockSpec { size: 4, rho: 0.9 }], 500, 1);
    cfg.periods = 1;
    let (r, period) = one_period(&cfg);
    let c = estimate_correlation(&r, &period).unwrap();
    for i in 0..4 {
        for j in 0..i {
            assert!(c.rho[(i, j)] > 0.8, "rho({i},{j}) = {}", c.rho[(i, j)]);
        }
    }
}

#[test]
fn independent_blocks_are_uncorrelated() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut cfg = SynthConfig::new(vec![BlockSpec { size: 3, rho: 0.6 }, BlockSpec { size: 3, rho: 0.6 }], 500, seed);
        cfg.periods = 1;
        let (r, period) = one_period(&cfg);
        let c = estimate_correlation(&r, &period).unwrap();
        for i in 0..3 {
            for j in 3..6 {
                worst = worst.max(c.rho[(i, j)].abs());
            }
        }
    }
    assert!(worst <= 0.15, "largest cross-block correlation {worst}");
}
