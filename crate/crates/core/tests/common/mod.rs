#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use splitfolio::nnet::CircularOrdering;
use splitfolio::splits::{Split, SplitSystem};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

/// The stored golden file, checked against `actual` by the caller. With
/// `SPLITFOLIO_BLESS=1` set, `actual` is written first.
pub fn golden(name: &str, actual: &str) -> String {
    let path = data_path(name);
    if std::env::var_os("SPLITFOLIO_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The split isolating ordering position `p`; arcs never hold the last position.
pub fn trivial(p: usize, n: usize, weight: f64) -> Split {
    if p + 1 == n {
        Split { start: 0, end: n - 2, weight }
    } else {
        Split { start: p, end: p, weight }
    }
}

/// Seven taxa in two industries, ordered 2 5 0 6 3 1 4, with all trivial
/// splits, two compatible cluster splits and one crossing them.
pub fn oracle7() -> SplitSystem {
    let taxa = ["ANZ", "BHP", "CBA", "NAB", "RIO", "WBC", "FMG"].iter().map(|s| s.to_string()).collect();
    let ordering = CircularOrdering::new(vec![2, 5, 0, 6, 3, 1, 4]).unwrap();
    let mut splits: Vec<Split> = (0..7).map(|p| trivial(p, 7, 0.25 + 0.0625 * p as f64)).collect();
    splits.push(Split { start: 0, end: 2, weight: 0.75 });
    splits.push(Split { start: 3, end: 4, weight: 0.5 });
    splits.push(Split { start: 2, end: 3, weight: 0.125 });
    SplitSystem::new(taxa, ordering, splits, 0.0).unwrap()
}

pub fn oracle7_industries() -> BTreeMap<String, String> {
    [("ANZ", "Banks"), ("CBA", "Banks"), ("NAB", "Banks"), ("WBC", "Banks"), ("BHP", "Materials"), ("RIO", "Materials"), ("FMG", "Materials")]
        .iter()
        .map(|(t, i)| (t.to_string(), i.to_string()))
        .collect()
}

pub fn trivial3() -> SplitSystem {
    let taxa = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let splits = (0..3).map(|p| trivial(p, 3, 1.0 + p as f64)).collect();
    SplitSystem::new(taxa, CircularOrdering::identity(3), splits, 0.0).unwrap()
}
