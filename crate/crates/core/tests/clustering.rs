use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitfolio::clustering::{
    merge_small, pair_clusters, split_dominant, suggest_clusters, ClusterAssignment, ClusterError, IndustryTag, Violation,
};
use splitfolio::nnet::CircularOrdering;
use splitfolio::splits::{circular_splits, Split, SplitSystem};

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("S{i:02}")).collect()
}

fn random_assignment(n: usize, k: usize, rng: &mut ChaCha8Rng) -> ClusterAssignment {
    ClusterAssignment::from_cuts(labels(n), sample(rng, n, k).into_vec()).unwrap()
}

fn random_industries(n: usize, codes: usize, rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
    labels(n).into_iter().map(|t| (t, format!("I{}", rng.gen_range(0..codes)))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn even_pairing_is_an_involution(half in 1usize..10, extra in 0usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2 * half;
        let p = pair_clusters(&random_assignment(k + extra, k, &mut rng)).unwrap().partner;
        for (&c, &q) in &p {
            prop_assert_ne!(c, q);
            prop_assert_eq!(p[&q], c);
        }
    }

    #[test]
    fn odd_pairing_is_total_and_irreflexive(half in 1usize..10, extra in 0usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2 * half + 1;
        let p = pair_clusters(&random_assignment(k + extra, k, &mut rng)).unwrap().partner;
        prop_assert_eq!(p.keys().copied().collect::<Vec<_>>(), (1..=k as u32).collect::<Vec<_>>());
        for (&c, &q) in &p {
            prop_assert_ne!(c, q);
            prop_assert!((1..=k as u32).contains(&q));
        }
    }

    #[test]
    fn dominant_industry_is_modal(n in 2usize..40, codes in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_assignment(n, rng.gen_range(1..=n), &mut rng);
        let industries = random_industries(n, codes, &mut rng);
        let div = split_dominant(&a, &industries).unwrap();
        for id in 1..=a.k() as u32 {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for t in a.members(id) {
                *counts.entry(industries[&t].as_str()).or_default() += 1;
            }
            let dom = counts[div.dominant[&id].as_str()];
            prop_assert!(counts.values().all(|&c| c <= dom));
            for t in a.members(id) {
                let want = if industries[&t] == div.dominant[&id] { IndustryTag::Dominant } else { IndustryTag::NonDominant };
                prop_assert_eq!(div.tags[&t], want);
            }
        }
    }

    #[test]
    fn merging_keeps_runs_contiguous(n in 2usize..40, codes in 1usize..4, min_size in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_assignment(n, rng.gen_range(1..=n), &mut rng);
        let industries = random_industries(n, codes, &mut rng);
        let div = split_dominant(&a, &industries).unwrap();
        for tag in [IndustryTag::Dominant, IndustryTag::NonDominant] {
            let groups = merge_small(&a, &div, tag, min_size);
            let k = a.k() as u32;
            // clusters are all used once, and each group is a clockwise run
            let mut all: Vec<u32> = groups.iter().flat_map(|g| g.clusters.iter().copied()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (1..=k).collect::<Vec<_>>());
            for g in &groups {
                for w in g.clusters.windows(2) {
                    prop_assert_eq!(w[1], w[0] % k + 1);
                }
            }
            let tagged = div.tags.values().filter(|&&t| t == tag).count();
            prop_assert_eq!(groups.iter().map(|g| g.len()).sum::<usize>(), tagged);
            prop_assert!(groups.len() == 1 || groups.iter().all(|g| g.len() >= min_size));
        }
    }

    #[test]
    fn suggested_assignments_validate(n in 2usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let splits = circular_splits(n).into_iter().map(|s| Split { weight: rng.gen_range(0.0..1.0), ..s }).collect();
        let sys = SplitSystem::new(labels(n), CircularOrdering::new(order).unwrap(), splits, 0.0).unwrap();
        let k = rng.gen_range(2..=n);
        let a = suggest_clusters(&sys, k).unwrap();
        prop_assert!(a.validate().is_empty());
        prop_assert_eq!(a.k(), k);
        let back = ClusterAssignment::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(&back, &a);
        let covered: BTreeSet<String> = a.cluster_of().into_keys().collect();
        prop_assert_eq!(covered.len(), n);
    }
}

#[test]
fn suggest_needs_two_clusters() {
    let splits = circular_splits(4).into_iter().map(|s| Split { weight: 1.0, ..s }).collect();
    let sys = SplitSystem::new(labels(4), CircularOrdering::identity(4), splits, 0.0).unwrap();
    assert_eq!(suggest_clusters(&sys, 1), Err(ClusterError::InvalidK));
    assert_eq!(suggest_clusters(&sys, 5), Err(ClusterError::KTooLarge { k: 5, n: 4 }));
}

#[test]
fn split_cluster_is_rejected_by_name() {
    let mut a = ClusterAssignment::from_cuts(labels(6), vec![0, 2, 4]).unwrap();
    a.labels = vec![1, 2, 1];
    let v = a.validate();
    assert!(v.contains(&Violation::SplitCluster(1)), "{v:?}");
    let err = ClusterAssignment::from_json(&a.to_json()).unwrap_err();
    assert!(matches!(err, ClusterError::Invalid(_)));
    assert!(err.to_string().contains("cluster 1 occupies more than one arc"), "{err}");
}

#[test]
fn edited_ordering_fails_the_hash() {
    let mut a = ClusterAssignment::from_cuts(labels(5), vec![0, 3]).unwrap();
    a.ordering.swap(0, 1);
    assert!(matches!(a.validate()[..], [Violation::HashMismatch { .. }]));
}
