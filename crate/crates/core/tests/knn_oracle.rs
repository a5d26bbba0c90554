//! Exact retrieval and vote checked against brute-force full-sort oracles.

use std::collections::BTreeMap;

use faceid::knn::GalleryIndex;
use faceid::store::normalize;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            let v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            normalize(&v).unwrap()
        })
        .collect()
}

fn build(rows: &[Vec<f32>], labels: &[String]) -> GalleryIndex {
    GalleryIndex::new(
        rows[0].len(),
        rows.concat(),
        labels.to_vec(),
        (0..rows.len()).map(|i| i.to_string()).collect(),
    )
    .unwrap()
}

/// Every similarity, fully sorted (descending, ties by row).
fn oracle_ranking(rows: &[Vec<f32>], q: &[f32]) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut s = 0.0f64;
            for j in 0..q.len() {
                s += r[j] as f64 * q[j] as f64;
            }
            (i, s)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all
}

/// Clamped-similarity vote recomputed from the oracle ranking.
fn oracle_vote(ranking: &[(usize, f64)], labels: &[String], k: usize) -> String {
    let mut sums: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for &(row, s) in &ranking[..k.min(ranking.len())] {
        let e = sums
            .entry(labels[row].as_str())
            .or_insert((0.0, f64::NEG_INFINITY));
        e.0 += s.max(0.0);
        e.1 = e.1.max(s);
    }
    let mut best: Option<(&str, f64, f64)> = None;
    for (label, (sum, top)) in sums {
        // BTreeMap order is lexicographic, so strict > keeps the smaller
        // label on a full tie.
        if best.is_none_or(|(_, bs, bt)| sum > bs || (sum == bs && top > bt)) {
            best = Some((label, sum, top));
        }
    }
    best.unwrap().0.to_string()
}

#[test]
fn topk_matches_full_sort_1000_by_100() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rows = unit_rows(1000, 32, &mut rng);
    let labels: Vec<String> = (0..1000).map(|i| format!("c{}", i % 10)).collect();
    let index = build(&rows, &labels);
    for q in unit_rows(100, 32, &mut rng) {
        let got: Vec<(usize, f64)> = index
            .search_topk(&q, 10)
            .unwrap()
            .iter()
            .map(|n| (n.row, n.similarity))
            .collect();
        let want = &oracle_ranking(&rows, &q)[..10];
        assert_eq!(got, want);
    }
}

#[test]
fn self_query_is_first_with_similarity_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = unit_rows(50, 16, &mut rng);
    let labels: Vec<String> = (0..50).map(|i| i.to_string()).collect();
    let index = build(&rows, &labels);
    for (i, r) in rows.iter().enumerate() {
        let top = &index.search_topk(r, 1).unwrap()[0];
        assert_eq!(top.row, i);
        assert!((top.similarity - 1.0).abs() < 1e-6);
    }
}

#[test]
fn weighted_vote_matches_oracle_k5() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rows = unit_rows(400, 8, &mut rng);
    let labels: Vec<String> = (0..400)
        .map(|_| format!("L{}", rng.random_range(0..6)))
        .collect();
    let index = build(&rows, &labels);
    for q in unit_rows(200, 8, &mut rng) {
        let got = index.classify_weighted_vote(&q, 5).unwrap();
        assert_eq!(
            &*got.identity,
            oracle_vote(&oracle_ranking(&rows, &q), &labels, 5)
        );
    }
}

#[test]
fn duplicate_of_query_becomes_nearest() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = unit_rows(200, 16, &mut rng);
    let mut labels: Vec<String> = (0..200).map(|i| format!("c{}", i % 4)).collect();
    let q = unit_rows(1, 16, &mut rng).remove(0);
    rows.push(q.clone());
    labels.push("X".into());
    let index = build(&rows, &labels);
    let v = index.classify_weighted_vote(&q, 1).unwrap();
    assert_eq!(&*v.identity, "X");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn topk_exact_for_any_gallery(
        n in 1usize..2000,
        d in 2usize..24,
        k in 1usize..60,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = unit_rows(n, d, &mut rng);
        let labels: Vec<String> = (0..n).map(|i| (i % 3).to_string()).collect();
        let index = build(&rows, &labels);
        let q = unit_rows(1, d, &mut rng).remove(0);
        let got: Vec<usize> = index.search_topk(&q, k).unwrap().iter().map(|n| n.row).collect();
        let want: Vec<usize> = oracle_ranking(&rows, &q)[..k.min(n)].iter().map(|p| p.0).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn vote_is_scale_invariant(
        seed in any::<u64>(),
        scale in 1e-3f32..1e3,
        k in 1usize..12,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = unit_rows(120, 6, &mut rng);
        let labels: Vec<String> = (0..120).map(|i| format!("c{}", i % 5)).collect();
        let index = build(&rows, &labels);
        let raw: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        prop_assume!(raw.iter().any(|x| x.abs() > 1e-2));
        let scaled: Vec<f32> = raw.iter().map(|x| x * scale).collect();
        let a = index.classify_weighted_vote(&normalize(&raw).unwrap(), k).unwrap();
        let b = index.classify_weighted_vote(&normalize(&scaled).unwrap(), k).unwrap();
        prop_assert_eq!(a.identity, b.identity);
    }
}
