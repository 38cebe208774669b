mod common;

use std::collections::HashMap;

use pore::base_rec::{Algo, BaseModel, BprParams, Submatrix};
use pore::ensemble::{
    build_vote_counts, ensemble_recommend, member_sample, sample_submatrix, tally, VoteCounts,
};
use pore::oracle::{exact_item_probs, exhaustive_members};
use proptest::prelude::*;
use rand::Rng;

use common::{random_matrix, rng};

#[test]
fn sampling_is_uniform_over_subsets() {
    let draws = 100_000;
    let mut per_user = [0u32; 5];
    let mut per_subset: HashMap<Vec<u32>, u32> = HashMap::new();
    for k in 0..draws {
        let s = sample_submatrix(5, 2, k).unwrap();
        assert_eq!(s.users.len(), 2);
        for &u in &s.users {
            per_user[u as usize] += 1;
        }
        *per_subset.entry(s.users).or_default() += 1;
    }
    for c in per_user {
        assert!((c as f64 / draws as f64 - 0.4).abs() < 0.01, "{c}");
    }
    assert_eq!(per_subset.len(), 10);
    for c in per_subset.values() {
        assert!((*c as f64 / draws as f64 - 0.1).abs() < 0.01, "{c}");
    }
}

#[test]
fn single_full_member_matches_the_base_model() {
    let m = random_matrix(7, 9, 0.4, &[1.0, 3.0, 5.0], &mut rng(1));
    let algo = Algo::from_tag("ir").unwrap();
    let v = build_vote_counts(&m, &algo, 1, 7, 2, 5).unwrap();
    let all: Vec<u32> = (0..7).collect();
    let sample = member_sample(7, 7, 5, 0).unwrap();
    let model = BaseModel::train(Submatrix::new(&m, &all), &algo, sample.training_seed()).unwrap();
    for u in 0..7u32 {
        let top = model.recommend(u, 2);
        for i in 0..9u32 {
            assert_eq!(v.get(u, i), top.contains(&i) as u32);
        }
    }
}

#[test]
fn counts_equal_sequential_re_execution() {
    for algo in [Algo::from_tag("ir").unwrap(), Algo::Bpr(BprParams::default())] {
        let m = random_matrix(6, 8, 0.5, &[1.0, 2.0, 4.0, 5.0], &mut rng(2));
        let v = build_vote_counts(&m, &algo, 20, 3, 2, 99).unwrap();
        let mut expect = vec![0u32; 6 * 8];
        for t in 0..20 {
            let sample = member_sample(6, 3, 99, t).unwrap();
            let model = BaseModel::train(Submatrix::new(&m, &sample.users), &algo, sample.training_seed()).unwrap();
            for u in 0..6u32 {
                for i in model.recommend(u, 2) {
                    expect[u as usize * 8 + i as usize] += 1;
                }
            }
        }
        assert_eq!(v.as_dense(), expect.as_slice(), "{algo}");
    }
}

#[test]
fn thread_count_does_not_change_counts() {
    let m = random_matrix(30, 20, 0.3, &[1.0, 5.0], &mut rng(3));
    let algo = Algo::from_tag("ir").unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| build_vote_counts(&m, &algo, 600, 10, 3, 4).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn resumed_build_equals_uninterrupted() {
    let m = random_matrix(25, 15, 0.3, &[2.0, 4.0], &mut rng(4));
    let algo = Algo::from_tag("ir").unwrap();
    let whole = build_vote_counts(&m, &algo, 700, 8, 1, 12).unwrap();
    let mut part = build_vote_counts(&m, &algo, 300, 8, 1, 12).unwrap();
    let mut seen = Vec::new();
    part.extend_to(&m, &algo, 700, |t| seen.push(t)).unwrap();
    assert_eq!(part, whole);
    assert_eq!(seen.last(), Some(&700));
}

#[test]
fn exhaustive_tally_recovers_exact_probabilities() {
    let m = random_matrix(6, 7, 0.45, &[1.0, 3.0, 5.0], &mut rng(5));
    let algo = Algo::from_tag("ir").unwrap();
    let members = exhaustive_members(6, 3, 0).unwrap();
    assert_eq!(members.len(), 20);
    let counts = tally(&m, &algo, 2, &members).unwrap();
    let exact = exact_item_probs(&m, &algo, 3, 2, 0).unwrap();
    assert_eq!(exact.denom, 20);
    let v = VoteCounts::from_dense(6, 7, 20, 3, 2, 0, "ir", counts).unwrap();
    for u in 0..6u32 {
        for i in 0..7u32 {
            assert_eq!(v.get(u, i) as u64, exact.count(u, i));
            // a vote needs the user in the subset: p <= s/n
            assert!(exact.count(u, i) * 6 <= 3 * exact.denom);
        }
        assert_eq!(ensemble_recommend(&v, &m, u, 3), exact.top_n(&m, u, 3));
    }
}

#[test]
fn monte_carlo_converges_to_exact_probabilities() {
    let m = random_matrix(6, 6, 0.5, &[1.0, 2.0, 3.0, 4.0, 5.0], &mut rng(6));
    let algo = Algo::from_tag("ir").unwrap();
    let exact = exact_item_probs(&m, &algo, 3, 1, 0).unwrap();
    let t = 50_000u64;
    let v = build_vote_counts(&m, &algo, t, 3, 1, 77).unwrap();
    let mut worst: f64 = 0.0;
    for u in 0..6u32 {
        for i in 0..6u32 {
            let mc = v.get(u, i) as f64 / t as f64;
            let p = exact.count(u, i) as f64 / exact.denom as f64;
            worst = worst.max((mc - p).abs());
        }
    }
    assert!(worst <= 0.01, "worst deviation {worst}");
}

#[test]
fn recommendation_ignores_positive_rescaling() {
    let mut r = rng(7);
    let m = random_matrix(4, 12, 0.3, &[1.0, 5.0], &mut r);
    let counts: Vec<u32> = (0..48).map(|_| r.random_range(0..20)).collect();
    let v = VoteCounts::from_dense(4, 12, 20, 2, 1, 0, "ir", counts.clone()).unwrap();
    let scaled = VoteCounts::from_dense(4, 12, 60, 2, 1, 0, "ir", counts.iter().map(|c| c * 3).collect()).unwrap();
    for u in 0..4 {
        for n in 1..=12 {
            assert_eq!(ensemble_recommend(&v, &m, u, n), ensemble_recommend(&scaled, &m, u, n));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn vote_invariants(seed in 0u64..1000, n in 3usize..12, m in 2usize..10, n_prime in 1usize..4, t in 1u64..40) {
        let mut r = rng(seed);
        let mat = random_matrix(n, m, 0.4, &[1.0, 4.0], &mut r);
        let s = r.random_range(1..=n);
        let v = build_vote_counts(&mat, &Algo::from_tag("ir").unwrap(), t, s, n_prime, seed).unwrap();
        let mut appearances = vec![0u32; n];
        for k in 0..t {
            for u in member_sample(n, s, seed, k).unwrap().users {
                appearances[u as usize] += 1;
            }
        }
        for u in 0..n as u32 {
            let row = v.row(u);
            prop_assert!(row.iter().map(|&c| c as u64).sum::<u64>() <= n_prime as u64 * t);
            for (i, &c) in row.iter().enumerate() {
                prop_assert!(c as u64 <= t);
                prop_assert!(c <= appearances[u as usize]);
                prop_assert!(!(c > 0 && mat.has_rated(u, i as u32)));
            }
            let top = ensemble_recommend(&v, &mat, u, m);
            let unrated = (0..m as u32).filter(|&i| !mat.has_rated(u, i)).count();
            prop_assert_eq!(top.len(), unrated);
        }
    }
}
