mod common;

use std::collections::HashSet;
use std::sync::Arc;

use nctl::data::protocols::{
    derive_seed, digit_pairs, free_split_plan, free_split_stream, pair_index, permutations,
    permuted_stream, sample_duration, split_stream, DURATION_BASE,
};
use nctl::data::{ClassIndex, GeometricSupport, Running, Standardizer};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{DiscreteCDF, Geometric};

#[test]
fn there_are_45_pairs_and_the_smaller_digit_is_label_0() {
    let pairs = digit_pairs();
    assert_eq!(pairs.len(), 45);
    assert_eq!(pairs.iter().collect::<HashSet<_>>().len(), 45);
    let images = common::vendored_mnist();
    let index = ClassIndex::new(&images.train);
    let stream = free_split_stream(
        Arc::new(images.train_source()),
        &index,
        3,
        30,
        GeometricSupport::Zero,
    );
    let one_three = pair_index(1, 3).unwrap();
    let mut seen = false;
    for m in stream.meta() {
        let (a, b) = pairs[m.task];
        assert!(m.class == a || m.class == b);
        assert_eq!(m.label, m.class == b);
        if m.task == one_three && m.class == 1 {
            assert!(!m.label);
            seen = true;
        }
    }
    let _ = seen;
}

#[test]
fn durations_follow_the_shifted_geometric() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut xs: Vec<u64> = (0..n)
        .map(|_| (sample_duration(&mut rng, GeometricSupport::Zero) - DURATION_BASE) as u64)
        .collect();
    let mean = xs.iter().sum::<u64>() as f64 / n as f64 + DURATION_BASE as f64;
    assert!((mean - 199.0).abs() < 2.0, "mean duration {mean}");

    // statrs' geometric counts trials, so X + 1 ~ Geometric(0.01) on {1, 2, ...}.
    // KS distance on a discrete law: the largest gap at the jump points.
    let g = Geometric::new(0.01).unwrap();
    xs.sort_unstable();
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < n {
        let x = xs[i];
        let below = i as f64 / n as f64;
        while i < n && xs[i] == x {
            i += 1;
        }
        let upto = i as f64 / n as f64;
        let cdf = g.cdf(x + 1);
        let cdf_before = g.cdf(x);
        d = d.max((upto - cdf).abs()).max((below - cdf_before).abs());
    }
    // Asymptotic 1% critical value; conservative for a discrete law.
    let critical = 1.628 / (n as f64).sqrt();
    assert!(d < critical, "KS distance {d} exceeds {critical}");
}

#[test]
fn support_one_shifts_by_one() {
    let a: Vec<usize> = {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..100)
            .map(|_| sample_duration(&mut rng, GeometricSupport::Zero))
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for x in a {
        assert_eq!(sample_duration(&mut rng, GeometricSupport::One), x + 1);
    }
}

#[test]
fn free_split_is_deterministic_and_samples_with_replacement() {
    assert_eq!(
        free_split_plan(5, 50, GeometricSupport::Zero),
        free_split_plan(5, 50, GeometricSupport::Zero)
    );
    assert_ne!(
        free_split_plan(5, 50, GeometricSupport::Zero),
        free_split_plan(6, 50, GeometricSupport::Zero)
    );
    // 50 draws from 45 pairs must repeat.
    let plan = free_split_plan(5, 50, GeometricSupport::Zero);
    assert!(plan.iter().map(|s| s.pair).collect::<HashSet<_>>().len() < 50);
    assert!(plan.iter().all(|s| s.len >= DURATION_BASE));
}

#[test]
fn stream_boundaries_agree_with_metadata() {
    let images = common::vendored_mnist();
    let index = ClassIndex::new(&images.train);
    let a = free_split_stream(
        Arc::new(images.train_source()),
        &index,
        11,
        6,
        GeometricSupport::Zero,
    );
    let b = free_split_stream(
        Arc::new(images.train_source()),
        &index,
        11,
        6,
        GeometricSupport::Zero,
    );
    assert_eq!(a.manifest(), b.manifest());
    assert_eq!(
        a.examples().collect::<Vec<_>>(),
        b.examples().collect::<Vec<_>>()
    );
    let plan = free_split_plan(11, 6, GeometricSupport::Zero);
    let bounds = a.boundaries();
    assert_eq!(bounds.len(), plan.len());
    let mut start = 0;
    for (bd, seg) in bounds.iter().zip(&plan) {
        assert_eq!((bd.start, bd.len, bd.task), (start, seg.len, seg.pair));
        for m in &a.meta()[bd.start..bd.start + bd.len] {
            assert_eq!(m.task, seg.pair);
        }
        start += seg.len;
    }
    assert_eq!(start, a.len());
    let json = serde_json::to_string(&a.manifest()).unwrap();
    assert!(json.contains("free-split"));
}

#[test]
fn split_stream_runs_tasks_in_order() {
    let images = common::vendored_mnist();
    let s = split_stream(
        Arc::new(images.train_source()),
        &images.train,
        0,
        "split-mnist",
    );
    let order: Vec<usize> = s.boundaries().iter().map(|b| b.task).collect();
    let expected: Vec<usize> = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
        .iter()
        .map(|&(a, b)| pair_index(a, b).unwrap())
        .collect();
    assert_eq!(order, expected);
    assert_eq!(s.len(), images.train.len());
}

#[test]
fn permutations_are_bijections_and_the_first_is_identity() {
    let p = permutations(4, 5, 784);
    assert_eq!(p, permutations(4, 5, 784));
    assert_eq!(p[0], (0..784).collect::<Vec<_>>());
    for perm in &p {
        let mut s = perm.clone();
        s.sort_unstable();
        assert_eq!(s, (0..784).collect::<Vec<_>>());
    }
    assert_ne!(p[1], p[2]);

    let images = common::vendored_mnist();
    let stream = permuted_stream(images.train_source(), 4, 3, Some(20));
    assert_eq!(stream.len(), 60);
    let first = &stream.meta()[0];
    let z = stream.example(first).features;
    let plain = images
        .standardizer
        .transform(&images.train.scaled(first.source));
    assert_eq!(z, plain);
}

#[test]
fn derived_seeds_differ_by_tag() {
    let s: HashSet<u64> = (0..100).map(|t| derive_seed(1, t)).collect();
    assert_eq!(s.len(), 100);
    assert_eq!(derive_seed(1, 3), derive_seed(1, 3));
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, dim), 2..60)
    })
}

proptest! {
    #[test]
    fn fitted_standardizer_gives_zero_mean_unit_variance(rows in rows_strategy(), constant in -5.0f64..5.0) {
        let mut rows = rows;
        for r in rows.iter_mut() {
            r.push(constant);
        }
        let dim = rows[0].len();
        let s = Standardizer::fit(dim, rows.iter().map(|r| r.as_slice()));
        let z: Vec<Vec<f64>> = rows.iter().map(|r| s.transform(r)).collect();
        let n = rows.len() as f64;
        for j in 0..dim {
            let mean = z.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-6);
            if s.std[j] > 0.0 {
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
                for (r, zr) in rows.iter().zip(&z) {
                    prop_assert!((s.inverse(zr)[j] - r[j]).abs() < 1e-6);
                }
            } else {
                prop_assert!(z.iter().all(|r| r[j] == 0.0));
            }
        }
    }

    #[test]
    fn running_snapshot_matches_two_pass_statistics(rows in rows_strategy()) {
        let dim = rows[0].len();
        let mut acc = Running::new(dim);
        for r in &rows {
            acc.push(r);
        }
        let a = acc.snapshot();
        let n = rows.len() as f64;
        for j in 0..dim {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let std = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!((a.mean[j] - mean).abs() < 1e-9);
            prop_assert!((a.std[j] - std).abs() < 1e-9);
        }
    }
}
