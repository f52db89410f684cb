//! Cross-checks of the production accumulators against the independent
//! big-integer reference in `common`.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{dot_rounded, exact_sum, random_value, round_scaled, scaled, sum_rounded, SUM_SCALE};
use reprokrylov::{
    dot_global, dot_global_multi, partition_rows, split_allreduce_begin, twoprod, twosum,
    DotMode, Fpe, RankWorld, ReductionPlan, SuperAcc,
};

#[test]
fn twosum_exact_for_100k_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100_000 {
        let a = random_value(&mut rng, 300);
        let b = random_value(&mut rng, 300);
        let p = twosum(a, b);
        assert_eq!(
            scaled(a) + scaled(b),
            scaled(p.result) + scaled(p.error),
            "twosum({a:e}, {b:e}) lost information"
        );
        assert_eq!(p.result, a + b);
    }
}

#[test]
fn twoprod_exact_for_100k_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100_000 {
        // Magnitudes bounded away from the subnormal range so the exact
        // product error is representable.
        let a = random_value(&mut rng, 100);
        let b = random_value(&mut rng, 100);
        let p = twoprod(a, b);
        let exact = scaled(a) * scaled(b);
        let recon = (scaled(p.result) + scaled(p.error)) << SUM_SCALE as u64;
        assert_eq!(exact, recon, "twoprod({a:e}, {b:e}) lost information");
        assert_eq!(p.result, a * b);
    }
}

#[test]
fn superacc_round_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..200 {
        let len = rng.gen_range(1..=400);
        let range = [3, 30, 300, 600][trial % 4];
        let mut vals: Vec<f64> = (0..len).map(|_| random_value(&mut rng, range)).collect();
        // Force heavy cancellation on some trials.
        if trial % 3 == 0 {
            let extra: Vec<f64> = vals.iter().map(|&v| -v).take(len / 2).collect();
            vals.extend(extra);
        }
        let mut acc = SuperAcc::new();
        for &v in &vals {
            acc.accumulate(v);
        }
        let got = acc.round();
        let want = sum_rounded(&vals);
        assert_eq!(
            got.to_bits(),
            want.to_bits(),
            "trial {trial}: superacc {got:e} vs oracle {want:e}"
        );
    }
}

#[test]
fn superacc_handles_huge_counts_of_extreme_values() {
    let mut acc = SuperAcc::new();
    let mut vals = Vec::new();
    for i in 0..4000 {
        let v = if i % 2 == 0 { f64::MAX } else { -f64::MAX / 2.0 };
        acc.accumulate(v);
        vals.push(v);
    }
    acc.accumulate(1e-300);
    vals.push(1e-300);
    assert_eq!(acc.round().to_bits(), sum_rounded(&vals).to_bits());
}

#[test]
fn fpe_nearsum_matches_oracle_without_overflow() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for trial in 0..200 {
        let len = rng.gen_range(1..=100);
        let vals: Vec<f64> = (0..len).map(|_| random_value(&mut rng, 15)).collect();
        let mut fpe = Fpe::new(8);
        for &v in &vals {
            fpe.accumulate(v);
        }
        assert!(!fpe.overflowed(), "trial {trial} unexpectedly overflowed");
        let got = fpe.round_nearsum().unwrap();
        let want = sum_rounded(&vals);
        assert_eq!(got.to_bits(), want.to_bits(), "trial {trial}");
    }
}

#[test]
fn exact_sum_oracle_sanity() {
    // The oracle itself on values with a known exact result.
    assert_eq!(sum_rounded(&[1.0, 2f64.powi(-60), -1.0]), 2f64.powi(-60));
    assert_eq!(sum_rounded(&[]), 0.0);
    assert_eq!(round_scaled(&exact_sum(&[1e308, 1e308]), SUM_SCALE), f64::INFINITY);
    assert_eq!(sum_rounded(&[f64::from_bits(1), f64::from_bits(1)]), f64::from_bits(2));
}

#[test]
fn dot_global_correctly_rounded_for_every_world() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let plans = [
        ReductionPlan::LeftFold,
        ReductionPlan::Balanced,
        ReductionPlan::Random(7),
    ];
    for trial in 0..60 {
        let len = rng.gen_range(4..=300);
        let range = [2, 40, 120][trial % 3];
        let x: Vec<f64> = (0..len).map(|_| random_value(&mut rng, range)).collect();
        let y: Vec<f64> = (0..len).map(|_| random_value(&mut rng, range)).collect();
        let want = dot_rounded(&x, &y);
        for ranks in [1usize, 3, 4] {
            for plan in plans {
                for mode in [DotMode::Fpe, DotMode::ExBlas] {
                    let world = RankWorld::new(partition_rows(len, ranks), plan, mode);
                    let got = dot_global(&world, &x, &y);
                    assert_eq!(
                        got.values[0].to_bits(),
                        want.to_bits(),
                        "trial {trial}, ranks {ranks}, plan {}, mode {}",
                        plan.name(),
                        mode.name()
                    );
                }
            }
        }
    }
}

#[test]
fn split_reduction_equals_blocking_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..40 {
        let len = rng.gen_range(4..=200);
        let a: Vec<f64> = (0..len).map(|_| random_value(&mut rng, 50)).collect();
        let b: Vec<f64> = (0..len).map(|_| random_value(&mut rng, 50)).collect();
        let c: Vec<f64> = (0..len).map(|_| random_value(&mut rng, 50)).collect();
        for mode in [DotMode::Fpe, DotMode::ExBlas] {
            let world = RankWorld::new(partition_rows(len, 4), ReductionPlan::Balanced, mode);
            let pairs: [(&[f64], &[f64]); 2] = [(&a, &b), (&b, &c)];
            let blocking = dot_global_multi(&world, &pairs);
            let split = split_allreduce_begin(&world, &pairs).wait();
            assert_eq!(blocking.values[0].to_bits(), split.values[0].to_bits());
            assert_eq!(blocking.values[1].to_bits(), split.values[1].to_bits());
        }
    }
}
