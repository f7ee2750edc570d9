//! Hankel data as a model: trajectory membership and excitation.

mod common;

use inspect_core::excitation::{is_persistently_exciting, membership_residual, required_length, RANK_TOL};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::fixture;

const WINDOWS: usize = 100;

#[test]
fn plant_windows_lie_in_the_data_span() {
    let fx = fixture();
    let blocks = fx.blocks(1, 8);
    let l = blocks.depth();
    let bounds = fx.params.input_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..WINDOWS {
        let x0 = DVector::from_fn(fx.sys.n(), |_, _| rng.gen_range(-5.0..5.0));
        let inputs: Vec<DVector<f64>> =
            (0..l).map(|_| DVector::from_iterator(4, bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)))).collect();
        let sim = fx.sys.simulate(&x0, &inputs).unwrap();
        let u = DMatrix::from_columns(&sim.inputs);
        let y = DMatrix::from_columns(&sim.outputs);
        let (res, _) = membership_residual(&blocks, &u, &y).unwrap();
        worst = worst.max(res);
    }
    assert!(worst < 1e-6, "worst plant-window residual {worst:e}");
}

#[test]
fn noise_windows_do_not() {
    let fx = fixture();
    let blocks = fx.blocks(1, 8);
    let l = blocks.depth();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut best = f64::INFINITY;
    for _ in 0..WINDOWS {
        let u = DMatrix::from_fn(4, l, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(12, l, |_, _| rng.gen_range(-1.0..1.0));
        let (res, _) = membership_residual(&blocks, &u, &y).unwrap();
        best = best.min(res);
    }
    assert!(best > 1e-3, "smallest noise-window residual {best:e}");
}

#[test]
fn uniform_draws_are_exciting_almost_always() {
    // Order L + n = 21 at the minimum length gives a square 84 x 84 Hankel matrix.
    let (m, n, l) = (4, 12, 9);
    let t = required_length(m, n, l);
    assert_eq!(t, 104);
    let hits = (0..20u64)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = DMatrix::from_fn(m, t, |_, _| rng.gen_range(-1.0..1.0));
            is_persistently_exciting(&u, l + n, RANK_TOL)
        })
        .count();
    assert!(hits >= 19, "{hits}/20 draws persistently exciting");
}

#[test]
fn one_sample_short_is_never_exciting() {
    let (m, n, l) = (4, 12, 9);
    let t = required_length(m, n, l) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = DMatrix::from_fn(m, t, |_, _| rng.gen_range(-1.0..1.0));
    assert!(!is_persistently_exciting(&u, l + n, RANK_TOL));
}

#[test]
fn data_rank_is_inputs_plus_states() {
    // Rank of the stacked depth-L Hankel matrix is m·L + n for exciting data.
    let fx = fixture();
    let h = fx.blocks(1, 8).stacked();
    let sv = h.singular_values();
    let rank = sv.iter().filter(|&&s| s > 1e-9 * sv.max()).count();
    assert_eq!(rank, 4 * 9 + 12);
}

mod props {
    use inspect_core::excitation::{hankel, is_persistently_exciting, RANK_TOL};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn hankel_entries_follow_the_signal(d in 1usize..4, t in 2usize..30, depth in 1usize..6, seed in 0u64..1000) {
            prop_assume!(depth <= t);
            let s = DMatrix::from_fn(d, t, |r, c| (seed as f64) + (r * 31 + c) as f64);
            let h = hankel(&s, depth).unwrap();
            prop_assert_eq!(h.shape(), (d * depth, t - depth + 1));
            for r in 0..h.nrows() {
                for c in 0..h.ncols() {
                    prop_assert_eq!(h[(r, c)], s[(r % d, c + r / d)]);
                }
            }
        }

        #[test]
        fn excitation_needs_enough_columns(m in 1usize..4, order in 1usize..8, t in 1usize..40, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u = DMatrix::from_fn(m, t, |_, _| rng.gen_range(-1.0..1.0));
            if is_persistently_exciting(&u, order, RANK_TOL) {
                prop_assert!(t + 1 >= (m + 1) * order);
            }
        }
    }
}
