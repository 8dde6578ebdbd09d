mod support;

use curvemrf::inference::{
    block_icm, bp_run, build_pairwise_model, build_restricted_lp, infer, round_min_marginals, round_relaxed,
    trws_run, trws_run_with, InferenceOptions, Ordering, Passes, TrwsOptions,
};
use curvemrf::lp::solve;
use curvemrf::{BinaryLabeling, Dims};
use proptest::prelude::*;
use support::reference_trws::{local_polytope, reference_trws, GenericMrf};
use support::{brute_force_minimum, random_instance};

fn opts(passes: usize) -> TrwsOptions {
    TrwsOptions {
        passes: Passes::Fixed(passes),
        ..Default::default()
    }
}

#[test]
fn trws_matches_full_storage_reference() {
    for seed in 0..6 {
        let model = random_instance(seed, Dims::new(5, 4), 3, 4, seed % 2 == 0);
        let pm = build_pairwise_model(&model);
        let (state, mm) = trws_run(&pm, &opts(15)).unwrap();
        let reference = reference_trws(&GenericMrf::from_energy_model(&model), 15, false);
        for (a, b) in state.lower_bound_trace.iter().zip(&reference.lower_bounds) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "bound {a} vs {b}");
        }
        for v in 0..pm.n_pixels() {
            for l in 0..2 {
                assert!((mm.pixels[v][l] - reference.theta_hat[v][l]).abs() < 1e-9);
            }
        }
        for h in 0..pm.n_windows() {
            for (y, &t) in mm.window(h).iter().enumerate() {
                assert!((t - reference.theta_hat[pm.n_pixels() + h][y]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn bp_matches_reference_with_unit_gamma() {
    let model = random_instance(3, Dims::new(4, 4), 3, 3, false);
    let pm = build_pairwise_model(&model);
    let mm = bp_run(&pm, 5, Ordering::PixelsFirst).unwrap();
    let reference = reference_trws(&GenericMrf::from_energy_model(&model), 5, true);
    for v in 0..pm.n_pixels() {
        for l in 0..2 {
            let (a, b) = (mm.pixels[v][l], reference.theta_hat[v][l]);
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}

#[test]
fn reformulation_energy_matches_higher_order_energy() {
    let model = random_instance(11, Dims::new(5, 5), 3, 5, true);
    let pm = build_pairwise_model(&model);
    let x = BinaryLabeling::from_fn(model.dims(), |x, y| (x * 7 + y * 3) % 4 == 0).unwrap();
    let y = pm.best_patterns(&x);
    let a = pm.energy(&x, &y).unwrap();
    let b = model.total_energy(&x).unwrap();
    assert!((a - b).abs() < 1e-9);
}

#[test]
fn interleaved_ordering_keeps_a_valid_bound() {
    for seed in 0..4 {
        let model = random_instance(100 + seed, Dims::new(4, 4), 3, 5, true);
        let pm = build_pairwise_model(&model);
        let (min, _) = brute_force_minimum(&model);
        let o = TrwsOptions {
            ordering: Ordering::Interleaved,
            ..opts(30)
        };
        let (state, _) = trws_run(&pm, &o).unwrap();
        for w in state.lower_bound_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        assert!(*state.lower_bound_trace.last().unwrap() <= min + 1e-9);
    }
}

#[test]
fn progress_callback_cancels() {
    let model = random_instance(1, Dims::new(4, 4), 3, 3, false);
    let pm = build_pairwise_model(&model);
    let mut seen = Vec::new();
    let (state, _) = trws_run_with(&pm, &opts(50), &mut |p, lb| {
        seen.push((p, lb));
        p < 3
    })
    .unwrap();
    assert_eq!(state.passes, 3);
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[2].1, state.lower_bound_trace[2]);
}

#[test]
fn auto_passes_stop_on_plateau() {
    let model = random_instance(2, Dims::new(4, 4), 3, 2, false);
    let pm = build_pairwise_model(&model);
    let o = TrwsOptions {
        passes: Passes::Auto { max: 1000 },
        ..Default::default()
    };
    let (state, _) = trws_run(&pm, &o).unwrap();
    assert!(state.passes < 1000);
}

#[test]
fn rounding_ties_go_to_background() {
    let model = random_instance(0, Dims::new(3, 3), 3, 0, false);
    let pm = build_pairwise_model(&model);
    let (_, mut mm) = trws_run(&pm, &opts(1)).unwrap();
    mm.pixels = vec![[1.0, 1.0], [2.0, 1.0], [0.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
    let x = round_min_marginals(&mm, pm.dims).unwrap();
    assert_eq!(x.labels(), &[0, 1, 0, 0, 0, 0, 0, 0, 0]);
    let r = round_relaxed(&[0.5, 0.51, 0.49, 1.0], Dims::new(2, 2)).unwrap();
    assert_eq!(r.labels(), &[0, 1, 0, 1]);
}

#[test]
fn block_icm_reaches_the_optimum_when_the_block_covers_the_grid() {
    let model = random_instance(9, Dims::new(3, 2), 2, 4, true);
    let pm = build_pairwise_model(&model);
    let (min, _) = brute_force_minimum(&model);
    let start = BinaryLabeling::new(model.dims()).unwrap();
    let x = block_icm(&pm, &start, 6).unwrap();
    assert!((model.total_energy(&x).unwrap() - min).abs() < 1e-9);
}

#[test]
fn unrestricted_lp_matches_full_local_polytope() {
    let model = random_instance(21, Dims::new(3, 3), 2, 3, true);
    let pm = build_pairwise_model(&model);
    let (_, mm) = trws_run(&pm, &opts(5)).unwrap();
    let r = build_restricted_lp(&pm, &mm, f64::INFINITY).unwrap();
    let ours = solve(&r.lp).unwrap().into_optimal().unwrap().objective_value + r.offset;
    let full = solve(&local_polytope(&GenericMrf::from_energy_model(&model))).unwrap().into_optimal().unwrap();
    assert!((ours - full.objective_value).abs() < 1e-7, "{ours} vs {}", full.objective_value);
}

#[test]
fn pipeline_with_lp_is_never_worse() {
    let model = random_instance(4, Dims::new(4, 4), 3, 5, false);
    let base = infer(&model, &InferenceOptions { trws: opts(50), ..Default::default() }).unwrap();
    let with_lp = infer(
        &model,
        &InferenceOptions {
            trws: opts(50),
            restricted_lp: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(with_lp.energy <= base.energy + 1e-12);
    assert!(with_lp.lp_objective.unwrap() >= base.lower_bound - 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bound_is_monotone_and_valid(seed in any::<u64>(), grid in any::<bool>(), extra in 0usize..6) {
        let model = random_instance(seed, Dims::new(4, 4), 3, extra, grid);
        let pm = build_pairwise_model(&model);
        let (state, mm) = trws_run(&pm, &opts(20)).unwrap();
        for w in state.lower_bound_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        let (min, _) = brute_force_minimum(&model);
        let lb = *state.lower_bound_trace.last().unwrap();
        prop_assert!(lb <= min + 1e-9);
        let x = round_min_marginals(&mm, pm.dims).unwrap();
        let refined = block_icm(&pm, &x, 6).unwrap();
        let e_round = model.total_energy(&x).unwrap();
        let e_icm = model.total_energy(&refined).unwrap();
        prop_assert!(min <= e_icm + 1e-9);
        prop_assert!(e_icm <= e_round + 1e-12);
    }
}
