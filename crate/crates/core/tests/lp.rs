use curvemrf::lp::{l1_fit_program, solve, LinearProgram, LpStatus, Relation};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bounded, feasible `min c·x, A x ≤ b, x ≥ 0`.
fn random_program(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    let mut lp = LinearProgram::new(n);
    lp.objective = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    // one box-like row keeps the region bounded
    lp.add_dense(&vec![1.0; n], Relation::Le, x0.iter().sum::<f64>() + 5.0);
    for _ in 1..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
        lp.add_dense(&a, Relation::Le, lhs + rng.random_range(0.0..1.0));
    }
    lp
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Best objective over every vertex of `{A x ≤ b, x ≥ 0}`.
fn vertex_enumeration(lp: &LinearProgram) -> f64 {
    let n = lp.num_vars();
    // hyperplanes: constraint rows then x_j = 0
    let mut planes: Vec<(Vec<f64>, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            let mut a = vec![0.0; n];
            for &(j, v) in &c.terms {
                a[j] += v;
            }
            (a, c.rhs)
        })
        .collect();
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = -1.0;
        planes.push((a, 0.0));
    }
    let total = planes.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| planes[idx[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| planes[idx[r]].1);
        if let Some(x) = a.lu().solve(&b) {
            let feasible = planes.iter().all(|(p, rhs)| {
                p.iter().zip(x.iter()).map(|(u, v)| u * v).sum::<f64>() <= rhs + 1e-9
            });
            if feasible {
                let obj: f64 = lp.objective.iter().zip(x.iter()).map(|(u, v)| u * v).sum();
                best = best.min(obj);
            }
        }
        if !next_combination(&mut idx, total) {
            break;
        }
    }
    best
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (n, m, count) in [(3, 5, 10), (6, 9, 5), (10, 15, 2)] {
        for _ in 0..count {
            let lp = random_program(&mut rng, n, m);
            let s = solve(&lp).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            let oracle = vertex_enumeration(&lp);
            assert!(
                (s.objective_value - oracle).abs() < 1e-6,
                "simplex {} vs vertices {}",
                s.objective_value,
                oracle
            );
            assert!(lp.max_violation(&s.values) <= 1e-8);
        }
    }
}

/// Coarse-to-fine search of the convex L1 objective over `(w1, w2, c)`.
fn grid_l1(rows: &[(Vec<f64>, f64)], nonnegative: bool) -> f64 {
    let eval = |w1: f64, w2: f64, c: f64| -> f64 {
        if nonnegative && w1.min(0.0) + w2.min(0.0) + c < 0.0 {
            return f64::INFINITY;
        }
        rows.iter()
            .map(|(x, f)| (w1 * x[0] + w2 * x[1] + c - f).abs())
            .sum()
    };
    let mut center = [0.0, 0.0, 0.0];
    let mut span = 8.0;
    let steps = 40;
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let mut arg = center;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let p = [
                        center[0] - span + 2.0 * span * i as f64 / steps as f64,
                        center[1] - span + 2.0 * span * j as f64 / steps as f64,
                        center[2] - span + 2.0 * span * k as f64 / steps as f64,
                    ];
                    let v = eval(p[0], p[1], p[2]);
                    if v < best {
                        best = v;
                        arg = p;
                    }
                }
            }
        }
        center = arg;
        span *= 0.5;
    }
    best
}

#[test]
fn l1_fit_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for nonnegative in [false, true] {
        for _ in 0..4 {
            let rows: Vec<(Vec<f64>, f64)> = (0..5)
                .map(|_| {
                    (
                        vec![rng.random_range(0..2) as f64, rng.random_range(0..2) as f64],
                        rng.random_range(-1.0..3.0),
                    )
                })
                .collect();
            let (lp, _) = l1_fit_program(&rows, nonnegative).unwrap();
            let s = solve(&lp).unwrap().into_optimal().unwrap();
            let oracle = grid_l1(&rows, nonnegative);
            assert!(
                (s.objective_value - oracle).abs() < 1e-4,
                "lp {} vs grid {}",
                s.objective_value,
                oracle
            );
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lp = random_program(&mut rng, 8, 12);
    let a = solve(&lp).unwrap();
    let b = solve(&lp.clone()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_objective_equals_primal(seed in any::<u64>(), n in 2usize..8, m in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lp = random_program(&mut rng, n, m);
        // mix in ≥ rows, equalities and general bounds
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
        lp.add_dense(&a, Relation::Ge, lhs - 0.5);
        if n > 2 {
            lp.set_bounds(0, -1.0, 3.0);
        }
        let s = solve(&lp).unwrap();
        prop_assume!(s.status == LpStatus::Optimal);
        prop_assert!((s.dual_objective - s.objective_value).abs() < 1e-6);
        prop_assert!(lp.max_violation(&s.values) <= 1e-8);
        for (c, y) in lp.constraints.iter().zip(&s.duals) {
            match c.relation {
                Relation::Le => prop_assert!(*y <= 1e-9),
                Relation::Ge => prop_assert!(*y >= -1e-9),
                Relation::Eq => {}
            }
        }
    }

    #[test]
    fn l1_fit_ignores_sample_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(Vec<f64>, f64)> = (0..12)
            .map(|_| ((0..4).map(|_| rng.random_range(0..2) as f64).collect(), rng.random_range(0.0..2.0)))
            .collect();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.rotate_left(5);
        let a = solve(&l1_fit_program(&rows, true).unwrap().0).unwrap();
        let b = solve(&l1_fit_program(&shuffled, true).unwrap().0).unwrap();
        prop_assert!((a.objective_value - b.objective_value).abs() < 1e-9);
    }
}
