#![allow(dead_code)]

pub mod reference_trws;

use curvemrf::{BinaryLabeling, Dims, EnergyModel, Pattern, PatternBank, PairwiseTerm, DEFAULT_F_MAX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random small instance: special patterns plus `extra` random non-negative
/// ones, uniform unaries in `[-2, 2]` and optional Potts-like grid terms.
pub fn random_instance(seed: u64, dims: Dims, side: usize, extra: usize, grid: bool) -> EnergyModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = PatternBank::with_special_patterns(side, DEFAULT_F_MAX, 10.0 * DEFAULT_F_MAX).unwrap();
    for _ in 0..extra {
        let w: Vec<f64> = (0..side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
        let floor: f64 = w.iter().map(|v: &f64| v.min(0.0)).sum();
        let c = -floor + rng.random_range(0.0..1.0);
        bank.push(Pattern::new(side, w, c).unwrap()).unwrap();
    }
    let unaries = (0..dims.len())
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect();
    let model = EnergyModel::new(dims, unaries, Some(bank)).unwrap();
    if !grid {
        return model;
    }
    let mut terms = Vec::new();
    for y in 0..dims.height {
        for x in 0..dims.width {
            let u = dims.index(x, y);
            if x + 1 < dims.width {
                let s = rng.random_range(0.0..0.5);
                terms.push(PairwiseTerm { u, v: dims.index(x + 1, y), table: [[0.0, s], [s, 0.0]] });
            }
            if y + 1 < dims.height {
                let s = rng.random_range(0.0..0.5);
                terms.push(PairwiseTerm { u, v: dims.index(x, y + 1), table: [[0.0, s], [s, 0.0]] });
            }
        }
    }
    model.with_pairwise(terms).unwrap()
}

/// Minimum of `total_energy` over every labeling.
pub fn brute_force_minimum(model: &EnergyModel) -> (f64, BinaryLabeling) {
    let dims = model.dims();
    let n = dims.len();
    assert!(n <= 20);
    let mut best = (f64::INFINITY, BinaryLabeling::new(dims).unwrap());
    for code in 0u32..(1 << n) {
        let x = BinaryLabeling::from_labels(dims, (0..n).map(|i| ((code >> i) & 1) as u8).collect()).unwrap();
        let e = model.total_energy(&x).unwrap();
        if e < best.0 {
            best = (e, x);
        }
    }
    best
}
