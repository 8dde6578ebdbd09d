use serde::{Deserialize, Serialize};

use super::labeling::{Anchor, BinaryLabeling, Dims};
use super::pattern::{center_offset, PatternBank};
use crate::error::{invalid, Result};

/// Stand-in for an infinite unary cost.
pub const BIG: f64 = 1e9;

/// A 2×2 table `table[x_u][x_v]` on an ordered pixel pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTerm {
    pub u: usize,
    pub v: usize,
    pub table: [[f64; 2]; 2],
}

/// All K×K windows fully inside `dims`, row-major by anchor.
pub fn window_locations(dims: Dims, side: usize) -> Result<Vec<Anchor>> {
    if side == 0 || side > dims.width || side > dims.height {
        return Err(invalid(format!(
            "window side {side} does not fit a {}x{} grid",
            dims.width, dims.height
        )));
    }
    let mut out = Vec::with_capacity((dims.width - side + 1) * (dims.height - side + 1));
    for y in 0..=dims.height - side {
        for x in 0..=dims.width - side {
            out.push(Anchor { x, y });
        }
    }
    Ok(out)
}

/// True iff the central 2×2 block of the K×K window at `anchor` mixes labels.
pub fn is_boundary_location(x: &BinaryLabeling, anchor: Anchor, side: usize) -> bool {
    let o = center_offset(side);
    let (cx, cy) = (anchor.x + o, anchor.y + o);
    let a = x.get(cx, cy);
    let s = a + x.get(cx + 1, cy) + x.get(cx, cy + 1) + x.get(cx + 1, cy + 1);
    s != 0 && s != 4
}

/// Lower envelope of the bank at `patch`.
pub fn higher_order_cost(bank: &PatternBank, patch: &[u8]) -> Result<(f64, usize)> {
    bank.evaluate(patch)
}

/// `Σ_h E_h(x)` over every window.
pub fn higher_order_sum(bank: &PatternBank, x: &BinaryLabeling) -> Result<f64> {
    let locations = window_locations(x.dims(), bank.side)?;
    if bank.is_empty() {
        return Err(invalid("pattern bank is empty"));
    }
    let mut patch = Vec::with_capacity(bank.side * bank.side);
    let mut sum = 0.0;
    for h in locations {
        x.patch_into(h, bank.side, &mut patch);
        sum += bank.evaluate_unchecked(&patch).0;
    }
    Ok(sum)
}

/// `Σ_h E_h(x)` restricted to boundary locations.
///
/// Equals [`higher_order_sum`] for a non-negative bank carrying the two
/// special center patterns, which pin every other window to zero.
pub fn boundary_higher_order_sum(bank: &PatternBank, x: &BinaryLabeling) -> Result<f64> {
    let locations = window_locations(x.dims(), bank.side)?;
    if bank.is_empty() {
        return Err(invalid("pattern bank is empty"));
    }
    let mut patch = Vec::with_capacity(bank.side * bank.side);
    let mut sum = 0.0;
    for h in locations {
        if is_boundary_location(x, h, bank.side) {
            x.patch_into(h, bank.side, &mut patch);
            sum += bank.evaluate_unchecked(&patch).0;
        }
    }
    Ok(sum)
}

/// Unary, pairwise and higher-order terms over a pixel grid.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    dims: Dims,
    /// `unaries[v] = [θ_v(0), θ_v(1)]`.
    pub unaries: Vec<[f64; 2]>,
    pub pairwise: Vec<PairwiseTerm>,
    bank: Option<PatternBank>,
    locations: Vec<Anchor>,
}

impl EnergyModel {
    pub fn new(dims: Dims, unaries: Vec<[f64; 2]>, bank: Option<PatternBank>) -> Result<Self> {
        if unaries.len() != dims.len() {
            return Err(invalid(format!(
                "expected {} unaries, got {}",
                dims.len(),
                unaries.len()
            )));
        }
        if unaries.iter().flatten().any(|u| !u.is_finite()) {
            return Err(invalid("unaries must be finite (use BIG for hard constraints)"));
        }
        let locations = match &bank {
            Some(b) => {
                if b.is_empty() {
                    return Err(invalid("pattern bank is empty"));
                }
                window_locations(dims, b.side)?
            }
            None => Vec::new(),
        };
        Ok(Self {
            dims,
            unaries,
            pairwise: Vec::new(),
            bank,
            locations,
        })
    }

    pub fn with_pairwise(mut self, pairwise: Vec<PairwiseTerm>) -> Result<Self> {
        for t in &pairwise {
            if t.u >= self.dims.len() || t.v >= self.dims.len() || t.u == t.v {
                return Err(invalid("pairwise term references an invalid pixel pair"));
            }
            if t.table.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid("pairwise tables must be finite"));
            }
        }
        self.pairwise = pairwise;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bank(&self) -> Option<&PatternBank> {
        self.bank.as_ref()
    }

    pub fn locations(&self) -> &[Anchor] {
        &self.locations
    }

    pub fn side(&self) -> usize {
        self.bank.as_ref().map_or(0, |b| b.side)
    }

    /// Row-major pixel indices covered by the window at `anchor`.
    pub fn window_pixels(&self, anchor: Anchor) -> impl Iterator<Item = usize> + '_ {
        let side = self.side();
        let w = self.dims.width;
        (0..side).flat_map(move |dy| (0..side).map(move |dx| (anchor.y + dy) * w + anchor.x + dx))
    }

    pub fn unary_energy(&self, x: &BinaryLabeling) -> f64 {
        self.unaries
            .iter()
            .zip(x.labels())
            .map(|(u, &l)| u[l as usize])
            .sum()
    }

    pub fn pairwise_energy(&self, x: &BinaryLabeling) -> f64 {
        self.pairwise
            .iter()
            .map(|t| t.table[x.at(t.u) as usize][x.at(t.v) as usize])
            .sum()
    }

    pub fn higher_order_energy(&self, x: &BinaryLabeling) -> f64 {
        let Some(bank) = &self.bank else {
            return 0.0;
        };
        let mut patch = Vec::with_capacity(bank.side * bank.side);
        let mut sum = 0.0;
        for &h in &self.locations {
            x.patch_into(h, bank.side, &mut patch);
            sum += bank.evaluate_unchecked(&patch).0;
        }
        sum
    }

    /// Exact sum of every term of the energy at `x`.
    pub fn total_energy(&self, x: &BinaryLabeling) -> Result<f64> {
        if x.dims() != self.dims {
            return Err(invalid("labeling dimensions do not match the model"));
        }
        Ok(self.unary_energy(x) + self.pairwise_energy(x) + self.higher_order_energy(x))
    }
}

/// Soft minimum `-(1/β) log Σ exp(-β v_i)`, shifted by the minimum for stability.
pub fn softmin(values: &[f64], beta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("softmin of an empty list"));
    }
    if !(beta > 0.0) {
        return Err(invalid("softmin needs beta > 0"));
    }
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|&v| (-beta * (v - m)).exp()).sum();
    Ok(m - s.ln() / beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pattern::Pattern;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn window_counts() {
        assert_eq!(window_locations(Dims::new(8, 8), 8).unwrap(), vec![Anchor::new(0, 0)]);
        assert_eq!(window_locations(Dims::new(10, 9), 8).unwrap().len(), 6);
        assert_eq!(window_locations(Dims::new(100, 100), 8).unwrap().len(), 8649);
        assert!(window_locations(Dims::new(7, 9), 8).is_err());
        let w = window_locations(Dims::new(10, 9), 8).unwrap();
        assert_eq!(w[1], Anchor::new(1, 0));
        assert_eq!(w[3], Anchor::new(0, 1));
    }

    #[test]
    fn boundary_location_uses_window_center() {
        let dims = Dims::new(8, 8);
        let zero = BinaryLabeling::new(dims).unwrap();
        assert!(!is_boundary_location(&zero, Anchor::new(0, 0), 8));

        let half = BinaryLabeling::from_fn(dims, |x, _| x < 4).unwrap();
        assert!(is_boundary_location(&half, Anchor::new(0, 0), 8));

        // boundary between columns 0 and 1 is inside the window but off-center
        let edge = BinaryLabeling::from_fn(dims, |x, _| x < 1).unwrap();
        assert!(!is_boundary_location(&edge, Anchor::new(0, 0), 8));
        // enumerate the center values directly
        let c: Vec<u8> = [(3, 3), (4, 3), (3, 4), (4, 4)]
            .iter()
            .map(|&(x, y)| edge.get(x, y))
            .collect();
        assert!(c.iter().all(|&v| v == c[0]));
    }

    #[test]
    fn softmin_examples() {
        assert_eq!(softmin(&[3.0], 0.7).unwrap(), 3.0);
        assert!((softmin(&[0.0, 0.0], 1.0).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        assert!((softmin(&[1.0, 2.0, 5.0], 100.0).unwrap() - 1.0).abs() < 1e-2);
        assert!(softmin(&[], 1.0).is_err());
        assert!(softmin(&[1.0], 0.0).is_err());
    }

    fn random_bank(rng: &mut ChaCha8Rng, side: usize, n: usize) -> PatternBank {
        let mut bank = PatternBank::with_special_patterns(side, 2.0, 20.0).unwrap();
        for _ in 0..n {
            let w: Vec<f64> = (0..side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = -w.iter().map(|v: &f64| v.min(0.0)).sum::<f64>() + rng.random_range(0.0..0.5);
            bank.push(Pattern::new(side, w, c).unwrap()).unwrap();
        }
        bank
    }

    #[test]
    fn total_energy_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims::new(4, 4);
        let bank = random_bank(&mut rng, 3, 4);
        let unaries: Vec<[f64; 2]> = (0..16)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let model = EnergyModel::new(dims, unaries.clone(), Some(bank.clone())).unwrap();
        for _ in 0..50 {
            let labels: Vec<u8> = (0..16).map(|_| rng.random_range(0..2u8)).collect();
            let x = BinaryLabeling::from_labels(dims, labels.clone()).unwrap();
            // straightforward re-evaluation
            let mut expected = 0.0;
            for v in 0..16 {
                expected += unaries[v][labels[v] as usize];
            }
            for ay in 0..2 {
                for ax in 0..2 {
                    let mut best = f64::INFINITY;
                    for p in &bank.patterns {
                        let mut s = p.constant;
                        for dy in 0..3 {
                            for dx in 0..3 {
                                s += p.weights[dy * 3 + dx] * labels[(ay + dy) * 4 + ax + dx] as f64;
                            }
                        }
                        best = best.min(s);
                    }
                    expected += best;
                }
            }
            let got = model.total_energy(&x).unwrap();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn all_background_costs_nothing() {
        let dims = Dims::new(12, 10);
        let bank = PatternBank::with_special_patterns(6, 2.0, 20.0).unwrap();
        let model = EnergyModel::new(dims, vec![[0.0; 2]; 120], Some(bank)).unwrap();
        let x = BinaryLabeling::new(dims).unwrap();
        assert_eq!(model.total_energy(&x).unwrap(), 0.0);
    }

    #[test]
    fn single_window_energy_is_patch_cost_plus_unaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bank = random_bank(&mut rng, 3, 3);
        let dims = Dims::new(3, 3);
        let unaries: Vec<[f64; 2]> = (0..9).map(|i| [0.0, i as f64 * 0.1]).collect();
        let model = EnergyModel::new(dims, unaries, Some(bank.clone())).unwrap();
        let x = BinaryLabeling::from_labels(dims, vec![1, 0, 1, 1, 1, 0, 0, 0, 1]).unwrap();
        let (hc, _) = higher_order_cost(&bank, x.labels()).unwrap();
        let unary = 0.0 + 0.2 + 0.3 + 0.4 + 0.8;
        assert!((model.total_energy(&x).unwrap() - (hc + unary)).abs() < 1e-12);
    }

    #[test]
    fn boundary_sum_matches_full_sum_for_special_banks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bank = random_bank(&mut rng, 4, 5);
        let dims = Dims::new(9, 8);
        for _ in 0..20 {
            let x = BinaryLabeling::from_fn(dims, |_, _| rng.random_bool(0.5)).unwrap();
            let a = higher_order_sum(&bank, &x).unwrap();
            let b = boundary_higher_order_sum(&bank, &x).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }
}
