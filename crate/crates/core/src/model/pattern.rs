use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerance on the per-pattern non-negativity margin `Σ min(w,0) + c`.
pub const NONNEGATIVITY_TOL: f64 = 1e-8;

/// Default cap on the curvature cost and value of the cutoff pattern.
pub const DEFAULT_F_MAX: f64 = 2.0;

/// Default penalty used by the special and hard patterns, relative to `f_max`.
pub fn default_big(f_max: f64) -> f64 {
    10.0 * f_max
}

/// Offsets (row and column, within a K×K window) of the top-left pixel of the
/// central 2×2 block.
pub fn center_offset(side: usize) -> usize {
    side / 2 - 1
}

/// Row-major indices, within a K×K window, of the four central pixels.
pub fn center_indices(side: usize) -> [usize; 4] {
    let o = center_offset(side);
    [o * side + o, o * side + o + 1, (o + 1) * side + o, (o + 1) * side + o + 1]
}

/// A "soft" pattern: the linear function `<w, x> + c` over a K×K window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    #[serde(skip)]
    side: usize,
    pub weights: Vec<f64>,
    pub constant: f64,
}

impl Pattern {
    pub fn new(side: usize, weights: Vec<f64>, constant: f64) -> Result<Self> {
        if weights.len() != side * side {
            return Err(invalid(format!(
                "pattern of side {side} needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || !constant.is_finite() {
            return Err(invalid("pattern weights and constant must be finite"));
        }
        Ok(Self {
            side,
            weights,
            constant,
        })
    }

    pub fn constant_only(side: usize, constant: f64) -> Self {
        Self {
            side,
            weights: vec![0.0; side * side],
            constant,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `<w, patch> + c`. Rejects patches of the wrong length.
    pub fn cost(&self, patch: &[u8]) -> Result<f64> {
        if patch.len() != self.weights.len() {
            return Err(invalid(format!(
                "patch has {} values, pattern expects {}",
                patch.len(),
                self.weights.len()
            )));
        }
        Ok(self.cost_unchecked(patch))
    }

    #[inline]
    pub(crate) fn cost_unchecked(&self, patch: &[u8]) -> f64 {
        let mut s = self.constant;
        for (w, &x) in self.weights.iter().zip(patch) {
            if x != 0 {
                s += w;
            }
        }
        s
    }

    /// Minimum of the pattern over all binary patches: `Σ min(w,0) + c`.
    pub fn min_value(&self) -> f64 {
        self.weights.iter().map(|w| w.min(0.0)).sum::<f64>() + self.constant
    }

    pub fn is_zero_weight(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }
}

/// Encodes a hard template (cost `cost` on an exact match) as a soft pattern.
///
/// Weights are `-big` where the template is 1 and `+big` where it is 0, so a
/// patch differing in `d` positions costs `cost + d * big`.
pub fn convert_hard_pattern(side: usize, template: &[u8], cost: f64, big: f64) -> Result<Pattern> {
    if big <= 0.0 {
        return Err(invalid("hard pattern penalty must be positive"));
    }
    if template.len() != side * side {
        return Err(invalid("template length must be side^2"));
    }
    let ones = template.iter().filter(|&&t| t != 0).count();
    let weights = template
        .iter()
        .map(|&t| if t != 0 { -big } else { big })
        .collect();
    Pattern::new(side, weights, cost + big * ones as f64)
}

/// Ordered set of patterns forming the lower envelope, with the special patterns flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternBank {
    pub side: usize,
    pub f_max: f64,
    pub cutoff_index: usize,
    pub fg_index: Option<usize>,
    pub bg_index: Option<usize>,
    pub patterns: Vec<Pattern>,
}

impl PatternBank {
    /// A bank holding only the cutoff pattern `(w = 0, c = f_max)`.
    pub fn cutoff_only(side: usize, f_max: f64) -> Result<Self> {
        if side < 2 {
            return Err(invalid("window side must be at least 2"));
        }
        if !(f_max > 0.0 && f_max.is_finite()) {
            return Err(invalid("f_max must be positive"));
        }
        Ok(Self {
            side,
            f_max,
            cutoff_index: 0,
            fg_index: None,
            bg_index: None,
            patterns: vec![Pattern::constant_only(side, f_max)],
        })
    }

    /// Cutoff at index 0, then the all-foreground and all-background center patterns.
    pub fn with_special_patterns(side: usize, f_max: f64, big: f64) -> Result<Self> {
        let mut bank = Self::cutoff_only(side, f_max)?;
        let center = center_indices(side);
        let mut fg = vec![0.0; side * side];
        let mut bg = vec![0.0; side * side];
        for &i in &center {
            fg[i] = -big;
            bg[i] = big;
        }
        bank.fg_index = Some(bank.push(Pattern::new(side, fg, 4.0 * big)?)?);
        bank.bg_index = Some(bank.push(Pattern::new(side, bg, 0.0)?)?);
        Ok(bank)
    }

    pub fn push(&mut self, pattern: Pattern) -> Result<usize> {
        if pattern.weights.len() != self.side * self.side {
            return Err(invalid("pattern side does not match bank"));
        }
        let mut pattern = pattern;
        pattern.side = self.side;
        self.patterns.push(pattern);
        Ok(self.patterns.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn is_special(&self, index: usize) -> bool {
        index == self.cutoff_index || Some(index) == self.fg_index || Some(index) == self.bg_index
    }

    /// Indices of the patterns that training may modify.
    pub fn learned_indices(&self) -> Vec<usize> {
        (0..self.patterns.len()).filter(|&i| !self.is_special(i)).collect()
    }

    /// Lower envelope at `patch`: `(min_y <w_y, patch> + c_y, argmin)`, ties to the lowest index.
    pub fn evaluate(&self, patch: &[u8]) -> Result<(f64, usize)> {
        if self.patterns.is_empty() {
            return Err(invalid("pattern bank is empty"));
        }
        if patch.len() != self.side * self.side {
            return Err(invalid(format!(
                "patch has {} values, bank expects {}",
                patch.len(),
                self.side * self.side
            )));
        }
        Ok(self.evaluate_unchecked(patch))
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, patch: &[u8]) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (i, p) in self.patterns.iter().enumerate() {
            let v = p.cost_unchecked(patch);
            if v < best {
                best = v;
                arg = i;
            }
        }
        (best, arg)
    }

    /// Checks structural invariants and per-pattern non-negativity.
    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(invalid("window side must be at least 2"));
        }
        let n = self.side * self.side;
        if self.cutoff_index >= self.patterns.len() {
            return Err(invalid("cutoff index out of range"));
        }
        for idx in [self.fg_index, self.bg_index].into_iter().flatten() {
            if idx >= self.patterns.len() {
                return Err(invalid("special pattern index out of range"));
            }
        }
        for (i, p) in self.patterns.iter().enumerate() {
            if p.weights.len() != n {
                return Err(invalid(format!("pattern {i} has {} weights", p.weights.len())));
            }
            if p.weights.iter().any(|w| !w.is_finite()) || !p.constant.is_finite() {
                return Err(invalid(format!("pattern {i} is not finite")));
            }
            if p.min_value() < -NONNEGATIVITY_TOL {
                return Err(invalid(format!(
                    "pattern {i} can go negative (margin {})",
                    p.min_value()
                )));
            }
        }
        let cutoff = &self.patterns[self.cutoff_index];
        if !cutoff.is_zero_weight() || cutoff.constant != self.f_max {
            return Err(invalid("cutoff pattern must be (w = 0, c = f_max)"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut bank: PatternBank = serde_json::from_str(text)?;
        for p in &mut bank.patterns {
            p.side = bank.side;
        }
        bank.validate()?;
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_patches(n: usize) -> impl Iterator<Item = Vec<u8>> {
        (0..1u32 << n).map(move |bits| (0..n).map(|i| ((bits >> i) & 1) as u8).collect())
    }

    #[test]
    fn cutoff_costs_f_max_everywhere() {
        let bank = PatternBank::cutoff_only(3, 2.0).unwrap();
        for patch in all_patches(9) {
            assert_eq!(bank.evaluate(&patch).unwrap(), (2.0, 0));
        }
    }

    #[test]
    fn background_special_pattern_vanishes_on_background() {
        let bank = PatternBank::with_special_patterns(8, 2.0, 100.0).unwrap();
        let bg = &bank.patterns[bank.bg_index.unwrap()];
        assert_eq!(bg.cost(&[0u8; 64]).unwrap(), 0.0);
        let fg = &bank.patterns[bank.fg_index.unwrap()];
        assert_eq!(fg.cost(&[1u8; 64]).unwrap(), 0.0);
        assert_eq!(bank.evaluate(&[1u8; 64]).unwrap(), (0.0, bank.fg_index.unwrap()));
        assert_eq!(fg.min_value(), 0.0);
        assert_eq!(bg.min_value(), 0.0);
    }

    #[test]
    fn two_pixel_pattern_cost() {
        let p = Pattern::new(1, vec![1.0], 0.0).unwrap();
        assert!(p.cost(&[1, 1]).is_err());
        // conceptual 2-pixel window through the unchecked path
        let p = Pattern {
            side: 0,
            weights: vec![1.0, 2.0],
            constant: 1.0,
        };
        assert_eq!(p.cost_unchecked(&[1, 1]), 4.0);
    }

    #[test]
    fn hard_pattern_examples() {
        let p = convert_hard_pattern(2, &[0, 0, 0, 0], 1.0, 10.0).unwrap();
        assert_eq!(p.weights, vec![10.0; 4]);
        assert_eq!(p.constant, 1.0);

        let p = convert_hard_pattern(2, &[1, 0, 0, 0], 0.0, 5.0).unwrap();
        assert_eq!(p.weights, vec![-5.0, 5.0, 5.0, 5.0]);
        assert_eq!(p.constant, 5.0);
        assert_eq!(p.cost(&[1, 0, 0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn hard_pattern_matches_only_its_template() {
        let big = 7.0;
        for template in all_patches(4) {
            let p = convert_hard_pattern(2, &template, 0.25, big).unwrap();
            for patch in all_patches(4) {
                let c = p.cost(&patch).unwrap();
                let diff = template.iter().zip(&patch).filter(|(a, b)| a != b).count();
                if diff == 0 {
                    assert_eq!(c, 0.25);
                } else {
                    assert!(c >= 0.25 + big);
                    assert_eq!(c, 0.25 + big * diff as f64);
                }
            }
        }
    }

    #[test]
    fn empty_bank_is_rejected() {
        let mut bank = PatternBank::cutoff_only(2, 1.0).unwrap();
        bank.patterns.clear();
        assert!(bank.evaluate(&[0; 4]).is_err());
    }

    #[test]
    fn json_round_trip_preserves_bank() {
        let mut bank = PatternBank::with_special_patterns(3, 2.0, 20.0).unwrap();
        bank.push(Pattern::new(3, vec![0.5, -0.25, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.125], 0.25).unwrap())
            .unwrap();
        let text = bank.to_json().unwrap();
        let back = PatternBank::from_json(&text).unwrap();
        assert_eq!(back, bank);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["side", "f_max", "cutoff_index", "fg_index", "bg_index", "patterns"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["patterns"][0]["weights"].as_array().unwrap().len(), 9);
    }

    #[test]
    fn center_block_for_window_of_eight() {
        assert_eq!(center_offset(8), 3);
        assert_eq!(center_indices(8), [27, 28, 35, 36]);
        assert_eq!(center_indices(2), [0, 1, 2, 3]);
    }
}
