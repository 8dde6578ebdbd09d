use super::pairwise::PairwiseModel;
use super::trws::MinMarginals;
use crate::error::{invalid, Error, Result};
use crate::lp::{LinearProgram, Relation};
use crate::model::{BinaryLabeling, BIG};

/// Relative pruning threshold applied to the min-marginal range.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-6;

/// Dense simplex tableaus beyond this many entries are refused.
pub const MAX_TABLEAU_ENTRIES: usize = 40_000_000;

/// Value of a pixel's foreground indicator inside the restricted LP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PixelVar {
    Fixed(u8),
    Var(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowVars {
    Fixed(usize),
    /// `(pattern, LP column of μ_h(pattern))` for every surviving pattern.
    Free(Vec<(usize, usize)>),
}

/// The local-polytope LP over the labels that survived pruning.
#[derive(Debug, Clone)]
pub struct RestrictedLp {
    pub lp: LinearProgram,
    /// Energy contributed by eliminated variables.
    pub offset: f64,
    pub pixels: Vec<PixelVar>,
    pub windows: Vec<WindowVars>,
}

impl RestrictedLp {
    /// Relaxed foreground indicator per pixel for an LP solution.
    pub fn pixel_values(&self, solution: &[f64]) -> Vec<f64> {
        self.pixels
            .iter()
            .map(|p| match *p {
                PixelVar::Fixed(l) => l as f64,
                PixelVar::Var(j) => solution[j],
            })
            .collect()
    }

    pub fn free_pixels(&self) -> usize {
        self.pixels.iter().filter(|p| matches!(p, PixelVar::Var(_))).count()
    }
}

/// `max − min` over the min-marginal entries that are not hard constraints.
pub fn dynamic_range(mm: &MinMarginals) -> f64 {
    let values = mm.pixels.iter().flat_map(|p| p.iter()).chain(mm.windows.iter());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        if v.is_finite() && v.abs() < 0.5 * BIG {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

fn surviving(values: &[f64], threshold: f64) -> Result<Vec<usize>> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::InfeasibleRestriction("no finite min-marginal".into()));
    }
    let keep: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] - min <= threshold)
        .collect();
    if keep.is_empty() {
        return Err(Error::InfeasibleRestriction("every label was pruned".into()));
    }
    Ok(keep)
}

/// Builds the local-polytope LP keeping labels within `threshold` of each
/// node's best min-marginal.
pub fn build_restricted_lp(m: &PairwiseModel, mm: &MinMarginals, threshold: f64) -> Result<RestrictedLp> {
    if !(threshold >= 0.0) {
        return Err(invalid("threshold must be non-negative"));
    }
    if mm.pixels.len() != m.n_pixels() || mm.windows.len() != m.n_windows() * m.n_labels {
        return Err(invalid("min-marginals do not match the model"));
    }
    let k2 = m.k2();
    let mut n_vars = 0usize;
    let mut offset = 0.0;
    let mut pixels = Vec::with_capacity(m.n_pixels());
    for p in &mm.pixels {
        let keep = surviving(p, threshold)?;
        pixels.push(if keep.len() == 1 {
            PixelVar::Fixed(keep[0] as u8)
        } else {
            n_vars += 1;
            PixelVar::Var(n_vars - 1)
        });
    }
    let mut windows = Vec::with_capacity(m.n_windows());
    for h in 0..m.n_windows() {
        let keep = surviving(mm.window(h), threshold)?;
        windows.push(if keep.len() == 1 {
            WindowVars::Fixed(keep[0])
        } else {
            let base = n_vars;
            n_vars += keep.len();
            WindowVars::Free(keep.into_iter().enumerate().map(|(i, y)| (y, base + i)).collect())
        });
    }
    // link and grid auxiliaries are appended as they are created
    let mut objective = vec![0.0; n_vars];
    let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
    let add_var = |objective: &mut Vec<f64>, c: f64| {
        objective.push(c);
        objective.len() - 1
    };
    for (v, p) in pixels.iter().enumerate() {
        let u = m.unaries[v];
        match *p {
            PixelVar::Fixed(l) => offset += u[l as usize],
            PixelVar::Var(j) => {
                offset += u[0];
                objective[j] += u[1] - u[0];
            }
        }
    }
    for (h, wv) in windows.iter().enumerate() {
        match wv {
            WindowVars::Fixed(y) => {
                offset += m.constants[*y];
                for (off, &v) in m.pixels_of(h).iter().enumerate() {
                    let w = m.weights[y * k2 + off];
                    match pixels[v] {
                        PixelVar::Fixed(l) => offset += l as f64 * w,
                        PixelVar::Var(j) => objective[j] += w,
                    }
                }
            }
            WindowVars::Free(labels) => {
                let norm: Vec<(usize, f64)> = labels.iter().map(|&(_, j)| (j, 1.0)).collect();
                rows.push((norm, Relation::Eq, 1.0));
                for &(y, j) in labels {
                    objective[j] += m.constants[y];
                }
                for (off, &v) in m.pixels_of(h).iter().enumerate() {
                    match pixels[v] {
                        PixelVar::Fixed(l) => {
                            if l == 1 {
                                for &(y, j) in labels {
                                    objective[j] += m.weights[y * k2 + off];
                                }
                            }
                        }
                        PixelVar::Var(pj) => {
                            // z_y = μ_vh(1, y): Σ_y z_y = p_v, z_y ≤ μ_h(y)
                            let mut sum = vec![(pj, -1.0)];
                            for &(y, j) in labels {
                                let z = add_var(&mut objective, m.weights[y * k2 + off]);
                                sum.push((z, 1.0));
                                rows.push((vec![(z, 1.0), (j, -1.0)], Relation::Le, 0.0));
                            }
                            rows.push((sum, Relation::Eq, 0.0));
                        }
                    }
                }
            }
        }
    }
    for t in &m.grid {
        let tb = &t.table;
        match (pixels[t.u], pixels[t.v]) {
            (PixelVar::Fixed(a), PixelVar::Fixed(b)) => offset += tb[a as usize][b as usize],
            (PixelVar::Fixed(a), PixelVar::Var(j)) => {
                let a = a as usize;
                offset += tb[a][0];
                objective[j] += tb[a][1] - tb[a][0];
            }
            (PixelVar::Var(j), PixelVar::Fixed(b)) => {
                let b = b as usize;
                offset += tb[0][b];
                objective[j] += tb[1][b] - tb[0][b];
            }
            (PixelVar::Var(ju), PixelVar::Var(jv)) => {
                offset += tb[0][0];
                objective[ju] += tb[1][0] - tb[0][0];
                objective[jv] += tb[0][1] - tb[0][0];
                let q = add_var(&mut objective, tb[0][0] - tb[0][1] - tb[1][0] + tb[1][1]);
                rows.push((vec![(q, 1.0), (ju, -1.0)], Relation::Le, 0.0));
                rows.push((vec![(q, 1.0), (jv, -1.0)], Relation::Le, 0.0));
                rows.push((vec![(q, 1.0), (ju, -1.0), (jv, -1.0)], Relation::Ge, -1.0));
            }
        }
    }
    let n = objective.len();
    // pixel columns carry an extra row each for the upper bound
    let entries = (rows.len() + n + 1).saturating_mul(2 * n + rows.len() + 1);
    if entries > MAX_TABLEAU_ENTRIES {
        return Err(Error::LpTooLarge { vars: n, rows: rows.len() });
    }
    let mut lp = LinearProgram::new(n);
    lp.objective = objective;
    for p in &pixels {
        if let PixelVar::Var(j) = *p {
            lp.set_bounds(j, 0.0, 1.0);
        }
    }
    for (terms, rel, rhs) in rows {
        lp.add_constraint(terms, rel, rhs);
    }
    Ok(RestrictedLp {
        lp,
        offset,
        pixels,
        windows,
    })
}

/// Threshold at 0.5; exact halves go to background.
pub fn round_relaxed(values: &[f64], dims: crate::model::Dims) -> Result<BinaryLabeling> {
    if values.len() != dims.len() {
        return Err(invalid("relaxed values do not match the grid"));
    }
    BinaryLabeling::from_labels(dims, values.iter().map(|&p| (p > 0.5) as u8).collect())
}
