//! Dense two-phase primal simplex.
//!
//! Tolerances below are shared by every LP consumer in the crate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, LpFailure, Result};

pub const FEASIBILITY_TOL: f64 = 1e-8;
pub const OPTIMALITY_TOL: f64 = 1e-9;
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// Sparse row `Σ coeff·x_j  rel  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min objective·x` subject to constraints and per-variable bounds.
///
/// Bounds default to `[0, ∞)`; use infinities for unbounded sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn add_dense(&mut self, coeffs: &[f64], relation: Relation, rhs: f64) {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(j, &c)| (j, c))
            .collect();
        self.add_constraint(terms, relation, rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn set_free(&mut self, j: usize) {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(invalid("bound vectors must match the objective dimension"));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(invalid("objective coefficients must be finite"));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY || l > u {
                return Err(invalid(format!("variable {j} has invalid bounds [{l}, {u}]")));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() || c.terms.iter().any(|&(j, v)| j >= n || !v.is_finite()) {
                return Err(invalid(format!("constraint {i} is malformed")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(j, v)| v * x[j]).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// CPLEX-LP-style text rendering, for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        let mut s = String::from("Minimize\n obj:");
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(s, " {} {} x{}", if c < 0.0 { '-' } else { '+' }, c.abs(), j);
            }
        }
        s.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(s, " c{i}:");
            for &(j, v) in &c.terms {
                let _ = write!(s, " {} {} x{}", if v < 0.0 { '-' } else { '+' }, v.abs(), j);
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(s, " {rel} {}", c.rhs);
        }
        s.push_str("Bounds\n");
        for j in 0..self.num_vars() {
            let (l, u) = (self.lower[j], self.upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (false, false) => {
                    let _ = writeln!(s, " x{j} free");
                }
                (true, true) => {
                    let _ = writeln!(s, " {l} <= x{j} <= {u}");
                }
                (true, false) => {
                    let _ = writeln!(s, " x{j} >= {l}");
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= x{j} <= {u}");
                }
            }
        }
        s.push_str("End\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point; empty unless optimal.
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// One multiplier per constraint: `≥` rows non-negative, `≤` rows non-positive.
    pub duals: Vec<f64>,
    /// Dual objective rebuilt from the multipliers, including bound terms.
    pub dual_objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective_value: f64::NAN,
            duals: Vec::new(),
            dual_objective: f64::NAN,
            iterations,
        }
    }

    /// Turn a non-optimal status into an error.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::Lp(LpFailure::Infeasible)),
            LpStatus::Unbounded => Err(Error::Lp(LpFailure::Unbounded)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = l + z`
    Shift { col: usize, lower: f64 },
    /// `x = u − z`
    Mirror { col: usize, upper: f64 },
    /// `x = z⁺ − z⁻`
    Split { pos: usize, neg: usize },
    Fixed(f64),
}

struct Tableau {
    rows: usize,
    width: usize,
    /// `rows + 1` rows of `width + 1` entries; the last row holds reduced costs.
    data: Vec<f64>,
    basis: Vec<usize>,
    artificial_start: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.width + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.width + 1) + self.width]
    }

    fn cost_row(&self) -> &[f64] {
        let s = self.rows * (self.width + 1);
        &self.data[s..s + self.width + 1]
    }

    fn set_costs(&mut self, costs: &[f64]) {
        let stride = self.width + 1;
        let mut row = vec![0.0; stride];
        row[..self.width].copy_from_slice(costs);
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                let src = &self.data[r * stride..(r + 1) * stride];
                for (d, s) in row.iter_mut().zip(src) {
                    *d -= cb * s;
                }
            }
        }
        let s = self.rows * stride;
        self.data[s..s + stride].copy_from_slice(&row);
    }

    /// Current objective value `c_B·B⁻¹b`.
    fn objective(&self) -> f64 {
        -self.cost_row()[self.width]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.width + 1;
        let inv = 1.0 / self.at(pr, pc);
        {
            let row = &mut self.data[pr * stride..(pr + 1) * stride];
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[pc] = 1.0;
        }
        let nz: Vec<usize> = (0..stride)
            .filter(|&c| self.data[pr * stride + c] != 0.0)
            .collect();
        let pivot_row: Vec<f64> = nz.iter().map(|&c| self.data[pr * stride + c]).collect();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * stride + pc];
            if f == 0.0 {
                continue;
            }
            let base = r * stride;
            for (&c, &v) in nz.iter().zip(&pivot_row) {
                self.data[base + c] -= f * v;
            }
            self.data[base + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Run simplex iterations on the current cost row until optimal or unbounded.
    fn optimize(&mut self, allow_artificial: bool, cost_scale: f64, iterations: &mut usize) -> Result<bool> {
        let limit_cols = if allow_artificial { self.width } else { self.artificial_start };
        let stall_limit = 3 * (self.rows + self.width);
        let hard_cap = 50 * (self.rows + self.width) + 10_000;
        let opt_tol = OPTIMALITY_TOL * cost_scale;
        let mut bland = false;
        let mut stalled = 0usize;
        let mut last_obj = self.objective();
        let mut local = 0usize;
        loop {
            let costs = self.cost_row();
            let entering = if bland {
                (0..limit_cols).find(|&j| costs[j] < -opt_tol)
            } else {
                let mut best = None;
                let mut best_val = -opt_tol;
                for (j, &d) in costs.iter().enumerate().take(limit_cols) {
                    if d < best_val {
                        best_val = d;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(q) = entering else {
                return Ok(true);
            };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.rows {
                let a = self.at(r, q);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                        if tie {
                            if bland {
                                self.basis[r] < self.basis[l]
                            } else {
                                a > self.at(l, q)
                            }
                        } else {
                            ratio < best_ratio
                        }
                    }
                };
                if better {
                    leave = Some(r);
                    best_ratio = ratio;
                }
            }
            let Some(p) = leave else {
                return Ok(false);
            };
            self.pivot(p, q);
            *iterations += 1;
            local += 1;
            let obj = self.objective();
            if obj < last_obj - 1e-12 * (1.0 + last_obj.abs()) {
                stalled = 0;
                last_obj = obj;
            } else {
                stalled += 1;
                if stalled > stall_limit {
                    bland = true;
                }
            }
            if local > hard_cap {
                return Err(Error::Numerical(format!(
                    "simplex did not terminate within {hard_cap} pivots"
                )));
            }
        }
    }
}

/// Solve `p` to a certified status.
///
/// Errors only on malformed input or when the pivot cap is exceeded.
pub fn solve(p: &LinearProgram) -> Result<LpSolution> {
    p.validate()?;
    let n = p.num_vars();

    // structural columns
    let mut maps = Vec::with_capacity(n);
    let mut col_cost = Vec::new();
    let mut boxed = Vec::new();
    let mut offset = 0.0;
    for j in 0..n {
        let (l, u, c) = (p.lower[j], p.upper[j], p.objective[j]);
        let m = if l == u {
            offset += c * l;
            VarMap::Fixed(l)
        } else if l.is_finite() {
            let col = col_cost.len();
            col_cost.push(c);
            offset += c * l;
            if u.is_finite() {
                boxed.push((col, u - l));
            }
            VarMap::Shift { col, lower: l }
        } else if u.is_finite() {
            let col = col_cost.len();
            col_cost.push(-c);
            offset += c * u;
            VarMap::Mirror { col, upper: u }
        } else {
            let pos = col_cost.len();
            col_cost.push(c);
            col_cost.push(-c);
            VarMap::Split { pos, neg: pos + 1 }
        };
        maps.push(m);
    }
    let n_struct = col_cost.len();

    // rows over structural columns
    struct Row {
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    }
    let mut rows = Vec::with_capacity(p.constraints.len() + boxed.len());
    for c in &p.constraints {
        let mut rhs = c.rhs;
        let mut coeffs = Vec::with_capacity(c.terms.len() + 1);
        for &(j, v) in &c.terms {
            match maps[j] {
                VarMap::Fixed(x) => rhs -= v * x,
                VarMap::Shift { col, lower } => {
                    rhs -= v * lower;
                    coeffs.push((col, v));
                }
                VarMap::Mirror { col, upper } => {
                    rhs -= v * upper;
                    coeffs.push((col, -v));
                }
                VarMap::Split { pos, neg } => {
                    coeffs.push((pos, v));
                    coeffs.push((neg, -v));
                }
            }
        }
        rows.push(Row {
            coeffs,
            relation: c.relation,
            rhs,
        });
    }
    for &(col, span) in &boxed {
        rows.push(Row {
            coeffs: vec![(col, 1.0)],
            relation: Relation::Le,
            rhs: span,
        });
    }
    let m = rows.len();

    // slack columns, sign normalization, crash basis
    let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let mut negated = vec![false; m];
    let mut init_col = vec![usize::MAX; m];
    let mut init_sign = vec![1.0; m];
    let mut slack_of = vec![None; m];
    let mut next_slack = n_struct;
    for (i, r) in rows.iter().enumerate() {
        let sign = match r.relation {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => 0.0,
        };
        if sign != 0.0 {
            slack_of[i] = Some((next_slack, sign));
            next_slack += 1;
        }
        negated[i] = r.rhs < 0.0;
    }
    let mut n_art = 0;
    for i in 0..m {
        let flip = if negated[i] { -1.0 } else { 1.0 };
        match slack_of[i] {
            Some((col, s)) if s * flip > 0.0 => {
                init_col[i] = col;
                init_sign[i] = 1.0;
            }
            _ => {
                init_col[i] = n_struct + n_slack + n_art;
                n_art += 1;
            }
        }
    }
    let width = n_struct + n_slack + n_art;
    let stride = width + 1;
    let mut data = vec![0.0; (m + 1) * stride];
    for (i, r) in rows.iter().enumerate() {
        let flip = if negated[i] { -1.0 } else { 1.0 };
        let base = i * stride;
        for &(c, v) in &r.coeffs {
            data[base + c] += flip * v;
        }
        if let Some((col, s)) = slack_of[i] {
            data[base + col] = flip * s;
        }
        if init_col[i] >= n_struct + n_slack {
            data[base + init_col[i]] = 1.0;
        }
        data[base + width] = flip * r.rhs;
    }
    let mut t = Tableau {
        rows: m,
        width,
        data,
        basis: init_col.clone(),
        artificial_start: n_struct + n_slack,
    };
    let mut iterations = 0;
    let rhs_scale = rows.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);

    if n_art > 0 {
        let mut c1 = vec![0.0; width];
        for c in c1.iter_mut().skip(n_struct + n_slack) {
            *c = 1.0;
        }
        t.set_costs(&c1);
        t.optimize(true, 1.0, &mut iterations)?;
        if t.objective() > FEASIBILITY_TOL * rhs_scale {
            return Ok(LpSolution::non_optimal(LpStatus::Infeasible, iterations));
        }
        // drive zero-level artificials out where possible
        for r in 0..m {
            if t.basis[r] < t.artificial_start {
                continue;
            }
            let mut best = None;
            let mut best_abs = 1e-9;
            for j in 0..t.artificial_start {
                let a = t.at(r, j).abs();
                if a > best_abs {
                    best_abs = a;
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                t.pivot(r, j);
            }
        }
    }

    let mut c2 = vec![0.0; width];
    c2[..n_struct].copy_from_slice(&col_cost);
    let cost_scale = col_cost.iter().map(|c| c.abs()).fold(1.0, f64::max);
    t.set_costs(&c2);
    if !t.optimize(false, cost_scale, &mut iterations)? {
        return Ok(LpSolution::non_optimal(LpStatus::Unbounded, iterations));
    }

    // primal values
    let mut z = vec![0.0; width];
    for r in 0..m {
        z[t.basis[r]] = t.rhs(r).max(0.0);
    }
    let values: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Fixed(x) => x,
            VarMap::Shift { col, lower } => lower + z[col],
            VarMap::Mirror { col, upper } => upper - z[col],
            VarMap::Split { pos, neg } => z[pos] - z[neg],
        })
        .collect();

    // multipliers y_r = (c_j − d_j) / a_rj on each row's initial unit column
    let costs = t.cost_row();
    let mut y = vec![0.0; m];
    for r in 0..m {
        let j = init_col[r];
        y[r] = (c2[j] - costs[j]) / init_sign[r];
    }
    let mut dual_objective = offset;
    for r in 0..m {
        let flip = if negated[r] { -1.0 } else { 1.0 };
        dual_objective += y[r] * flip * rows[r].rhs;
    }
    let duals = (0..p.constraints.len())
        .map(|r| if negated[r] { -y[r] } else { y[r] })
        .collect();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: p.objective_value(&values),
        values,
        duals,
        dual_objective,
        iterations,
    })
}

/// Layout of the variables in an [`l1_fit_program`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L1FitLayout {
    pub dim: usize,
    pub samples: usize,
    pub nonnegative: bool,
}

impl L1FitLayout {
    pub fn weight(&self, v: usize) -> usize {
        v
    }

    pub fn constant(&self) -> usize {
        self.dim
    }

    pub fn xi(&self, v: usize) -> usize {
        debug_assert!(self.nonnegative);
        self.dim + 1 + v
    }

    pub fn residual(&self, i: usize) -> usize {
        self.dim + 1 + if self.nonnegative { self.dim } else { 0 } + i
    }

    pub fn num_vars(&self) -> usize {
        self.residual(self.samples)
    }
}

/// `min Σ_i |⟨w, x_i⟩ + c − f_i|` as an LP over `(w, c, ξ, r)`.
///
/// With `nonnegative`, adds `ξ_v ≤ w_v`, `ξ_v ≤ 0`, `Σ ξ_v + c ≥ 0`, which
/// forces `Σ_v min(w_v, 0) + c ≥ 0`.
pub fn l1_fit_program(rows: &[(Vec<f64>, f64)], nonnegative: bool) -> Result<(LinearProgram, L1FitLayout)> {
    let dim = rows.first().map_or(0, |r| r.0.len());
    if rows.iter().any(|r| r.0.len() != dim) {
        return Err(invalid("feature vectors must share one dimension"));
    }
    let layout = L1FitLayout {
        dim,
        samples: rows.len(),
        nonnegative,
    };
    let mut lp = LinearProgram::new(layout.num_vars());
    for v in 0..dim {
        lp.set_free(layout.weight(v));
    }
    lp.set_free(layout.constant());
    if nonnegative {
        for v in 0..dim {
            lp.set_bounds(layout.xi(v), f64::NEG_INFINITY, 0.0);
        }
    }
    for (i, (x, f)) in rows.iter().enumerate() {
        let r = layout.residual(i);
        lp.objective[r] = 1.0;
        let mut lo = vec![(r, 1.0), (layout.constant(), -1.0)];
        let mut hi = vec![(r, 1.0), (layout.constant(), 1.0)];
        for (v, &xv) in x.iter().enumerate() {
            if xv != 0.0 {
                lo.push((layout.weight(v), -xv));
                hi.push((layout.weight(v), xv));
            }
        }
        lp.add_constraint(lo, Relation::Ge, -f);
        lp.add_constraint(hi, Relation::Ge, *f);
    }
    if nonnegative {
        for v in 0..dim {
            lp.add_constraint(vec![(layout.xi(v), 1.0), (layout.weight(v), -1.0)], Relation::Le, 0.0);
        }
        let mut sum: Vec<(usize, f64)> = (0..dim).map(|v| (layout.xi(v), 1.0)).collect();
        sum.push((layout.constant(), 1.0));
        lp.add_constraint(sum, Relation::Ge, 0.0);
    }
    Ok((lp, layout))
}
