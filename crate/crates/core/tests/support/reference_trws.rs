//! Textbook TRW-S with every message stored explicitly, on a generic
//! pairwise MRF. Used as an oracle for the memory-efficient solver.

use curvemrf::lp::{LinearProgram, Relation};
use curvemrf::EnergyModel;

pub struct Edge {
    pub s: usize,
    pub t: usize,
    /// `table[a * labels[t] + b]` for `x_s = a, x_t = b`.
    pub table: Vec<f64>,
}

pub struct GenericMrf {
    pub labels: Vec<usize>,
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
}

impl GenericMrf {
    /// Pixels are nodes `0..N`, windows follow with one label per pattern.
    pub fn from_energy_model(m: &EnergyModel) -> Self {
        let n = m.dims().len();
        let mut labels = vec![2; n];
        let mut unary: Vec<Vec<f64>> = m.unaries.iter().map(|u| u.to_vec()).collect();
        let mut edges = Vec::new();
        for t in &m.pairwise {
            edges.push(Edge {
                s: t.u,
                t: t.v,
                table: vec![t.table[0][0], t.table[0][1], t.table[1][0], t.table[1][1]],
            });
        }
        if let Some(bank) = m.bank() {
            let np = bank.len();
            for &a in m.locations() {
                let h = labels.len();
                labels.push(np);
                unary.push(bank.patterns.iter().map(|p| p.constant).collect());
                for (off, v) in m.window_pixels(a).enumerate() {
                    let mut table = vec![0.0; 2 * np];
                    for (y, p) in bank.patterns.iter().enumerate() {
                        table[np + y] = p.weights[off];
                    }
                    edges.push(Edge { s: v, t: h, table });
                }
            }
        }
        Self { labels, unary, edges }
    }

    pub fn energy(&self, x: &[usize]) -> f64 {
        let mut e: f64 = x.iter().enumerate().map(|(s, &l)| self.unary[s][l]).sum();
        for ed in &self.edges {
            e += ed.table[x[ed.s] * self.labels[ed.t] + x[ed.t]];
        }
        e
    }
}

pub struct ReferenceRun {
    pub lower_bounds: Vec<f64>,
    /// Reparametrized unaries at the last time each node was processed.
    pub theta_hat: Vec<Vec<f64>>,
}

/// Sequential TRW-S in node-index order (`bp` sets every γ to one).
pub fn reference_trws(mrf: &GenericMrf, passes: usize, bp: bool) -> ReferenceRun {
    let n = mrf.labels.len();
    let mut nbrs: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for (e, ed) in mrf.edges.iter().enumerate() {
        nbrs[ed.s].push((e, true));
        nbrs[ed.t].push((e, false));
    }
    let gamma: Vec<f64> = (0..n)
        .map(|s| {
            if bp {
                return 1.0;
            }
            let before = nbrs[s].iter().filter(|&&(e, is_s)| other(mrf, e, is_s) < s).count();
            let after = nbrs[s].len() - before;
            1.0 / before.max(after).max(1) as f64
        })
        .collect();
    // msg[e][0]: s→t over x_t; msg[e][1]: t→s over x_s
    let mut msg: Vec<[Vec<f64>; 2]> = mrf
        .edges
        .iter()
        .map(|ed| [vec![0.0; mrf.labels[ed.t]], vec![0.0; mrf.labels[ed.s]]])
        .collect();
    let mut theta_hat: Vec<Vec<f64>> = mrf.unary.clone();
    let mut lower_bounds = Vec::new();
    for _ in 0..passes {
        let mut bound = 0.0;
        for forward in [true, false] {
            bound = 0.0;
            let order: Vec<usize> = if forward { (0..n).collect() } else { (0..n).rev().collect() };
            for s in order {
                let mut th = mrf.unary[s].clone();
                for &(e, is_s) in &nbrs[s] {
                    let m = &msg[e][if is_s { 1 } else { 0 }];
                    for (a, v) in th.iter_mut().enumerate() {
                        *v += m[a];
                    }
                }
                let mut sends = 0;
                for &(e, is_s) in &nbrs[s] {
                    let t = other(mrf, e, is_s);
                    if (t > s) != forward {
                        continue;
                    }
                    let ed = &mrf.edges[e];
                    let incoming = msg[e][if is_s { 1 } else { 0 }].clone();
                    let lt = mrf.labels[t];
                    let mut out = vec![f64::INFINITY; lt];
                    for (b, o) in out.iter_mut().enumerate() {
                        for a in 0..mrf.labels[s] {
                            let pair = if is_s { ed.table[a * lt + b] } else { ed.table[b * mrf.labels[s] + a] };
                            *o = o.min(gamma[s] * th[a] - incoming[a] + pair);
                        }
                    }
                    let delta = out.iter().copied().fold(f64::INFINITY, f64::min);
                    for o in out.iter_mut() {
                        *o -= delta;
                    }
                    msg[e][if is_s { 0 } else { 1 }] = out;
                    bound += delta;
                    sends += 1;
                }
                let k = nbrs[s].len();
                let before = nbrs[s].iter().filter(|&&(e, is_s)| other(mrf, e, is_s) < s).count();
                let ns = before.max(k - before).max(1);
                let min = th.iter().copied().fold(f64::INFINITY, f64::min);
                bound += (ns - sends) as f64 / ns as f64 * min;
                theta_hat[s] = th;
            }
        }
        lower_bounds.push(bound);
    }
    ReferenceRun { lower_bounds, theta_hat }
}

fn other(mrf: &GenericMrf, e: usize, is_s: bool) -> usize {
    if is_s {
        mrf.edges[e].t
    } else {
        mrf.edges[e].s
    }
}

/// Full local-polytope relaxation with explicit `μ_s(a)` and `μ_st(a, b)`.
pub fn local_polytope(mrf: &GenericMrf) -> LinearProgram {
    let n = mrf.labels.len();
    let mut node_base = Vec::with_capacity(n);
    let mut cols = 0;
    for &l in &mrf.labels {
        node_base.push(cols);
        cols += l;
    }
    let mut edge_base = Vec::with_capacity(mrf.edges.len());
    for ed in &mrf.edges {
        edge_base.push(cols);
        cols += mrf.labels[ed.s] * mrf.labels[ed.t];
    }
    let mut lp = LinearProgram::new(cols);
    for s in 0..n {
        for a in 0..mrf.labels[s] {
            lp.objective[node_base[s] + a] = mrf.unary[s][a];
        }
        let terms = (0..mrf.labels[s]).map(|a| (node_base[s] + a, 1.0)).collect();
        lp.add_constraint(terms, Relation::Eq, 1.0);
    }
    for (e, ed) in mrf.edges.iter().enumerate() {
        let (ls, lt) = (mrf.labels[ed.s], mrf.labels[ed.t]);
        for i in 0..ls * lt {
            lp.objective[edge_base[e] + i] = ed.table[i];
        }
        for a in 0..ls {
            let mut terms: Vec<(usize, f64)> = (0..lt).map(|b| (edge_base[e] + a * lt + b, 1.0)).collect();
            terms.push((node_base[ed.s] + a, -1.0));
            lp.add_constraint(terms, Relation::Eq, 0.0);
        }
        for b in 0..lt {
            let mut terms: Vec<(usize, f64)> = (0..ls).map(|a| (edge_base[e] + a * lt + b, 1.0)).collect();
            terms.push((node_base[ed.t] + b, -1.0));
            lp.add_constraint(terms, Relation::Eq, 0.0);
        }
    }
    lp
}
