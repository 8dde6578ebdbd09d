use serde::{Deserialize, Serialize};

use super::pairwise::PairwiseModel;
use crate::error::{invalid, Result};
use crate::model::BinaryLabeling;

/// Order in which nodes are swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Row-major pixels, then row-major windows.
    #[default]
    PixelsFirst,
    /// Row-major pixels with each window placed right after its center pixel.
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `γ_s = 1 / max(#earlier neighbors, #later neighbors)`.
    #[default]
    Trws,
    /// `γ ≡ 1`: sequential min-sum belief propagation.
    Bp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Passes {
    Fixed(usize),
    /// Stop once the bound moved by less than 1e-9 (relative) over 10 passes.
    Auto { max: usize },
}

impl Passes {
    fn max(self) -> usize {
        match self {
            Passes::Fixed(n) | Passes::Auto { max: n } => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrwsOptions {
    pub passes: Passes,
    pub ordering: Ordering,
    pub gamma: GammaRule,
}

impl Default for TrwsOptions {
    fn default() -> Self {
        Self {
            passes: Passes::Fixed(300),
            ordering: Ordering::PixelsFirst,
            gamma: GammaRule::Trws,
        }
    }
}

/// Messages and reparametrized unaries of a run.
///
/// Only window→pixel messages are stored; pixel→window messages are
/// rebuilt from `snapshot` whenever a window needs them.
#[derive(Debug, Clone)]
pub struct InferenceState {
    /// `m_hv[h·K² + offset]`, a function of `x_v`.
    pub m_hv: Vec<[f64; 2]>,
    /// `θ̂_v` as of the pixel's most recent update.
    pub snapshot: Vec<[f64; 2]>,
    processed: Vec<bool>,
    /// `θ̂_h` as of the window's most recent update, `N_P` per window.
    pub theta_hat_windows: Vec<f64>,
    /// Per grid edge: `[message u→v (over x_v), message v→u (over x_u)]`.
    pub grid_msgs: Vec<[[f64; 2]; 2]>,
    /// `γ` per node, pixels first then windows.
    pub gamma: Vec<f64>,
    pub lower_bound_trace: Vec<f64>,
    pub passes: usize,
}

/// Per-label reparametrized unaries at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMarginals {
    pub pixels: Vec<[f64; 2]>,
    pub n_labels: usize,
    /// `n_labels` values per window.
    pub windows: Vec<f64>,
}

impl MinMarginals {
    pub fn window(&self, h: usize) -> &[f64] {
        &self.windows[h * self.n_labels..(h + 1) * self.n_labels]
    }

    /// `θ̂_v(0) − θ̂_v(1)`; positive where foreground is preferred.
    pub fn pixel_differences(&self) -> Vec<f64> {
        self.pixels.iter().map(|m| m[0] - m[1]).collect()
    }
}

/// Per-pixel argmin of the min-marginals; ties go to background.
pub fn round_min_marginals(mm: &MinMarginals, dims: crate::model::Dims) -> Result<BinaryLabeling> {
    if mm.pixels.len() != dims.len() {
        return Err(invalid("min-marginals do not match the grid"));
    }
    BinaryLabeling::from_labels(dims, mm.pixels.iter().map(|m| (m[1] < m[0]) as u8).collect())
}

/// Processing position of every node; pixels are `0..N_X`, windows follow.
pub fn node_order(model: &PairwiseModel, ordering: Ordering) -> Vec<usize> {
    let n_pix = model.n_pixels();
    match ordering {
        Ordering::PixelsFirst => (0..n_pix + model.n_windows()).collect(),
        Ordering::Interleaved => {
            let c = crate::model::center_offset(model.side.max(2));
            let w = model.dims.width;
            let mut after: Vec<Vec<usize>> = vec![Vec::new(); n_pix];
            for (h, a) in model.windows.iter().enumerate() {
                after[(a.y + c) * w + a.x + c].push(n_pix + h);
            }
            let mut order = Vec::with_capacity(n_pix + model.n_windows());
            for (v, hs) in after.into_iter().enumerate() {
                order.push(v);
                order.extend(hs);
            }
            order
        }
    }
}

/// `(#earlier neighbors, #later neighbors)` per node under `pos`.
pub fn neighbor_counts(model: &PairwiseModel, pos: &[usize]) -> Vec<(usize, usize)> {
    let n_pix = model.n_pixels();
    let mut counts = vec![(0, 0); n_pix + model.n_windows()];
    let mut link = |s: usize, t: usize| {
        if pos[s] < pos[t] {
            counts[s].1 += 1;
            counts[t].0 += 1;
        } else {
            counts[s].0 += 1;
            counts[t].1 += 1;
        }
    };
    for t in &model.grid {
        link(t.u, t.v);
    }
    for h in 0..model.n_windows() {
        for &v in model.pixels_of(h) {
            link(v, n_pix + h);
        }
    }
    counts
}

struct Runner<'a> {
    model: &'a PairwiseModel,
    pos: Vec<usize>,
    counts: Vec<(usize, usize)>,
    bp: bool,
    // scratch
    a0: Vec<f64>,
    a1: Vec<f64>,
    d: Vec<f64>,
    theta: Vec<f64>,
}

impl<'a> Runner<'a> {
    fn later(&self, s: usize, t: usize, forward: bool) -> bool {
        (self.pos[t] > self.pos[s]) == forward
    }

    /// Weight of the min of `θ̂_s` left over by chains that end at `s` in this direction.
    fn leftover(&self, s: usize, sends: usize) -> f64 {
        if self.bp {
            return 0.0;
        }
        let (a, b) = self.counts[s];
        let n = a.max(b).max(1);
        (n - sends) as f64 / n as f64
    }

    fn pixel(&mut self, st: &mut InferenceState, v: usize, forward: bool) -> f64 {
        let m = self.model;
        let k2 = m.k2();
        let n_pix = m.n_pixels();
        let mut th = m.unaries[v];
        for &(h, off) in m.incidences(v) {
            let msg = st.m_hv[h * k2 + off];
            th[0] += msg[0];
            th[1] += msg[1];
        }
        for &(e, is_u) in m.grid_edges(v) {
            let msg = st.grid_msgs[e][if is_u { 1 } else { 0 }];
            th[0] += msg[0];
            th[1] += msg[1];
        }
        st.snapshot[v] = th;
        st.processed[v] = true;
        let g = st.gamma[v];
        let mut bound = 0.0;
        let mut sends = 0;
        for &(e, is_u) in m.grid_edges(v) {
            let t = if is_u { m.grid[e].v } else { m.grid[e].u };
            if !self.later(v, t, forward) {
                continue;
            }
            let incoming = st.grid_msgs[e][if is_u { 1 } else { 0 }];
            let table = &m.grid[e].table;
            let mut out = [0.0; 2];
            for (xt, o) in out.iter_mut().enumerate() {
                let mut best = f64::INFINITY;
                for xv in 0..2 {
                    let pair = if is_u { table[xv][xt] } else { table[xt][xv] };
                    best = best.min(g * th[xv] - incoming[xv] + pair);
                }
                *o = best;
            }
            let delta = out[0].min(out[1]);
            st.grid_msgs[e][if is_u { 0 } else { 1 }] = [out[0] - delta, out[1] - delta];
            bound += delta;
            sends += 1;
        }
        for &(h, off) in m.incidences(v) {
            if !self.later(v, n_pix + h, forward) {
                continue;
            }
            let msg = st.m_hv[h * k2 + off];
            let a0 = g * th[0] - msg[0];
            let a1 = g * th[1] - msg[1];
            bound += a0.min(a1 + m.weight_min[off]);
            sends += 1;
        }
        bound + self.leftover(v, sends) * th[0].min(th[1])
    }

    fn window(&mut self, st: &mut InferenceState, h: usize, forward: bool) -> f64 {
        let m = self.model;
        let k2 = m.k2();
        let np = m.n_labels;
        let node = m.n_pixels() + h;
        let pixels = m.pixels_of(h);
        for (off, &v) in pixels.iter().enumerate() {
            let msg = st.m_hv[h * k2 + off];
            if st.processed[v] {
                let g = st.gamma[v];
                let s = st.snapshot[v];
                self.a0[off] = g * s[0] - msg[0];
                self.a1[off] = g * s[1] - msg[1];
                self.d[off] = self.a0[off].min(self.a1[off] + m.weight_min[off]);
            } else {
                // never sent: the message is identically zero
                self.a0[off] = f64::NAN;
            }
        }
        let rev = |runner: &Self, off: usize, y: usize| -> f64 {
            if runner.a0[off].is_nan() {
                0.0
            } else {
                runner.a0[off].min(runner.a1[off] + m.weights[y * k2 + off]) - runner.d[off]
            }
        };
        for y in 0..np {
            let mut t = m.constants[y];
            for off in 0..k2 {
                t += rev(self, off, y);
            }
            self.theta[y] = t;
        }
        st.theta_hat_windows[h * np..(h + 1) * np].copy_from_slice(&self.theta[..np]);
        let g = st.gamma[node];
        let mut bound = 0.0;
        let mut sends = 0;
        for (off, &v) in pixels.iter().enumerate() {
            if !self.later(node, v, forward) {
                continue;
            }
            let mut out = [f64::INFINITY; 2];
            for y in 0..np {
                let base = g * self.theta[y] - rev(self, off, y);
                out[0] = out[0].min(base);
                out[1] = out[1].min(base + m.weights[y * k2 + off]);
            }
            let delta = out[0].min(out[1]);
            st.m_hv[h * k2 + off] = [out[0] - delta, out[1] - delta];
            bound += delta;
            sends += 1;
        }
        let min_theta = self.theta[..np].iter().copied().fold(f64::INFINITY, f64::min);
        bound + self.leftover(node, sends) * min_theta
    }

    fn pass(&mut self, st: &mut InferenceState, order: &[usize], forward: bool) -> f64 {
        let n_pix = self.model.n_pixels();
        // Neumaier summation: thousands of terms against a large total
        let (mut bound, mut comp) = (0.0f64, 0.0f64);
        let mut visit = |runner: &mut Self, s: usize| {
            let term = if s < n_pix {
                runner.pixel(st, s, forward)
            } else {
                runner.window(st, s - n_pix, forward)
            };
            let t = bound + term;
            comp += if bound.abs() >= term.abs() {
                (bound - t) + term
            } else {
                (term - t) + bound
            };
            bound = t;
        };
        if forward {
            for &s in order {
                visit(self, s);
            }
        } else {
            for &s in order.iter().rev() {
                visit(self, s);
            }
        }
        bound + comp
    }
}

/// TRW-S (or BP with [`GammaRule::Bp`]) on the pairwise model.
///
/// `progress(pass, lower_bound)` is called after every full pass; returning
/// `false` stops the run early. The lower bound is recorded at the end of
/// each backward pass.
pub fn trws_run_with(
    model: &PairwiseModel,
    opts: &TrwsOptions,
    progress: &mut dyn FnMut(usize, f64) -> bool,
) -> Result<(InferenceState, MinMarginals)> {
    let max = opts.passes.max();
    if max == 0 {
        return Err(invalid("at least one pass is required"));
    }
    let n_pix = model.n_pixels();
    let n_nodes = n_pix + model.n_windows();
    let order = node_order(model, opts.ordering);
    let mut pos = vec![0; n_nodes];
    for (i, &s) in order.iter().enumerate() {
        pos[s] = i;
    }
    let counts = neighbor_counts(model, &pos);
    let bp = opts.gamma == GammaRule::Bp;
    let gamma = counts
        .iter()
        .map(|&(a, b)| if bp { 1.0 } else { 1.0 / a.max(b).max(1) as f64 })
        .collect();
    let k2 = model.k2();
    let mut st = InferenceState {
        m_hv: vec![[0.0; 2]; model.n_links()],
        snapshot: model.unaries.clone(),
        processed: vec![false; n_pix],
        theta_hat_windows: vec![0.0; model.n_windows() * model.n_labels],
        grid_msgs: vec![[[0.0; 2]; 2]; model.grid.len()],
        gamma,
        lower_bound_trace: Vec::new(),
        passes: 0,
    };
    let mut runner = Runner {
        model,
        pos,
        counts,
        bp,
        a0: vec![0.0; k2],
        a1: vec![0.0; k2],
        d: vec![0.0; k2],
        theta: vec![0.0; model.n_labels],
    };
    for pass in 1..=max {
        runner.pass(&mut st, &order, true);
        let lb = runner.pass(&mut st, &order, false);
        st.passes = pass;
        if !bp {
            st.lower_bound_trace.push(lb);
        }
        if !progress(pass, lb) {
            break;
        }
        if let Passes::Auto { .. } = opts.passes {
            let t = &st.lower_bound_trace;
            if t.len() > 10 {
                let old = t[t.len() - 11];
                if (lb - old).abs() <= 1e-9 * lb.abs().max(1.0) {
                    break;
                }
            }
        }
    }
    let mm = MinMarginals {
        pixels: st.snapshot.clone(),
        n_labels: model.n_labels,
        windows: st.theta_hat_windows.clone(),
    };
    Ok((st, mm))
}

pub fn trws_run(model: &PairwiseModel, opts: &TrwsOptions) -> Result<(InferenceState, MinMarginals)> {
    trws_run_with(model, opts, &mut |_, _| true)
}

/// Sequential min-sum BP: the same sweeps with every `γ = 1`.
pub fn bp_run(model: &PairwiseModel, passes: usize, ordering: Ordering) -> Result<MinMarginals> {
    let opts = TrwsOptions {
        passes: Passes::Fixed(passes),
        ordering,
        gamma: GammaRule::Bp,
    };
    Ok(trws_run(model, &opts)?.1)
}

/// Pixel→window message `m_vh(y)` rebuilt from the stored state.
///
/// `m_vh(y) = min_x [γ_v θ̂_v(x) − m_hv(x) + θ_vh(x, y)]`, normalized so its
/// minimum over `y` is zero.
pub fn reverse_message(model: &PairwiseModel, st: &InferenceState, h: usize, offset: usize, y: usize) -> f64 {
    let k2 = model.k2();
    let v = model.pixels_of(h)[offset];
    if !st.processed[v] {
        return 0.0;
    }
    let g = st.gamma[v];
    let s = st.snapshot[v];
    let msg = st.m_hv[h * k2 + offset];
    let a0 = g * s[0] - msg[0];
    let a1 = g * s[1] - msg[1];
    a0.min(a1 + model.link_weight(y, offset)) - a0.min(a1 + model.weight_min[offset])
}
