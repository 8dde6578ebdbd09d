use super::pairwise::PairwiseModel;
use crate::error::{invalid, Result};
use crate::model::BinaryLabeling;

/// Block size used by the inference pipeline.
pub const DEFAULT_BLOCK_SIZE: usize = 6;

const IMPROVEMENT_TOL: f64 = 1e-12;

/// Every `a×b` rectangle with `a·b = k`, as `(width, height)`.
fn block_shapes(k: usize) -> Vec<(usize, usize)> {
    (1..=k).filter(|a| k.is_multiple_of(*a)).map(|a| (a, k / a)).collect()
}

struct Scratch {
    windows: Vec<usize>,
    /// Local slot of each touched window, `usize::MAX` when untouched.
    slot: Vec<usize>,
    sums: Vec<f64>,
    edges: Vec<usize>,
    edge_mark: Vec<bool>,
}

/// Exact minimization over the pixels of one block, everything else fixed.
/// Returns the best in-block assignment (bit `i` is `block[i]`) and its gain.
fn optimize_block(m: &PairwiseModel, x: &mut BinaryLabeling, block: &[usize], sc: &mut Scratch) -> (u32, f64) {
    let np = m.n_labels;
    let k2 = m.k2();
    sc.windows.clear();
    sc.edges.clear();
    for &v in block {
        for &(h, _) in m.incidences(v) {
            if sc.slot[h] == usize::MAX {
                sc.slot[h] = sc.windows.len();
                sc.windows.push(h);
            }
        }
        for &(e, _) in m.grid_edges(v) {
            if !sc.edge_mark[e] {
                sc.edge_mark[e] = true;
                sc.edges.push(e);
            }
        }
    }
    let original: u32 = block
        .iter()
        .enumerate()
        .map(|(i, &v)| (x.at(v) as u32) << i)
        .sum();
    // start from all-zero inside the block
    for &v in block {
        x.set_index(v, false);
    }
    sc.sums.clear();
    sc.sums.resize(sc.windows.len() * np, 0.0);
    for (s, &h) in sc.windows.iter().enumerate() {
        let row = &mut sc.sums[s * np..(s + 1) * np];
        for (y, r) in row.iter_mut().enumerate() {
            let mut t = m.constants[y];
            for (off, &v) in m.pixels_of(h).iter().enumerate() {
                if x.at(v) == 1 {
                    t += m.weights[y * k2 + off];
                }
            }
            *r = t;
        }
    }
    let local = |x: &BinaryLabeling, sc: &Scratch| -> f64 {
        let mut e = 0.0;
        for &v in block {
            e += m.unaries[v][x.at(v) as usize];
        }
        for &i in &sc.edges {
            let t = &m.grid[i];
            e += t.table[x.at(t.u) as usize][x.at(t.v) as usize];
        }
        for row in sc.sums.chunks(np.max(1)) {
            e += row.iter().copied().fold(f64::INFINITY, f64::min);
        }
        e
    };
    let n = block.len();
    let mut code = 0u32;
    let mut best = (local(x, sc), 0u32);
    let mut original_energy = if original == 0 { best.0 } else { f64::NAN };
    for step in 1u32..(1 << n) {
        let bit = step.trailing_zeros() as usize;
        code ^= 1 << bit;
        let v = block[bit];
        let on = (code >> bit) & 1;
        x.set_index(v, on == 1);
        let sign = if on == 1 { 1.0 } else { -1.0 };
        for &(h, off) in m.incidences(v) {
            let s = sc.slot[h];
            for y in 0..np {
                sc.sums[s * np + y] += sign * m.weights[y * k2 + off];
            }
        }
        let e = local(x, sc);
        if code == original {
            original_energy = e;
        }
        if e < best.0 {
            best = (e, code);
        }
    }
    for &h in &sc.windows {
        sc.slot[h] = usize::MAX;
    }
    for &e in &sc.edges {
        sc.edge_mark[e] = false;
    }
    let gain = original_energy - best.0;
    let chosen = if gain > IMPROVEMENT_TOL { best.1 } else { original };
    for (i, &v) in block.iter().enumerate() {
        x.set_index(v, (chosen >> i) & 1 == 1);
    }
    (chosen, if chosen == original { 0.0 } else { gain })
}

/// Pixels on the labeling boundary or whose unary prefers the other label.
fn interesting(m: &PairwiseModel, x: &BinaryLabeling, v: usize) -> bool {
    let (w, h) = (x.width(), x.height());
    let (px, py) = (v % w, v / w);
    let l = x.at(v);
    let u = m.unaries[v];
    if u[1 - l as usize] < u[l as usize] {
        return true;
    }
    (px > 0 && x.get(px - 1, py) != l)
        || (px + 1 < w && x.get(px + 1, py) != l)
        || (py > 0 && x.get(px, py - 1) != l)
        || (py + 1 < h && x.get(px, py + 1) != l)
}

/// Block-coordinate descent over `k`-pixel rectangles until no block improves.
///
/// Returns the improved labeling; the energy never increases.
pub fn block_icm(m: &PairwiseModel, start: &BinaryLabeling, k: usize) -> Result<BinaryLabeling> {
    if k == 0 || k > 20 {
        return Err(invalid("block size must be in 1..=20"));
    }
    if start.dims() != m.dims {
        return Err(invalid("labeling does not match the model"));
    }
    let (w, h) = (m.dims.width, m.dims.height);
    let shapes: Vec<_> = block_shapes(k)
        .into_iter()
        .filter(|&(a, b)| a <= w && b <= h)
        .collect();
    let mut x = start.clone();
    let mut sc = Scratch {
        windows: Vec::new(),
        slot: vec![usize::MAX; m.n_windows()],
        sums: Vec::new(),
        edges: Vec::new(),
        edge_mark: vec![false; m.grid.len()],
    };
    let mut block = Vec::with_capacity(k);
    let mut seen = vec![false; w * h * shapes.len()];
    loop {
        let mut improved = false;
        // candidate blocks: every placement covering an interesting pixel
        seen.iter_mut().for_each(|s| *s = false);
        let mut candidates = Vec::new();
        for v in 0..m.n_pixels() {
            if !interesting(m, &x, v) {
                continue;
            }
            let (px, py) = (v % w, v / w);
            for (si, &(a, b)) in shapes.iter().enumerate() {
                for by in py.saturating_sub(b - 1)..=py.min(h - b) {
                    for bx in px.saturating_sub(a - 1)..=px.min(w - a) {
                        let id = si * w * h + by * w + bx;
                        if !seen[id] {
                            seen[id] = true;
                            candidates.push(id);
                        }
                    }
                }
            }
        }
        candidates.sort_unstable_by_key(|&id| (id % (w * h), id / (w * h)));
        for id in candidates {
            let (a, b) = shapes[id / (w * h)];
            let (bx, by) = ((id % (w * h)) % w, (id % (w * h)) / w);
            block.clear();
            for yy in by..by + b {
                for xx in bx..bx + a {
                    block.push(yy * w + xx);
                }
            }
            let (_, gain) = optimize_block(m, &mut x, &block, &mut sc);
            if gain > IMPROVEMENT_TOL {
                improved = true;
            }
        }
        if !improved {
            return Ok(x);
        }
    }
}
