use crate::error::{invalid, Result};
use crate::model::{Anchor, BinaryLabeling, Dims, EnergyModel, PairwiseTerm};

/// The energy rewritten over pixels `x_v` and one pattern-switching variable
/// `y_h` per window: `θ_vh(x_v, y) = w_{y, offset}·x_v`, unary `c_y` on `y_h`.
#[derive(Debug, Clone)]
pub struct PairwiseModel {
    pub dims: Dims,
    pub unaries: Vec<[f64; 2]>,
    pub grid: Vec<PairwiseTerm>,
    pub side: usize,
    pub n_labels: usize,
    /// `weights[y·K² + offset]`.
    pub weights: Vec<f64>,
    pub constants: Vec<f64>,
    /// `min_y weights[y·K² + offset]` per offset.
    pub weight_min: Vec<f64>,
    pub windows: Vec<Anchor>,
    /// `window_pixels[h·K² + offset]`.
    pub window_pixels: Vec<usize>,
    /// Pixel → `(window, offset)` incidences in CSR form.
    pub inc_start: Vec<usize>,
    pub inc: Vec<(usize, usize)>,
    /// Pixel → `(grid edge, pixel is the edge's u side)` in CSR form.
    pub grid_start: Vec<usize>,
    pub grid_inc: Vec<(usize, bool)>,
}

impl PairwiseModel {
    pub fn n_pixels(&self) -> usize {
        self.unaries.len()
    }

    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn k2(&self) -> usize {
        self.side * self.side
    }

    /// Number of pixel–window links.
    pub fn n_links(&self) -> usize {
        self.window_pixels.len()
    }

    pub fn link_weight(&self, y: usize, offset: usize) -> f64 {
        self.weights[y * self.k2() + offset]
    }

    pub fn incidences(&self, v: usize) -> &[(usize, usize)] {
        &self.inc[self.inc_start[v]..self.inc_start[v + 1]]
    }

    pub fn grid_edges(&self, v: usize) -> &[(usize, bool)] {
        &self.grid_inc[self.grid_start[v]..self.grid_start[v + 1]]
    }

    pub fn pixels_of(&self, h: usize) -> &[usize] {
        let k2 = self.k2();
        &self.window_pixels[h * k2..(h + 1) * k2]
    }

    /// `E₀(x) + Σ_h (⟨w_{y_h}, x_{V(h)}⟩ + c_{y_h})`.
    pub fn energy(&self, x: &BinaryLabeling, y: &[usize]) -> Result<f64> {
        if x.dims() != self.dims || y.len() != self.n_windows() {
            return Err(invalid("assignment does not match the pairwise model"));
        }
        if y.iter().any(|&l| l >= self.n_labels) {
            return Err(invalid("pattern label out of range"));
        }
        let mut e: f64 = self
            .unaries
            .iter()
            .zip(x.labels())
            .map(|(u, &l)| u[l as usize])
            .sum();
        for t in &self.grid {
            e += t.table[x.at(t.u) as usize][x.at(t.v) as usize];
        }
        for (h, &yh) in y.iter().enumerate() {
            e += self.constants[yh];
            for (off, &v) in self.pixels_of(h).iter().enumerate() {
                if x.at(v) == 1 {
                    e += self.link_weight(yh, off);
                }
            }
        }
        Ok(e)
    }

    /// Best pattern label per window for a fixed labeling.
    pub fn best_patterns(&self, x: &BinaryLabeling) -> Vec<usize> {
        (0..self.n_windows())
            .map(|h| {
                let mut best = (f64::INFINITY, 0);
                for y in 0..self.n_labels {
                    let mut s = self.constants[y];
                    for (off, &v) in self.pixels_of(h).iter().enumerate() {
                        if x.at(v) == 1 {
                            s += self.link_weight(y, off);
                        }
                    }
                    if s < best.0 {
                        best = (s, y);
                    }
                }
                best.1
            })
            .collect()
    }
}

pub fn build_pairwise_model(m: &EnergyModel) -> PairwiseModel {
    let dims = m.dims();
    let n = dims.len();
    let (side, n_labels, weights, constants) = match m.bank() {
        Some(b) => {
            let mut w = Vec::with_capacity(b.len() * b.side * b.side);
            for p in &b.patterns {
                w.extend_from_slice(&p.weights);
            }
            (b.side, b.len(), w, b.patterns.iter().map(|p| p.constant).collect())
        }
        None => (0, 0, Vec::new(), Vec::new()),
    };
    let k2 = side * side;
    let weight_min: Vec<f64> = (0..k2)
        .map(|off| (0..n_labels).map(|y| weights[y * k2 + off]).fold(f64::INFINITY, f64::min))
        .collect();
    let windows = m.locations().to_vec();
    let mut window_pixels = Vec::with_capacity(windows.len() * k2);
    for &a in &windows {
        window_pixels.extend(m.window_pixels(a));
    }
    let mut counts = vec![0usize; n + 1];
    for &v in &window_pixels {
        counts[v + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let inc_start = counts.clone();
    let mut fill = counts;
    let mut inc = vec![(0, 0); window_pixels.len()];
    for h in 0..windows.len() {
        for off in 0..k2 {
            let v = window_pixels[h * k2 + off];
            inc[fill[v]] = (h, off);
            fill[v] += 1;
        }
    }
    let mut gcount = vec![0usize; n + 1];
    for t in &m.pairwise {
        gcount[t.u + 1] += 1;
        gcount[t.v + 1] += 1;
    }
    for i in 0..n {
        gcount[i + 1] += gcount[i];
    }
    let grid_start = gcount.clone();
    let mut gfill = gcount;
    let mut grid_inc = vec![(0, false); 2 * m.pairwise.len()];
    for (e, t) in m.pairwise.iter().enumerate() {
        grid_inc[gfill[t.u]] = (e, true);
        gfill[t.u] += 1;
        grid_inc[gfill[t.v]] = (e, false);
        gfill[t.v] += 1;
    }
    PairwiseModel {
        dims,
        unaries: m.unaries.clone(),
        grid: m.pairwise.clone(),
        side,
        n_labels,
        weights,
        constants,
        weight_min,
        windows,
        window_pixels,
        inc_start,
        inc,
        grid_start,
        grid_inc,
    }
}
