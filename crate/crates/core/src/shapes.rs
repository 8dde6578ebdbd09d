//! Continuous shapes with analytic curvature, their rasterization, and the
//! ground-truth cost integrals used for training and evaluation.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{center_offset, BinaryLabeling, Dims};

/// Number of parameter samples used by [`true_total_cost`] by default.
pub const DEFAULT_QUADRATURE_SAMPLES: usize = 100_000;

const FOURIER_TERMS: usize = 5;
const SHAPE_CHECK_SAMPLES: usize = 4096;
const QUADRATIC_ATTEMPTS: usize = 10_000;
const FOURIER_ATTEMPTS: usize = 10_000;
const CIRCLE_ATTEMPTS: usize = 10_000;
const OFFSET: f64 = 0.5;

/// `f(κ) = min(κ², f_max)`.
pub fn curvature_cost(kappa: f64, f_max: f64) -> f64 {
    (kappa * kappa).min(f_max)
}

/// Parabola `y' = a x'² + b x' + c` in a frame rotated by `angle` about `origin`.
///
/// Frame coordinates of an image point `p` are
/// `x' = cos·(p−o).x + sin·(p−o).y`, `y' = −sin·(p−o).x + cos·(p−o).y`.
/// Foreground is the side `y' < a x'² + b x' + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCurve {
    pub angle: f64,
    pub origin: [f64; 2],
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticCurve {
    fn to_frame(&self, p: [f64; 2]) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let dx = p[0] - self.origin[0];
        let dy = p[1] - self.origin[1];
        (c * dx + s * dy, -s * dx + c * dy)
    }

    fn height(&self, t: f64) -> f64 {
        (self.a * t + self.b) * t + self.c
    }

    fn slope(&self, t: f64) -> f64 {
        2.0 * self.a * t + self.b
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (u, v) = self.to_frame(p);
        v < self.height(u)
    }

    /// Signed curvature at frame abscissa `t`; positive where the foreground is convex.
    pub fn kappa_at(&self, t: f64) -> f64 {
        let s = self.slope(t);
        -2.0 * self.a / (1.0 + s * s).powf(1.5)
    }

    /// Frame abscissa of the curve point nearest the frame origin.
    pub fn nearest_parameter(&self) -> f64 {
        // minimize t² + h(t)², a quartic; coarse scan then Newton polish
        let g = |t: f64| t * t + self.height(t).powi(2);
        let mut best = 0.0;
        let mut best_val = g(0.0);
        let span = 8.0 + self.c.abs();
        let steps = 4000;
        for i in 0..=steps {
            let t = -span + 2.0 * span * i as f64 / steps as f64;
            let v = g(t);
            if v < best_val {
                best_val = v;
                best = t;
            }
        }
        let mut t = best;
        for _ in 0..50 {
            let h = self.height(t);
            let s = self.slope(t);
            let d1 = 2.0 * t + 2.0 * h * s;
            let d2 = 2.0 + 2.0 * s * s + 4.0 * h * self.a;
            if d2 <= 0.0 {
                break;
            }
            let step = d1 / d2;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        if g(t) <= best_val {
            t
        } else {
            best
        }
    }

    /// Tangent angle in `[0, 2π)` at `t`, oriented along increasing frame abscissa.
    pub fn tangent_angle_at(&self, t: f64) -> f64 {
        let s = self.slope(t);
        let (sn, cs) = self.angle.sin_cos();
        let tx = cs - sn * s;
        let ty = sn + cs * s;
        ty.atan2(tx).rem_euclid(TAU)
    }
}

/// A closed or open parametric curve with analytic curvature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuousShape {
    Circle {
        radius: f64,
        center: [f64; 2],
    },
    /// `ρ(α) = a0 + Σ a_k sin kα + b_k cos kα` about `center`.
    Fourier {
        a0: f64,
        a: [f64; FOURIER_TERMS],
        b: [f64; FOURIER_TERMS],
        center: [f64; 2],
    },
    /// The parabola restricted to frame abscissae `[t0, t1]`.
    Quadratic {
        curve: QuadraticCurve,
        t0: f64,
        t1: f64,
    },
}

impl ContinuousShape {
    /// Circle that keeps at least one pixel of margin inside `dims`.
    pub fn circle(radius: f64, cx: f64, cy: f64, dims: Dims) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("circle radius must be positive"));
        }
        let (w, h) = (dims.width as f64, dims.height as f64);
        if cx - radius < 1.0 || cy - radius < 1.0 || cx + radius > w - 1.0 || cy + radius > h - 1.0 {
            return Err(invalid(format!(
                "circle of radius {radius} at ({cx}, {cy}) leaves the {}x{} grid",
                dims.width, dims.height
            )));
        }
        Ok(ContinuousShape::Circle {
            radius,
            center: [cx, cy],
        })
    }

    pub fn fourier(
        a0: f64,
        a: [f64; FOURIER_TERMS],
        b: [f64; FOURIER_TERMS],
        center: [f64; 2],
    ) -> Self {
        ContinuousShape::Fourier { a0, a, b, center }
    }

    /// `(ρ, ρ', ρ'')` at angle `alpha`; circles are the constant case.
    fn polar(&self, alpha: f64) -> (f64, f64, f64) {
        match self {
            ContinuousShape::Circle { radius, .. } => (*radius, 0.0, 0.0),
            ContinuousShape::Fourier { a0, a, b, .. } => {
                let (mut r, mut d1, mut d2) = (*a0, 0.0, 0.0);
                for k in 0..FOURIER_TERMS {
                    let kf = (k + 1) as f64;
                    let (s, c) = (kf * alpha).sin_cos();
                    r += a[k] * s + b[k] * c;
                    d1 += kf * (a[k] * c - b[k] * s);
                    d2 -= kf * kf * (a[k] * s + b[k] * c);
                }
                (r, d1, d2)
            }
            ContinuousShape::Quadratic { .. } => unreachable!("open curves have no polar form"),
        }
    }

    /// Signed curvature at polar angle `alpha` (closed shapes only).
    pub fn polar_kappa(&self, alpha: f64) -> f64 {
        let (r, d1, d2) = self.polar(alpha);
        (r * r + 2.0 * d1 * d1 - r * d2) / (r * r + d1 * d1).powf(1.5)
    }

    pub fn center(&self) -> Option<[f64; 2]> {
        match self {
            ContinuousShape::Circle { center, .. } | ContinuousShape::Fourier { center, .. } => {
                Some(*center)
            }
            ContinuousShape::Quadratic { .. } => None,
        }
    }

    /// Point-in-shape test for an image point.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            ContinuousShape::Circle { radius, center } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy <= radius * radius
            }
            ContinuousShape::Fourier { center, .. } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let d = dx.hypot(dy);
                if d == 0.0 {
                    return true;
                }
                d <= self.polar(dy.atan2(dx)).0
            }
            ContinuousShape::Quadratic { curve, .. } => curve.contains(p),
        }
    }

    /// Minimum of ρ over a dense angle grid (closed shapes only).
    pub fn min_radius(&self) -> f64 {
        (0..SHAPE_CHECK_SAMPLES)
            .map(|i| self.polar(TAU * i as f64 / SHAPE_CHECK_SAMPLES as f64).0)
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every boundary point keeps `margin` pixels from the grid edge.
    pub fn fits(&self, dims: Dims, margin: f64) -> bool {
        let Some(c) = self.center() else {
            return true;
        };
        let (w, h) = (dims.width as f64, dims.height as f64);
        (0..SHAPE_CHECK_SAMPLES).all(|i| {
            let alpha = TAU * i as f64 / SHAPE_CHECK_SAMPLES as f64;
            let r = self.polar(alpha).0;
            let x = c[0] + r * alpha.cos();
            let y = c[1] + r * alpha.sin();
            x >= margin && y >= margin && x <= w - margin && y <= h - margin
        })
    }
}

/// Circle with radius uniform in `[r_min, r_max]` and a subpixel center shift.
///
/// The center sits at the grid center plus an offset uniform in `[0,1)²`;
/// draws that would violate the one-pixel margin are redrawn.
pub fn sample_circle<R: Rng + ?Sized>(rng: &mut R, dims: Dims, r_min: f64, r_max: f64) -> Result<ContinuousShape> {
    if !(r_min > 0.0 && r_min <= r_max) {
        return Err(invalid("circle radius range must satisfy 0 < r_min <= r_max"));
    }
    for _ in 0..CIRCLE_ATTEMPTS {
        let r = rng.random_range(r_min..=r_max);
        let cx = (dims.width / 2) as f64 + rng.random::<f64>();
        let cy = (dims.height / 2) as f64 + rng.random::<f64>();
        if let Ok(s) = ContinuousShape::circle(r, cx, cy, dims) {
            return Ok(s);
        }
    }
    Err(Error::GenerationFailure("no circle fits the grid".into()))
}

/// Random star-shaped Fourier curve centered near the grid center.
///
/// `a0 ~ U[15, 35]`, `a_k, b_k ~ N(0, a0/(4k))`; draws with `min ρ < 3` or
/// leaving the grid are rejected.
pub fn sample_fourier<R: Rng + ?Sized>(rng: &mut R, dims: Dims) -> Result<ContinuousShape> {
    for _ in 0..FOURIER_ATTEMPTS {
        let a0: f64 = rng.random_range(15.0..=35.0);
        let mut a = [0.0; FOURIER_TERMS];
        let mut b = [0.0; FOURIER_TERMS];
        for k in 0..FOURIER_TERMS {
            let sd = a0 / (4.0 * (k + 1) as f64);
            let n = Normal::new(0.0, sd).expect("positive standard deviation");
            a[k] = n.sample(rng);
            b[k] = n.sample(rng);
        }
        let cx = (dims.width / 2) as f64 + rng.random::<f64>();
        let cy = (dims.height / 2) as f64 + rng.random::<f64>();
        let s = ContinuousShape::fourier(a0, a, b, [cx, cy]);
        if s.min_radius() >= 3.0 && s.fits(dims, 1.0) {
            return Ok(s);
        }
    }
    Err(Error::GenerationFailure("Fourier rejection budget exhausted".into()))
}

/// `(∫ f(κ) dl, ∫ dl)` by the composite trapezoid rule over `samples` parameter steps.
///
/// Closed curves use the periodic rule on `[0, 2π)`; open curves integrate
/// over their abscissa range.
pub fn true_total_cost_with(shape: &ContinuousShape, f_max: f64, samples: usize) -> (f64, f64) {
    let n = samples.max(2);
    match shape {
        ContinuousShape::Quadratic { curve, t0, t1 } => {
            let h = (t1 - t0) / n as f64;
            let (mut cost, mut len) = (0.0, 0.0);
            for i in 0..=n {
                let t = t0 + h * i as f64;
                let s = curve.slope(t);
                let dl = (1.0 + s * s).sqrt();
                let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
                cost += wgt * curvature_cost(curve.kappa_at(t), f_max) * dl;
                len += wgt * dl;
            }
            (cost * h, len * h)
        }
        _ => {
            let h = TAU / n as f64;
            let (mut cost, mut len) = (0.0, 0.0);
            for i in 0..n {
                let alpha = h * i as f64;
                let (r, d1, d2) = shape.polar(alpha);
                let q = r * r + d1 * d1;
                let dl = q.sqrt();
                let kappa = (r * r + 2.0 * d1 * d1 - r * d2) / (q * dl);
                cost += curvature_cost(kappa, f_max) * dl;
                len += dl;
            }
            (cost * h, len * h)
        }
    }
}

pub fn true_total_cost(shape: &ContinuousShape, f_max: f64) -> (f64, f64) {
    true_total_cost_with(shape, f_max, DEFAULT_QUADRATURE_SAMPLES)
}

/// Pixel `(x, y)` is foreground iff its center `(x+0.5, y+0.5)` is inside.
pub fn rasterize(shape: &ContinuousShape, dims: Dims) -> Result<BinaryLabeling> {
    BinaryLabeling::from_fn(dims, |x, y| shape.contains([x as f64 + 0.5, y as f64 + 0.5]))
}

/// Number of 2×2 pixel windows holding both labels.
pub fn boundary_count(x: &BinaryLabeling) -> usize {
    let (w, h) = (x.width(), x.height());
    let mut n = 0;
    for j in 0..h.saturating_sub(1) {
        for i in 0..w.saturating_sub(1) {
            let s = x.get(i, j) + x.get(i + 1, j) + x.get(i, j + 1) + x.get(i + 1, j + 1);
            if s != 0 && s != 4 {
                n += 1;
            }
        }
    }
    n
}

/// Number of 4-neighbor pixel pairs with differing labels.
pub fn cut_edge_count(x: &BinaryLabeling) -> usize {
    let (w, h) = (x.width(), x.height());
    let mut n = 0;
    for j in 0..h {
        for i in 0..w {
            if i + 1 < w && x.get(i, j) != x.get(i + 1, j) {
                n += 1;
            }
            if j + 1 < h && x.get(i, j) != x.get(i, j + 1) {
                n += 1;
            }
        }
    }
    n
}

/// A rasterized closed shape with its ground-truth integrals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSample {
    pub shape: ContinuousShape,
    #[serde(skip)]
    pub labeling: Option<BinaryLabeling>,
    pub true_total_cost: f64,
    pub true_length: f64,
    pub boundary_count: usize,
}

impl ShapeSample {
    pub fn new(shape: ContinuousShape, dims: Dims, f_max: f64) -> Result<Self> {
        let labeling = rasterize(&shape, dims)?;
        let (cost, length) = true_total_cost(&shape, f_max);
        Ok(Self {
            boundary_count: boundary_count(&labeling),
            shape,
            labeling: Some(labeling),
            true_total_cost: cost,
            true_length: length,
        })
    }

    pub fn labeling(&self) -> &BinaryLabeling {
        self.labeling.as_ref().expect("labeling present on constructed samples")
    }
}

/// How the target |κ| of sampled quadratic patches is distributed on `[0, κ_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurvatureSampling {
    Uniform,
    /// `κ = κ_max · u^p` for uniform `u`; `p > 1` favors gentle curves.
    Power { exponent: f64 },
}

impl CurvatureSampling {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, kappa_max: f64) -> f64 {
        let u: f64 = rng.random();
        match *self {
            CurvatureSampling::Uniform => kappa_max * u,
            CurvatureSampling::Power { exponent } => kappa_max * u.powf(exponent),
        }
    }
}

/// One training patch with its ground-truth curvature cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub patch: Vec<u8>,
    pub tangent_angle: f64,
    pub kappa: f64,
    pub target_cost: f64,
    pub curve: QuadraticCurve,
}

/// Rasterize `curve` into a `side × side` patch (row-major).
pub fn quadratic_patch(curve: &QuadraticCurve, side: usize) -> Vec<u8> {
    let mut patch = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            patch.push(curve.contains([x as f64 + 0.5, y as f64 + 0.5]) as u8);
        }
    }
    patch
}

fn center_is_boundary(patch: &[u8], side: usize) -> bool {
    let o = center_offset(side);
    let s = patch[o * side + o] + patch[o * side + o + 1] + patch[(o + 1) * side + o] + patch[(o + 1) * side + o + 1];
    s != 0 && s != 4
}

/// Build the training sample for an explicit curve, if its patch center is a boundary location.
pub fn training_sample_from_curve(curve: QuadraticCurve, side: usize, f_max: f64) -> Option<TrainingSample> {
    let patch = quadratic_patch(&curve, side);
    if !center_is_boundary(&patch, side) {
        return None;
    }
    let t = curve.nearest_parameter();
    let kappa = curve.kappa_at(t);
    Some(TrainingSample {
        patch,
        tangent_angle: curve.tangent_angle_at(t),
        kappa,
        target_cost: curvature_cost(kappa, f_max),
        curve,
    })
}

/// Random parabola passing within half a pixel of the window center.
///
/// The frame angle is uniform, `b ~ U[-0.5, 0.5]`, the offset `c` puts the
/// vertex-frame curve within 0.5 px of the center, and `a` is chosen so that
/// the curvature at the frame origin follows `dist` with a random sign.
pub fn sample_quadratic_patch<R: Rng + ?Sized>(
    rng: &mut R,
    side: usize,
    f_max: f64,
    dist: CurvatureSampling,
) -> Result<TrainingSample> {
    if side < 4 {
        return Err(invalid("quadratic patches need K >= 4"));
    }
    if !(f_max > 0.0) {
        return Err(invalid("f_max must be positive"));
    }
    let kappa_max = (2.0 * f_max).sqrt();
    let half = side as f64 / 2.0;
    for _ in 0..QUADRATIC_ATTEMPTS {
        let angle = rng.random_range(0.0..TAU);
        let b: f64 = rng.random_range(-0.5..=0.5);
        let kappa = dist.draw(rng, kappa_max);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let a = -sign * 0.5 * kappa * (1.0 + b * b).powf(1.5);
        // perpendicular distance of (0, c) from the tangent line y = b x + c is |c|/√(1+b²)
        let c = rng.random_range(-OFFSET..OFFSET) * (1.0 + b * b).sqrt();
        let curve = QuadraticCurve {
            angle,
            origin: [half, half],
            a,
            b,
            c,
        };
        let t = curve.nearest_parameter();
        if t.hypot(curve.height(t)) >= OFFSET {
            continue;
        }
        if let Some(s) = training_sample_from_curve(curve, side, f_max) {
            return Ok(s);
        }
    }
    Err(Error::GenerationFailure(format!(
        "no boundary-centered quadratic patch after {QUADRATIC_ATTEMPTS} attempts"
    )))
}
