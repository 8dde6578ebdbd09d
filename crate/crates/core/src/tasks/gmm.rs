use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const MAX_ITERATIONS: usize = 300;
const RELATIVE_STOP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 3],
    /// Row-major, symmetric positive-definite.
    pub covariance: [[f64; 3]; 3],
}

/// Full-covariance Gaussian mixture over RGB colours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
    /// Covariance floor `ε` used during fitting.
    pub epsilon: f64,
    /// Objective after every EM step; see [`fit_gmm`].
    pub log_likelihood_trace: Vec<f64>,
}

struct Prepared {
    log_weight: f64,
    mean: Vector3<f64>,
    inverse: Matrix3<f64>,
    /// `−½ log((2π)³ |Σ|)`
    log_norm: f64,
}

fn prepare(c: &GaussianComponent) -> Result<Prepared> {
    let cov = Matrix3::from_fn(|r, k| c.covariance[r][k]);
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(Prepared {
        log_weight: c.weight.ln(),
        mean: Vector3::from(c.mean),
        inverse: chol.inverse(),
        log_norm: -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + log_det),
    })
}

fn log_gauss(p: &Prepared, x: &Vector3<f64>) -> f64 {
    let d = x - p.mean;
    p.log_norm - 0.5 * (d.transpose() * p.inverse * d)[0]
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GaussianMixture {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `log p(x)` for each colour.
    pub fn log_density_many(&self, colors: &[[f64; 3]]) -> Result<Vec<f64>> {
        let prepared = self.components.iter().map(prepare).collect::<Result<Vec<_>>>()?;
        let mut terms = vec![0.0; prepared.len()];
        Ok(colors
            .iter()
            .map(|c| {
                let x = Vector3::from(*c);
                for (t, p) in terms.iter_mut().zip(&prepared) {
                    *t = p.log_weight + log_gauss(p, &x);
                }
                log_sum_exp(&terms)
            })
            .collect())
    }

    pub fn log_density(&self, color: [f64; 3]) -> Result<f64> {
        Ok(self.log_density_many(&[color])?[0])
    }
}

fn kmeans_pp(colors: &[Vector3<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let n = colors.len();
    let mut centers = vec![colors[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = colors.iter().map(|c| (c - centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = colors[pick];
        for (d, x) in d2.iter_mut().zip(colors) {
            *d = d.min((x - c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

/// Fits a `k`-component mixture by EM from a k-means++ start.
///
/// Every covariance is the weighted scatter plus `ε·I`, `ε = 10⁻⁶ ×` the mean
/// per-channel data variance (at least 10⁻¹²). That update is the exact
/// maximizer of the likelihood with each component density multiplied by
/// `exp(−ε/2 · tr Σ⁻¹)`, so the recorded objective never decreases.
pub fn fit_gmm(colors: &[[f64; 3]], k: usize, seed: u64) -> Result<GaussianMixture> {
    let n = colors.len();
    if k == 0 || k > n {
        return Err(invalid(format!("cannot fit {k} components to {n} samples")));
    }
    if colors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("colours must be finite"));
    }
    let xs: Vec<Vector3<f64>> = colors.iter().map(|c| Vector3::from(*c)).collect();
    let mean: Vector3<f64> = xs.iter().sum::<Vector3<f64>>() / n as f64;
    let variance = xs.iter().map(|x| (x - mean).norm_squared()).sum::<f64>() / (3 * n) as f64;
    let eps = (1e-6 * variance).max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(&xs, k, &mut rng);

    // hard assignment to the seeds gives the starting responsibilities
    let mut resp = vec![0.0; n * k];
    for (i, x) in xs.iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (j, c) in centers.iter().enumerate() {
            let d = (x - c).norm_squared();
            if d < best.0 {
                best = (d, j);
            }
        }
        resp[i * k + best.1] = 1.0;
    }
    let mut comps: Vec<GaussianComponent> = Vec::new();
    let mut trace = Vec::new();
    let mut terms = vec![0.0; k];
    for _ in 0..MAX_ITERATIONS {
        // M step
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk <= 0.0 {
                // keep a dead component where it was, with negligible weight
                let prev = comps.get(j).cloned().unwrap_or(GaussianComponent {
                    weight: 0.0,
                    mean: centers[j].into(),
                    covariance: [[eps, 0.0, 0.0], [0.0, eps, 0.0], [0.0, 0.0, eps]],
                });
                next.push(GaussianComponent { weight: 0.0, ..prev });
                continue;
            }
            let mu: Vector3<f64> = (0..n).map(|i| xs[i] * resp[i * k + j]).sum::<Vector3<f64>>() / nk;
            let mut s = Matrix3::zeros();
            for i in 0..n {
                let d = xs[i] - mu;
                s += d * d.transpose() * resp[i * k + j];
            }
            s = s / nk + Matrix3::identity() * eps;
            s = (s + s.transpose()) * 0.5;
            next.push(GaussianComponent {
                weight: nk / n as f64,
                mean: mu.into(),
                covariance: [
                    [s[(0, 0)], s[(0, 1)], s[(0, 2)]],
                    [s[(1, 0)], s[(1, 1)], s[(1, 2)]],
                    [s[(2, 0)], s[(2, 1)], s[(2, 2)]],
                ],
            });
        }
        comps = next;
        // E step on the penalized densities
        let prepared = comps.iter().map(prepare).collect::<Result<Vec<_>>>()?;
        let penalty: Vec<f64> = prepared.iter().map(|p| -0.5 * eps * p.inverse.trace()).collect();
        let mut ll = 0.0;
        for (i, x) in xs.iter().enumerate() {
            for j in 0..k {
                terms[j] = prepared[j].log_weight + log_gauss(&prepared[j], x) + penalty[j];
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (terms[j] - lse).exp();
            }
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= RELATIVE_STOP * ll.abs().max(1.0));
        trace.push(ll);
        if done {
            break;
        }
    }
    Ok(GaussianMixture {
        components: comps,
        epsilon: eps,
        log_likelihood_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_colour_has_floored_covariance() {
        let colors = vec![[0.2, 0.4, 0.6]; 30];
        let g = fit_gmm(&colors, 1, 0).unwrap();
        let c = &g.components[0];
        for (m, e) in c.mean.iter().zip([0.2, 0.4, 0.6]) {
            assert!((m - e).abs() < 1e-12);
        }
        assert!((c.covariance[0][0] - g.epsilon).abs() < 1e-18);
        assert!((c.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        assert!(fit_gmm(&[[0.0; 3]; 3], 4, 0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let colors: Vec<[f64; 3]> = (0..50).map(|i| [(i % 7) as f64 / 7.0, (i % 3) as f64 / 3.0, 0.5]).collect();
        assert_eq!(fit_gmm(&colors, 3, 9).unwrap(), fit_gmm(&colors, 3, 9).unwrap());
    }
}
