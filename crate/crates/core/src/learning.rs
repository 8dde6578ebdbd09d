//! Pattern learning: binned initialization, iterative factor discovery
//! (assign / refit) and the overlap-aware recalibration of totals.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lp::{l1_fit_program, solve, LinearProgram, Relation};
use crate::model::{
    default_big, is_boundary_location, window_locations, BinaryLabeling, Pattern, PatternBank,
    DEFAULT_F_MAX,
};
use crate::shapes::{sample_quadratic_patch, CurvatureSampling, ShapeSample, TrainingSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub n_samples: usize,
    pub n_test_samples: usize,
    pub n_orientations: usize,
    pub n_curvature_bins: usize,
    pub side: usize,
    pub f_max: f64,
    /// Weight magnitude of the two special center patterns.
    pub big: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub curvature_sampling: CurvatureSampling,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainingConfig {
    /// K=6, 8 orientations × 3 curvature bins, 2000 samples.
    pub fn desk() -> Self {
        Self {
            n_samples: 2000,
            n_test_samples: 2000,
            n_orientations: 8,
            n_curvature_bins: 3,
            side: 6,
            f_max: DEFAULT_F_MAX,
            big: default_big(DEFAULT_F_MAX),
            max_iterations: 10,
            seed: 0,
            curvature_sampling: CurvatureSampling::Uniform,
        }
    }

    /// K=8, 32 orientations × 3 curvature bins, 10000 samples.
    pub fn full_scale() -> Self {
        Self {
            n_samples: 10_000,
            n_test_samples: 10_000,
            n_orientations: 32,
            side: 8,
            ..Self::desk()
        }
    }

    pub fn n_patterns(&self) -> usize {
        self.n_orientations * self.n_curvature_bins
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_orientations == 0 || self.n_curvature_bins == 0 {
            return Err(invalid("need at least one orientation and one curvature bin"));
        }
        if self.side < 4 {
            return Err(invalid("pattern side must be at least 4"));
        }
        if !(self.f_max > 0.0) || !(self.big > 0.0) {
            return Err(invalid("f_max and big must be positive"));
        }
        Ok(())
    }
}

/// `samples` independent quadratic patches; sample `i` uses stream `i` of `seed`.
pub fn generate_samples(
    n: usize,
    side: usize,
    f_max: f64,
    dist: CurvatureSampling,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sample_quadratic_patch(&mut rng, side, f_max, dist)
        })
        .collect()
}

/// Per-iteration mean absolute pointwise errors; entry 0 is the initial bank.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,train_error,test_error\n");
        for (i, (a, b)) in self.train.iter().zip(&self.test).enumerate() {
            s.push_str(&format!("{i},{a},{b}\n"));
        }
        s
    }
}

/// `(1/N) Σ |E_h(x^i) − f^i|`.
pub fn evaluate_pointwise(bank: &PatternBank, samples: &[TrainingSample]) -> Result<f64> {
    if bank.is_empty() {
        return Err(invalid("pattern bank is empty"));
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = samples
        .par_iter()
        .map(|s| (bank.evaluate_unchecked(&s.patch).0 - s.target_cost).abs())
        .sum();
    Ok(total / samples.len() as f64)
}

/// Best matching pattern per sample, ties to the lowest index.
pub fn assign_patterns(bank: &PatternBank, samples: &[TrainingSample]) -> Result<Vec<usize>> {
    if bank.is_empty() {
        return Err(invalid("pattern bank is empty"));
    }
    for s in samples {
        if s.patch.len() != bank.side * bank.side {
            return Err(invalid("sample patch does not match the bank side"));
        }
    }
    Ok(samples
        .par_iter()
        .map(|s| bank.evaluate_unchecked(&s.patch).1)
        .collect())
}

/// L1-optimal non-negative pattern for one cluster, with its LP objective.
pub fn refit_pattern(cluster: &[&TrainingSample], side: usize) -> Result<(Pattern, f64)> {
    if cluster.is_empty() {
        return Err(Error::TrainingData("cannot refit an empty cluster".into()));
    }
    let rows: Vec<(Vec<f64>, f64)> = cluster
        .iter()
        .map(|s| (s.patch.iter().map(|&v| v as f64).collect(), s.target_cost))
        .collect();
    let (lp, layout) = l1_fit_program(&rows, true)?;
    let sol = solve(&lp)?.into_optimal()?;
    let weights: Vec<f64> = (0..side * side).map(|v| sol.values[layout.weight(v)]).collect();
    let mut constant = sol.values[layout.constant()];
    let floor: f64 = weights.iter().map(|w| w.min(0.0)).sum::<f64>() + constant;
    if floor < 0.0 {
        // round-off from the solve, bounded by the LP feasibility tolerance
        constant -= floor;
    }
    Ok((Pattern::new(side, weights, constant)?, sol.objective_value))
}

fn orientation_bin(angle: f64, n: usize) -> usize {
    ((angle.rem_euclid(TAU) / TAU * n as f64) as usize).min(n - 1)
}

/// Interior quantiles of `|κ|` splitting the samples into `bins` groups.
pub fn curvature_edges(samples: &[TrainingSample], bins: usize) -> Vec<f64> {
    let mut k: Vec<f64> = samples.iter().map(|s| s.kappa.abs()).collect();
    k.sort_by(f64::total_cmp);
    (1..bins).map(|b| k[b * k.len() / bins]).collect()
}

/// Bank of specials plus one L1 fit per orientation × curvature bin.
///
/// Learned pattern for orientation `o`, curvature bin `b` sits at index
/// `3 + o·n_curvature_bins + b`.
pub fn init_bank(samples: &[TrainingSample], cfg: &TrainingConfig) -> Result<PatternBank> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::TrainingData("no training samples".into()));
    }
    let edges = curvature_edges(samples, cfg.n_curvature_bins);
    let mut bins: Vec<Vec<&TrainingSample>> = vec![Vec::new(); cfg.n_patterns()];
    for s in samples {
        let o = orientation_bin(s.tangent_angle, cfg.n_orientations);
        let c = edges.partition_point(|&e| e <= s.kappa.abs());
        bins[o * cfg.n_curvature_bins + c].push(s);
    }
    if let Some(i) = bins.iter().position(|b| b.is_empty()) {
        return Err(Error::TrainingData(format!(
            "orientation {} / curvature bin {} received no samples",
            i / cfg.n_curvature_bins,
            i % cfg.n_curvature_bins
        )));
    }
    let fits: Vec<Pattern> = bins
        .par_iter()
        .map(|b| refit_pattern(b, cfg.side).map(|(p, _)| p))
        .collect::<Result<_>>()?;
    let mut bank = PatternBank::with_special_patterns(cfg.side, cfg.f_max, cfg.big)?;
    for p in fits {
        bank.push(p)?;
    }
    Ok(bank)
}

fn clusters<'a>(bank: &PatternBank, samples: &'a [TrainingSample], assignment: &[usize]) -> Vec<Vec<&'a TrainingSample>> {
    let mut out = vec![Vec::new(); bank.len()];
    for (s, &y) in samples.iter().zip(assignment) {
        out[y].push(s);
    }
    out
}

/// Iterative factor discovery.
///
/// Each iteration assigns samples to their best pattern and refits every
/// non-empty learned cluster. Refits that would raise the training error are
/// accepted greedily one pattern at a time, so the training error never
/// increases. Stops at `max_iterations` or when an iteration leaves the
/// assignment unchanged.
pub fn train_alg1(
    mut bank: PatternBank,
    train: &[TrainingSample],
    test: &[TrainingSample],
    max_iterations: usize,
) -> Result<(PatternBank, ErrorTrace)> {
    bank.validate()?;
    let mut trace = ErrorTrace::default();
    let mut err = evaluate_pointwise(&bank, train)?;
    trace.train.push(err);
    trace.test.push(evaluate_pointwise(&bank, test)?);
    let learned = bank.learned_indices();
    let mut assignment = assign_patterns(&bank, train)?;
    for it in 1..=max_iterations {
        let groups = clusters(&bank, train, &assignment);
        let refits: Vec<(usize, Pattern)> = learned
            .par_iter()
            .filter(|&&y| !groups[y].is_empty())
            .map(|&y| refit_pattern(&groups[y], bank.side).map(|(p, _)| (y, p)))
            .collect::<Result<_>>()?;

        let mut candidate = bank.clone();
        for (y, p) in &refits {
            candidate.patterns[*y] = p.clone();
        }
        let cand_err = evaluate_pointwise(&candidate, train)?;
        if cand_err <= err {
            bank = candidate;
            err = cand_err;
        } else {
            log::debug!("iteration {it}: joint refit raised error {err} -> {cand_err}, accepting greedily");
            for (y, p) in refits {
                let old = std::mem::replace(&mut bank.patterns[y], p);
                let e = evaluate_pointwise(&bank, train)?;
                if e <= err {
                    err = e;
                } else {
                    bank.patterns[y] = old;
                }
            }
        }
        trace.train.push(err);
        trace.test.push(evaluate_pointwise(&bank, test)?);
        let next = assign_patterns(&bank, train)?;
        log::info!("alg1 iteration {it}: train {err:.6}");
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok((bank, trace))
}

/// Extra sample batches drawn when an initialization bin comes up empty.
const RESAMPLE_ROUNDS: usize = 5;

/// Full pipeline: sample, initialize, iterate.
pub fn train_from_config(cfg: &TrainingConfig) -> Result<(PatternBank, ErrorTrace)> {
    cfg.validate()?;
    let train = generate_samples(cfg.n_samples, cfg.side, cfg.f_max, cfg.curvature_sampling, cfg.seed)?;
    let test = generate_samples(
        cfg.n_test_samples,
        cfg.side,
        cfg.f_max,
        cfg.curvature_sampling,
        cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;
    let mut train = train;
    let mut round = 0;
    let bank = loop {
        match init_bank(&train, cfg) {
            Err(Error::TrainingData(msg)) if round < RESAMPLE_ROUNDS => {
                round += 1;
                log::info!("{msg}; drawing {} more samples", cfg.n_samples);
                let extra = generate_samples(
                    cfg.n_samples,
                    cfg.side,
                    cfg.f_max,
                    cfg.curvature_sampling,
                    cfg.seed.wrapping_add(round as u64),
                )?;
                train.extend(extra);
            }
            other => break other?,
        }
    };
    train_alg1(bank, &train, &test, cfg.max_iterations)
}

/// Per-image statistics of the boundary windows under a fixed assignment.
#[derive(Debug, Clone)]
struct ImageAssignment {
    /// Windows assigned to each pattern.
    counts: Vec<usize>,
    /// `Σ_h ⟨w_y, x_h⟩` over the windows assigned to `y`.
    weight_part: Vec<f64>,
    /// Sum of assigned patches per pattern; only filled when weights are refit.
    patch_sums: Vec<Vec<f64>>,
}

fn assign_image(bank: &PatternBank, x: &BinaryLabeling, with_sums: bool) -> Result<ImageAssignment> {
    let locations = window_locations(x.dims(), bank.side)?;
    let k2 = bank.side * bank.side;
    let mut counts = vec![0; bank.len()];
    let mut weight_part = vec![0.0; bank.len()];
    let mut patch_sums = if with_sums { vec![vec![0.0; k2]; bank.len()] } else { Vec::new() };
    let mut patch = Vec::with_capacity(k2);
    for h in locations {
        if !is_boundary_location(x, h, bank.side) {
            continue;
        }
        x.patch_into(h, bank.side, &mut patch);
        let (cost, y) = bank.evaluate_unchecked(&patch);
        counts[y] += 1;
        weight_part[y] += cost - bank.patterns[y].constant;
        if with_sums {
            for (s, &p) in patch_sums[y].iter_mut().zip(&patch) {
                *s += p as f64;
            }
        }
    }
    Ok(ImageAssignment {
        counts,
        weight_part,
        patch_sums,
    })
}

/// `Σ_h E_h(x)` over boundary windows of every image.
pub fn model_totals(bank: &PatternBank, images: &[BinaryLabeling]) -> Result<Vec<f64>> {
    images
        .par_iter()
        .map(|x| crate::model::boundary_higher_order_sum(bank, x))
        .collect()
}

/// One evaluated shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub true_cost: f64,
    pub true_length: f64,
    pub model_cost: f64,
    pub boundary_count: usize,
}

impl ApproxRow {
    /// `(model − true) / true_length`.
    pub fn signed_relative_error(&self) -> f64 {
        (self.model_cost - self.true_cost) / self.true_length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxSummary {
    pub n: usize,
    /// Pearson correlation of model and true totals.
    pub correlation: f64,
    /// Same, on the per-length values.
    pub correlation_per_length: f64,
    pub mean_signed_relative_error: f64,
    pub mean_absolute_relative_error: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

/// Model totals against the ground-truth integrals.
pub fn evaluate_approximation(bank: &PatternBank, shapes: &[ShapeSample]) -> Result<(Vec<ApproxRow>, ApproxSummary)> {
    if shapes.is_empty() {
        return Err(invalid("no shapes to evaluate"));
    }
    let rows: Vec<ApproxRow> = shapes
        .par_iter()
        .map(|s| {
            Ok(ApproxRow {
                true_cost: s.true_total_cost,
                true_length: s.true_length,
                model_cost: crate::model::boundary_higher_order_sum(bank, s.labeling())?,
                boundary_count: s.boundary_count,
            })
        })
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&ApproxRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let n = rows.len() as f64;
    let summary = ApproxSummary {
        n: rows.len(),
        correlation: pearson(&col(&|r| r.model_cost), &col(&|r| r.true_cost)),
        correlation_per_length: pearson(
            &col(&|r| r.model_cost / r.true_length),
            &col(&|r| r.true_cost / r.true_length),
        ),
        mean_signed_relative_error: rows.iter().map(ApproxRow::signed_relative_error).sum::<f64>() / n,
        mean_absolute_relative_error: rows.iter().map(|r| r.signed_relative_error().abs()).sum::<f64>() / n,
    };
    Ok((rows, summary))
}

/// `Σ_i |Σ_h E_h(x^i) − t^i|`.
pub fn total_objective(bank: &PatternBank, images: &[BinaryLabeling], targets: &[f64]) -> Result<f64> {
    Ok(model_totals(bank, images)?
        .iter()
        .zip(targets)
        .map(|(m, t)| (m - t).abs())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alg2Config {
    pub refit_weights: bool,
    pub max_iterations: usize,
}

impl Default for Alg2Config {
    fn default() -> Self {
        Self {
            refit_weights: false,
            max_iterations: 10,
        }
    }
}

/// One joint LP over the learned patterns for a fixed per-window assignment.
fn joint_refit(
    bank: &PatternBank,
    assignments: &[ImageAssignment],
    targets: &[f64],
    refit_weights: bool,
) -> Result<PatternBank> {
    let learned = bank.learned_indices();
    let mut slot = vec![None; bank.len()];
    for (j, &y) in learned.iter().enumerate() {
        slot[y] = Some(j);
    }
    let k2 = bank.side * bank.side;
    // per learned pattern: [c] or [w (k2), c, ξ (k2)]
    let block = if refit_weights { 2 * k2 + 1 } else { 1 };
    let c_var = |j: usize| j * block + if refit_weights { k2 } else { 0 };
    let w_var = |j: usize, v: usize| j * block + v;
    let xi_var = |j: usize, v: usize| j * block + k2 + 1 + v;
    let r_var = |i: usize| learned.len() * block + i;
    let mut lp = LinearProgram::new(learned.len() * block + targets.len());

    for (j, &y) in learned.iter().enumerate() {
        if refit_weights {
            lp.set_free(c_var(j));
            for v in 0..k2 {
                lp.set_free(w_var(j, v));
                lp.set_bounds(xi_var(j, v), f64::NEG_INFINITY, 0.0);
                lp.add_constraint(vec![(xi_var(j, v), 1.0), (w_var(j, v), -1.0)], Relation::Le, 0.0);
            }
            let mut row: Vec<(usize, f64)> = (0..k2).map(|v| (xi_var(j, v), 1.0)).collect();
            row.push((c_var(j), 1.0));
            lp.add_constraint(row, Relation::Ge, 0.0);
        } else {
            let floor: f64 = bank.patterns[y].weights.iter().map(|w| w.min(0.0)).sum();
            lp.set_bounds(c_var(j), -floor, f64::INFINITY);
        }
    }
    for (i, (a, &t)) in assignments.iter().zip(targets).enumerate() {
        let mut fixed = 0.0;
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (y, &n) in a.counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            match slot[y] {
                None => fixed += a.weight_part[y] + n as f64 * bank.patterns[y].constant,
                Some(j) => {
                    terms.push((c_var(j), n as f64));
                    if refit_weights {
                        for (v, &s) in a.patch_sums[y].iter().enumerate() {
                            if s != 0.0 {
                                terms.push((w_var(j, v), s));
                            }
                        }
                    } else {
                        fixed += a.weight_part[y];
                    }
                }
            }
        }
        let r = r_var(i);
        lp.objective[r] = 1.0;
        // r ≥ ±(fixed + terms − t)
        let mut hi: Vec<(usize, f64)> = terms.iter().map(|&(j, v)| (j, -v)).collect();
        hi.push((r, 1.0));
        lp.add_constraint(hi, Relation::Ge, fixed - t);
        let mut lo = terms;
        lo.push((r, 1.0));
        lp.add_constraint(lo, Relation::Ge, t - fixed);
    }
    let sol = solve(&lp)?.into_optimal()?;
    let mut out = bank.clone();
    for (j, &y) in learned.iter().enumerate() {
        let p = &mut out.patterns[y];
        if refit_weights {
            for v in 0..k2 {
                p.weights[v] = sol.values[w_var(j, v)];
            }
        }
        p.constant = sol.values[c_var(j)];
        let floor: f64 = p.weights.iter().map(|w| w.min(0.0)).sum::<f64>() + p.constant;
        if floor < 0.0 {
            p.constant -= floor;
        }
    }
    Ok(out)
}

/// `(1−α)·from + α·to` over the learned patterns.
fn blend(from: &PatternBank, to: &PatternBank, alpha: f64) -> PatternBank {
    let mut out = from.clone();
    for y in from.learned_indices() {
        let (a, b) = (&from.patterns[y], &to.patterns[y]);
        let p = &mut out.patterns[y];
        for (w, (u, v)) in p.weights.iter_mut().zip(a.weights.iter().zip(&b.weights)) {
            *w = u + alpha * (v - u);
        }
        p.constant = a.constant + alpha * (b.constant - a.constant);
    }
    out
}

/// Overlap-aware recalibration of the bank against true shape totals.
///
/// Alternates per-window assignment with one joint LP over the learned
/// constants (and weights with `refit_weights`). A step that would raise the
/// objective is halved toward the previous bank. Specials stay frozen.
/// Returns the bank and the objective trace, entry 0 being the input bank.
pub fn train_alg2(
    images: &[BinaryLabeling],
    targets: &[f64],
    bank: &PatternBank,
    cfg: Alg2Config,
) -> Result<(PatternBank, Vec<f64>)> {
    if images.len() != targets.len() {
        return Err(invalid("one target total per image is required"));
    }
    bank.validate()?;
    let mut bank = bank.clone();
    let mut obj = total_objective(&bank, images, targets)?;
    let mut trace = vec![obj];
    for it in 1..=cfg.max_iterations {
        if obj == 0.0 {
            break;
        }
        let assignments: Vec<ImageAssignment> = images
            .par_iter()
            .map(|x| assign_image(&bank, x, cfg.refit_weights))
            .collect::<Result<_>>()?;
        let target = joint_refit(&bank, &assignments, targets, cfg.refit_weights)?;
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..30 {
            let trial = if alpha == 1.0 { target.clone() } else { blend(&bank, &target, alpha) };
            let o = total_objective(&trial, images, targets)?;
            if o <= obj {
                accepted = Some((trial, o));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, o)) = accepted else {
            break;
        };
        let gain = obj - o;
        bank = next;
        obj = o;
        trace.push(obj);
        log::info!("alg2 iteration {it}: objective {obj:.6} (step {alpha})");
        if gain <= 1e-12 * (1.0 + obj) {
            break;
        }
    }
    Ok((bank, trace))
}
