//! MAP inference on the pattern-switching pairwise reformulation.

pub mod icm;
pub mod pairwise;
pub mod restricted;
pub mod trws;

pub use icm::{block_icm, DEFAULT_BLOCK_SIZE};
pub use pairwise::{build_pairwise_model, PairwiseModel};
pub use restricted::{build_restricted_lp, dynamic_range, round_relaxed, RestrictedLp};
pub use trws::{
    bp_run, round_min_marginals, trws_run, trws_run_with, GammaRule, InferenceState, MinMarginals, Ordering,
    Passes, TrwsOptions,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp;
use crate::model::{BinaryLabeling, EnergyModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub trws: TrwsOptions,
    pub block_size: usize,
    /// Also solve the restricted LP and keep whichever labeling is better.
    pub restricted_lp: bool,
    pub relative_threshold: f64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            trws: TrwsOptions::default(),
            block_size: DEFAULT_BLOCK_SIZE,
            restricted_lp: false,
            relative_threshold: restricted::DEFAULT_RELATIVE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    MinMarginals,
    RestrictedLp,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub labeling: BinaryLabeling,
    pub energy: f64,
    pub lower_bound: f64,
    pub lower_bound_trace: Vec<f64>,
    pub passes: usize,
    pub min_marginals: MinMarginals,
    pub source: Source,
    /// Objective of the restricted LP when it was solved.
    pub lp_objective: Option<f64>,
    /// Why the restricted LP was requested but not solved.
    pub lp_skipped: Option<String>,
}

/// TRW-S, rounding and Block-ICM; optionally the restricted LP as a second candidate.
pub fn infer_with(
    model: &EnergyModel,
    opts: &InferenceOptions,
    progress: &mut dyn FnMut(usize, f64) -> bool,
) -> Result<InferenceResult> {
    let pm = build_pairwise_model(model);
    let (state, mm) = trws_run_with(&pm, &opts.trws, progress)?;
    let rounded = round_min_marginals(&mm, pm.dims)?;
    let mut labeling = block_icm(&pm, &rounded, opts.block_size)?;
    let mut energy = model.total_energy(&labeling)?;
    let mut source = Source::MinMarginals;
    let mut lp_objective = None;
    let mut lp_skipped = None;
    if opts.restricted_lp {
        let threshold = opts.relative_threshold * dynamic_range(&mm);
        match build_restricted_lp(&pm, &mm, threshold) {
            Ok(r) => {
                let sol = lp::solve(&r.lp)?.into_optimal()?;
                lp_objective = Some(sol.objective_value + r.offset);
                let relaxed = round_relaxed(&r.pixel_values(&sol.values), pm.dims)?;
                let candidate = block_icm(&pm, &relaxed, opts.block_size)?;
                let e = model.total_energy(&candidate)?;
                if e < energy {
                    labeling = candidate;
                    energy = e;
                    source = Source::RestrictedLp;
                }
            }
            // too few variables were fixed; the min-marginal labeling stands
            Err(e @ Error::LpTooLarge { .. }) => {
                log::warn!("skipping the restricted LP: {e}");
                lp_skipped = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(InferenceResult {
        labeling,
        energy,
        lower_bound: state.lower_bound_trace.last().copied().unwrap_or(f64::NEG_INFINITY),
        lower_bound_trace: state.lower_bound_trace,
        passes: state.passes,
        min_marginals: mm,
        source,
        lp_objective,
        lp_skipped,
    })
}

pub fn infer(model: &EnergyModel, opts: &InferenceOptions) -> Result<InferenceResult> {
    infer_with(model, opts, &mut |_, _| true)
}
