//! End-to-end inpainting and segmentation runs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::{infer_with, InferenceOptions, InferenceResult};
use crate::io::ColorImage;
use crate::model::{EnergyModel, PatternBank};
use crate::tasks::{fit_gmm, inpainting_unaries, segmentation_unaries, stroke_colors, GaussianMixture, SeedMask};

/// Components per colour model.
pub const DEFAULT_GMM_COMPONENTS: usize = 10;

pub fn inpainting_model(bank: &PatternBank, mask: &SeedMask) -> Result<EnergyModel> {
    EnergyModel::new(mask.dims(), inpainting_unaries(mask), Some(bank.clone()))
}

pub fn inpaint(
    bank: &PatternBank,
    mask: &SeedMask,
    opts: &InferenceOptions,
    progress: &mut dyn FnMut(usize, f64) -> bool,
) -> Result<(EnergyModel, InferenceResult)> {
    let model = inpainting_model(bank, mask)?;
    let result = infer_with(&model, opts, progress)?;
    Ok((model, result))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationSettings {
    pub lambda: f64,
    pub components: usize,
    pub seed: u64,
}

impl Default for SegmentationSettings {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            components: DEFAULT_GMM_COMPONENTS,
            seed: 0,
        }
    }
}

pub struct Segmentation {
    pub model: EnergyModel,
    pub result: InferenceResult,
    pub foreground: GaussianMixture,
    pub background: GaussianMixture,
}

/// Colour models fitted to the strokes, one per side; at most one component per
/// stroke pixel.
pub fn fit_stroke_models(
    image: &ColorImage,
    seeds: &SeedMask,
    components: usize,
    seed: u64,
) -> Result<(GaussianMixture, GaussianMixture)> {
    if seeds.dims() != image.dims {
        return Err(invalid("seed mask does not match the image"));
    }
    let (fg, bg) = stroke_colors(image, seeds);
    if fg.is_empty() || bg.is_empty() {
        return Err(invalid("strokes must mark at least one foreground and one background pixel"));
    }
    let (a, b) = rayon::join(
        || fit_gmm(&fg, components.min(fg.len()), seed),
        || fit_gmm(&bg, components.min(bg.len()), seed.wrapping_add(1)),
    );
    Ok((a?, b?))
}

/// Builds the segmentation energy; `λ = 0` drops the curvature prior.
pub fn segmentation_model(
    image: &ColorImage,
    seeds: &SeedMask,
    bank: &PatternBank,
    fg: &GaussianMixture,
    bg: &GaussianMixture,
    lambda: f64,
) -> Result<EnergyModel> {
    let unaries = segmentation_unaries(image, fg, bg, lambda, Some(seeds))?;
    let bank = if lambda > 0.0 { Some(bank.clone()) } else { None };
    EnergyModel::new(image.dims, unaries, bank)
}

pub fn segment(
    image: &ColorImage,
    seeds: &SeedMask,
    bank: &PatternBank,
    settings: &SegmentationSettings,
    opts: &InferenceOptions,
    progress: &mut dyn FnMut(usize, f64) -> bool,
) -> Result<Segmentation> {
    let (foreground, background) = fit_stroke_models(image, seeds, settings.components, settings.seed)?;
    let model = segmentation_model(image, seeds, bank, &foreground, &background, settings.lambda)?;
    let result = infer_with(&model, opts, progress)?;
    Ok(Segmentation {
        model,
        result,
        foreground,
        background,
    })
}
