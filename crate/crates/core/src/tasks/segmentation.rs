use super::gmm::GaussianMixture;
use super::inpainting::{SeedMask, SeedTag};
use crate::error::{invalid, Result};
use crate::io::ColorImage;
use crate::model::BIG;

/// `θ_v(1) = −log p_FG(I_v) / λ`, `θ_v(0) = −log p_BG(I_v) / λ`.
///
/// Dividing the data term by `λ` is the same as scaling the prior by `λ`.
/// With `λ = 0` the likelihoods are used unscaled; callers then drop the
/// prior entirely. Seed pixels are hard-constrained.
pub fn segmentation_unaries(
    image: &ColorImage,
    fg: &GaussianMixture,
    bg: &GaussianMixture,
    lambda: f64,
    seeds: Option<&SeedMask>,
) -> Result<Vec<[f64; 2]>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("λ must be finite and non-negative"));
    }
    if let Some(s) = seeds {
        if s.dims() != image.dims {
            return Err(invalid("seed mask does not match the image"));
        }
    }
    let scale = if lambda > 0.0 { 1.0 / lambda } else { 1.0 };
    let lf = fg.log_density_many(&image.pixels)?;
    let lb = bg.log_density_many(&image.pixels)?;
    Ok((0..image.pixels.len())
        .map(|i| {
            match seeds.map(|s| s.tags()[i]) {
                Some(SeedTag::Foreground) => return [BIG, 0.0],
                Some(SeedTag::Background) => return [0.0, BIG],
                _ => {}
            }
            // clamp so an underflowed density stays finite and below BIG
            let t1 = (-lf[i] * scale).min(0.01 * BIG);
            let t0 = (-lb[i] * scale).min(0.01 * BIG);
            [t0, t1]
        })
        .collect())
}

/// Colours under foreground and background seeds, in row-major order.
pub fn stroke_colors(image: &ColorImage, seeds: &SeedMask) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (p, t) in image.pixels.iter().zip(seeds.tags()) {
        match t {
            SeedTag::Foreground => fg.push(*p),
            SeedTag::Background => bg.push(*p),
            SeedTag::Free => {}
        }
    }
    (fg, bg)
}
