//! Problem constructors: inpainting, colour segmentation and the
//! quantized-direction shortest-path baseline.

pub mod baseline;
pub mod gmm;
pub mod inpainting;
pub mod segmentation;
pub mod strokes;

pub use baseline::{baseline_optimal_path, baseline_transition_cost, DirectedEdgeGraph, Endpoint};
pub use gmm::{fit_gmm, GaussianComponent, GaussianMixture};
pub use inpainting::{inpainting_unaries, SeedMask, SeedTag};
pub use segmentation::{segmentation_unaries, stroke_colors};
pub use strokes::{rasterize_strokes, Stroke, StrokeScript};
