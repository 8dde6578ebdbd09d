//! Disc-stamped polyline strokes to seed masks.

use serde::{Deserialize, Serialize};

use super::inpainting::{SeedMask, SeedTag};
use crate::error::{invalid, Result};
use crate::model::Dims;

/// A polyline in pixel coordinates; pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<[f64; 2]>,
    pub radius: f64,
    pub tag: SeedTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeScript {
    pub width: usize,
    pub height: usize,
    pub strokes: Vec<Stroke>,
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Tags every pixel whose center lies within `radius` of the polyline.
/// Strokes apply in order, so later strokes overwrite earlier tags.
pub fn rasterize_strokes(dims: Dims, strokes: &[Stroke]) -> Result<SeedMask> {
    let mut mask = SeedMask::free(dims);
    for s in strokes {
        if s.points.is_empty() || !(s.radius >= 0.0) || s.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("strokes need at least one finite point and a non-negative radius"));
        }
        let segments: Vec<([f64; 2], [f64; 2])> = if s.points.len() == 1 {
            vec![(s.points[0], s.points[0])]
        } else {
            s.points.windows(2).map(|w| (w[0], w[1])).collect()
        };
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &s.points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k] - s.radius);
                hi[k] = hi[k].max(p[k] + s.radius);
            }
        }
        let range = |lo: f64, hi: f64, n: usize| {
            let a = (lo - 0.5).floor().max(0.0) as usize;
            let b = ((hi - 0.5).ceil() + 1.0).clamp(0.0, n as f64) as usize;
            a..b
        };
        for y in range(lo[1], hi[1], dims.height) {
            for x in range(lo[0], hi[0], dims.width) {
                let c = [x as f64 + 0.5, y as f64 + 0.5];
                if segments.iter().any(|&(a, b)| segment_distance(c, a, b) <= s.radius) {
                    mask.set(x, y, s.tag);
                }
            }
        }
    }
    Ok(mask)
}

impl StrokeScript {
    pub fn rasterize(&self) -> Result<SeedMask> {
        rasterize_strokes(Dims::new(self.width, self.height), &self.strokes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_covers_the_unit_disc() {
        let dims = Dims::new(7, 7);
        let s = Stroke {
            points: vec![[3.5, 3.5]],
            radius: 1.0,
            tag: SeedTag::Foreground,
        };
        let m = rasterize_strokes(dims, &[s]).unwrap();
        assert_eq!(m.count(SeedTag::Foreground), 5);
        assert_eq!(m.get(3, 3), SeedTag::Foreground);
        assert_eq!(m.get(4, 4), SeedTag::Free);
    }

    #[test]
    fn later_strokes_overwrite() {
        let dims = Dims::new(10, 4);
        let fg = Stroke {
            points: vec![[0.5, 1.5], [9.5, 1.5]],
            radius: 0.5,
            tag: SeedTag::Foreground,
        };
        let bg = Stroke { tag: SeedTag::Background, ..fg.clone() };
        let m = rasterize_strokes(dims, &[fg, bg]).unwrap();
        assert_eq!(m.count(SeedTag::Foreground), 0);
        assert_eq!(m.count(SeedTag::Background), 10);
    }

    #[test]
    fn tags_parse_from_short_names() {
        let s: Stroke = serde_json::from_str(r#"{"points":[[1,1]],"radius":2,"tag":"bg"}"#).unwrap();
        assert_eq!(s.tag, SeedTag::Background);
    }
}
