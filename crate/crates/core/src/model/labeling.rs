use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Grid extent in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }
}

/// Top-left corner of a K×K window, `x` is the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Anchor {
    pub x: usize,
    pub y: usize,
}

impl Anchor {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// A {0,1} label per pixel, stored row-major. 1 is foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryLabeling {
    dims: Dims,
    labels: Vec<u8>,
}

impl BinaryLabeling {
    pub fn new(dims: Dims) -> Result<Self> {
        if dims.width == 0 || dims.height == 0 {
            return Err(invalid(format!(
                "labeling must be at least 1x1, got {}x{}",
                dims.width, dims.height
            )));
        }
        Ok(Self {
            dims,
            labels: vec![0; dims.len()],
        })
    }

    pub fn from_labels(dims: Dims, labels: Vec<u8>) -> Result<Self> {
        if dims.width == 0 || dims.height == 0 {
            return Err(invalid("labeling must be at least 1x1"));
        }
        if labels.len() != dims.len() {
            return Err(invalid(format!(
                "expected {} labels, got {}",
                dims.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(invalid(format!("label {bad} is not binary")));
        }
        Ok(Self { dims, labels })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut lab = Self::new(dims)?;
        for y in 0..dims.height {
            for x in 0..dims.width {
                lab.labels[dims.index(x, y)] = f(x, y) as u8;
            }
        }
        Ok(lab)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[self.dims.index(x, y)]
    }

    #[inline]
    pub fn at(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn set(&mut self, x: usize, y: usize, label: bool) {
        let i = self.dims.index(x, y);
        self.labels[i] = label as u8;
    }

    pub fn set_index(&mut self, index: usize, label: bool) {
        self.labels[index] = label as u8;
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Copies the K×K window at `anchor` into `out` (row-major).
    pub fn patch_into(&self, anchor: Anchor, side: usize, out: &mut Vec<u8>) {
        out.clear();
        for dy in 0..side {
            let row = (anchor.y + dy) * self.dims.width + anchor.x;
            out.extend_from_slice(&self.labels[row..row + side]);
        }
    }

    pub fn patch(&self, anchor: Anchor, side: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(side * side);
        self.patch_into(anchor, side, &mut out);
        out
    }
}
