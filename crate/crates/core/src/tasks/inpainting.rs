use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{decode_pgm, encode_pgm};
use crate::model::{BinaryLabeling, Dims, BIG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedTag {
    Free,
    #[serde(alias = "fg")]
    Foreground,
    #[serde(alias = "bg")]
    Background,
}

impl SeedTag {
    /// PGM sample: 255 foreground, 0 background, 128 free.
    pub fn to_gray(self) -> u8 {
        match self {
            SeedTag::Foreground => 255,
            SeedTag::Background => 0,
            SeedTag::Free => 128,
        }
    }

    pub fn from_gray(v: u8) -> Option<Self> {
        match v {
            255 => Some(SeedTag::Foreground),
            0 => Some(SeedTag::Background),
            128 => Some(SeedTag::Free),
            _ => None,
        }
    }
}

/// Per-pixel constraint tags; one tag per pixel keeps `F` and `B` disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedMask {
    dims: Dims,
    tags: Vec<SeedTag>,
}

impl SeedMask {
    pub fn free(dims: Dims) -> Self {
        Self {
            dims,
            tags: vec![SeedTag::Free; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize) -> SeedTag) -> Self {
        let mut tags = Vec::with_capacity(dims.len());
        for y in 0..dims.height {
            for x in 0..dims.width {
                tags.push(f(x, y));
            }
        }
        Self { dims, tags }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn tags(&self) -> &[SeedTag] {
        &self.tags
    }

    pub fn get(&self, x: usize, y: usize) -> SeedTag {
        self.tags[self.dims.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, tag: SeedTag) {
        let i = self.dims.index(x, y);
        self.tags[i] = tag;
    }

    pub fn count(&self, tag: SeedTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    /// Whether `x` agrees with every constrained pixel.
    pub fn is_satisfied_by(&self, x: &BinaryLabeling) -> bool {
        x.dims() == self.dims
            && self.tags.iter().zip(x.labels()).all(|(t, &l)| match t {
                SeedTag::Foreground => l == 1,
                SeedTag::Background => l == 0,
                SeedTag::Free => true,
            })
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let data: Vec<u8> = self.tags.iter().map(|t| t.to_gray()).collect();
        encode_pgm(self.dims, &data)
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let g = decode_pgm(bytes)?;
        if g.maxval != 255 {
            return Err(Error::Format("seed masks must use maxval 255".into()));
        }
        let tags = g
            .data
            .iter()
            .map(|&v| {
                SeedTag::from_gray(v as u8)
                    .ok_or_else(|| Error::Format(format!("seed mask value {v} is not 0, 128 or 255")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { dims: g.dims, tags })
    }
}

/// `(BIG, 0)` on `F`, `(0, BIG)` on `B`, zero elsewhere.
pub fn inpainting_unaries(mask: &SeedMask) -> Vec<[f64; 2]> {
    mask.tags
        .iter()
        .map(|t| match t {
            SeedTag::Foreground => [BIG, 0.0],
            SeedTag::Background => [0.0, BIG],
            SeedTag::Free => [0.0, 0.0],
        })
        .collect()
}
