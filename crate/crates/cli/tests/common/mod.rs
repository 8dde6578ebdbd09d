#![allow(dead_code)]

use curvemrf::io::{encode_pgm, encode_ppm, ColorImage};
use curvemrf::{Dims, PatternBank};

pub fn bank() -> PatternBank {
    PatternBank::cutoff_only(4, 2.0).unwrap()
}

/// Red disk of radius 7 on blue, centred in a `side`×`side` image.
pub fn disk_image(side: usize) -> Vec<u8> {
    let c = side as f64 / 2.0;
    let pixels = (0..side * side)
        .map(|i| {
            let (x, y) = ((i % side) as f64 + 0.5, (i / side) as f64 + 0.5);
            if (x - c).hypot(y - c) < 7.0 {
                [0.8, 0.15, 0.15]
            } else {
                [0.1, 0.1, 0.8]
            }
        })
        .collect();
    encode_ppm(&ColorImage::new(Dims::new(side, side), pixels).unwrap())
}

/// Foreground dot at the centre, background along the left column.
pub fn disk_strokes(side: usize, with_bg: bool) -> Vec<u8> {
    let c = side as f64 / 2.0;
    let data: Vec<u8> = (0..side * side)
        .map(|i| {
            let (x, y) = (i % side, i / side);
            if (x as f64 + 0.5 - c).hypot(y as f64 + 0.5 - c) < 2.0 {
                255
            } else if with_bg && x < 2 {
                0
            } else {
                128
            }
        })
        .collect();
    encode_pgm(Dims::new(side, side), &data)
}
