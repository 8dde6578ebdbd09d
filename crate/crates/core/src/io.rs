//! Binary PGM/PPM codecs and small text outputs.

use crate::error::{Error, Result};
use crate::inference::MinMarginals;
use crate::model::{BinaryLabeling, Dims, BIG};

/// RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub dims: Dims,
    pub pixels: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(dims: Dims, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if pixels.len() != dims.len() {
            return Err(Error::Format("pixel count does not match dimensions".into()));
        }
        Ok(Self { dims, pixels })
    }
}

/// A decoded greyscale image; samples are kept at their file depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray {
    pub dims: Dims,
    pub maxval: u16,
    pub data: Vec<u16>,
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u16,
    offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let bad = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 2 {
        return Err(bad("file too short"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut i = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(i) {
                Some(b'#') => {
                    while i < bytes.len() && bytes[i] != b'\n' {
                        i += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => i += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if start == i {
            return Err(bad("expected a number in the header"));
        }
        *f = std::str::from_utf8(&bytes[start..i])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header number out of range"))?;
    }
    match bytes.get(i) {
        Some(c) if c.is_ascii_whitespace() => i += 1,
        _ => return Err(bad("missing whitespace after header")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad("zero-sized image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval: maxval as u16,
        offset: i,
    })
}

fn read_samples(bytes: &[u8], h: &Header, count: usize) -> Result<Vec<u16>> {
    let wide = h.maxval > 255;
    let need = count * if wide { 2 } else { 1 };
    let body = &bytes[h.offset..];
    if body.len() < need {
        return Err(Error::Format("truncated pixel data".into()));
    }
    let data: Vec<u16> = if wide {
        body[..need].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        body[..need].iter().map(|&b| b as u16).collect()
    };
    if data.iter().any(|&v| v > h.maxval) {
        return Err(Error::Format("sample exceeds maxval".into()));
    }
    Ok(data)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Gray> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let dims = Dims::new(h.width, h.height);
    let data = read_samples(bytes, &h, dims.len())?;
    Ok(Gray {
        dims,
        maxval: h.maxval,
        data,
    })
}

pub fn encode_pgm(dims: Dims, data: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", dims.width, dims.height).into_bytes();
    out.extend_from_slice(data);
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ColorImage> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(Error::Format("not a binary PPM (P6)".into()));
    }
    let dims = Dims::new(h.width, h.height);
    let data = read_samples(bytes, &h, 3 * dims.len())?;
    let m = h.maxval as f64;
    let pixels = data
        .chunks(3)
        .map(|c| [c[0] as f64 / m, c[1] as f64 / m, c[2] as f64 / m])
        .collect();
    ColorImage::new(dims, pixels)
}

pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.dims.width, img.dims.height).into_bytes();
    for p in &img.pixels {
        for &c in p {
            out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

/// Foreground is 255, background 0.
pub fn labeling_to_pgm(x: &BinaryLabeling) -> Vec<u8> {
    let data: Vec<u8> = x.labels().iter().map(|&l| if l == 1 { 255 } else { 0 }).collect();
    encode_pgm(x.dims(), &data)
}

/// Samples above half of maxval are foreground.
pub fn labeling_from_pgm(bytes: &[u8]) -> Result<BinaryLabeling> {
    let g = decode_pgm(bytes)?;
    let half = g.maxval / 2;
    BinaryLabeling::from_labels(g.dims, g.data.iter().map(|&v| (v > half) as u8).collect())
}

/// `θ̂_v(0) − θ̂_v(1)` mapped linearly from `[−R, R]` to `[0, 255]`, where `R`
/// is the largest magnitude not caused by a hard constraint. Zero maps to 128.
pub fn min_marginal_map(mm: &MinMarginals, dims: Dims) -> Vec<u8> {
    let d = mm.pixel_differences();
    let r = d
        .iter()
        .filter(|v| v.is_finite() && v.abs() < 0.5 * BIG)
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let data: Vec<u8> = d
        .iter()
        .map(|&v| {
            if r == 0.0 || !v.is_finite() {
                return if v > 0.0 { 255 } else if v < 0.0 { 0 } else { 128 };
            }
            let t = (v / r).clamp(-1.0, 1.0);
            (128.0 + t * 127.0).round() as u8
        })
        .collect();
    encode_pgm(dims, &data)
}

/// `pass,lower_bound` rows with a header.
pub fn lower_bound_csv(trace: &[f64]) -> String {
    let mut s = String::from("pass,lower_bound\n");
    for (i, lb) in trace.iter().enumerate() {
        s.push_str(&format!("{},{:.17e}\n", i + 1, lb));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_with_comment() {
        let x = BinaryLabeling::from_fn(Dims::new(3, 2), |x, y| x == y).unwrap();
        let bytes = labeling_to_pgm(&x);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(labeling_from_pgm(&bytes).unwrap(), x);
        let commented = b"P5\n# made by hand\n2 1\n255\n\xff\x00";
        let y = labeling_from_pgm(commented).unwrap();
        assert_eq!(y.labels(), &[1, 0]);
    }

    #[test]
    fn ppm_round_trip() {
        let img = ColorImage::new(Dims::new(2, 1), vec![[1.0, 0.0, 0.2], [0.0, 0.4, 1.0]]).unwrap();
        let back = decode_ppm(&encode_ppm(&img)).unwrap();
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0);
            }
        }
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode_ppm(b"P6\n1 1\n").is_err());
        assert!(decode_pgm(b"P5\n1 1\n7\n\x09").is_err());
    }

    #[test]
    fn sixteen_bit_pgm() {
        let g = decode_pgm(b"P5\n1 1\n1000\n\x03\xe8").unwrap();
        assert_eq!(g.data, vec![1000]);
    }
}
