//! PFM float images and gamma-mapped PPM previews.
//!
//! PFM stores 32-bit floats with rows ordered bottom to top; a negative
//! scale in the header marks little-endian payloads. In memory, planes are
//! `f64` with row 0 at the top, so only values representable in `f32`
//! survive a write exactly.

use crate::error::IoError;
use crate::radiance::{ImagePlanes, Plane};

pub const PREVIEW_GAMMA: f64 = 2.2;

#[derive(Clone, Debug, PartialEq)]
pub enum PfmImage {
    Gray(Plane),
    Color(ImagePlanes),
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, IoError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(IoError::MalformedHeader("header ended early".into()));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| IoError::MalformedHeader("non-ASCII header".into()))?;
    // exactly one whitespace byte separates the header from the payload
    *pos += 1;
    Ok(tok)
}

pub fn read_pfm(bytes: &[u8]) -> Result<PfmImage, IoError> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(IoError::MalformedHeader(format!("unknown magic '{m}'"))),
    };
    let dim = |s: &str| s.parse::<usize>().map_err(|_| IoError::MalformedHeader(format!("invalid dimension '{s}'")));
    let width = dim(header_token(bytes, &mut pos)?)?;
    let height = dim(header_token(bytes, &mut pos)?)?;
    let scale_tok = header_token(bytes, &mut pos)?;
    let scale: f64 = scale_tok.parse().map_err(|_| IoError::MalformedHeader(format!("invalid scale '{scale_tok}'")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(IoError::MalformedHeader("scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| IoError::MalformedHeader("dimensions overflow".into()))?;
    let payload = bytes.get(pos.min(bytes.len())..).unwrap_or(&[]);
    let expected = count.checked_mul(4).ok_or_else(|| IoError::MalformedHeader("dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(IoError::TruncatedPayload { expected, found: payload.len() });
    }
    let floats: Vec<f64> = payload[..expected]
        .chunks_exact(4)
        .map(|b| {
            let arr = [b[0], b[1], b[2], b[3]];
            (if little { f32::from_le_bytes(arr) } else { f32::from_be_bytes(arr) }) as f64
        })
        .collect();
    let mut planes = vec![vec![0.0; width * height]; channels];
    for row in 0..height {
        let dst_row = height - 1 - row;
        for col in 0..width {
            for (c, plane) in planes.iter_mut().enumerate() {
                plane[dst_row * width + col] = floats[(row * width + col) * channels + c];
            }
        }
    }
    if channels == 1 {
        Ok(PfmImage::Gray(Plane::new(width, height, planes.pop().expect("one plane"))?))
    } else {
        let b = planes.pop().expect("three planes");
        let g = planes.pop().expect("three planes");
        let r = planes.pop().expect("three planes");
        Ok(PfmImage::Color(ImagePlanes::new(width, height, [r, g, b])?))
    }
}

fn encode(width: usize, height: usize, planes: &[&[f64]]) -> Vec<u8> {
    let magic = if planes.len() == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    for row in (0..height).rev() {
        for col in 0..width {
            for p in planes {
                out.extend_from_slice(&(p[row * width + col] as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Little-endian PFM.
pub fn write_pfm(img: &PfmImage) -> Vec<u8> {
    match img {
        PfmImage::Gray(p) => encode(p.width, p.height, &[&p.data]),
        PfmImage::Color(c) => {
            let (w, h) = c.dims();
            encode(w, h, &[c.channel(0), c.channel(1), c.channel(2)])
        }
    }
}

/// 8-bit binary PPM with `v^(1/2.2)` tone mapping, clamped to `[0, 255]`.
pub fn write_ppm_preview(img: &ImagePlanes) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for k in 0..w * h {
        for c in img.pixel(k) {
            let v = c.max(0.0).powf(1.0 / PREVIEW_GAMMA) * 255.0;
            out.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Reads a P6 preview back to linear radiance (gamma undone).
pub fn read_ppm_preview(bytes: &[u8]) -> Result<ImagePlanes, IoError> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != "P6" {
        return Err(IoError::MalformedHeader("expected P6".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| IoError::MalformedHeader(format!("invalid number '{s}'")));
    let w = num(header_token(bytes, &mut pos)?)?;
    let h = num(header_token(bytes, &mut pos)?)?;
    if num(header_token(bytes, &mut pos)?)? != 255 {
        return Err(IoError::MalformedHeader("only 8-bit PPM is supported".into()));
    }
    let n = w.checked_mul(h).and_then(|n| n.checked_mul(3)).ok_or_else(|| IoError::MalformedHeader("dimensions overflow".into()))?;
    let payload = bytes.get(pos.min(bytes.len())..).unwrap_or(&[]);
    if payload.len() < n {
        return Err(IoError::TruncatedPayload { expected: n, found: payload.len() });
    }
    let ch = [0, 1, 2].map(|c| (0..w * h).map(|k| (payload[3 * k + c] as f64 / 255.0).powf(PREVIEW_GAMMA)).collect());
    Ok(ImagePlanes::new(w, h, ch)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_pixel_layout() {
        let img = PfmImage::Gray(Plane::new(1, 1, vec![0.5]).unwrap());
        let bytes = write_pfm(&img);
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[..12], b"Pf\n1 1\n-1.0\n");
        assert_eq!(read_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn rows_are_flipped_on_disk() {
        let img = PfmImage::Gray(Plane::new(1, 2, vec![1.0, 2.0]).unwrap());
        let bytes = write_pfm(&img);
        assert_eq!(&bytes[bytes.len() - 8..bytes.len() - 4], &2.0f32.to_le_bytes());
    }

    #[test]
    fn truncated() {
        let mut bytes = write_pfm(&PfmImage::Gray(Plane::new(2, 2, vec![0.0; 4]).unwrap()));
        bytes.pop();
        assert!(matches!(read_pfm(&bytes), Err(IoError::TruncatedPayload { expected: 16, found: 15 })));
        assert!(matches!(read_pfm(b"P7\n1 1\n-1\n"), Err(IoError::MalformedHeader(_))));
    }

    #[test]
    fn preview_clamps() {
        let img = ImagePlanes::new(2, 1, [vec![0.0, 4.0], vec![1.0, 0.5], vec![0.25, 0.0]]).unwrap();
        let bytes = write_ppm_preview(&img);
        let px = &bytes[bytes.len() - 6..];
        assert_eq!(px[0], 0);
        assert_eq!(px[1], 255);
        assert_eq!(px[3], 255);
        let back = read_ppm_preview(&bytes).unwrap();
        assert!((back.pixel(0)[1] - 1.0).abs() < 1e-12);
    }
}
