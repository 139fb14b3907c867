//! Binary PPM (P6) and PGM (P5) with maxval 255.

use std::path::Path;

use cpgsr_core::image::{FrameRGB, Plane};
use thiserror::Error;

use crate::error::{AppError, AppResult};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PnmError {
    #[error("bad magic, expected {expected}")]
    BadMagic { expected: &'static str },
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0}, only 255 is handled")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
}

fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn header(magic: &str, w: usize, h: usize) -> Vec<u8> {
    format!("{magic}\n{w} {h}\n255\n").into_bytes()
}

/// Parse `magic w h maxval` with `#` comments; returns dims and payload offset.
fn parse_header(bytes: &[u8], magic: &'static str) -> Result<(usize, usize, usize), PnmError> {
    if !bytes.starts_with(magic.as_bytes()) {
        return Err(PnmError::BadMagic { expected: magic });
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for f in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PnmError::BadHeader(format!("expected a number at byte {start}")))?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(PnmError::BadHeader("missing separator after maxval".into()));
    }
    if fields[2] != 255 {
        return Err(PnmError::UnsupportedMaxval(fields[2]));
    }
    if fields[0] == 0 || fields[1] == 0 {
        return Err(PnmError::BadHeader("zero dimension".into()));
    }
    Ok((fields[0] as usize, fields[1] as usize, pos + 1))
}

pub fn encode_ppm(f: &FrameRGB) -> Vec<u8> {
    let mut out = header("P6", f.width, f.height);
    let p = f.width * f.height;
    for i in 0..p {
        for c in 0..3 {
            out.push(to_u8(f.data[c * p + i] * 255.0));
        }
    }
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<FrameRGB, PnmError> {
    let (w, h, off) = parse_header(bytes, "P6")?;
    let p = w * h;
    let body = &bytes[off..];
    if body.len() < 3 * p {
        return Err(PnmError::Truncated {
            needed: 3 * p,
            have: body.len(),
        });
    }
    let mut data = vec![0.0f32; 3 * p];
    for i in 0..p {
        for c in 0..3 {
            data[c * p + i] = body[3 * i + c] as f32 / 255.0;
        }
    }
    Ok(FrameRGB::new(w, h, data).expect("sized above"))
}

/// Grayscale plane in 8-bit units.
pub fn encode_pgm(p: &Plane) -> Vec<u8> {
    let mut out = header("P5", p.width, p.height);
    out.extend(p.data.iter().map(|&v| to_u8(v)));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Plane, PnmError> {
    let (w, h, off) = parse_header(bytes, "P5")?;
    let body = &bytes[off..];
    if body.len() < w * h {
        return Err(PnmError::Truncated {
            needed: w * h,
            have: body.len(),
        });
    }
    Ok(Plane {
        width: w,
        height: h,
        data: body[..w * h].iter().map(|&b| b as f32).collect(),
    })
}

pub fn read_ppm(path: &Path) -> AppResult<FrameRGB> {
    decode_ppm(&super::read_bytes(path)?).map_err(|e| AppError::format(path, e))
}

pub fn write_ppm(path: &Path, f: &FrameRGB) -> AppResult<()> {
    super::write_bytes(path, &encode_ppm(f))
}

pub fn read_pgm(path: &Path) -> AppResult<Plane> {
    decode_pgm(&super::read_bytes(path)?).map_err(|e| AppError::format(path, e))
}

pub fn write_pgm(path: &Path, p: &Plane) -> AppResult<()> {
    super::write_bytes(path, &encode_pgm(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let data: Vec<f32> = (0..3 * 5 * 3).map(|i| (i * 17 % 256) as f32 / 255.0).collect();
        let f = FrameRGB::new(5, 3, data).unwrap();
        let bytes = encode_ppm(&f);
        assert!(bytes.starts_with(b"P6\n5 3\n255\n"));
        let g = decode_ppm(&bytes).unwrap();
        assert_eq!(encode_ppm(&g), bytes);
        assert!(f.data.iter().zip(&g.data).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn pgm_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 2 # dims\n255\n".to_vec();
        bytes.extend([0u8, 64, 128, 255]);
        let p = decode_pgm(&bytes).unwrap();
        assert_eq!(p.data, vec![0.0, 64.0, 128.0, 255.0]);
        assert_eq!(decode_pgm(&encode_pgm(&p)).unwrap(), p);
    }

    #[test]
    fn errors() {
        assert_eq!(decode_pgm(b"P6\n1 1\n255\n\0\0\0"), Err(PnmError::BadMagic { expected: "P5" }));
        assert_eq!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(PnmError::UnsupportedMaxval(65535)));
        assert_eq!(
            decode_ppm(b"P6\n2 1\n255\n\0\0\0"),
            Err(PnmError::Truncated { needed: 6, have: 3 })
        );
        assert!(matches!(decode_pgm(b"P5\nx 1\n255\n"), Err(PnmError::BadHeader(_))));
    }
}
