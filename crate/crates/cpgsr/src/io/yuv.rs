//! Raw planar 8-bit YUV 4:2:0 (I420): Y, then U, then V, frame after frame.

use std::path::Path;

use cpgsr_core::image::{FrameYUV420, Plane};
use thiserror::Error;

use crate::error::{AppError, AppResult};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum YuvError {
    #[error("odd or zero frame size {width}x{height}")]
    BadDims { width: usize, height: usize },
    #[error("truncated stream: {len} bytes is not a whole number of {frame}-byte frames")]
    Truncated { len: usize, frame: usize },
}

/// Bytes per frame: `w·h` luma plus two `w/2 · h/2` chroma planes.
pub fn frame_bytes(width: usize, height: usize) -> usize {
    width * height * 3 / 2
}

fn check_dims(width: usize, height: usize) -> Result<(), YuvError> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(YuvError::BadDims { width, height });
    }
    Ok(())
}

fn push_plane(out: &mut Vec<u8>, p: &Plane) {
    out.extend(p.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
}

/// Serialize frames, rounding samples to 8-bit.
pub fn encode(frames: &[FrameYUV420]) -> Result<Vec<u8>, YuvError> {
    let mut out = Vec::new();
    for f in frames {
        check_dims(f.width(), f.height())?;
        for p in f.planes() {
            push_plane(&mut out, p);
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], width: usize, height: usize) -> Result<Vec<FrameYUV420>, YuvError> {
    check_dims(width, height)?;
    let fb = frame_bytes(width, height);
    if bytes.len() % fb != 0 {
        return Err(YuvError::Truncated {
            len: bytes.len(),
            frame: fb,
        });
    }
    let plane = |data: &[u8], w: usize, h: usize| Plane {
        width: w,
        height: h,
        data: data.iter().map(|&b| b as f32).collect(),
    };
    let (ys, cs) = (width * height, width * height / 4);
    Ok(bytes
        .chunks_exact(fb)
        .map(|c| {
            FrameYUV420::new(
                plane(&c[..ys], width, height),
                plane(&c[ys..ys + cs], width / 2, height / 2),
                plane(&c[ys + cs..], width / 2, height / 2),
            )
            .expect("plane sizes follow from even dims")
        })
        .collect())
}

pub fn read(path: &Path, width: usize, height: usize) -> AppResult<Vec<FrameYUV420>> {
    let bytes = super::read_bytes(path)?;
    decode(&bytes, width, height).map_err(|e| AppError::format(path, e))
}

pub fn write(path: &Path, frames: &[FrameYUV420]) -> AppResult<()> {
    let bytes = encode(frames).map_err(|e| AppError::format(path, e))?;
    super::write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_arithmetic() {
        assert_eq!(frame_bytes(64, 64), 6144);
        assert_eq!(frame_bytes(1920, 1080), 3_110_400);
    }

    #[test]
    fn round_trip() {
        let bytes: Vec<u8> = (0..2 * frame_bytes(8, 4)).map(|i| (i * 7 % 256) as u8).collect();
        let frames = decode(&bytes, 8, 4).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].u.width, 4);
        assert_eq!(encode(&frames).unwrap(), bytes);
    }

    #[test]
    fn errors() {
        assert_eq!(
            decode(&[0; 47], 8, 4),
            Err(YuvError::Truncated { len: 47, frame: 48 })
        );
        assert!(matches!(decode(&[], 7, 4), Err(YuvError::BadDims { .. })));
        assert!(decode(&[], 8, 4).unwrap().is_empty());
    }
}
