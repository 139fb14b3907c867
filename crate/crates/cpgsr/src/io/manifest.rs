//! Dataset index and per-frame prior files.
//!
//! A dataset directory holds `manifest.json` plus the files it references by
//! paths relative to the manifest. Prior planes are headerless little-endian
//! `f32` rasters at LR resolution; their sidecar JSON carries the shapes, the
//! QP, the padded coding size and the coding-unit rectangles.

use std::path::{Path, PathBuf};

use cpgsr_core::codec::{CodingPriors, CuRect, Partition};
use cpgsr_core::image::{FrameRGB, FrameYUV420, Plane};
use cpgsr_core::train::FrameSample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{pnm, yuv};
use crate::error::{AppError, AppResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),
    #[error("frame {frame}: referenced file {path} does not exist")]
    MissingFile { frame: usize, path: String },
    #[error("frame {frame}: {what} is {got:?}, expected {expected:?}")]
    DimMismatch {
        frame: usize,
        what: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("frame {frame}: {detail}")]
    Inconsistent { frame: usize, detail: String },
    #[error("raw plane holds {len} bytes, expected {expected}")]
    PlaneSize { len: usize, expected: usize },
    #[error("manifest lists no frames")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorPaths {
    pub prediction: String,
    pub residual: String,
    pub partition: String,
    pub sidecar: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    /// Ground-truth HR frame (PPM).
    pub hr_path: String,
    /// Bicubic ×½ of the HR frame before coding (PPM).
    pub lr_bicubic_path: String,
    /// Codec output (one raw YUV 4:2:0 frame).
    pub lr_decoded_path: String,
    pub priors_paths: PriorPaths,
    pub qp: u32,
    /// HR `[width, height]`.
    pub hr_dims: [usize; 2],
    /// LR `[width, height]`.
    pub lr_dims: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSidecar {
    pub qp: u32,
    /// LR `[width, height]` of every prior plane.
    pub dims: [usize; 2],
    /// Coding size after edge padding to whole largest CUs.
    pub padded_dims: [usize; 2],
    /// Luma coding units as `[x, y, size]` in padded coordinates.
    pub cus: Vec<[usize; 3]>,
}

impl PriorSidecar {
    pub fn from_priors(p: &CodingPriors, padded: (usize, usize)) -> Self {
        PriorSidecar {
            qp: p.qp,
            dims: [p.width(), p.height()],
            padded_dims: [padded.0, padded.1],
            cus: p.cus.iter().map(|c| [c.x, c.y, c.size]).collect(),
        }
    }

    pub fn partition(&self) -> Partition {
        Partition {
            padded_width: self.padded_dims[0],
            padded_height: self.padded_dims[1],
            cus: self.cus.iter().map(|&[x, y, size]| CuRect { x, y, size }).collect(),
        }
    }
}

/// Fully loaded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedFrame {
    pub index: usize,
    pub hr: FrameRGB,
    pub lr_bicubic: FrameRGB,
    pub decoded: FrameYUV420,
    pub priors: CodingPriors,
}

impl LoadedFrame {
    pub fn sample(&self) -> AppResult<FrameSample> {
        Ok(FrameSample::from_frames(&self.hr, &self.decoded, &self.priors)?)
    }
}

pub fn encode_plane(p: &Plane) -> Vec<u8> {
    p.data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_plane(bytes: &[u8], width: usize, height: usize) -> Result<Plane, ManifestError> {
    let expected = 4 * width * height;
    if bytes.len() != expected {
        return Err(ManifestError::PlaneSize {
            len: bytes.len(),
            expected,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Plane { width, height, data })
}

fn json_err(e: serde_json::Error) -> ManifestError {
    ManifestError::Json(e.to_string())
}

/// Pretty JSON with a trailing newline; the byte form is a pure function of the value.
pub fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("plain data serializes");
    s.push(b'\n');
    s
}

impl Manifest {
    /// Manifest file inside a dataset directory, or the path itself if it names a file.
    pub fn locate(path: &Path) -> PathBuf {
        if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ManifestError> {
        let m: Manifest = serde_json::from_slice(bytes).map_err(json_err)?;
        if m.version != MANIFEST_VERSION {
            return Err(ManifestError::UnsupportedVersion(m.version));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> AppResult<()> {
        super::write_bytes(path, &to_json(self))
    }

    /// Parse and check that every referenced file exists with the recorded dims.
    pub fn load(path: &Path) -> AppResult<(Self, PathBuf)> {
        let file = Self::locate(path);
        let m = Self::from_json(&super::read_bytes(&file)?).map_err(|e| AppError::format(&file, e))?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate(&root).map_err(|e| AppError::format(&file, e))?;
        Ok((m, root))
    }

    /// Cheap structural checks; file contents are checked when frames are loaded.
    pub fn validate(&self, root: &Path) -> Result<(), ManifestError> {
        if self.frames.is_empty() {
            return Err(ManifestError::Empty);
        }
        for f in &self.frames {
            let p = &f.priors_paths;
            for rel in [&f.hr_path, &f.lr_bicubic_path, &f.lr_decoded_path, &p.prediction, &p.residual, &p.partition, &p.sidecar] {
                if !root.join(rel).is_file() {
                    return Err(ManifestError::MissingFile {
                        frame: f.index,
                        path: rel.clone(),
                    });
                }
            }
            let expected = (f.hr_dims[0] / 2, f.hr_dims[1] / 2);
            let got = (f.lr_dims[0], f.lr_dims[1]);
            if got != expected || f.hr_dims[0] % 2 != 0 || f.hr_dims[1] % 2 != 0 {
                return Err(ManifestError::DimMismatch {
                    frame: f.index,
                    what: "lr_dims".into(),
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    pub fn load_frame(&self, root: &Path, i: usize) -> AppResult<LoadedFrame> {
        let f = self.frames.get(i).ok_or_else(|| {
            AppError::Config(format!("frame {i} out of range (manifest has {})", self.frames.len()))
        })?;
        let [hw, hh] = f.hr_dims;
        let [lw, lh] = f.lr_dims;
        let dim_check = |path: &Path, what: &str, expected: (usize, usize), got: (usize, usize)| {
            if expected == got {
                Ok(())
            } else {
                Err(AppError::format(
                    path,
                    ManifestError::DimMismatch {
                        frame: f.index,
                        what: what.into(),
                        expected,
                        got,
                    },
                ))
            }
        };

        let hr_path = root.join(&f.hr_path);
        let hr = pnm::read_ppm(&hr_path)?;
        dim_check(&hr_path, "HR frame", (hw, hh), (hr.width, hr.height))?;
        let bic_path = root.join(&f.lr_bicubic_path);
        let lr_bicubic = pnm::read_ppm(&bic_path)?;
        dim_check(&bic_path, "bicubic LR frame", (lw, lh), (lr_bicubic.width, lr_bicubic.height))?;
        let dec_path = root.join(&f.lr_decoded_path);
        let mut decoded = yuv::read(&dec_path, lw, lh)?;
        if decoded.len() != 1 {
            return Err(AppError::format(
                &dec_path,
                ManifestError::Inconsistent {
                    frame: f.index,
                    detail: format!("expected one decoded frame, found {}", decoded.len()),
                },
            ));
        }
        let decoded = decoded.remove(0);

        let side_path = root.join(&f.priors_paths.sidecar);
        let sidecar: PriorSidecar = serde_json::from_slice(&super::read_bytes(&side_path)?)
            .map_err(|e| AppError::format(&side_path, json_err(e)))?;
        dim_check(&side_path, "prior dims", (lw, lh), (sidecar.dims[0], sidecar.dims[1]))?;
        if sidecar.qp != f.qp {
            return Err(AppError::format(
                &side_path,
                ManifestError::Inconsistent {
                    frame: f.index,
                    detail: format!("sidecar qp {} differs from manifest qp {}", sidecar.qp, f.qp),
                },
            ));
        }
        let plane = |rel: &str| -> AppResult<Plane> {
            let path = root.join(rel);
            decode_plane(&super::read_bytes(&path)?, lw, lh).map_err(|e| AppError::format(&path, e))
        };
        let prediction = plane(&f.priors_paths.prediction)?;
        let residual = plane(&f.priors_paths.residual)?;
        let partition = plane(&f.priors_paths.partition)?;
        let part = sidecar.partition();
        if part.map_plane(lw, lh) != partition {
            return Err(AppError::format(
                root.join(&f.priors_paths.partition),
                ManifestError::Inconsistent {
                    frame: f.index,
                    detail: "partition plane disagrees with the sidecar CU list".into(),
                },
            ));
        }
        Ok(LoadedFrame {
            index: f.index,
            hr,
            lr_bicubic,
            decoded,
            priors: CodingPriors {
                qp: sidecar.qp,
                prediction,
                residual,
                partition,
                cus: part.cus,
            },
        })
    }

    pub fn load_all(&self, root: &Path) -> AppResult<Vec<LoadedFrame>> {
        (0..self.frames.len()).map(|i| self.load_frame(root, i)).collect()
    }
}
