//! On-disk formats.

pub mod checkpoint;
pub mod manifest;
pub mod pnm;
pub mod yuv;

use std::path::Path;

use thiserror::Error;

use crate::error::{AppError, AppResult};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Yuv(#[from] yuv::YuvError),
    #[error(transparent)]
    Pnm(#[from] pnm::PnmError),
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error(transparent)]
    Manifest(#[from] manifest::ManifestError),
}

pub(crate) fn read_bytes(path: &Path) -> AppResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| AppError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}
