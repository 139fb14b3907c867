//! Synthetic dataset generation on disk.

use std::path::Path;

use cpgsr_core::codec::CodecConfig;
use cpgsr_core::image::FrameRGB;
use cpgsr_core::resample::bicubic_downsample2;
use cpgsr_core::synth::synth_frame;
use cpgsr_core::train::degrade;

use crate::error::{AppError, AppResult};
use crate::io::manifest::{
    encode_plane, to_json, FrameEntry, Manifest, PriorPaths, PriorSidecar, MANIFEST_FILE, MANIFEST_VERSION,
};
use crate::io::{pnm, write_bytes, yuv};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateConfig {
    pub seed: u64,
    pub frames: usize,
    /// HR width and height; multiples of 64.
    pub width: usize,
    pub height: usize,
    pub codec: CodecConfig,
}

/// Round-trip through 8-bit PPM levels so files and in-memory frames agree.
pub fn quantize_rgb(f: &FrameRGB) -> FrameRGB {
    pnm::decode_ppm(&pnm::encode_ppm(f)).expect("encoder output parses")
}

/// Write frames, LR versions, priors and `manifest.json` under `out`.
///
/// Output bytes depend only on `cfg`.
pub fn simulate(out: &Path, cfg: &SimulateConfig) -> AppResult<Manifest> {
    if cfg.frames == 0 {
        return Err(AppError::Config("--frames must be at least 1".into()));
    }
    cfg.codec.validate().map_err(|e| AppError::Config(e.to_string()))?;
    let mut frames = Vec::with_capacity(cfg.frames);
    for i in 0..cfg.frames {
        let hr = quantize_rgb(
            &synth_frame(cfg.seed, i, cfg.width, cfg.height).map_err(|e| AppError::Config(e.to_string()))?,
        );
        let bicubic = bicubic_downsample2(&hr)?;
        let sim = degrade(&hr, &cfg.codec)?;
        let (lw, lh) = (bicubic.width, bicubic.height);
        let stem = format!("{i:04}");
        let entry = FrameEntry {
            index: i,
            hr_path: format!("hr/{stem}.ppm"),
            lr_bicubic_path: format!("lr_bicubic/{stem}.ppm"),
            lr_decoded_path: format!("lr_decoded/{stem}.yuv"),
            priors_paths: PriorPaths {
                prediction: format!("priors/{stem}.prediction.f32"),
                residual: format!("priors/{stem}.residual.f32"),
                partition: format!("priors/{stem}.partition.f32"),
                sidecar: format!("priors/{stem}.json"),
            },
            qp: cfg.codec.qp,
            hr_dims: [hr.width, hr.height],
            lr_dims: [lw, lh],
        };
        let p = &entry.priors_paths;
        pnm::write_ppm(&out.join(&entry.hr_path), &hr)?;
        pnm::write_ppm(&out.join(&entry.lr_bicubic_path), &bicubic)?;
        yuv::write(&out.join(&entry.lr_decoded_path), std::slice::from_ref(&sim.decoded))?;
        write_bytes(&out.join(&p.prediction), &encode_plane(&sim.priors.prediction))?;
        write_bytes(&out.join(&p.residual), &encode_plane(&sim.priors.residual))?;
        write_bytes(&out.join(&p.partition), &encode_plane(&sim.priors.partition))?;
        let padded = (
            lw.div_ceil(cfg.codec.max_cu) * cfg.codec.max_cu,
            lh.div_ceil(cfg.codec.max_cu) * cfg.codec.max_cu,
        );
        write_bytes(&out.join(&p.sidecar), &to_json(&PriorSidecar::from_priors(&sim.priors, padded)))?;
        frames.push(entry);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        frames,
    };
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}
