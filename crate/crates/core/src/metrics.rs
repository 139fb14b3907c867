//! PSNR and SSIM on 8-bit-scaled planes.

use alloc::vec::Vec;

use num_traits::Float;

use crate::image::{FrameYUV420, Plane};
use crate::{Error, Result};

/// PSNR reported for identical planes.
pub const PSNR_CAP_DB: f64 = 100.0;

fn same_dims(a: &Plane, b: &Plane, op: &'static str) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape(
            op,
            alloc::format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height),
        ));
    }
    Ok(())
}

pub fn mse(a: &Plane, b: &Plane) -> Result<f64> {
    same_dims(a, b, "mse")?;
    if a.data.is_empty() {
        return Err(Error::invalid("mse", "empty plane"));
    }
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(s / a.data.len() as f64)
}

/// `10·log10(peak² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr_plane(a: &Plane, b: &Plane, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * Float::log10(peak * peak / m)).min(PSNR_CAP_DB))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = Float::exp(-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(src: &[f64], width: usize, height: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (width - SSIM_WINDOW + 1, height - SSIM_WINDOW + 1);
    let mut tmp = alloc::vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            let row = &src[y * width + x..y * width + x + SSIM_WINDOW];
            tmp[y * ow + x] = row.iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = alloc::vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM and its luminance / contrast / structure factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimTerms {
    pub ssim: f64,
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
}

/// Gaussian-window SSIM (11×11, σ = 1.5, K1 = 0.01, K2 = 0.03, L = 255)
/// averaged over every valid window position.
pub fn ssim_terms(a: &Plane, b: &Plane) -> Result<SsimTerms> {
    same_dims(a, b, "ssim")?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            alloc::format!("plane {}x{} smaller than the 11x11 window", a.width, a.height),
        ));
    }
    let (w, h) = (a.width, a.height);
    let k = gaussian_window();
    let x: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, w, h, &k);
    let my = filter_valid(&y, w, h, &k);
    let sxx = filter_valid(&xx, w, h, &k);
    let syy = filter_valid(&yy, w, h, &k);
    let sxy = filter_valid(&xy, w, h, &k);

    let c1 = (K1 * L) * (K1 * L);
    let c2 = (K2 * L) * (K2 * L);
    let c3 = c2 / 2.0;
    let (mut ss, mut sl, mut sc, mut st) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = (sxx[i] - ux * ux).max(0.0);
        let vy = (syy[i] - uy * uy).max(0.0);
        let cov = sxy[i] - ux * uy;
        let (dx, dy) = (Float::sqrt(vx), Float::sqrt(vy));
        let l = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
        let c = (2.0 * dx * dy + c2) / (vx + vy + c2);
        let s = (cov + c3) / (dx * dy + c3);
        ss += l * (2.0 * cov + c2) / (vx + vy + c2);
        sl += l;
        sc += c;
        st += s;
    }
    let n = mx.len() as f64;
    Ok(SsimTerms {
        ssim: ss / n,
        luminance: sl / n,
        contrast: sc / n,
        structure: st / n,
    })
}

pub fn ssim_y(a: &Plane, b: &Plane) -> Result<f64> {
    Ok(ssim_terms(a, b)?.ssim)
}

/// Per-frame evaluation row in the YUV 4:2:0 domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    pub ssim: f64,
}

pub fn frame_metrics(reference: &FrameYUV420, test: &FrameYUV420) -> Result<FrameMetrics> {
    Ok(FrameMetrics {
        psnr_y: psnr_plane(&reference.y, &test.y, L)?,
        psnr_u: psnr_plane(&reference.u, &test.u, L)?,
        psnr_v: psnr_plane(&reference.v, &test.v, L)?,
        ssim: ssim_y(&reference.y, &test.y)?,
    })
}

/// Column-wise mean of a set of rows.
pub fn mean_metrics(rows: &[FrameMetrics]) -> Option<FrameMetrics> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let sum = |f: fn(&FrameMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Some(FrameMetrics {
        psnr_y: sum(|r| r.psnr_y),
        psnr_u: sum(|r| r.psnr_u),
        psnr_v: sum(|r| r.psnr_v),
        ssim: sum(|r| r.ssim),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(w, h, |_, _| rng.gen_range(40.0..215.0f32).round())
    }

    #[test]
    fn psnr_closed_forms() {
        let a = textured(16, 16, 1);
        assert_eq!(psnr_plane(&a, &a, 255.0).unwrap(), 100.0);
        let b = Plane::from_fn(16, 16, |x, y| a.get(x, y) + 1.0);
        let want = 10.0 * 65025.0f64.log10();
        assert!((psnr_plane(&a, &b, 255.0).unwrap() - want).abs() < 1e-9);
        assert!((want - 48.13).abs() < 0.01);
        let c = Plane::from_fn(16, 16, |x, y| a.get(x, y) + if (x + y) % 2 == 0 { 16.0 } else { -16.0 });
        let want = 10.0 * (65025.0f64 / 256.0).log10();
        assert!((psnr_plane(&a, &c, 255.0).unwrap() - want).abs() < 1e-9);
        assert!((want - 24.05).abs() < 0.01);
    }

    #[test]
    fn psnr_monotone_in_noise() {
        let a = textured(32, 32, 2);
        let mut last = f64::INFINITY;
        for amp in [1.0f32, 2.0, 4.0, 8.0, 16.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let b = Plane::from_fn(32, 32, |x, y| a.get(x, y) + amp * rng.gen_range(-1.0f32..1.0));
            let p = psnr_plane(&a, &b, 255.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn psnr_errors() {
        assert!(psnr_plane(&Plane::filled(0, 0, 0.0), &Plane::filled(0, 0, 0.0), 255.0).is_err());
        assert!(psnr_plane(&Plane::filled(2, 2, 0.0), &Plane::filled(2, 3, 0.0), 255.0).is_err());
    }

    #[test]
    fn ssim_identity_and_shift() {
        let a = textured(24, 20, 4);
        assert!((ssim_y(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = Plane::from_fn(24, 20, |x, y| a.get(x, y) + 20.0);
        let t = ssim_terms(&a, &b).unwrap();
        assert!(t.luminance < 1.0);
        assert!((t.structure - 1.0).abs() < 1e-9);
        assert!((t.contrast - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_inverted_structure() {
        let a = textured(24, 24, 5);
        let b = Plane::from_fn(24, 24, |x, y| 255.0 - a.get(x, y));
        let t = ssim_terms(&a, &b).unwrap();
        assert!(t.structure < -0.95, "{}", t.structure);
        assert!(t.ssim < 0.0);
    }

    #[test]
    fn ssim_too_small() {
        assert!(ssim_y(&Plane::filled(10, 12, 0.0), &Plane::filled(10, 12, 0.0)).is_err());
    }
}
