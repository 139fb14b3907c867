//! Intra-only block codec used to produce degraded frames and coding priors.
//!
//! Quadtree partition on luma variance, DC-mean prediction, orthonormal
//! DCT-II residual transform and uniform scalar quantization. Chroma reuses
//! the luma partition at half scale.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use crate::image::{FrameYUV420, Plane};
use crate::pac::{encode_cu_side, PartitionMap};
use crate::{Error, Result, Shape, Tensor};

pub const MAX_QP: u32 = 63;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub qp: u32,
    pub max_cu: usize,
    pub min_cu: usize,
    /// Variance (8-bit luma units) above which a CU splits at QP 32.
    pub split_threshold_base: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            qp: 37,
            max_cu: 64,
            min_cu: 4,
            split_threshold_base: 25.0,
        }
    }
}

impl CodecConfig {
    pub fn with_qp(qp: u32) -> Self {
        CodecConfig {
            qp,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qp > MAX_QP {
            return Err(Error::invalid("codec", format!("qp {} outside 0..=63", self.qp)));
        }
        if !self.max_cu.is_power_of_two() || !self.min_cu.is_power_of_two() || self.min_cu < 2 {
            return Err(Error::invalid(
                "codec",
                format!("CU sizes {}/{} must be powers of two >= 2", self.max_cu, self.min_cu),
            ));
        }
        if self.min_cu > self.max_cu {
            return Err(Error::invalid("codec", "min_cu exceeds max_cu"));
        }
        if !(self.split_threshold_base >= 0.0) {
            return Err(Error::invalid("codec", "split threshold must be non-negative"));
        }
        Ok(())
    }

    /// Quantizer step `2^((qp - 4) / 6)`.
    pub fn qstep(&self) -> f64 {
        Float::powf(2.0, (self.qp as f64 - 4.0) / 6.0)
    }

    pub fn split_threshold(&self) -> f64 {
        self.split_threshold_base * Float::powf(2.0, (self.qp as f64 - 32.0) / 6.0)
    }
}

/// Leaf coding unit in padded-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CuRect {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Padded dimensions (multiples of `max_cu`).
    pub padded_width: usize,
    pub padded_height: usize,
    pub cus: Vec<CuRect>,
}

impl Partition {
    /// Per-pixel `log2(side) / 6`, cropped to `width × height`.
    pub fn map_plane(&self, width: usize, height: usize) -> Plane {
        let mut p = Plane::filled(width, height, 0.0);
        for cu in &self.cus {
            let v = encode_cu_side(cu.size) as f32;
            for y in cu.y..(cu.y + cu.size).min(height) {
                for x in cu.x..(cu.x + cu.size).min(width) {
                    p.set(x, y, v);
                }
            }
        }
        p
    }

    /// Same CUs with every coordinate halved (chroma grid).
    pub fn halved(&self) -> Partition {
        Partition {
            padded_width: self.padded_width / 2,
            padded_height: self.padded_height / 2,
            cus: self
                .cus
                .iter()
                .map(|c| CuRect {
                    x: c.x / 2,
                    y: c.y / 2,
                    size: c.size / 2,
                })
                .collect(),
        }
    }
}

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// Extend a plane to `width × height` by edge replication.
pub fn pad_replicate(p: &Plane, width: usize, height: usize) -> Plane {
    Plane::from_fn(width, height, |x, y| {
        p.get(x.min(p.width - 1), y.min(p.height - 1))
    })
}

pub fn crop_plane(p: &Plane, width: usize, height: usize) -> Plane {
    Plane::from_fn(width, height, |x, y| p.get(x, y))
}

fn block_variance(p: &Plane, cu: CuRect) -> f64 {
    let n = (cu.size * cu.size) as f64;
    let (mut s, mut s2) = (0.0f64, 0.0f64);
    for y in cu.y..cu.y + cu.size {
        for x in cu.x..cu.x + cu.size {
            let v = p.get(x, y) as f64;
            s += v;
            s2 += v * v;
        }
    }
    let m = s / n;
    (s2 / n - m * m).max(0.0)
}

fn split(p: &Plane, cu: CuRect, cfg: &CodecConfig, thr: f64, out: &mut Vec<CuRect>) {
    if cu.size > cfg.min_cu && block_variance(p, cu) > thr {
        let h = cu.size / 2;
        for (dy, dx) in [(0, 0), (0, h), (h, 0), (h, h)] {
            let child = CuRect {
                x: cu.x + dx,
                y: cu.y + dy,
                size: h,
            };
            split(p, child, cfg, thr, out);
        }
    } else {
        out.push(cu);
    }
}

/// Recursive variance-driven quadtree over the edge-padded luma plane.
pub fn quadtree_partition(luma: &Plane, cfg: &CodecConfig) -> Result<Partition> {
    cfg.validate()?;
    if luma.width == 0 || luma.height == 0 {
        return Err(Error::invalid("quadtree_partition", "empty plane"));
    }
    if luma.width % cfg.min_cu != 0 || luma.height % cfg.min_cu != 0 {
        return Err(Error::shape(
            "quadtree_partition",
            format!("{}x{} not a multiple of min CU {}", luma.width, luma.height, cfg.min_cu),
        ));
    }
    let pw = round_up(luma.width, cfg.max_cu);
    let ph = round_up(luma.height, cfg.max_cu);
    let padded = pad_replicate(luma, pw, ph);
    let thr = cfg.split_threshold();
    let mut cus = Vec::new();
    for y in (0..ph).step_by(cfg.max_cu) {
        for x in (0..pw).step_by(cfg.max_cu) {
            split(&padded, CuRect { x, y, size: cfg.max_cu }, cfg, thr, &mut cus);
        }
    }
    Ok(Partition {
        padded_width: pw,
        padded_height: ph,
        cus,
    })
}

/// Orthonormal DCT-II basis matrices, cached per block size.
#[derive(Debug, Default)]
pub struct DctBank {
    mats: BTreeMap<usize, Vec<f64>>,
}

impl DctBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Row-major `n × n` matrix `C[k][i]`.
    pub fn matrix(&mut self, n: usize) -> &[f64] {
        self.mats.entry(n).or_insert_with(|| {
            let mut c = alloc::vec![0.0; n * n];
            let nf = n as f64;
            for k in 0..n {
                let s = if k == 0 {
                    Float::sqrt(1.0 / nf)
                } else {
                    Float::sqrt(2.0 / nf)
                };
                for i in 0..n {
                    let a = core::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf);
                    c[k * n + i] = s * Float::cos(a);
                }
            }
            c
        })
    }

    /// `C · X · Cᵀ` for a square block of side `n`.
    pub fn dct2(&mut self, block: &[f64], n: usize) -> Result<Vec<f64>> {
        self.transform(block, n, false)
    }

    /// `Cᵀ · Y · C`.
    pub fn idct2(&mut self, coeffs: &[f64], n: usize) -> Result<Vec<f64>> {
        self.transform(coeffs, n, true)
    }

    fn transform(&mut self, src: &[f64], n: usize, inverse: bool) -> Result<Vec<f64>> {
        if src.len() != n * n || n == 0 {
            return Err(Error::shape("dct2", format!("block of {} for side {n}", src.len())));
        }
        let c = self.matrix(n);
        // Entry of the 1-D operator A[r][s]: forward C, inverse Cᵀ.
        let a = |r: usize, s: usize| if inverse { c[s * n + r] } else { c[r * n + s] };
        let mut tmp = alloc::vec![0.0; n * n];
        for r in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for s in 0..n {
                    acc += a(r, s) * src[s * n + j];
                }
                tmp[r * n + j] = acc;
            }
        }
        let mut out = alloc::vec![0.0; n * n];
        for i in 0..n {
            for r in 0..n {
                let mut acc = 0.0;
                for s in 0..n {
                    acc += tmp[i * n + s] * a(r, s);
                }
                out[i * n + r] = acc;
            }
        }
        Ok(out)
    }
}

/// Uniform reconstruction of `v` with step `q`: `round(v / q) · q`.
#[inline]
pub fn quantize(v: f64, q: f64) -> f64 {
    Float::round(v / q) * q
}

struct CodedPlane {
    decoded: Plane,
    prediction: Plane,
    residual: Plane,
}

/// Code an 8-bit plane already padded to the partition grid.
fn code_plane(src: &Plane, part: &Partition, q: f64, bank: &mut DctBank) -> Result<CodedPlane> {
    let (w, h) = (src.width, src.height);
    let mut decoded = Plane::filled(w, h, 0.0);
    let mut prediction = Plane::filled(w, h, 0.0);
    let mut residual = Plane::filled(w, h, 0.0);
    for cu in &part.cus {
        let n = cu.size;
        let mut block = Vec::with_capacity(n * n);
        for y in cu.y..cu.y + n {
            for x in cu.x..cu.x + n {
                block.push(src.get(x, y) as f64);
            }
        }
        let pred = Float::round(block.iter().sum::<f64>() / (n * n) as f64);
        block.iter_mut().for_each(|v| *v -= pred);
        let mut coeffs = bank.dct2(&block, n)?;
        coeffs.iter_mut().for_each(|c| *c = quantize(*c, q));
        let rres = bank.idct2(&coeffs, n)?;
        for (k, r) in rres.iter().enumerate() {
            let (x, y) = (cu.x + k % n, cu.y + k / n);
            let d = Float::round(pred + r).clamp(0.0, 255.0);
            decoded.set(x, y, d as f32);
            prediction.set(x, y, pred as f32);
            residual.set(x, y, (d - pred) as f32);
        }
    }
    Ok(CodedPlane {
        decoded,
        prediction,
        residual,
    })
}

/// Side information recovered from the coded frame, aligned with its luma.
///
/// Planes are in 8-bit units; `prediction + residual == decoded.y` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingPriors {
    pub qp: u32,
    pub prediction: Plane,
    pub residual: Plane,
    pub partition: Plane,
    pub cus: Vec<CuRect>,
}

impl CodingPriors {
    pub fn width(&self) -> usize {
        self.prediction.width
    }

    pub fn height(&self) -> usize {
        self.prediction.height
    }

    pub fn qp_plane(&self) -> Plane {
        Plane::filled(self.width(), self.height(), self.qp as f32 / MAX_QP as f32)
    }

    /// `(1, 3, h, w)` network input `[prediction/255, residual/255, qp/63]`.
    pub fn prior_tensor(&self) -> Tensor<f32> {
        let (w, h) = (self.width(), self.height());
        let plane = w * h;
        let mut t = Tensor::zeros(Shape::new(1, 3, h, w));
        let d = t.data_mut();
        let s = 1.0 / 255.0;
        for i in 0..plane {
            d[i] = self.prediction.data[i] * s;
            d[plane + i] = self.residual.data[i] * s;
            d[2 * plane + i] = self.qp as f32 / MAX_QP as f32;
        }
        t
    }

    pub fn partition_map(&self) -> PartitionMap<f32> {
        let (w, h) = (self.width(), self.height());
        PartitionMap::new(Tensor::new(Shape::new(1, 1, h, w), self.partition.data.clone()).expect("plane size"))
            .expect("single-channel map")
    }
}

/// Encode and decode one frame, returning the reconstruction and its priors.
///
/// Input samples are rounded to 8-bit before coding.
pub fn encode_decode(frame: &FrameYUV420, cfg: &CodecConfig) -> Result<(FrameYUV420, CodingPriors)> {
    cfg.validate()?;
    let (w, h) = (frame.width(), frame.height());
    if w % 2 != 0 || h % 2 != 0 || w == 0 || h == 0 {
        return Err(Error::invalid("encode_decode", format!("odd or empty dims {w}x{h}")));
    }
    let src = frame.quantize_8bit();
    if w % cfg.min_cu != 0 || h % cfg.min_cu != 0 {
        return Err(Error::shape(
            "encode_decode",
            format!("{w}x{h} not a multiple of min CU {}", cfg.min_cu),
        ));
    }
    let part = quadtree_partition(&src.y, cfg)?;
    let q = cfg.qstep();
    let mut bank = DctBank::new();

    let (pw, ph) = (part.padded_width, part.padded_height);
    let luma = code_plane(&pad_replicate(&src.y, pw, ph), &part, q, &mut bank)?;
    let cpart = part.halved();
    let mut chroma = [&src.u, &src.v].map(|p| pad_replicate(p, pw / 2, ph / 2));
    for c in chroma.iter_mut() {
        *c = crop_plane(&code_plane(c, &cpart, q, &mut bank)?.decoded, w / 2, h / 2);
    }
    let [u, v] = chroma;
    let decoded = FrameYUV420::new(crop_plane(&luma.decoded, w, h), u, v)?;
    let priors = CodingPriors {
        qp: cfg.qp,
        prediction: crop_plane(&luma.prediction, w, h),
        residual: crop_plane(&luma.residual, w, h),
        partition: part.map_plane(w, h),
        cus: part.cus,
    };
    Ok((decoded, priors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr_plane;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(w, h, |_, _| rng.gen_range(0.0..256.0f32).floor())
    }

    fn smooth_frame(w: usize, h: usize) -> FrameYUV420 {
        let y = Plane::from_fn(w, h, |x, y| {
            (128.0 + 60.0 * ((x as f32) * 0.11).sin() * ((y as f32) * 0.07).cos()).round()
        });
        let u = Plane::from_fn(w / 2, h / 2, |x, _| 100.0 + x as f32);
        let v = Plane::from_fn(w / 2, h / 2, |_, y| 150.0 - y as f32);
        FrameYUV420::new(y, u, v).unwrap()
    }

    #[test]
    fn qstep_law() {
        assert!((CodecConfig::with_qp(4).qstep() - 1.0).abs() < 1e-12);
        assert!((CodecConfig::with_qp(10).qstep() - 2.0).abs() < 1e-12);
        assert!((CodecConfig::with_qp(0).qstep() - 0.6299605249).abs() < 1e-9);
        assert!((CodecConfig::with_qp(32).split_threshold() - 25.0).abs() < 1e-12);
        assert!(CodecConfig::with_qp(64).validate().is_err());
    }

    #[test]
    fn constant_frame_single_level() {
        let p = Plane::filled(128, 64, 77.0);
        let part = quadtree_partition(&p, &CodecConfig::default()).unwrap();
        assert_eq!(part.cus.len(), 2);
        assert!(part.map_plane(128, 64).data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn noise_splits_to_min() {
        let p = noise(64, 64, 1);
        let part = quadtree_partition(&p, &CodecConfig::default()).unwrap();
        assert_eq!(part.cus.len(), 256);
        let m = part.map_plane(64, 64);
        assert!(m.data.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-6));
    }

    #[test]
    fn half_flat_half_noisy() {
        let n = noise(128, 64, 2);
        let p = Plane::from_fn(128, 64, |x, y| if x < 64 { 90.0 } else { n.get(x, y) });
        let part = quadtree_partition(&p, &CodecConfig::default()).unwrap();
        let m = part.map_plane(128, 64);
        for y in 0..64 {
            assert_eq!(m.get(10, y), 1.0);
            assert!(m.get(100, y) < 0.5);
        }
        // Map is constant on each rect and the rects tile the frame once.
        let mut cover = alloc::vec![0u8; 128 * 64];
        for cu in &part.cus {
            let v = m.get(cu.x, cu.y);
            for y in cu.y..cu.y + cu.size {
                for x in cu.x..cu.x + cu.size {
                    assert_eq!(m.get(x, y), v);
                    cover[y * 128 + x] += 1;
                }
            }
        }
        assert!(cover.iter().all(|&c| c == 1));
    }

    #[test]
    fn padding_tiles_grid() {
        let p = noise(40, 24, 3);
        let part = quadtree_partition(&p, &CodecConfig::default()).unwrap();
        assert_eq!((part.padded_width, part.padded_height), (64, 64));
        let area: usize = part.cus.iter().map(|c| c.size * c.size).sum();
        assert_eq!(area, 64 * 64);
        assert!(quadtree_partition(&noise(6, 8, 0), &CodecConfig::default()).is_err());
    }

    #[test]
    fn dct_round_trip_and_energy() {
        let mut bank = DctBank::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [2usize, 4, 8, 16, 32, 64] {
            let x: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let y = bank.dct2(&x, n).unwrap();
            let back = bank.idct2(&y, n).unwrap();
            let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(err / norm < 1e-12);
            let ey: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((ey - norm).abs() / norm < 1e-12);
        }
    }

    #[test]
    fn dct_dc_of_constant() {
        let mut bank = DctBank::new();
        let y = bank.dct2(&[3.0; 16], 4).unwrap();
        assert!((y[0] - 12.0).abs() < 1e-12);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quantization_error_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for qp in [0u32, 17, 37, 51] {
            let q = CodecConfig::with_qp(qp).qstep();
            for _ in 0..1000 {
                let v: f64 = rng.gen_range(-500.0..500.0);
                assert!((quantize(v, q) - v).abs() <= q / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn constant_frame_is_lossless() {
        let f = FrameYUV420::new(
            Plane::filled(64, 64, 133.0),
            Plane::filled(32, 32, 90.0),
            Plane::filled(32, 32, 200.0),
        )
        .unwrap();
        for qp in [0, 37, 63] {
            let (d, pr) = encode_decode(&f, &CodecConfig::with_qp(qp)).unwrap();
            assert_eq!(d, f);
            assert!(pr.residual.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn priors_reconstruct_luma_exactly() {
        let f = smooth_frame(96, 64);
        let (d, pr) = encode_decode(&f, &CodecConfig::with_qp(42)).unwrap();
        for i in 0..d.y.data.len() {
            assert_eq!(pr.prediction.data[i] + pr.residual.data[i], d.y.data[i]);
        }
        assert_eq!(pr.partition.width, 96);
        let t = pr.prior_tensor();
        assert_eq!(t.shape().dims(), [1, 3, 64, 96]);
        assert!((t.data()[2 * 96 * 64] - 42.0 / 63.0).abs() < 1e-7);
    }

    #[test]
    fn qp_quality_ladder() {
        let f = smooth_frame(128, 128);
        let (d0, _) = encode_decode(&f, &CodecConfig::with_qp(0)).unwrap();
        assert!(psnr_plane(&f.y, &d0.y, 255.0).unwrap() >= 50.0);
        let mut last = f64::INFINITY;
        for qp in [10, 22, 30, 45, 52] {
            let (d, _) = encode_decode(&f, &CodecConfig::with_qp(qp)).unwrap();
            let p = psnr_plane(&f.y, &d.y, 255.0).unwrap();
            assert!(p <= last, "qp {qp}: {p} > {last}");
            last = p;
        }
    }

    #[test]
    fn deterministic() {
        let f = smooth_frame(64, 64);
        let a = encode_decode(&f, &CodecConfig::default()).unwrap();
        let b = encode_decode(&f, &CodecConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        let f = smooth_frame(64, 64);
        assert!(encode_decode(&f, &CodecConfig::with_qp(70)).is_err());
    }
}
