//! Planar image types and colour conversion.
//!
//! Codec and metric code works on 8-bit-scaled floats (`0..=255`); the network
//! works on `[0, 1]`. Conversion happens only at these type boundaries.

use alloc::format;
use alloc::vec::Vec;


use crate::{Error, Result, Tensor};

/// One image plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                "Plane",
                format!("{width}x{height} needs {} samples, got {}", width * height, data.len()),
            ));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane {
            width,
            height,
            data: alloc::vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }

    /// Round to integers and clamp to `[0, 255]`.
    pub fn quantize_8bit(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| num_traits::Float::round(v).clamp(0.0, 255.0)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn to_tensor(&self, scale: f32) -> Tensor<f32> {
        Tensor::new([1, 1, self.height, self.width], self.data.iter().map(|v| v * scale).collect())
            .expect("plane dims")
    }
}

/// Planar YUV 4:2:0 frame, samples scaled to `0..=255`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameYUV420 {
    pub y: Plane,
    pub u: Plane,
    pub v: Plane,
}

impl FrameYUV420 {
    pub fn new(y: Plane, u: Plane, v: Plane) -> Result<Self> {
        let (w, h) = (y.width, y.height);
        if w % 2 != 0 || h % 2 != 0 {
            return Err(Error::invalid("FrameYUV420", format!("odd dims {w}x{h}")));
        }
        for c in [&u, &v] {
            if c.width != w / 2 || c.height != h / 2 {
                return Err(Error::shape(
                    "FrameYUV420",
                    format!("chroma {}x{} for luma {w}x{h}", c.width, c.height),
                ));
            }
        }
        Ok(FrameYUV420 { y, u, v })
    }

    pub fn width(&self) -> usize {
        self.y.width
    }

    pub fn height(&self) -> usize {
        self.y.height
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.y, &self.u, &self.v]
    }

    /// Round and clamp every plane to 8-bit levels.
    pub fn quantize_8bit(&self) -> FrameYUV420 {
        FrameYUV420 {
            y: self.y.quantize_8bit(),
            u: self.u.quantize_8bit(),
            v: self.v.quantize_8bit(),
        }
    }
}

/// Planar RGB frame `(3, h, w)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRGB {
    pub width: usize,
    pub height: usize,
    /// R plane, then G, then B.
    pub data: Vec<f32>,
}

impl FrameRGB {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::shape(
                "FrameRGB",
                format!("{width}x{height} needs {} samples, got {}", 3 * width * height, data.len()),
            ));
        }
        Ok(FrameRGB { width, height, data })
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.width * self.height;
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let p = self.width * self.height;
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn channel_plane(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn from_planes(r: &Plane, g: &Plane, b: &Plane) -> Result<Self> {
        if r.width != g.width || r.width != b.width || r.height != g.height || r.height != b.height {
            return Err(Error::shape("FrameRGB", "planes differ in size"));
        }
        let mut data = Vec::with_capacity(3 * r.data.len());
        for p in [r, g, b] {
            data.extend_from_slice(&p.data);
        }
        FrameRGB::new(r.width, r.height, data)
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new([1, 3, self.height, self.width], self.data.clone()).expect("rgb dims")
    }

    /// Sample `n` of a `(N, 3, h, w)` tensor.
    pub fn from_tensor(t: &Tensor<f32>, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 || n >= s.n {
            return Err(Error::shape("FrameRGB::from_tensor", format!("{:?}, sample {n}", s)));
        }
        FrameRGB::new(s.w, s.h, t.sample(n).to_vec())
    }

    pub fn clamped(&self) -> FrameRGB {
        FrameRGB {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }
}

// BT.709 full-range luma coefficients.
const KR: f64 = 0.2126;
const KB: f64 = 0.0722;
const KG: f64 = 1.0 - KR - KB;
const CB_SCALE: f64 = 2.0 * (1.0 - KB); // 1.8556
const CR_SCALE: f64 = 2.0 * (1.0 - KR); // 1.5748

/// BT.709 full-range RGB → YUV 4:2:0 (chroma box-averaged over 2×2).
///
/// Output samples are not rounded; call [`FrameYUV420::quantize_8bit`] for
/// 8-bit levels.
pub fn rgb_to_yuv420(rgb: &FrameRGB) -> Result<FrameYUV420> {
    let (w, h) = (rgb.width, rgb.height);
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::invalid("rgb_to_yuv420", format!("odd dims {w}x{h}")));
    }
    let (r, g, b) = (rgb.channel(0), rgb.channel(1), rgb.channel(2));
    let mut y = Vec::with_capacity(w * h);
    let mut cb = Vec::with_capacity(w * h);
    let mut cr = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let (rv, gv, bv) = (r[i] as f64 * 255.0, g[i] as f64 * 255.0, b[i] as f64 * 255.0);
        let yv = KR * rv + KG * gv + KB * bv;
        y.push(yv);
        cb.push((bv - yv) / CB_SCALE + 128.0);
        cr.push((rv - yv) / CR_SCALE + 128.0);
    }
    let sub = |full: &[f64]| {
        Plane::from_fn(w / 2, h / 2, |x, yy| {
            let i = 2 * yy * w + 2 * x;
            ((full[i] + full[i + 1] + full[i + w] + full[i + w + 1]) * 0.25) as f32
        })
    };
    FrameYUV420::new(
        Plane::new(w, h, y.iter().map(|&v| v as f32).collect())?,
        sub(&cb),
        sub(&cr),
    )
}

/// Inverse of [`rgb_to_yuv420`] with nearest-neighbour chroma upsampling;
/// RGB is clamped to `[0, 1]`.
pub fn yuv420_to_rgb(yuv: &FrameYUV420) -> FrameRGB {
    let (w, h) = (yuv.width(), yuv.height());
    let mut data = alloc::vec![0.0f32; 3 * w * h];
    let p = w * h;
    for yy in 0..h {
        for x in 0..w {
            let yv = yuv.y.get(x, yy) as f64;
            let cb = yuv.u.get(x / 2, yy / 2) as f64 - 128.0;
            let cr = yuv.v.get(x / 2, yy / 2) as f64 - 128.0;
            let r = yv + CR_SCALE * cr;
            let b = yv + CB_SCALE * cb;
            let g = (yv - KR * r - KB * b) / KG;
            let i = yy * w + x;
            data[i] = (r / 255.0).clamp(0.0, 1.0) as f32;
            data[p + i] = (g / 255.0).clamp(0.0, 1.0) as f32;
            data[2 * p + i] = (b / 255.0).clamp(0.0, 1.0) as f32;
        }
    }
    FrameRGB {
        width: w,
        height: h,
        data,
    }
}

/// Luma of an RGB frame on the 8-bit scale (no chroma subsampling involved).
pub fn rgb_luma(rgb: &FrameRGB) -> Plane {
    let (r, g, b) = (rgb.channel(0), rgb.channel(1), rgb.channel(2));
    Plane::from_fn(rgb.width, rgb.height, |x, y| {
        let i = y * rgb.width + x;
        (255.0 * (KR * r[i] as f64 + KG * g[i] as f64 + KB * b[i] as f64)) as f32
    })
}
