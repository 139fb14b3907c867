//! Procedural game-like frames: flat terrain, gradients, checkerboards,
//! outlined sprites and glyph text. Frame `i` of seed `s` depends only on
//! `(s, i, dims)`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{rgb_luma, FrameRGB, Plane};
use crate::{Error, Result};

/// Luma step (8-bit levels) above which a pixel counts as a strong edge.
pub const STRONG_EDGE: f32 = 32.0;
/// Every generated frame has at least this fraction of strong-edge pixels.
pub const MIN_EDGE_FRACTION: f64 = 0.12;

type Rgb = [f32; 3];

struct Canvas {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Canvas {
    fn put(&mut self, x: usize, y: usize, c: Rgb) {
        let p = self.w * self.h;
        let i = y * self.w + x;
        for (k, v) in c.iter().enumerate() {
            self.data[k * p + i] = *v;
        }
    }

    fn fill(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, mut f: impl FnMut(usize, usize) -> Option<Rgb>) {
        for y in y0..y1.min(self.h) {
            for x in x0..x1.min(self.w) {
                if let Some(c) = f(x, y) {
                    self.put(x, y, c);
                }
            }
        }
    }
}

fn color<R: Rng>(rng: &mut R) -> Rgb {
    [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]
}

fn luma(c: Rgb) -> f32 {
    0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]
}

/// A colour whose luma differs from `c` by at least `min` (in `[0, 1]`).
fn contrasting<R: Rng>(rng: &mut R, c: Rgb, min: f32) -> Rgb {
    for _ in 0..64 {
        let d = color(rng);
        if (luma(d) - luma(c)).abs() >= min {
            return d;
        }
    }
    if luma(c) > 0.5 {
        [0.05; 3]
    } else {
        [0.95; 3]
    }
}

fn rect<R: Rng>(rng: &mut R, w: usize, h: usize, min: usize, max: usize) -> (usize, usize, usize, usize) {
    let rw = rng.gen_range(min..=max.min(w));
    let rh = rng.gen_range(min..=max.min(h));
    let x = rng.gen_range(0..=w - rw);
    let y = rng.gen_range(0..=h - rh);
    (x, y, x + rw, y + rh)
}

fn draw_frame(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FrameRGB {
    let mut cv = Canvas {
        w,
        h,
        data: alloc::vec![0.0; 3 * w * h],
    };

    // Sky / floor gradient.
    let (c0, c1) = (color(rng), color(rng));
    let vertical = rng.gen_bool(0.5);
    cv.fill(0, 0, w, h, |x, y| {
        let t = if vertical { y as f32 / h as f32 } else { x as f32 / w as f32 };
        Some(core::array::from_fn(|k| c0[k] + (c1[k] - c0[k]) * t))
    });

    // Flat terrain slabs.
    for _ in 0..rng.gen_range(2..5) {
        let (x0, y0, x1, y1) = rect(rng, w, h, w / 8, w / 2);
        let c = color(rng);
        cv.fill(x0, y0, x1, y1, |_, _| Some(c));
    }

    // Checkerboard floor tiles over at least 1/8 of the frame.
    let mut covered = 0;
    while covered * 8 < w * h {
        covered += checker_tile(&mut cv, rng);
    }

    // Outlined sprites: boxes, discs and diamonds.
    for _ in 0..rng.gen_range(6..12) {
        let r = rng.gen_range(6..(w / 8).max(7)) as isize;
        let cx = rng.gen_range(0..w) as isize;
        let cy = rng.gen_range(0..h) as isize;
        let body = color(rng);
        let outline = contrasting(rng, body, 0.4);
        let kind = rng.gen_range(0..3);
        let inside = |dx: isize, dy: isize, r: isize| match kind {
            0 => dx.abs() <= r && dy.abs() <= r,
            1 => dx * dx + dy * dy <= r * r,
            _ => dx.abs() + dy.abs() <= r,
        };
        let x0 = (cx - r - 1).max(0) as usize;
        let y0 = (cy - r - 1).max(0) as usize;
        cv.fill(x0, y0, (cx + r + 2) as usize, (cy + r + 2) as usize, |x, y| {
            let (dx, dy) = (x as isize - cx, y as isize - cy);
            if inside(dx, dy, r - 2) {
                Some(body)
            } else if inside(dx, dy, r) {
                Some(outline)
            } else {
                None
            }
        });
    }

    // HUD text: 5×7 glyphs from a per-frame random font.
    let font: Vec<[u8; 7]> = (0..16)
        .map(|_| core::array::from_fn(|_| rng.gen_range(1u8..32)))
        .collect();
    for _ in 0..rng.gen_range(2..4) {
        let scale = rng.gen_range(1..=2);
        let cols = rng.gen_range(6..16);
        let (gw, gh) = (6 * scale, 9 * scale);
        if cols * gw + 4 > w || gh + 4 > h {
            continue;
        }
        let x0 = rng.gen_range(0..=w - cols * gw - 4);
        let y0 = rng.gen_range(0..=h - gh - 4);
        let bg = color(rng);
        let fg = contrasting(rng, bg, 0.45);
        let text: Vec<usize> = (0..cols).map(|_| rng.gen_range(0..font.len())).collect();
        cv.fill(x0, y0, x0 + cols * gw + 4, y0 + gh + 4, |x, y| {
            let (tx, ty) = (x - x0, y - y0);
            if tx < 2 || ty < 2 {
                return Some(bg);
            }
            let (gx, gy) = ((tx - 2) / scale, (ty - 2) / scale);
            let (col, cx) = (gx / 6, gx % 6);
            let cy = gy.checked_sub(1).filter(|&v| v < 7);
            match (text.get(col), cy) {
                (Some(&g), Some(cy)) if cx < 5 && font[g][cy] >> (4 - cx) & 1 == 1 => Some(fg),
                _ => Some(bg),
            }
        });
    }

    // Top up with tiles until the strong-edge quota holds.
    let mut frame = FrameRGB {
        width: w,
        height: h,
        data: cv.data,
    };
    while frame_edge_fraction(&frame) < MIN_EDGE_FRACTION {
        cv = Canvas {
            w,
            h,
            data: frame.data,
        };
        checker_tile(&mut cv, rng);
        frame.data = cv.data;
    }
    frame
}

/// Draw one checkerboard tile; returns its area.
fn checker_tile<R: Rng>(cv: &mut Canvas, rng: &mut R) -> usize {
    let (w, h) = (cv.w, cv.h);
    let (x0, y0, x1, y1) = rect(rng, w, h, w / 8, w / 3);
    let period = [4usize, 6, 8, 12, 16][rng.gen_range(0..5)];
    let a = color(rng);
    let b = contrasting(rng, a, 0.35);
    cv.fill(x0, y0, x1, y1, |x, y| Some(if ((x / period) + (y / period)) % 2 == 0 { a } else { b }));
    (x1 - x0) * (y1 - y0)
}

fn frame_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Frame `index` of the sequence for `seed`.
pub fn synth_frame(seed: u64, index: usize, width: usize, height: usize) -> Result<FrameRGB> {
    if width == 0 || height == 0 || width % 64 != 0 || height % 64 != 0 {
        return Err(Error::invalid(
            "synth_frames",
            alloc::format!("dims {width}x{height} must be positive multiples of 64"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(seed, index));
    Ok(draw_frame(&mut rng, width, height))
}

pub fn synth_frames(seed: u64, count: usize, width: usize, height: usize) -> Result<Vec<FrameRGB>> {
    (0..count).map(|i| synth_frame(seed, i, width, height)).collect()
}

/// Fraction of pixels whose right or lower neighbour differs by more than
/// [`STRONG_EDGE`] luma levels.
pub fn strong_edge_fraction(luma: &Plane) -> f64 {
    let (w, h) = (luma.width, luma.height);
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            let v = luma.get(x, y);
            let dx = if x + 1 < w { (luma.get(x + 1, y) - v).abs() } else { 0.0 };
            let dy = if y + 1 < h { (luma.get(x, y + 1) - v).abs() } else { 0.0 };
            if dx.max(dy) > STRONG_EDGE {
                n += 1;
            }
        }
    }
    n as f64 / (w * h).max(1) as f64
}

pub fn frame_edge_fraction(f: &FrameRGB) -> f64 {
    strong_edge_fraction(&rgb_luma(f))
}
