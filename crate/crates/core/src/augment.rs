//! Dihedral augmentation applied consistently to a training patch.

use rand::Rng;

use crate::{Error, Real, Result, Tensor};

/// Counter-clockwise quarter turns followed by an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dihedral {
    pub quarter_turns: u8,
    pub hflip: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        quarter_turns: 0,
        hflip: false,
    };

    pub fn all() -> [Dihedral; 8] {
        core::array::from_fn(|i| Dihedral {
            quarter_turns: (i % 4) as u8,
            hflip: i >= 4,
        })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::all()[rng.gen_range(0..8)]
    }

    /// Whether the transform swaps height and width.
    pub fn transposes(&self) -> bool {
        self.quarter_turns % 2 == 1
    }

    /// Source coordinate `(y, x)` for output `(oy, ox)` given source `h × w`.
    fn source(&self, oy: usize, ox: usize, h: usize, w: usize) -> (usize, usize) {
        let ow = if self.transposes() { h } else { w };
        let ox = if self.hflip { ow - 1 - ox } else { ox };
        match self.quarter_turns % 4 {
            0 => (oy, ox),
            // Rotating counter-clockwise: out[y][x] = in[x][w-1-y].
            1 => (ox, w - 1 - oy),
            2 => (h - 1 - oy, w - 1 - ox),
            _ => (h - 1 - ox, oy),
        }
    }

    pub fn apply<T: Real>(&self, t: &Tensor<T>) -> Result<Tensor<T>> {
        let s = t.shape();
        if self.transposes() && s.h != s.w {
            return Err(Error::invalid(
                "augment",
                alloc::format!("quarter turn of non-square {}x{} patch", s.h, s.w),
            ));
        }
        let (oh, ow) = if self.transposes() { (s.w, s.h) } else { (s.h, s.w) };
        Ok(Tensor::from_fn([s.n, s.c, oh, ow], |n, c, oy, ox| {
            let (y, x) = self.source(oy, ox, s.h, s.w);
            t.at(n, c, y, x)
        }))
    }
}

/// Aligned LR/HR/prior crop.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<T: Real = f32> {
    pub lr: Tensor<T>,
    pub hr: Tensor<T>,
    pub priors: Tensor<T>,
    pub partition: Tensor<T>,
}

impl<T: Real> Patch<T> {
    pub fn transform(&self, d: Dihedral) -> Result<Patch<T>> {
        Ok(Patch {
            lr: d.apply(&self.lr)?,
            hr: d.apply(&self.hr)?,
            priors: d.apply(&self.priors)?,
            partition: d.apply(&self.partition)?,
        })
    }
}

/// Apply one uniformly drawn dihedral transform to every plane of the patch.
pub fn augment<T: Real, R: Rng + ?Sized>(p: &Patch<T>, rng: &mut R) -> Result<(Patch<T>, Dihedral)> {
    let d = Dihedral::random(rng);
    Ok((p.transform(d)?, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn([1, 2, h, w], |_, c, y, x| (c * 1000 + y * w + x) as f32)
    }

    #[test]
    fn identity_and_inverses() {
        let t = ramp(5, 5);
        assert_eq!(Dihedral::IDENTITY.apply(&t).unwrap(), t);
        let r180 = Dihedral {
            quarter_turns: 2,
            hflip: false,
        };
        assert_eq!(r180.apply(&r180.apply(&t).unwrap()).unwrap(), t);
        let r90 = Dihedral {
            quarter_turns: 1,
            hflip: false,
        };
        let mut x = t.clone();
        for _ in 0..4 {
            x = r90.apply(&x).unwrap();
        }
        assert_eq!(x, t);
        for d in Dihedral::all().into_iter().filter(|d| d.hflip) {
            // Reflections are involutions.
            assert_eq!(d.apply(&d.apply(&t).unwrap()).unwrap(), t);
        }
    }

    #[test]
    fn eight_distinct_transforms() {
        let t = ramp(4, 4);
        let outs: Vec<_> = Dihedral::all().iter().map(|d| d.apply(&t).unwrap()).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(outs[i], outs[j]);
            }
        }
    }

    #[test]
    fn rotation_direction() {
        // [[1,2],[3,4]] rotated counter-clockwise is [[2,4],[1,3]].
        let t = Tensor::new([1, 1, 2, 2], alloc::vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let r = Dihedral {
            quarter_turns: 1,
            hflip: false,
        };
        assert_eq!(r.apply(&t).unwrap().data(), &[2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn hflip_mirrors_partition_boundaries() {
        let part = Tensor::from_fn([1, 1, 8, 8], |_, _, _, x| if x < 3 { 0.5f32 } else { 1.0 });
        let f = Dihedral {
            quarter_turns: 0,
            hflip: true,
        }
        .apply(&part)
        .unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(f.at(0, 0, y, x), part.at(0, 0, y, 7 - x));
            }
        }
    }

    #[test]
    fn non_square_rules() {
        let t = ramp(4, 6);
        assert!(Dihedral { quarter_turns: 1, hflip: false }.apply(&t).is_err());
        assert!(Dihedral { quarter_turns: 2, hflip: true }.apply(&t).is_ok());
    }

    #[test]
    fn patch_consistency_and_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Patch {
            lr: Tensor::<f32>::uniform([1, 3, 4, 4], 1.0, &mut rng),
            hr: Tensor::uniform([1, 3, 8, 8], 1.0, &mut rng),
            priors: Tensor::uniform([1, 3, 4, 4], 1.0, &mut rng),
            partition: Tensor::uniform([1, 1, 4, 4], 1.0, &mut rng),
        };
        for _ in 0..16 {
            let (q, d) = augment(&p, &mut rng).unwrap();
            assert_eq!(q, p.transform(d).unwrap());
            for (a, b) in [(&p.lr, &q.lr), (&p.hr, &q.hr), (&p.priors, &q.priors)] {
                for c in 0..a.shape().c {
                    let mut x: Vec<f32> = a.plane(0, c).to_vec();
                    let mut y: Vec<f32> = b.plane(0, c).to_vec();
                    x.sort_by(f32::total_cmp);
                    y.sort_by(f32::total_cmp);
                    assert_eq!(x, y);
                }
            }
        }
    }
}
