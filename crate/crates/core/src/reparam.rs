//! Re-parameterizable convolution block.
//!
//! At training time the block sums three branches: two 3×3 convolutions and a
//! `1×1 → 3×3 → 1×1` chain whose hidden width is `depth_multiplier · c_in`.
//! All branches are linear, so they collapse into one 3×3 convolution for
//! inference. The first 1×1 of the chain has no bias: with zero padding a bias
//! there would leak into the border taps and the collapse would not be exact.

use alloc::format;
use alloc::vec;

use rand::Rng;

use crate::conv::{conv2d, ConvParams};
use crate::{Error, Real, Result, Shape, Tensor};

pub const DEFAULT_DEPTH_MULTIPLIER: usize = 2;

/// Train-time form of the block.
#[derive(Debug, Clone, PartialEq)]
pub struct RepconvParams<T: Real = f32> {
    pub branch_a: ConvParams<T>,
    pub branch_b: ConvParams<T>,
    /// `c_in → d·c_in`, 1×1, no bias.
    pub expand: ConvParams<T>,
    /// `d·c_in → d·c_in`, 3×3.
    pub mix: ConvParams<T>,
    /// `d·c_in → c_out`, 1×1.
    pub project: ConvParams<T>,
    pub depth_multiplier: usize,
}

/// Inference-time form: a single 3×3 convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedConv<T: Real = f32>(pub ConvParams<T>);

impl<T: Real> FusedConv<T> {
    pub fn param_count(&self) -> usize {
        self.0.param_count()
    }
}

impl<T: Real> RepconvParams<T> {
    /// Random init: fan-in scaling on every conv, `branch_b` halved, zero biases.
    pub fn init<R: Rng + ?Sized>(c_in: usize, c_out: usize, depth_multiplier: usize, rng: &mut R) -> Self {
        let hidden = depth_multiplier * c_in;
        let zeros = |c: usize| Some(Tensor::zeros([c, 1, 1, 1]));
        RepconvParams {
            branch_a: ConvParams::same(Tensor::kaiming([c_out, c_in, 3, 3], 1.0, rng), zeros(c_out)),
            branch_b: ConvParams::same(Tensor::kaiming([c_out, c_in, 3, 3], 0.5, rng), zeros(c_out)),
            expand: ConvParams::same(Tensor::kaiming([hidden, c_in, 1, 1], 1.0, rng), None),
            mix: ConvParams::same(Tensor::kaiming([hidden, hidden, 3, 3], 1.0, rng), zeros(hidden)),
            project: ConvParams::same(Tensor::kaiming([c_out, hidden, 1, 1], 1.0, rng), zeros(c_out)),
            depth_multiplier,
        }
    }

    /// All-zero parameters of the right shapes.
    pub fn zeros(c_in: usize, c_out: usize, depth_multiplier: usize) -> Self {
        let hidden = depth_multiplier * c_in;
        let z = |co: usize, ci: usize, k: usize, bias: bool| {
            ConvParams::same(Tensor::zeros([co, ci, k, k]), bias.then(|| Tensor::zeros([co, 1, 1, 1])))
        };
        RepconvParams {
            branch_a: z(c_out, c_in, 3, true),
            branch_b: z(c_out, c_in, 3, true),
            expand: z(hidden, c_in, 1, false),
            mix: z(hidden, hidden, 3, true),
            project: z(c_out, hidden, 1, true),
            depth_multiplier,
        }
    }

    /// Lift a fused kernel back into train form as the only live branch.
    pub fn from_fused(f: &FusedConv<T>, depth_multiplier: usize) -> Self {
        let mut p = Self::zeros(f.0.c_in(), f.0.c_out(), depth_multiplier);
        p.branch_a = f.0.clone();
        p
    }

    pub fn c_in(&self) -> usize {
        self.branch_a.c_in()
    }

    pub fn c_out(&self) -> usize {
        self.branch_a.c_out()
    }

    pub fn param_count(&self) -> usize {
        [&self.branch_a, &self.branch_b, &self.expand, &self.mix, &self.project]
            .iter()
            .map(|p| p.param_count())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "repconv";
        let (ci, co) = (self.c_in(), self.c_out());
        let hidden = self.depth_multiplier * ci;
        let expect = |p: &ConvParams<T>, shape: [usize; 4], bias: bool, name: &str| -> Result<()> {
            p.validate(OP)?;
            if p.weight.shape() != Shape::from(shape) || p.bias.is_some() != bias {
                return Err(Error::shape(
                    OP,
                    format!("{name}: expected weight {:?} (bias: {bias}), got {:?}", shape, p.weight.shape()),
                ));
            }
            if p.stride != 1 || p.padding != (shape[2] - 1) / 2 {
                return Err(Error::invalid(OP, format!("{name}: branches must be stride 1, same padding")));
            }
            Ok(())
        };
        expect(&self.branch_a, [co, ci, 3, 3], true, "branch_a")?;
        expect(&self.branch_b, [co, ci, 3, 3], true, "branch_b")?;
        expect(&self.expand, [hidden, ci, 1, 1], false, "expand")?;
        expect(&self.mix, [hidden, hidden, 3, 3], true, "mix")?;
        expect(&self.project, [co, hidden, 1, 1], true, "project")?;
        Ok(())
    }
}

/// Sum of the three branch outputs.
pub fn repconv_forward_train<T: Real>(x: &Tensor<T>, p: &RepconvParams<T>) -> Result<Tensor<T>> {
    p.validate()?;
    if x.shape().c != p.c_in() {
        return Err(Error::shape(
            "repconv_forward_train",
            format!("input has {} channels, block expects {}", x.shape().c, p.c_in()),
        ));
    }
    let mut out = conv2d(x, &p.branch_a)?;
    out.add_assign(&conv2d(x, &p.branch_b)?);
    let chain = conv2d(&conv2d(&conv2d(x, &p.expand)?, &p.mix)?, &p.project)?;
    out.add_assign(&chain);
    Ok(out)
}

pub fn repconv_forward_inference<T: Real>(x: &Tensor<T>, f: &FusedConv<T>) -> Result<Tensor<T>> {
    conv2d(x, &f.0)
}

/// Collapse the train-time branches into one 3×3 convolution.
///
/// The chain contracts as `W[o,i,u,v] = Σ_m Σ_q P[o,m]·M[m,q,u,v]·E[q,i]`
/// with bias `P·b_mix + b_project`; the parallel branches then add. Fusion is
/// accumulated in `f64`.
pub fn fuse<T: Real>(p: &RepconvParams<T>) -> Result<FusedConv<T>> {
    p.validate()?;
    let (ci, co) = (p.c_in(), p.c_out());
    let hidden = p.depth_multiplier * ci;
    let e = p.expand.weight.cast::<f64>();
    let m = p.mix.weight.cast::<f64>();
    let pr = p.project.weight.cast::<f64>();

    // mix ∘ expand: (hidden, ci, 3, 3)
    let mut me = vec![0.0f64; hidden * ci * 9];
    for mo in 0..hidden {
        for q in 0..hidden {
            for i in 0..ci {
                let eq = e.at(q, i, 0, 0);
                if eq == 0.0 {
                    continue;
                }
                for t in 0..9 {
                    me[(mo * ci + i) * 9 + t] += m.data()[(mo * hidden + q) * 9 + t] * eq;
                }
            }
        }
    }
    let mut w = vec![0.0f64; co * ci * 9];
    for o in 0..co {
        for mo in 0..hidden {
            let pm = pr.at(o, mo, 0, 0);
            if pm == 0.0 {
                continue;
            }
            for k in 0..ci * 9 {
                w[o * ci * 9 + k] += pm * me[mo * ci * 9 + k];
            }
        }
    }
    let mut b = vec![0.0f64; co];
    let b_mix = p.mix.bias.as_ref().expect("validated").cast::<f64>();
    let b_proj = p.project.bias.as_ref().expect("validated").cast::<f64>();
    for (o, bo) in b.iter_mut().enumerate() {
        let mut acc = b_proj.data()[o];
        for mo in 0..hidden {
            acc += pr.at(o, mo, 0, 0) * b_mix.data()[mo];
        }
        *bo = acc;
    }

    let wa = p.branch_a.weight.cast::<f64>();
    let wb = p.branch_b.weight.cast::<f64>();
    let ba = p.branch_a.bias.as_ref().expect("validated").cast::<f64>();
    let bb = p.branch_b.bias.as_ref().expect("validated").cast::<f64>();
    let weight = Tensor::new(
        [co, ci, 3, 3],
        w.iter()
            .zip(wa.data())
            .zip(wb.data())
            .map(|((c, a), b)| T::lit(a + b + c))
            .collect(),
    )?;
    let bias = Tensor::new(
        [co, 1, 1, 1],
        b.iter()
            .zip(ba.data())
            .zip(bb.data())
            .map(|((c, a), b)| T::lit(a + b + c))
            .collect(),
    )?;
    Ok(FusedConv(ConvParams::same(weight, Some(bias))))
}

/// Parameters of one fused `c_in → c_out` block: `c_out·c_in·9 + c_out`.
pub const fn fused_param_count(c_in: usize, c_out: usize) -> usize {
    c_out * c_in * 9 + c_out
}

/// Parameters of one train-form block.
pub const fn train_param_count(c_in: usize, c_out: usize, depth_multiplier: usize) -> usize {
    let h = depth_multiplier * c_in;
    2 * fused_param_count(c_in, c_out) + h * c_in + (h * h * 9 + h) + (c_out * h + c_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_biases<R: Rng>(p: &mut RepconvParams<f32>, rng: &mut R) {
        for c in [&mut p.branch_a, &mut p.branch_b, &mut p.mix, &mut p.project] {
            let s = c.bias.as_ref().unwrap().shape();
            c.bias = Some(Tensor::uniform(s, 0.5, rng));
        }
    }

    #[test]
    fn zeroed_branches_leave_branch_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = RepconvParams::<f32>::init(4, 5, 2, &mut rng);
        let live = p.branch_a.clone();
        let z = RepconvParams::<f32>::zeros(4, 5, 2);
        p.branch_b = z.branch_b;
        p.expand = z.expand;
        let x = Tensor::uniform([1, 4, 6, 6], 1.0, &mut rng);
        assert_eq!(repconv_forward_train(&x, &p).unwrap(), conv2d(&x, &live).unwrap());
        assert_eq!(fuse(&p).unwrap().0.weight, live.weight);
    }

    #[test]
    fn all_zero_gives_zero() {
        let p = RepconvParams::<f32>::zeros(3, 3, 2);
        let x = Tensor::full([1, 3, 4, 4], 2.0);
        assert_eq!(repconv_forward_train(&x, &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn sum_of_independent_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = RepconvParams::<f32>::init(3, 4, 2, &mut rng);
        rand_biases(&mut p, &mut rng);
        let x = Tensor::uniform([2, 3, 7, 5], 1.0, &mut rng);
        let a = conv2d(&x, &p.branch_a).unwrap();
        let b = conv2d(&x, &p.branch_b).unwrap();
        let h = conv2d(&x, &p.expand).unwrap();
        let h = conv2d(&h, &p.mix).unwrap();
        let c = conv2d(&h, &p.project).unwrap();
        let want = Tensor::from_fn(a.shape(), |n, ch, y, xx| {
            a.at(n, ch, y, xx) + b.at(n, ch, y, xx) + c.at(n, ch, y, xx)
        });
        assert_eq!(repconv_forward_train(&x, &p).unwrap(), want);
    }

    #[test]
    fn cancelling_branches_fuse_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = RepconvParams::<f32>::zeros(2, 2, 2);
        let k: Tensor<f32> = Tensor::uniform([2, 2, 3, 3], 1.0, &mut rng);
        p.branch_a.weight = k.clone();
        p.branch_b.weight = k.map(|v| -v);
        assert_eq!(fuse(&p).unwrap().0.weight.max_abs(), 0.0);
    }

    #[test]
    fn fused_matches_train_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = RepconvParams::<f32>::init(8, 8, 2, &mut rng);
        rand_biases(&mut p, &mut rng);
        let x = Tensor::uniform([1, 8, 16, 16], 1.0, &mut rng);
        let train = repconv_forward_train(&x, &p).unwrap();
        let fused = repconv_forward_inference(&x, &fuse(&p).unwrap()).unwrap();
        assert!(train.max_abs_diff(&fused) <= 1e-5);
    }

    #[test]
    fn fusing_a_lifted_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = RepconvParams::<f32>::init(4, 4, 2, &mut rng);
        rand_biases(&mut p, &mut rng);
        let f = fuse(&p).unwrap();
        let again = fuse(&RepconvParams::from_fused(&f, 2)).unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(fused_param_count(32, 32), 9248);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 1..4 {
            let p = RepconvParams::<f32>::init(32, 32, d, &mut rng);
            assert_eq!(p.param_count(), train_param_count(32, 32, d));
            assert_eq!(fuse(&p).unwrap().param_count(), 9248);
        }
        assert_eq!(train_param_count(32, 32, 2), 59552);
    }

    #[test]
    fn shape_checks() {
        let mut p = RepconvParams::<f32>::zeros(4, 4, 2);
        assert!(repconv_forward_train(&Tensor::zeros([1, 3, 4, 4]), &p).is_err());
        p.expand.bias = Some(Tensor::zeros([8, 1, 1, 1]));
        assert!(fuse(&p).is_err());
    }
}
