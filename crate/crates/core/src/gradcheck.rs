//! Finite-difference verification of the analytic gradients.
//!
//! The function under test is replayed in `f64`. Non-scalar outputs are
//! reduced with a fixed pseudo-random projection so every output element
//! contributes. The reported error is normwise:
//! `max_i |analytic_i − numeric_i| / max_i |numeric_i|`.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::{Error, Result, Tensor};

/// Knobs for [`gradcheck`].
#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates (evenly strided); `0` = all.
    pub max_coords: usize,
    /// Seed of the output projection.
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-3,
            max_coords: 0,
            seed: 0x6a09e667,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

fn evaluate(
    f: &dyn Fn(&mut Graph<f64>, Var) -> Result<Var>,
    x: &Tensor<f64>,
    projection: &mut Option<Tensor<f64>>,
    seed: u64,
) -> Result<(Graph<f64>, Var, Var)> {
    let mut g = Graph::new();
    let xv = g.param(x.clone())?;
    let out = f(&mut g, xv)?;
    let shape = g.shape(out);
    let root = if shape.numel() == 1 {
        out
    } else {
        let proj = projection.get_or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Tensor::uniform(shape, 1.0, &mut rng)
        });
        g.dot_const(out, proj)?
    };
    let v = g.scalar(root);
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "gradcheck" });
    }
    Ok((g, xv, root))
}

/// Compare `∂f/∂x` from the tape against central differences.
pub fn gradcheck(
    f: impl Fn(&mut Graph<f64>, Var) -> Result<Var>,
    x: &Tensor<f64>,
    tol: f64,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let mut projection = None;
    let (g, xv, root) = evaluate(&f, x, &mut projection, opts.seed)?;
    let grads = g.backward(root)?;
    let analytic = grads
        .get(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    drop(g);

    compare(&analytic, x, tol, opts, |probe| {
        let (g, _, r) = evaluate(&f, probe, &mut projection, opts.seed)?;
        Ok(g.scalar(r))
    })
}

/// Like [`gradcheck`] for a scalar objective whose finite differences come
/// from a separate evaluator.
///
/// Used where the tape treats part of the computation as constant (the
/// frozen focal weights of the frequency loss): `numeric` evaluates the same
/// objective with those parts held at their values at `x`.
pub fn gradcheck_frozen(
    f: impl Fn(&mut Graph<f64>, Var) -> Result<Var>,
    numeric: impl Fn(&Tensor<f64>) -> Result<f64>,
    x: &Tensor<f64>,
    tol: f64,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let mut g = Graph::new();
    let xv = g.param(x.clone())?;
    let root = f(&mut g, xv)?;
    if g.shape(root).numel() != 1 {
        return Err(Error::shape("gradcheck_frozen", "objective must be scalar"));
    }
    let grads = g.backward(root)?;
    let analytic = grads
        .get(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    drop(g);
    compare(&analytic, x, tol, opts, |probe| {
        let v = numeric(probe)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "gradcheck" });
        }
        Ok(v)
    })
}

fn compare(
    analytic: &Tensor<f64>,
    x: &Tensor<f64>,
    tol: f64,
    opts: GradcheckOptions,
    mut eval: impl FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<GradcheckReport> {
    let n = x.len();
    let coords: Vec<usize> = if opts.max_coords == 0 || opts.max_coords >= n {
        (0..n).collect()
    } else {
        let stride = n as f64 / opts.max_coords as f64;
        (0..opts.max_coords).map(|i| (i as f64 * stride) as usize).collect()
    };

    let mut max_num = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut probe = x.clone();
    for &i in &coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + opts.step;
        let fp = eval(&probe)?;
        probe.data_mut()[i] = orig - opts.step;
        let fm = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (2.0 * opts.step);
        max_num = max_num.max(numeric.abs());
        max_abs = max_abs.max((numeric - analytic.data()[i]).abs());
    }
    let denom = if max_num > 0.0 { max_num } else { 1.0 };
    let rel = max_abs / denom;
    Ok(GradcheckReport {
        max_rel_error: rel,
        max_abs_error: max_abs,
        coords_checked: coords.len(),
        tol,
        passed: rel <= tol,
    })
}
