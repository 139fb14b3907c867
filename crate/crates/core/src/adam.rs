//! Adam with bias correction over a name → tensor map.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::invalid("adam", format!("bad hyper-parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state. Moments are kept in `f64`.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Adam {
            cfg,
            t: 0,
            state: BTreeMap::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// One update. Parameters without an entry in `grads` see a zero gradient.
    /// Non-finite or mis-shaped gradients abort the step before anything changes.
    pub fn step<T: Real>(
        &mut self,
        params: &mut BTreeMap<String, Tensor<T>>,
        grads: &BTreeMap<String, Tensor<T>>,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::MissingTensor(name.clone()))?;
            g.expect_shape(p.shape(), "adam")?;
            if !g.all_finite() {
                return Err(Error::NonFinite { op: "adam" });
            }
        }
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - Float::powi(c.beta1, self.t as i32);
        let bc2 = 1.0 - Float::powi(c.beta2, self.t as i32);
        for (name, p) in params.iter_mut() {
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: alloc::vec![0.0; p.len()],
                v: alloc::vec![0.0; p.len()],
            });
            let g = grads.get(name);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                let gi = g.map_or(0.0, |g| g.data()[i].as_f64());
                st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * gi;
                st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = st.m[i] / bc1;
                let vhat = st.v[i] / bc2;
                let upd = c.lr * mhat / (Float::sqrt(vhat) + c.eps);
                *w = T::lit(w.as_f64() - upd);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn single(v: f64) -> BTreeMap<String, Tensor<f64>> {
        let mut m = BTreeMap::new();
        m.insert("w".to_string(), Tensor::scalar(v));
        m
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        let mut p = single(1.5);
        let g = single(0.0);
        for _ in 0..10 {
            opt.step(&mut p, &g).unwrap();
        }
        assert_eq!(p["w"].data()[0], 1.5);
        assert_eq!(opt.steps(), 10);
    }

    #[test]
    fn constant_grad_step_is_lr() {
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(cfg).unwrap();
        let mut p = single(0.0);
        let g = single(3.7);
        let mut prev = 0.0;
        for _ in 0..500 {
            opt.step(&mut p, &g).unwrap();
            let cur = p["w"].data()[0];
            let delta = prev - cur;
            assert!((delta - cfg.lr).abs() < 1e-9, "{delta}");
            prev = cur;
        }
    }

    #[test]
    fn quadratic_converges() {
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        })
        .unwrap();
        let mut p = single(5.0);
        for _ in 0..200 {
            let w = p["w"].data()[0];
            opt.step(&mut p, &single(2.0 * (w - 2.0))).unwrap();
        }
        assert!((p["w"].data()[0] - 2.0).abs() < 0.05, "{}", p["w"].data()[0]);
    }

    #[test]
    fn rejects_bad_grads() {
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        let mut p = single(1.0);
        assert!(opt.step(&mut p, &single(f64::NAN)).is_err());
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), Tensor::zeros([1, 1, 1, 2]));
        assert!(opt.step(&mut p, &g).is_err());
        g.clear();
        g.insert("other".to_string(), Tensor::scalar(1.0));
        assert!(opt.step(&mut p, &g).is_err());
        assert_eq!(opt.steps(), 0);
        assert_eq!(p["w"].data()[0], 1.0);
        assert!(Adam::new(AdamConfig { beta1: 1.0, ..Default::default() }).is_err());
    }
}
