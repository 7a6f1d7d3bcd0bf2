//! Adam with coupled, per-parameter weight decay.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Slot<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Moment estimates for a set of named parameters.
///
/// Slots are created lazily on the first step that sees a name; later steps
/// must present the same number of entries for that name.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    t: u64,
    weight_decay: HashMap<String, f64>,
    slots: HashMap<String, Slot<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            weight_decay: HashMap::new(),
            slots: HashMap::new(),
        }
    }

    pub fn with_weight_decay(mut self, name: &str, wd: f64) -> Self {
        self.set_weight_decay(name, wd);
        self
    }

    pub fn set_weight_decay(&mut self, name: &str, wd: f64) {
        self.weight_decay.insert(name.to_owned(), wd);
    }

    pub fn weight_decay(&self, name: &str) -> f64 {
        self.weight_decay.get(name).copied().unwrap_or(0.0)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// Second-moment estimate for `name`, if that parameter has been stepped.
    pub fn second_moment(&self, name: &str) -> Option<&[T]> {
        self.slots.get(name).map(|s| s.v.as_slice())
    }

    /// One Adam update of every parameter in `params` using the gradient with
    /// the same name in `grads`.
    pub fn step(&mut self, params: Vec<(&'static str, &mut [T])>, grads: &[(&'static str, &[T])]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("adam_step", &[params.len()], &[grads.len()]));
        }
        for ((pn, p), (gn, g)) in params.iter().zip(grads) {
            if pn != gn || p.len() != g.len() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: vec![p.len()],
                    rhs: vec![g.len()],
                });
            }
            if let Some(slot) = self.slots.get(*pn) {
                if slot.m.len() != p.len() {
                    return Err(Error::shape("adam_step", &[slot.m.len()], &[p.len()]));
                }
            }
        }

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powf(self.t as f64);
        let bc2 = 1.0 - beta2.powf(self.t as f64);
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(eps));
        let (bc1, bc2) = (T::from_f64(bc1), T::from_f64(bc2));

        for ((name, p), (_, g)) in params.into_iter().zip(grads) {
            let wd = T::from_f64(self.weight_decay(name));
            let decay = wd > T::zero();
            let slot = self.slots.entry(name.to_owned()).or_insert_with(|| Slot {
                m: vec![T::zero(); p.len()],
                v: vec![T::zero(); p.len()],
            });
            for i in 0..p.len() {
                let gi = if decay { g[i] + wd * p[i] } else { g[i] };
                slot.m[i] = b1 * slot.m[i] + one_b1 * gi;
                slot.v[i] = b2 * slot.v[i] + one_b2 * gi * gi;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(state: &mut AdamState<f64>, p: &mut f64, g: f64) {
        let grads = [("p", std::slice::from_ref(&g))];
        state.step(vec![("p", std::slice::from_mut(p))], &grads).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut st = AdamState::<f64>::new(AdamConfig::default());
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0; 3];
        for _ in 0..5 {
            st.step(vec![("w", p.as_mut_slice())], &[("w", g.as_slice())]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn single_step_hand_trace() {
        let mut st = AdamState::<f64>::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        let mut p = 1.0;
        scalar_step(&mut st, &mut p, 1.0);
        // m = 0.1, v = 0.001, both bias corrections give 1
        let want = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p - want).abs() < 1e-15, "{p}");
        assert!((st.second_moment("p").unwrap()[0] - 0.001).abs() < 1e-15);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        let mut st = AdamState::<f64>::new(AdamConfig {
            lr: 0.05,
            ..Default::default()
        });
        let mut p = 1.0;
        for _ in 0..500 {
            let g = p;
            scalar_step(&mut st, &mut p, g);
        }
        assert!(p.abs() < 1e-3, "{p}");
    }

    #[test]
    fn weight_decay_only_on_flagged_names() {
        let mut st = AdamState::<f64>::new(AdamConfig::default()).with_weight_decay("b", 0.5);
        let mut w = vec![2.0];
        let mut b = vec![2.0];
        let zero = [0.0];
        st.step(vec![("w", w.as_mut_slice()), ("b", b.as_mut_slice())], &[("w", &zero), ("b", &zero)])
            .unwrap();
        assert_eq!(w, vec![2.0]);
        assert!(b[0] < 2.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut st = AdamState::<f64>::new(AdamConfig::default());
        let mut p = vec![0.0; 3];
        let g = [0.0; 2];
        assert!(st.step(vec![("w", p.as_mut_slice())], &[("w", &g)]).is_err());

        let g3 = [0.0; 3];
        st.step(vec![("w", p.as_mut_slice())], &[("w", &g3)]).unwrap();
        let mut q = vec![0.0; 2];
        assert!(st.step(vec![("w", q.as_mut_slice())], &[("w", &g)]).is_err());
    }
}
