//! Adam with bias correction over parameters reached by a visitor.

use pidd_core::Real;
use pidd_nn::ParamVisitor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments are matched to trainable parameters by visit order, which is
/// fixed for a given model.
pub struct Adam<T> {
    cfg: AdamConfig,
    t: u32,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// First and second moments of the `i`-th trainable tensor.
    pub fn moments(&self, i: usize) -> Option<(&[T], &[T])> {
        self.moments.get(i).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// One update of every trainable parameter with its current gradient;
    /// a missing gradient counts as zero.
    pub fn step(&mut self, lr: f64, visit: impl FnOnce(&mut ParamVisitor<'_, T>)) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (tb1, tb2) = (T::of(b1), T::of(b2));
        let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
        let (ic1, ic2) = (T::of(1.0 / c1), T::of(1.0 / c2));
        let (tlr, teps) = (T::of(lr), T::of(self.cfg.eps));
        let moments = &mut self.moments;
        let mut idx = 0;
        visit(&mut |_, p| {
            if !p.trainable {
                return;
            }
            let n = p.len();
            if moments.len() == idx {
                moments.push((vec![T::zero(); n], vec![T::zero(); n]));
            }
            let (m, v) = &mut moments[idx];
            idx += 1;
            let grad = p.value.grad().map(|g| g.to_vec());
            let values = p.value.data_mut();
            for i in 0..n {
                let g = grad.as_ref().map_or(T::zero(), |g| g[i]);
                m[i] = tb1 * m[i] + ob1 * g;
                v[i] = tb2 * v[i] + ob2 * g * g;
                let mhat = m[i] * ic1;
                let vhat = v[i] * ic2;
                values[i] -= tlr * mhat / (vhat.sqrt() + teps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pidd_core::RealTensor;
    use pidd_nn::Param;

    fn param(values: &[f64], grads: &[f64]) -> Param<f64> {
        let mut p = Param::new(RealTensor::new([1, 1, 1, values.len()], values.to_vec()).unwrap());
        p.grad_mut().copy_from_slice(grads);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = param(&[1.0, -2.0], &[0.5, -0.25]);
        adam.step(0.1, |f| f("w", &mut p));
        let before = p.value.data().to_vec();
        let (m0, v0) = {
            let (m, v) = adam.moments(0).unwrap();
            (m.to_vec(), v.to_vec())
        };
        p.zero_grad();
        adam.step(0.1, |f| f("w", &mut p));
        let (m1, v1) = adam.moments(0).unwrap();
        for i in 0..2 {
            assert_eq!(m1[i], 0.5 * m0[i]);
            assert_eq!(v1[i], 0.999 * v0[i]);
        }
        // mhat is not zero after a decay, so the parameter still moves; a
        // fresh optimizer with zero gradient does not.
        let mut fresh = Adam::new(AdamConfig::default());
        let mut q = param(&before, &[0.0, 0.0]);
        fresh.step(0.1, |f| f("w", &mut q));
        assert_eq!(q.value.data(), before.as_slice());
    }

    #[test]
    fn first_step_closed_form() {
        // With bias correction, step one moves each weight by
        // lr · g / (|g| + eps), i.e. almost exactly lr against the sign.
        let (lr, eps) = (0.01, 1e-8);
        let g = [0.3, -4.0, 1e-3];
        let mut adam = Adam::new(AdamConfig { eps, ..Default::default() });
        let mut p = param(&[0.0; 3], &g);
        adam.step(lr, |f| f("w", &mut p));
        for (i, &gi) in g.iter().enumerate() {
            let want = -lr * gi / (gi.abs() + eps);
            assert!((p.value.data()[i] - want).abs() < 1e-15, "{i}");
        }
    }

    #[test]
    fn identical_problems_identical_trajectories() {
        let run = || {
            let mut adam = Adam::new(AdamConfig::default());
            let mut p = param(&[3.0], &[0.0]);
            let mut trace = Vec::new();
            for _ in 0..50 {
                let x = p.value.data()[0];
                p.grad_mut()[0] = 2.0 * (x - 1.0);
                adam.step(0.05, |f| f("x", &mut p));
                trace.push(p.value.data()[0]);
            }
            trace
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!((a[49] - 1.0).abs() < (3.0f64 - 1.0).abs());
    }

    #[test]
    fn buffers_are_skipped() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut b = Param::buffer(RealTensor::new([1, 1, 1, 1], vec![5.0f64]).unwrap());
        adam.step(1.0, |f| f("running_mean", &mut b));
        assert_eq!(b.value.data()[0], 5.0);
        assert!(adam.moments(0).is_none());
    }
}
