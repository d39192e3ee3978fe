//! Parameters, the layer trait and initialization.

use pidd_core::{Real, RealTensor, Result, RngStream};

/// A named weight tensor. Running statistics are non-trainable parameters so
/// they travel with checkpoints but are skipped by optimizers.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: RealTensor<T>,
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    pub fn new(value: RealTensor<T>) -> Self {
        Self {
            value,
            trainable: true,
        }
    }

    pub fn buffer(value: RealTensor<T>) -> Self {
        Self {
            value,
            trainable: false,
        }
    }

    pub fn zero_grad(&mut self) {
        if self.trainable {
            self.value.grad_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Gradient slice, allocated on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        self.value.grad_mut()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub type ParamVisitor<'a, T> = dyn FnMut(&str, &mut Param<T>) + 'a;

/// Forward caches whatever backward needs; backward consumes one cached
/// forward, accumulates parameter gradients and returns the input gradient.
pub trait Layer<T: Real> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>>;
    fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>>;
    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>);

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |_, p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Normal weights with standard deviation `sqrt(2 / fan_in)`.
pub fn he_normal<T: Real>(dims: [usize; 4], fan_in: usize, rng: &mut RngStream) -> RealTensor<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    RealTensor::from_fn(dims, |_| T::of(std * rng.normal()))
}
