//! Total-variation regularized least squares by fixed-step gradient descent:
//!
//! `min_x ½‖y − E x‖² + λ Σ_p huber_ε(|∇x|(p))`
//!
//! with forward differences, Neumann boundaries and `ε = 1e-3`. The default
//! step is `1 / L` with `L = 1 + 8λ/ε`, the gradient Lipschitz bound when the
//! maps are sum-of-squares normalized, which makes the objective monotone.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, MultiCoilKSpace};
use crate::mri::{Encoder, SamplingMask, SensitivityMaps};
use crate::real::Real;

pub const TV_SMOOTHING: f64 = 1e-3;

/// Consecutive objective increases tolerated before giving up.
const DIVERGENCE_RUN: usize = 5;

#[derive(Clone, Debug)]
pub struct TvParams {
    pub lambda: f64,
    pub iters: usize,
    /// `None` selects `1 / L`.
    pub step: Option<f64>,
}

impl Default for TvParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            iters: 100,
            step: None,
        }
    }
}

impl TvParams {
    pub fn default_step(&self) -> f64 {
        1.0 / (1.0 + 8.0 * self.lambda / TV_SMOOTHING)
    }
}

#[derive(Clone, Debug)]
pub struct TvResult<T> {
    pub image: ComplexImage<T>,
    /// Objective at the start point and after every iteration.
    pub objective: Vec<f64>,
}

fn huber(t: f64) -> f64 {
    if t <= TV_SMOOTHING {
        t * t / (2.0 * TV_SMOOTHING)
    } else {
        t - TV_SMOOTHING / 2.0
    }
}

type C64 = Complex<f64>;

fn gradients(x: &[C64], h: usize, w: usize) -> (Vec<C64>, Vec<C64>) {
    let mut gx = vec![C64::new(0.0, 0.0); h * w];
    let mut gy = vec![C64::new(0.0, 0.0); h * w];
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            if j + 1 < w {
                gx[p] = x[p + 1] - x[p];
            }
            if i + 1 < h {
                gy[p] = x[p + w] - x[p];
            }
        }
    }
    (gx, gy)
}

/// TV value and its gradient.
fn tv_value_grad(x: &[C64], h: usize, w: usize) -> (f64, Vec<C64>) {
    let (mut gx, mut gy) = gradients(x, h, w);
    let mut value = 0.0;
    for (a, b) in gx.iter_mut().zip(gy.iter_mut()) {
        let t = (a.norm_sqr() + b.norm_sqr()).sqrt();
        value += huber(t);
        let s = if t <= TV_SMOOTHING { 1.0 / TV_SMOOTHING } else { 1.0 / t };
        *a *= s;
        *b *= s;
    }
    // Adjoint of the forward differences.
    let mut g = vec![C64::new(0.0, 0.0); h * w];
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            let mut v = C64::new(0.0, 0.0);
            if j + 1 < w {
                v -= gx[p];
            }
            if j >= 1 {
                v += gx[p - 1];
            }
            if i + 1 < h {
                v -= gy[p];
            }
            if i >= 1 {
                v += gy[p - w];
            }
            g[p] = v;
        }
    }
    (value, g)
}

pub fn tv_reconstruct<T: Real>(
    y: &MultiCoilKSpace<T>,
    maps: &SensitivityMaps<T>,
    mask: &SamplingMask,
    params: &TvParams,
) -> Result<TvResult<T>> {
    if params.iters == 0 {
        return Err(Error::invalid("TV reconstruction needs at least one iteration"));
    }
    if params.lambda < 0.0 {
        return Err(Error::invalid("TV weight must be non-negative"));
    }
    let step = params.step.unwrap_or_else(|| params.default_step());
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::StepSize(format!("step {step} is not a positive finite number")));
    }
    let maps64 = maps.cast::<f64>();
    let y64 = y.cast::<f64>();
    let enc = Encoder::new(&maps64, mask)?;
    let (h, w) = mask.dims();

    let mut x = enc.adjoint(&y64)?;
    let evaluate = |x: &ComplexImage<f64>| -> Result<(f64, Vec<C64>)> {
        let ex = enc.forward(x)?;
        let mut resid = ex;
        let mut data_term = 0.0;
        for q in 0..resid.coils() {
            for ((r, yv), &b) in resid.coil_mut(q).iter_mut().zip(y64.coil(q)).zip(mask.bits()) {
                if b {
                    *r -= yv;
                }
                data_term += r.norm_sqr();
            }
        }
        let mut grad = enc.adjoint(&resid)?.into_data();
        let mut obj = 0.5 * data_term;
        if params.lambda > 0.0 {
            let (tv, tv_grad) = tv_value_grad(x.data(), h, w);
            obj += params.lambda * tv;
            for (g, t) in grad.iter_mut().zip(&tv_grad) {
                *g += t * params.lambda;
            }
        }
        Ok((obj, grad))
    };

    let (mut obj, mut grad) = evaluate(&x)?;
    let mut objective = vec![obj];
    let mut rising = 0;
    for it in 0..params.iters {
        for (v, g) in x.data_mut().iter_mut().zip(&grad) {
            *v -= g * step;
        }
        let (next, next_grad) = evaluate(&x)?;
        if !next.is_finite() {
            return Err(Error::StepSize(format!(
                "objective became non-finite at iteration {it} with step {step}"
            )));
        }
        if next > obj {
            rising += 1;
            if rising >= DIVERGENCE_RUN {
                return Err(Error::StepSize(format!(
                    "objective rose for {DIVERGENCE_RUN} consecutive iterations (last at {it}) with step {step}"
                )));
            }
        } else {
            rising = 0;
        }
        obj = next;
        grad = next_grad;
        objective.push(obj);
    }
    Ok(TvResult {
        image: x.cast(),
        objective,
    })
}
