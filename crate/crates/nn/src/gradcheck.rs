//! Central-difference gradient checks for layers in `f64`.
//!
//! The scalar probed is `L = Σ w ⊙ y` for fixed random weights `w`, so the
//! analytic input gradient is `backward(w)`.

use pidd_core::{Real, RealTensor, Result, RngStream};

use crate::param::{Layer, Mode};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const FLOOR_FRACTION: f64 = 1e-5;

/// `‖a − n‖∞ / ‖n‖∞`, with the denominator floored at `1e-12`.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    rel_error_floored(analytic, numeric, 1e-12)
}

/// [`rel_error`] with an explicit floor on the denominator. Used where a
/// tensor's true gradient vanishes (a bias feeding batch norm) and the
/// difference quotient is pure rounding noise.
pub fn rel_error_floored(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let num = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let den = numeric.iter().map(|n| n.abs()).fold(0.0, f64::max);
    num / den.max(floor)
}

/// Up to `max` indices out of `0..len`, evenly spread and always including
/// both ends.
pub fn probe_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut v: Vec<usize> = (0..max).map(|i| i * (len - 1) / (max - 1).max(1)).collect();
    v.dedup();
    v
}

/// Central differences of `f` at the listed coordinates of `x`.
pub fn numeric_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], indices: &[usize], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct LayerCheck {
    /// Relative error of the input gradient.
    pub input: f64,
    /// Worst relative error over trainable parameters, with its name.
    pub worst_param: Option<(String, f64)>,
}

impl LayerCheck {
    pub fn max(&self) -> f64 {
        self.worst_param.as_ref().map_or(self.input, |(_, e)| e.max(self.input))
    }
}

fn weighted_sum(y: &RealTensor<f64>, w: &RealTensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Checks input and parameter gradients of `layer` at `x`, probing at most
/// `max_probes` coordinates per tensor. Parameter errors are taken relative
/// to at least `FLOOR_FRACTION` of the largest analytic gradient entry.
pub fn check_layer<L: Layer<f64>>(
    layer: &mut L,
    x: &RealTensor<f64>,
    mode: Mode,
    seed: u64,
    max_probes: usize,
) -> Result<LayerCheck> {
    let y = layer.forward(x, mode)?;
    let mut rng = RngStream::new(seed, 0);
    let w = RealTensor::from_fn(y.dims(), |_| rng.normal());
    layer.zero_grad();
    let dx = layer.backward(&w)?;

    let mut analytic_params: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    layer.visit_params("", &mut |name, p| {
        if p.trainable {
            let values = p.value.data().to_vec();
            let grad = p.value.grad().map_or_else(|| vec![0.0; values.len()], |g| g.to_vec());
            analytic_params.push((name.to_string(), values, grad));
        }
    });

    let scale = analytic_params
        .iter()
        .flat_map(|(_, _, g)| g.iter())
        .chain(dx.data())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (FLOOR_FRACTION * scale).max(1e-12);
    let mut out = LayerCheck::default();
    let idx = probe_indices(x.len(), max_probes);
    let mut probe_err = None;
    let numeric = numeric_grad(
        &mut |v| {
            let xt = RealTensor::new(x.dims(), v.to_vec()).expect("same dims");
            match layer.forward(&xt, mode) {
                Ok(y) => weighted_sum(&y, &w),
                Err(e) => {
                    probe_err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        x.data(),
        &idx,
        DEFAULT_STEP,
    );
    if let Some(e) = probe_err {
        return Err(e);
    }
    let analytic: Vec<f64> = idx.iter().map(|&i| dx.data()[i]).collect();
    out.input = rel_error(&analytic, &numeric);

    for (name, values, grad) in analytic_params {
        let idx = probe_indices(values.len(), max_probes);
        let mut numeric = Vec::with_capacity(idx.len());
        for &i in &idx {
            let eval = |v: f64, layer: &mut L| -> Result<f64> {
                layer.visit_params("", &mut |n, p| {
                    if n == name {
                        p.value.data_mut()[i] = v;
                    }
                });
                Ok(weighted_sum(&layer.forward(x, mode)?, &w))
            };
            let up = eval(values[i] + DEFAULT_STEP, layer)?;
            let down = eval(values[i] - DEFAULT_STEP, layer)?;
            eval(values[i], layer)?;
            numeric.push((up - down) / (2.0 * DEFAULT_STEP));
        }
        let analytic: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
        let e = rel_error_floored(&analytic, &numeric, floor);
        if out.worst_param.as_ref().is_none_or(|(_, w)| e > *w) {
            out.worst_param = Some((name, e));
        }
    }
    Ok(out)
}

/// Random tensor with entries drawn uniformly from `[lo, hi)`.
pub fn uniform_tensor<T: Real>(dims: [usize; 4], lo: f64, hi: f64, seed: u64) -> RealTensor<T> {
    let mut rng = RngStream::new(seed, 1);
    RealTensor::from_fn(dims, |_| T::of(rng.uniform_range(lo, hi)))
}
