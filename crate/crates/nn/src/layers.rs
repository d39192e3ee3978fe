//! Batch normalization, activations, fully connected layers and channel
//! concatenation.

use pidd_core::real::{gemm, MatRef};
use pidd_core::{Error, Real, RealTensor, Result, RngStream};

use crate::param::{he_normal, join, Layer, Mode, Param, ParamVisitor};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
/// Weight kept on the running statistics at each update.
pub const BN_MOMENTUM: f64 = 0.9;

fn missing(what: &str) -> Error {
    Error::invalid(format!("{what} backward without forward"))
}

pub struct LeakyRelu<T> {
    input: Option<RealTensor<T>>,
}

impl<T: Real> LeakyRelu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }
}

impl<T: Real> Default for LeakyRelu<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub fn leaky_relu<T: Real>(v: T) -> T {
    if v >= T::zero() {
        v
    } else {
        v * T::of(LEAKY_SLOPE)
    }
}

impl<T: Real> Layer<T> for LeakyRelu<T> {
    fn forward(&mut self, x: &RealTensor<T>, _mode: Mode) -> Result<RealTensor<T>> {
        let y = RealTensor::new(x.dims(), x.data().iter().map(|&v| leaky_relu(v)).collect())?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>> {
        let x = self.input.take().ok_or_else(|| missing("leaky relu"))?;
        let slope = T::of(LEAKY_SLOPE);
        let g = x
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&v, &g)| if v >= T::zero() { g } else { g * slope })
            .collect();
        RealTensor::new(x.dims(), g)
    }

    fn visit_params(&mut self, _prefix: &str, _f: &mut ParamVisitor<'_, T>) {}
}

pub struct Sigmoid<T> {
    output: Option<RealTensor<T>>,
}

impl<T: Real> Sigmoid<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

impl<T: Real> Default for Sigmoid<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, x: &RealTensor<T>, _mode: Mode) -> Result<RealTensor<T>> {
        let y = RealTensor::new(x.dims(), x.data().iter().map(|&v| sigmoid(v)).collect())?;
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>> {
        let y = self.output.take().ok_or_else(|| missing("sigmoid"))?;
        let g = y
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect();
        RealTensor::new(y.dims(), g)
    }

    fn visit_params(&mut self, _prefix: &str, _f: &mut ParamVisitor<'_, T>) {}
}

struct BnCache<T> {
    dims: [usize; 4],
    xhat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

/// Per-channel batch normalization over batch and spatial positions.
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    /// Unbiased running variance.
    pub running_var: Param<T>,
    channels: usize,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(RealTensor::filled([channels, 1, 1, 1], T::one())),
            beta: Param::new(RealTensor::zeros([channels, 1, 1, 1])),
            running_mean: Param::buffer(RealTensor::zeros([channels, 1, 1, 1])),
            running_var: Param::buffer(RealTensor::filled([channels, 1, 1, 1], T::one())),
            channels,
            cache: None,
        }
    }
}

impl<T: Real> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let [n, c, h, w] = x.dims();
        if c != self.channels {
            return Err(Error::invalid(format!("batch norm expects {} channels, got {c}", self.channels)));
        }
        if mode == Mode::Train && n < 2 {
            return Err(Error::invalid("batch norm in training mode needs a batch of at least 2"));
        }
        let p = h * w;
        let m = (n * p) as f64;
        let eps = BN_EPS;
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        let mut y = vec![T::zero(); x.len()];
        for ch in 0..c {
            let (mean, var) = if mode == Mode::Train {
                let mut s = 0.0;
                for b in 0..n {
                    s += x.plane(b, ch).iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mean = s / m;
                let mut ss = 0.0;
                for b in 0..n {
                    ss += x.plane(b, ch).iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
                }
                let var = ss / m;
                let mom = BN_MOMENTUM;
                let rm = &mut self.running_mean.value.data_mut()[ch];
                *rm = T::of(mom * rm.as_f64() + (1.0 - mom) * mean);
                let rv = &mut self.running_var.value.data_mut()[ch];
                let unbiased = if m > 1.0 { ss / (m - 1.0) } else { var };
                *rv = T::of(mom * rv.as_f64() + (1.0 - mom) * unbiased);
                (mean, var)
            } else {
                (
                    self.running_mean.value.data()[ch].as_f64(),
                    self.running_var.value.data()[ch].as_f64(),
                )
            };
            let inv = T::of(1.0 / (var + eps).sqrt());
            let mean = T::of(mean);
            inv_std[ch] = inv;
            let (ga, be) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            for b in 0..n {
                let off = (b * c + ch) * p;
                for i in off..off + p {
                    let xh = (x.data()[i] - mean) * inv;
                    xhat[i] = xh;
                    y[i] = ga * xh + be;
                }
            }
        }
        self.cache = Some(BnCache {
            dims: x.dims(),
            xhat,
            inv_std,
            train: mode == Mode::Train,
        });
        RealTensor::new(x.dims(), y)
    }

    fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>> {
        let BnCache {
            dims,
            xhat,
            inv_std,
            train,
        } = self.cache.take().ok_or_else(|| missing("batch norm"))?;
        if grad_out.dims() != dims {
            return Err(Error::invalid("batch norm output gradient has the wrong shape"));
        }
        let [n, c, h, w] = dims;
        let p = h * w;
        let m = T::of((n * p) as f64);
        let g = grad_out.data();
        let mut dx = vec![T::zero(); g.len()];
        for ch in 0..c {
            let (mut sg, mut sgx) = (T::zero(), T::zero());
            for b in 0..n {
                let off = (b * c + ch) * p;
                for i in off..off + p {
                    sg += g[i];
                    sgx += g[i] * xhat[i];
                }
            }
            self.beta.grad_mut()[ch] += sg;
            self.gamma.grad_mut()[ch] += sgx;
            let scale = self.gamma.value.data()[ch] * inv_std[ch];
            for b in 0..n {
                let off = (b * c + ch) * p;
                for i in off..off + p {
                    dx[i] = if train {
                        scale * (g[i] - (sg + xhat[i] * sgx) / m)
                    } else {
                        scale * g[i]
                    };
                }
            }
        }
        RealTensor::new(dims, dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}

/// Fully connected layer on flattened samples; output dims `[n, out, 1, 1]`.
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    fin: usize,
    fout: usize,
    input: Option<RealTensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(fin: usize, fout: usize, rng: &mut RngStream) -> Self {
        Self {
            weight: Param::new(he_normal([fout, fin, 1, 1], fin, rng)),
            bias: Param::new(RealTensor::zeros([fout, 1, 1, 1])),
            fin,
            fout,
            input: None,
        }
    }
}

impl<T: Real> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &RealTensor<T>, _mode: Mode) -> Result<RealTensor<T>> {
        let n = x.batch();
        if x.sample_len() != self.fin {
            return Err(Error::invalid(format!(
                "linear layer expects {} features, got {}",
                self.fin,
                x.sample_len()
            )));
        }
        let mut y = vec![T::zero(); n * self.fout];
        for b in 0..n {
            y[b * self.fout..(b + 1) * self.fout].copy_from_slice(self.bias.value.data());
        }
        gemm(
            MatRef::new(x.data(), n, self.fin),
            MatRef::new(self.weight.value.data(), self.fout, self.fin).t(),
            T::one(),
            &mut y,
        );
        self.input = Some(x.clone());
        RealTensor::new([n, self.fout, 1, 1], y)
    }

    fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>> {
        let x = self.input.take().ok_or_else(|| missing("linear"))?;
        let n = x.batch();
        if grad_out.len() != n * self.fout {
            return Err(Error::invalid("linear output gradient has the wrong shape"));
        }
        let g = grad_out.data();
        gemm(
            MatRef::new(g, n, self.fout).t(),
            MatRef::new(x.data(), n, self.fin),
            T::one(),
            self.weight.grad_mut(),
        );
        let db = self.bias.grad_mut();
        for b in 0..n {
            for (o, d) in db.iter_mut().enumerate() {
                *d += g[b * self.fout + o];
            }
        }
        let mut dx = vec![T::zero(); n * self.fin];
        gemm(
            MatRef::new(g, n, self.fout),
            MatRef::new(self.weight.value.data(), self.fout, self.fin),
            T::zero(),
            &mut dx,
        );
        RealTensor::new(x.dims(), dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Channel concatenation `[a | b]`.
pub fn concat_channels<T: Real>(a: &RealTensor<T>, b: &RealTensor<T>) -> Result<RealTensor<T>> {
    let [n, ca, h, w] = a.dims();
    let [nb, cb, hb, wb] = b.dims();
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::invalid(format!(
            "cannot concatenate {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for s in 0..n {
        data.extend_from_slice(a.sample(s));
        data.extend_from_slice(b.sample(s));
    }
    RealTensor::new([n, ca + cb, h, w], data)
}

/// Inverse of [`concat_channels`]: the first `ca` channels and the rest.
pub fn split_channels<T: Real>(x: &RealTensor<T>, ca: usize) -> Result<(RealTensor<T>, RealTensor<T>)> {
    let [n, c, h, w] = x.dims();
    if ca > c {
        return Err(Error::invalid("split point beyond channel count"));
    }
    let p = h * w;
    let (mut a, mut b) = (Vec::with_capacity(n * ca * p), Vec::with_capacity(n * (c - ca) * p));
    for s in 0..n {
        let smp = x.sample(s);
        a.extend_from_slice(&smp[..ca * p]);
        b.extend_from_slice(&smp[ca * p..]);
    }
    Ok((RealTensor::new([n, ca, h, w], a)?, RealTensor::new([n, c - ca, h, w], b)?))
}

/// Elementwise `a + b`.
pub fn add<T: Real>(a: &RealTensor<T>, b: &RealTensor<T>) -> Result<RealTensor<T>> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("cannot add {:?} and {:?}", a.dims(), b.dims())));
    }
    RealTensor::new(a.dims(), a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect())
}
