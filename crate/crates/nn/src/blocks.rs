//! Residual block and channel attention (DCT-squeeze FCA and mean-squeeze SE).

use std::collections::HashSet;

use pidd_core::dct::dct2_basis_values;
use pidd_core::{Error, Real, RealTensor, Result, RngStream};

use crate::conv::Conv2d;
use crate::layers::{add, BatchNorm2d, LeakyRelu, Linear, Sigmoid};
use crate::param::{join, Layer, Mode, ParamVisitor};

/// `conv3×3 → BN → LReLU → conv3×3`, plus a 1×1 convolution shortcut when
/// local residual learning is on.
pub struct ResidualBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    act1: LeakyRelu<T>,
    pub conv2: Conv2d<T>,
    pub skip: Option<Conv2d<T>>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new(cin: usize, cout: usize, shortcut: bool, rng: &mut RngStream) -> Self {
        let conv1 = Conv2d::new(cin, cout, 3, 1, 1, rng);
        let conv2 = Conv2d::new(cout, cout, 3, 1, 1, rng);
        let skip = shortcut.then(|| Conv2d::new(cin, cout, 1, 1, 0, rng));
        Self {
            conv1,
            bn1: BatchNorm2d::new(cout),
            act1: LeakyRelu::new(),
            conv2,
            skip,
        }
    }
}

impl<T: Real> Layer<T> for ResidualBlock<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let h = self.conv1.forward(x, mode)?;
        let h = self.bn1.forward(&h, mode)?;
        let h = self.act1.forward(&h, mode)?;
        let h = self.conv2.forward(&h, mode)?;
        match &mut self.skip {
            Some(s) => add(&h, &s.forward(x, mode)?),
            None => Ok(h),
        }
    }

    fn backward(&mut self, g: &RealTensor<T>) -> Result<RealTensor<T>> {
        let d = self.conv2.backward(g)?;
        let d = self.act1.backward(&d)?;
        let d = self.bn1.backward(&d)?;
        let d = self.conv1.backward(&d)?;
        match &mut self.skip {
            Some(s) => add(&d, &s.backward(g)?),
            None => Ok(d),
        }
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.bn1.visit_params(&join(prefix, "bn1"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
        if let Some(s) = &mut self.skip {
            s.visit_params(&join(prefix, "skip"), f);
        }
    }
}

/// Channel groups and their DCT frequencies for the frequency squeeze.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FcaConfig {
    pub freqs: Vec<(usize, usize)>,
    pub reduction: usize,
}

impl Default for FcaConfig {
    fn default() -> Self {
        Self {
            freqs: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
            reduction: 4,
        }
    }
}

impl FcaConfig {
    pub fn n_parts(&self) -> usize {
        self.freqs.len()
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let n = self.freqs.len();
        if n == 0 || channels % n != 0 {
            return Err(Error::invalid(format!(
                "{channels} channels cannot be split into {n} frequency groups"
            )));
        }
        if self.freqs.iter().collect::<HashSet<_>>().len() != n {
            return Err(Error::invalid("DCT frequency pairs must be unique"));
        }
        if self.reduction == 0 {
            return Err(Error::invalid("reduction must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Squeeze {
    /// Group `i` of channels is projected on the DCT basis `freqs[i]`.
    Dct(FcaConfig),
    /// Global average pooling.
    Mean,
}

struct AttnCache<T> {
    x: RealTensor<T>,
    weights: Vec<T>,
    basis: Vec<Vec<T>>,
}

/// Squeeze → FC(reduce) → LReLU → FC(expand) → sigmoid, then channel-wise
/// rescaling of the input.
pub struct ChannelAttention<T> {
    squeeze: Squeeze,
    channels: usize,
    pub fc1: Linear<T>,
    act: LeakyRelu<T>,
    pub fc2: Linear<T>,
    gate: Sigmoid<T>,
    cache: Option<AttnCache<T>>,
}

impl<T: Real> ChannelAttention<T> {
    pub fn fca(channels: usize, cfg: FcaConfig, rng: &mut RngStream) -> Result<Self> {
        cfg.validate(channels)?;
        let hidden = (channels / cfg.reduction).max(1);
        Ok(Self::build(Squeeze::Dct(cfg), channels, hidden, rng))
    }

    pub fn se(channels: usize, reduction: usize, rng: &mut RngStream) -> Result<Self> {
        if reduction == 0 {
            return Err(Error::invalid("reduction must be at least 1"));
        }
        Ok(Self::build(Squeeze::Mean, channels, (channels / reduction).max(1), rng))
    }

    fn build(squeeze: Squeeze, channels: usize, hidden: usize, rng: &mut RngStream) -> Self {
        Self {
            squeeze,
            channels,
            fc1: Linear::new(channels, hidden, rng),
            act: LeakyRelu::new(),
            fc2: Linear::new(hidden, channels, rng),
            gate: Sigmoid::new(),
            cache: None,
        }
    }

    /// Per-channel squeeze templates for an `h × w` map. Frequencies beyond
    /// the map size are clamped to the highest available one.
    fn templates(&self, h: usize, w: usize) -> Result<Vec<Vec<T>>> {
        let c = self.channels;
        match &self.squeeze {
            Squeeze::Mean => Ok(vec![vec![T::of(1.0 / (h * w) as f64); h * w]; c]),
            Squeeze::Dct(cfg) => {
                let group = c / cfg.n_parts();
                let mut out = Vec::with_capacity(c);
                for &(u, v) in &cfg.freqs {
                    let b: Vec<T> = dct2_basis_values(u.min(h - 1), v.min(w - 1), h, w)?
                        .into_iter()
                        .map(T::of)
                        .collect();
                    out.extend(std::iter::repeat_n(b, group));
                }
                Ok(out)
            }
        }
    }

    /// The `n × c` squeezed descriptor.
    pub fn squeeze(&self, x: &RealTensor<T>) -> Result<RealTensor<T>> {
        let [n, c, h, w] = x.dims();
        if c != self.channels {
            return Err(Error::invalid(format!("attention expects {} channels, got {c}", self.channels)));
        }
        let basis = self.templates(h, w)?;
        RealTensor::new([n, c, 1, 1], squeeze_with(x, &basis))
    }

    /// Channel weights in (0, 1) for input `x`.
    pub fn channel_weights(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let s = self.squeeze(x)?;
        let z = self.fc1.forward(&s, mode)?;
        let z = self.act.forward(&z, mode)?;
        let z = self.fc2.forward(&z, mode)?;
        self.gate.forward(&z, mode)
    }
}

fn squeeze_with<T: Real>(x: &RealTensor<T>, basis: &[Vec<T>]) -> Vec<T> {
    let [n, c, _, _] = x.dims();
    let mut s = Vec::with_capacity(n * c);
    for b in 0..n {
        for (ch, tmpl) in basis.iter().enumerate() {
            s.push(x.plane(b, ch).iter().zip(tmpl).map(|(&a, &t)| a * t).sum());
        }
    }
    s
}

/// `y[n, c, ·] = x[n, c, ·] · weights[n, c]`.
pub fn scale_channels<T: Real>(x: &RealTensor<T>, weights: &[T]) -> Result<RealTensor<T>> {
    let [n, c, h, w] = x.dims();
    if weights.len() != n * c {
        return Err(Error::invalid("one weight per sample and channel expected"));
    }
    let p = h * w;
    let mut y = x.data().to_vec();
    for (i, &wt) in weights.iter().enumerate() {
        y[i * p..(i + 1) * p].iter_mut().for_each(|v| *v *= wt);
    }
    RealTensor::new(x.dims(), y)
}

impl<T: Real> Layer<T> for ChannelAttention<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let [_, _, h, w] = x.dims();
        let basis = self.templates(h, w)?;
        let weights = self.channel_weights(x, mode)?.into_data();
        let y = scale_channels(x, &weights)?;
        self.cache = Some(AttnCache {
            x: x.clone(),
            weights,
            basis,
        });
        Ok(y)
    }

    fn backward(&mut self, g: &RealTensor<T>) -> Result<RealTensor<T>> {
        let AttnCache { x, weights, basis } = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("attention backward without forward"))?;
        let [n, c, h, w] = x.dims();
        let p = h * w;
        let mut dw = Vec::with_capacity(n * c);
        for b in 0..n {
            for ch in 0..c {
                dw.push(g.plane(b, ch).iter().zip(x.plane(b, ch)).map(|(&a, &v)| a * v).sum());
            }
        }
        let d = self.gate.backward(&RealTensor::new([n, c, 1, 1], dw)?)?;
        let d = self.fc2.backward(&d)?;
        let d = self.act.backward(&d)?;
        let ds = self.fc1.backward(&d)?;
        let mut dx = scale_channels(g, &weights)?;
        for b in 0..n {
            for ch in 0..c {
                let dsv = ds.data()[b * c + ch];
                let plane = &mut dx.data_mut()[(b * c + ch) * p..(b * c + ch + 1) * p];
                plane.iter_mut().zip(&basis[ch]).for_each(|(v, &t)| *v += dsv * t);
            }
        }
        Ok(dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AttentionKind {
    None,
    Fca(FcaConfig),
    Se { reduction: usize },
}

impl AttentionKind {
    pub fn build<T: Real>(&self, channels: usize, rng: &mut RngStream) -> Result<Option<ChannelAttention<T>>> {
        match self {
            AttentionKind::None => Ok(None),
            AttentionKind::Fca(cfg) => ChannelAttention::fca(channels, cfg.clone(), rng).map(Some),
            AttentionKind::Se { reduction } => ChannelAttention::se(channels, *reduction, rng).map(Some),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttentionKind::None => "none",
            AttentionKind::Fca(_) => "fca",
            AttentionKind::Se { .. } => "se",
        }
    }
}
