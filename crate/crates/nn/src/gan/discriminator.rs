//! Discriminator: stride-2 3×3 convolutions down to a 2×2 map, two 1×1
//! convolutions, a residual block of three 1×1 convolutions, then a fully
//! connected layer and a sigmoid. Every convolution is followed by BN and
//! LReLU.

use pidd_core::{Error, Real, RealTensor, Result, RngStream};

use crate::conv::Conv2d;
use crate::layers::{add, BatchNorm2d, LeakyRelu, Linear, Sigmoid};
use crate::param::{join, Layer, Mode, ParamVisitor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    /// Channels of the first convolution, doubled per stage.
    pub base: usize,
    /// Channel cap for deep stages.
    pub max_width: usize,
}

impl DiscriminatorConfig {
    pub fn new(in_channels: usize, height: usize, width: usize, base: usize) -> Self {
        Self {
            in_channels,
            height,
            width,
            base,
            max_width: base * 8,
        }
    }

    /// Number of stride-2 stages needed to bring both sides down to ≤ 2.
    pub fn strided_stages(&self) -> usize {
        let (mut h, mut w, mut n) = (self.height, self.width, 0);
        while h > 2 || w > 2 {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
            n += 1;
        }
        n
    }

    /// Strided stages + 2 + 3 convolutions + 1 fully connected layer.
    pub fn layer_count(&self) -> usize {
        self.strided_stages() + 6
    }
}

struct ConvUnit<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
    act: LeakyRelu<T>,
}

impl<T: Real> ConvUnit<T> {
    fn new(cin: usize, cout: usize, k: usize, stride: usize, rng: &mut RngStream) -> Self {
        Self {
            conv: Conv2d::new(cin, cout, k, stride, k / 2, rng),
            bn: BatchNorm2d::new(cout),
            act: LeakyRelu::new(),
        }
    }

    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let h = self.conv.forward(x, mode)?;
        let h = self.bn.forward(&h, mode)?;
        self.act.forward(&h, mode)
    }

    fn backward(&mut self, g: &RealTensor<T>) -> Result<RealTensor<T>> {
        let g = self.act.backward(g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }

    fn visit(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
    }
}

pub struct Discriminator<T> {
    cfg: DiscriminatorConfig,
    stages: Vec<ConvUnit<T>>,
    res: Vec<ConvUnit<T>>,
    pub fc: Linear<T>,
    out: Sigmoid<T>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(cfg: DiscriminatorConfig, rng: &mut RngStream) -> Result<Self> {
        if cfg.height < 3 || cfg.width < 3 || cfg.base == 0 || cfg.in_channels == 0 {
            return Err(Error::invalid("discriminator needs at least 3x3 inputs and positive widths"));
        }
        let n = cfg.strided_stages();
        let mut stages = Vec::with_capacity(n + 2);
        let mut cin = cfg.in_channels;
        let (mut h, mut w) = (cfg.height, cfg.width);
        for i in 0..n {
            let cout = (cfg.base << i).min(cfg.max_width);
            stages.push(ConvUnit::new(cin, cout, 3, 2, rng));
            cin = cout;
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        for _ in 0..2 {
            stages.push(ConvUnit::new(cin, cin, 1, 1, rng));
        }
        let res = (0..3).map(|_| ConvUnit::new(cin, cin, 1, 1, rng)).collect();
        let fc = Linear::new(cin * h * w, 1, rng);
        Ok(Self {
            cfg,
            stages,
            res,
            fc,
            out: Sigmoid::new(),
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }
}

impl<T: Real> Layer<T> for Discriminator<T> {
    /// Returns probabilities with dims `[n, 1, 1, 1]`.
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let [_, c, h, w] = x.dims();
        if (c, h, w) != (self.cfg.in_channels, self.cfg.height, self.cfg.width) {
            return Err(Error::invalid(format!(
                "discriminator expects {}x{}x{}, got {c}x{h}x{w}",
                self.cfg.in_channels, self.cfg.height, self.cfg.width
            )));
        }
        let mut hcur = x.clone();
        for s in &mut self.stages {
            hcur = s.forward(&hcur, mode)?;
        }
        let mut r = hcur.clone();
        for u in &mut self.res {
            r = u.forward(&r, mode)?;
        }
        let hcur = add(&hcur, &r)?;
        let z = self.fc.forward(&hcur, mode)?;
        self.out.forward(&z, mode)
    }

    fn backward(&mut self, g: &RealTensor<T>) -> Result<RealTensor<T>> {
        let g = self.out.backward(g)?;
        let g = self.fc.backward(&g)?;
        let mut gr = g.clone();
        for u in self.res.iter_mut().rev() {
            gr = u.backward(&gr)?;
        }
        let mut gh = add(&g, &gr)?;
        for s in self.stages.iter_mut().rev() {
            gh = s.backward(&gh)?;
        }
        Ok(gh)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit(&join(prefix, &format!("stage{i}")), f);
        }
        for (i, u) in self.res.iter_mut().enumerate() {
            u.visit(&join(prefix, &format!("res{i}")), f);
        }
        self.fc.visit_params(&join(prefix, "fc"), f);
    }
}
