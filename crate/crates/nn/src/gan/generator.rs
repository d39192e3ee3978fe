//! Four-level U-Net generator with residual blocks, channel attention and an
//! optional global residual connection from input to output.

use pidd_core::{Error, Real, RealTensor, Result, RngStream};

use crate::blocks::{AttentionKind, ChannelAttention, ResidualBlock};
use crate::conv::{Conv2d, ConvTranspose2d};
use crate::layers::{add, concat_channels, split_channels, BatchNorm2d, LeakyRelu};
use crate::param::{join, Layer, Mode, ParamVisitor};

pub const DEPTH: usize = 4;
/// Real and imaginary parts.
pub const IMAGE_CHANNELS: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    /// Channels after the first downsampling; doubled at every level.
    pub base: usize,
    /// Global residual learning: output = G(x) + x.
    pub use_gr: bool,
    /// Local residual learning: 1×1 shortcuts inside the down-path blocks.
    pub use_lr: bool,
    pub attention: AttentionKind,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base: 32,
            use_gr: true,
            use_lr: true,
            attention: AttentionKind::Fca(Default::default()),
        }
    }
}

impl GeneratorConfig {
    pub fn width(&self, level: usize) -> usize {
        self.base << level
    }
}

struct DownBlock<T> {
    conv: Conv2d<T>,
    bn: BatchNorm2d<T>,
    act: LeakyRelu<T>,
    res: ResidualBlock<T>,
    att: Option<ChannelAttention<T>>,
}

impl<T: Real> DownBlock<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let h = self.conv.forward(x, mode)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.act.forward(&h, mode)?;
        let h = self.res.forward(&h, mode)?;
        match &mut self.att {
            Some(a) => a.forward(&h, mode),
            None => Ok(h),
        }
    }

    fn backward(&mut self, g: &RealTensor<T>) -> Result<RealTensor<T>> {
        let g = match &mut self.att {
            Some(a) => a.backward(g)?,
            None => g.clone(),
        };
        let g = self.res.backward(&g)?;
        let g = self.act.backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }

    fn visit(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
        self.res.visit_params(&join(prefix, "res"), f);
        if let Some(a) = &mut self.att {
            a.visit_params(&join(prefix, "att"), f);
        }
    }
}

struct UpBlock<T> {
    deconv: ConvTranspose2d<T>,
    bn: BatchNorm2d<T>,
    act: LeakyRelu<T>,
    res: ResidualBlock<T>,
    att: Option<ChannelAttention<T>>,
    up_channels: usize,
}

impl<T: Real> UpBlock<T> {
    fn forward(&mut self, x: &RealTensor<T>, skip: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let h = self.deconv.forward(x, mode)?;
        let h = self.bn.forward(&h, mode)?;
        let h = self.act.forward(&h, mode)?;
        let h = concat_channels(&h, skip)?;
        let h = self.res.forward(&h, mode)?;
        match &mut self.att {
            Some(a) => a.forward(&h, mode),
            None => Ok(h),
        }
    }

    /// Returns gradients for the block input and for the skip tensor.
    fn backward(&mut self, g: &RealTensor<T>) -> Result<(RealTensor<T>, RealTensor<T>)> {
        let g = match &mut self.att {
            Some(a) => a.backward(g)?,
            None => g.clone(),
        };
        let g = self.res.backward(&g)?;
        let (gu, gskip) = split_channels(&g, self.up_channels)?;
        let g = self.act.backward(&gu)?;
        let g = self.bn.backward(&g)?;
        Ok((self.deconv.backward(&g)?, gskip))
    }

    fn visit(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        self.deconv.visit_params(&join(prefix, "deconv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
        self.res.visit_params(&join(prefix, "res"), f);
        if let Some(a) = &mut self.att {
            a.visit_params(&join(prefix, "att"), f);
        }
    }
}

/// Encoder outputs at 1/2 … 1/16 resolution are concatenated into the
/// decoder at the matching scale; the last decoder block concatenates the
/// network input itself. A final 1×1 convolution maps back to two channels.
pub struct Generator<T> {
    cfg: GeneratorConfig,
    down: Vec<DownBlock<T>>,
    up: Vec<UpBlock<T>>,
    pub head: Conv2d<T>,
    skip_channels: Vec<usize>,
}

impl<T: Real> Generator<T> {
    pub fn new(cfg: GeneratorConfig, rng: &mut RngStream) -> Result<Self> {
        if cfg.base == 0 {
            return Err(Error::invalid("generator base width must be positive"));
        }
        let mut down = Vec::with_capacity(DEPTH);
        let mut cin = IMAGE_CHANNELS;
        for level in 0..DEPTH {
            let cout = cfg.width(level);
            down.push(DownBlock {
                conv: Conv2d::new(cin, cout, 3, 2, 1, rng),
                bn: BatchNorm2d::new(cout),
                act: LeakyRelu::new(),
                res: ResidualBlock::new(cout, cout, cfg.use_lr, rng),
                att: cfg.attention.build(cout, rng)?,
            });
            cin = cout;
        }
        // skip_channels[k]: channels of the tensor concatenated at up block k.
        let skip_channels: Vec<usize> = (0..DEPTH)
            .map(|k| if k + 1 < DEPTH { cfg.width(DEPTH - 2 - k) } else { IMAGE_CHANNELS })
            .collect();
        let mut up = Vec::with_capacity(DEPTH);
        for (k, &skip) in skip_channels.iter().enumerate() {
            let cout = if k + 1 < DEPTH { cfg.width(DEPTH - 2 - k) } else { cfg.base };
            up.push(UpBlock {
                deconv: ConvTranspose2d::upsample2(cin, cout, rng),
                bn: BatchNorm2d::new(cout),
                act: LeakyRelu::new(),
                res: ResidualBlock::new(cout + skip, cout, false, rng),
                att: cfg.attention.build(cout, rng)?,
                up_channels: cout,
            });
            cin = cout;
        }
        let head = Conv2d::new(cfg.base, IMAGE_CHANNELS, 1, 1, 0, rng);
        Ok(Self {
            cfg,
            down,
            up,
            head,
            skip_channels,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    /// Zeroes the output layer so that, with global residual learning, the
    /// generator starts as the identity map.
    pub fn zero_head(&mut self) {
        self.head.weight.value.data_mut().iter_mut().for_each(|v| *v = T::zero());
        self.head.bias.value.data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}

impl<T: Real> Layer<T> for Generator<T> {
    fn forward(&mut self, x: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        let [_, c, h, w] = x.dims();
        if c != IMAGE_CHANNELS {
            return Err(Error::invalid(format!("generator expects 2 channels, got {c}")));
        }
        let f = 1 << DEPTH;
        if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!("generator input {h}x{w} is not divisible by {f}")));
        }
        let mut feats = vec![x.clone()];
        for block in &mut self.down {
            let next = block.forward(feats.last().expect("non-empty"), mode)?;
            feats.push(next);
        }
        let mut hcur = feats.pop().expect("deepest level");
        for block in self.up.iter_mut() {
            let skip = feats.pop().expect("one skip per level");
            hcur = block.forward(&hcur, &skip, mode)?;
        }
        let out = self.head.forward(&hcur, mode)?;
        if self.cfg.use_gr {
            add(&out, x)
        } else {
            Ok(out)
        }
    }

    fn backward(&mut self, g: &RealTensor<T>) -> Result<RealTensor<T>> {
        let mut gh = self.head.backward(g)?;
        // skip_grads[k] belongs to the tensor concatenated at up block k.
        let mut skip_grads = Vec::with_capacity(DEPTH);
        for block in self.up.iter_mut().rev() {
            let (gin, gskip) = block.backward(&gh)?;
            skip_grads.push(gskip);
            gh = gin;
        }
        skip_grads.reverse();
        debug_assert_eq!(skip_grads.len(), self.skip_channels.len());
        // gh is now the gradient of the deepest encoder output.
        for level in (0..DEPTH).rev() {
            gh = self.down[level].backward(&gh)?;
            // Encoder output `level - 1` (or the input for level 0) also fed
            // up block DEPTH - 1 - level.
            gh = add(&gh, &skip_grads[DEPTH - 1 - level])?;
        }
        if self.cfg.use_gr {
            gh = add(&gh, g)?;
        }
        Ok(gh)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        for (i, b) in self.down.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("down{i}")), f);
        }
        for (i, b) in self.up.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("up{i}")), f);
        }
        self.head.visit_params(&join(prefix, "head"), f);
    }
}
