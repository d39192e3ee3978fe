//! The dual-discriminator GAN and its two backward passes per batch.

use std::fmt::Write as _;

use pidd_core::fft::Fft2Plan;
use pidd_core::{Error, MultiCoil, Real, RealTensor, Result, RngStream, SamplingMask, SensitivityMaps};
use sha2::{Digest, Sha256};

use crate::blocks::AttentionKind;
use crate::gan::discriminator::{Discriminator, DiscriminatorConfig};
use crate::gan::generator::{Generator, GeneratorConfig, IMAGE_CHANNELS};
use crate::gan::loss::{
    edge_backward, edge_forward, loss_fmse, loss_imse, neg_log, neg_log1m, tensor_to_images, LossParts, LossWeights,
};
use crate::gan::perceptual::PerceptualNet;
use crate::param::{Layer, Mode, ParamVisitor};

const GENERATOR_STREAM: u64 = 101;
const IMAGE_DISC_STREAM: u64 = 102;
const EDGE_DISC_STREAM: u64 = 103;

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    pub height: usize,
    pub width: usize,
    pub generator: GeneratorConfig,
    pub disc_base: usize,
    /// Allocate the edge discriminator.
    pub dual: bool,
    pub weights: LossWeights,
}

impl GanConfig {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            generator: GeneratorConfig::default(),
            disc_base: 16,
            dual: true,
            weights: LossWeights::default(),
        }
    }

    /// Every architecture knob, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let g = &self.generator;
        let mut s = String::new();
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "gen_base = {}", g.base);
        let _ = writeln!(s, "use_gr = {}", g.use_gr);
        let _ = writeln!(s, "use_lr = {}", g.use_lr);
        let _ = writeln!(s, "attention = {}", g.attention.name());
        match &g.attention {
            AttentionKind::Fca(cfg) => {
                let freqs: Vec<String> = cfg.freqs.iter().map(|(u, v)| format!("{u}:{v}")).collect();
                let _ = writeln!(s, "fca_freqs = {}", freqs.join(","));
                let _ = writeln!(s, "reduction = {}", cfg.reduction);
            }
            AttentionKind::Se { reduction } => {
                let _ = writeln!(s, "reduction = {reduction}");
            }
            AttentionKind::None => {}
        }
        let _ = writeln!(s, "disc_base = {}", self.disc_base);
        let _ = writeln!(s, "dual = {}", self.dual);
        s
    }

    /// SHA-256 of [`Self::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One training batch. Image tensors hold real and imaginary channels.
pub struct Batch<T> {
    /// Zero-filled network input.
    pub x_u: RealTensor<T>,
    /// Sensitivity-combined ground truth.
    pub truth: RealTensor<T>,
    pub coil_truth: Vec<MultiCoil<T>>,
    pub maps: Vec<SensitivityMaps<T>>,
    /// Acquired (possibly noisy) k-space, zero off the mask.
    pub y_mask: Vec<MultiCoil<T>>,
    /// Clean k-space off the mask, zero on it.
    pub y_unmask: Vec<MultiCoil<T>>,
    pub mask: SamplingMask,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.x_u.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Discriminator-side losses, each already weighted by μ or ν.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiscLosses {
    pub d1: f64,
    pub d2: f64,
}

pub struct PiddGan<T: Real> {
    cfg: GanConfig,
    pub generator: Generator<T>,
    pub d1: Discriminator<T>,
    pub d2: Option<Discriminator<T>>,
    perceptual: PerceptualNet<T>,
    plan: Fft2Plan<T>,
}

impl<T: Real> PiddGan<T> {
    /// Each network draws its initial weights from its own stream, so adding
    /// or removing the edge discriminator leaves the others unchanged.
    pub fn new(cfg: GanConfig, seed: u64) -> Result<Self> {
        cfg.weights.validate()?;
        let mut generator = Generator::new(cfg.generator.clone(), &mut RngStream::new(seed, GENERATOR_STREAM))?;
        generator.zero_head();
        let d1 = Discriminator::new(
            DiscriminatorConfig::new(IMAGE_CHANNELS, cfg.height, cfg.width, cfg.disc_base),
            &mut RngStream::new(seed, IMAGE_DISC_STREAM),
        )?;
        let d2 = if cfg.dual {
            Some(Discriminator::new(
                DiscriminatorConfig::new(1, cfg.height, cfg.width, cfg.disc_base),
                &mut RngStream::new(seed, EDGE_DISC_STREAM),
            )?)
        } else {
            None
        };
        Ok(Self {
            perceptual: PerceptualNet::new(IMAGE_CHANNELS),
            plan: Fft2Plan::new(cfg.height, cfg.width),
            cfg,
            generator,
            d1,
            d2,
        })
    }

    pub fn config(&self) -> &GanConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &LossWeights {
        &self.cfg.weights
    }

    pub fn set_weights(&mut self, w: LossWeights) -> Result<()> {
        w.validate()?;
        self.cfg.weights = w;
        Ok(())
    }

    /// Generator forward pass; in training mode its cache feeds
    /// [`Self::g_backward`].
    pub fn generate(&mut self, x_u: &RealTensor<T>, mode: Mode) -> Result<RealTensor<T>> {
        self.generator.forward(x_u, mode)
    }

    /// Zeroes and fills the discriminator gradients for one batch; `fake` is
    /// treated as a constant.
    pub fn d_backward(&mut self, batch: &Batch<T>, fake: &RealTensor<T>) -> Result<DiscLosses> {
        let n = batch.len();
        let w = self.cfg.weights;
        self.d1.zero_grad();
        let d1 = disc_bce(&mut self.d1, &batch.truth, fake, w.mu, n)?;
        let d2 = match &mut self.d2 {
            Some(d2) => {
                d2.zero_grad();
                let (er, _) = edge_forward(&batch.truth)?;
                let (ef, _) = edge_forward(fake)?;
                disc_bce(d2, &er, &ef, w.nu, n)?
            }
            None => 0.0,
        };
        Ok(DiscLosses { d1, d2 })
    }

    /// Zeroes and fills the generator gradients of the total objective for
    /// the batch whose forward pass produced `fake`.
    pub fn g_backward(&mut self, batch: &Batch<T>, fake: &RealTensor<T>) -> Result<LossParts> {
        let n = batch.len();
        let w = self.cfg.weights;
        let inv_n = 1.0 / n as f64;
        let (h, wd) = (self.cfg.height, self.cfg.width);
        let mut grad = RealTensor::zeros(fake.dims());
        let mut parts = LossParts::default();

        let fakes = tensor_to_images(fake)?;
        for (b, x) in fakes.iter().enumerate() {
            let (li, gi) = loss_imse(x, &batch.coil_truth[b], &batch.maps[b])?;
            let f = loss_fmse(
                x,
                &batch.y_mask[b],
                &batch.y_unmask[b],
                &batch.maps[b],
                &batch.mask,
                &self.plan,
                w.beta,
                w.beta,
            )?;
            parts.imse += li * inv_n;
            parts.fmse_mask += f.masked * inv_n;
            parts.fmse_unmask += f.unmasked * inv_n;
            let (a, s) = (T::of(w.alpha), T::of(inv_n));
            for p in 0..h * wd {
                let g = (gi.data()[p] * a + f.grad.data()[p]) * s;
                grad.plane_mut(b, 0)[p] += g.re;
                grad.plane_mut(b, 1)[p] += g.im;
            }
        }

        let ft = self.perceptual.features(&batch.truth)?;
        let ff = self.perceptual.features(fake)?;
        let scale = T::of(w.gamma * inv_n);
        let mut gf = RealTensor::zeros(ff.dims());
        let mut perc = 0.0;
        for (i, (&a, &b)) in ff.data().iter().zip(ft.data()).enumerate() {
            let d = a - b;
            perc += 0.5 * (d * d).as_f64();
            gf.data_mut()[i] = d * scale;
        }
        parts.perc = perc * inv_n;
        accumulate(&mut grad, &self.perceptual.backward(&gf)?)?;

        let p1 = self.d1.forward(fake, Mode::Train)?;
        let mut g1 = RealTensor::zeros(p1.dims());
        for (i, &p) in p1.data().iter().enumerate() {
            let (l, d) = neg_log(p.as_f64());
            parts.adv_g += w.mu * l * inv_n;
            g1.data_mut()[i] = T::of(w.mu * d * inv_n);
        }
        accumulate(&mut grad, &self.d1.backward(&g1)?)?;

        if let Some(d2) = &mut self.d2 {
            let (e, cache) = edge_forward(fake)?;
            let p2 = d2.forward(&e, Mode::Train)?;
            let mut g2 = RealTensor::zeros(p2.dims());
            for (i, &p) in p2.data().iter().enumerate() {
                let (l, d) = neg_log(p.as_f64());
                parts.adv_g += w.nu * l * inv_n;
                g2.data_mut()[i] = T::of(w.nu * d * inv_n);
            }
            let ge = d2.backward(&g2)?;
            accumulate(&mut grad, &edge_backward(&cache, &ge)?)?;
        }

        self.generator.zero_grad();
        self.generator.backward(&grad)?;
        Ok(parts)
    }

    pub fn visit_generator(&mut self, f: &mut ParamVisitor<'_, T>) {
        self.generator.visit_params("G", f);
    }

    pub fn visit_discriminators(&mut self, f: &mut ParamVisitor<'_, T>) {
        self.d1.visit_params("D1", f);
        if let Some(d2) = &mut self.d2 {
            d2.visit_params("D2", f);
        }
    }

    pub fn visit_all(&mut self, f: &mut ParamVisitor<'_, T>) {
        self.visit_generator(f);
        self.visit_discriminators(f);
    }
}

fn accumulate<T: Real>(acc: &mut RealTensor<T>, g: &RealTensor<T>) -> Result<()> {
    if acc.dims() != g.dims() {
        return Err(Error::invalid("gradient shapes differ"));
    }
    acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b);
    Ok(())
}

/// `weight · mean(−ln d(real) − ln(1 − d(fake)))`, accumulating parameter
/// gradients of the discriminator.
fn disc_bce<T: Real>(
    d: &mut Discriminator<T>,
    real: &RealTensor<T>,
    fake: &RealTensor<T>,
    weight: f64,
    n: usize,
) -> Result<f64> {
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let pr = d.forward(real, Mode::Train)?;
    let mut g = RealTensor::zeros(pr.dims());
    for (i, &p) in pr.data().iter().enumerate() {
        let (l, dl) = neg_log(p.as_f64());
        loss += l;
        g.data_mut()[i] = T::of(weight * dl * inv_n);
    }
    d.backward(&g)?;
    let pf = d.forward(fake, Mode::Train)?;
    let mut g = RealTensor::zeros(pf.dims());
    for (i, &p) in pf.data().iter().enumerate() {
        let (l, dl) = neg_log1m(p.as_f64());
        loss += l;
        g.data_mut()[i] = T::of(weight * dl * inv_n);
    }
    d.backward(&g)?;
    Ok(weight * loss * inv_n)
}
