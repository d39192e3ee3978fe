//! Content, perceptual and adversarial losses with their gradients.
//!
//! Complex gradients are returned as complex images whose real and imaginary
//! parts are the partial derivatives with respect to the real and imaginary
//! parts of the input.

use pidd_core::edge::{sobel_backward, sobel_forward, SobelCache};
use pidd_core::fft::Fft2Plan;
use pidd_core::{Complex, ComplexImage, Error, MultiCoil, Real, RealTensor, Result, SamplingMask, SensitivityMaps};

pub const PROB_CLAMP: f64 = 1e-7;
/// Added under the square root when taking magnitudes for the edge path.
pub const MAGNITUDE_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub nu: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 15.0,
            beta: 0.1,
            gamma: 10.0,
            mu: 0.6,
            nu: 0.4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("nu", self.nu),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("loss weight {name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Per-term values of the generator objective (batch means, unweighted
/// except `adv_g`, which already carries μ and ν).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub imse: f64,
    pub fmse_mask: f64,
    pub fmse_unmask: f64,
    pub perc: f64,
    pub adv_g: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.imse, self.fmse_mask, self.fmse_unmask, self.perc, self.adv_g]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `α·iMSE + β·(fMSE_M + fMSE_1−M) + γ·perc + adv_G`.
pub fn loss_total(parts: &LossParts, w: &LossWeights) -> f64 {
    w.alpha * parts.imse + w.beta * (parts.fmse_mask + parts.fmse_unmask) + w.gamma * parts.perc + parts.adv_g
}

fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, false)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, false)
    } else {
        (p, true)
    }
}

/// `−ln p` with clamping, and its derivative (zero where clamped).
pub fn neg_log(p: f64) -> (f64, f64) {
    let (q, live) = clamp_prob(p);
    (-q.ln(), if live { -1.0 / q } else { 0.0 })
}

/// `−ln(1 − p)` with clamping, and its derivative.
pub fn neg_log1m(p: f64) -> (f64, f64) {
    let (q, live) = clamp_prob(p);
    (-(1.0 - q).ln(), if live { 1.0 / (1.0 - q) } else { 0.0 })
}

/// Discriminator-side loss for one sample. `d2` is `(real, fake)` for the
/// edge discriminator, absent in single-discriminator mode.
pub fn adversarial_d(d1_real: f64, d1_fake: f64, d2: Option<(f64, f64)>, w: &LossWeights) -> f64 {
    let mut l = w.mu * (neg_log(d1_real).0 + neg_log1m(d1_fake).0);
    if let Some((r, f)) = d2 {
        l += w.nu * (neg_log(r).0 + neg_log1m(f).0);
    }
    l
}

/// Non-saturating generator-side loss for one sample.
pub fn adversarial_g(d1_fake: f64, d2_fake: Option<f64>, w: &LossWeights) -> f64 {
    let mut l = w.mu * neg_log(d1_fake).0;
    if let Some(f) = d2_fake {
        l += w.nu * neg_log(f).0;
    }
    l
}

fn check_maps<T: Real>(x: &ComplexImage<T>, maps: &SensitivityMaps<T>) -> Result<()> {
    let (_, h, w) = maps.dims();
    if x.dims() != (h, w) {
        return Err(Error::invalid("image and maps differ in size"));
    }
    Ok(())
}

/// `Σ_q ½‖x_t^q − C^q ⊙ x̂‖²` and its gradient.
pub fn loss_imse<T: Real>(
    xhat: &ComplexImage<T>,
    coil_truth: &MultiCoil<T>,
    maps: &SensitivityMaps<T>,
) -> Result<(f64, ComplexImage<T>)> {
    check_maps(xhat, maps)?;
    if coil_truth.dims() != maps.dims() {
        return Err(Error::invalid("coil truth and maps differ in shape"));
    }
    let mut grad = vec![Complex::new(T::zero(), T::zero()); xhat.data().len()];
    let mut loss = 0.0;
    for q in 0..maps.coils() {
        for ((g, (&c, &t)), &x) in grad.iter_mut().zip(maps.coil(q).iter().zip(coil_truth.coil(q))).zip(xhat.data()) {
            let r = c * x - t;
            loss += 0.5 * r.norm_sqr().as_f64();
            *g += c.conj() * r;
        }
    }
    let (h, w) = xhat.dims();
    Ok((loss, ComplexImage::new(h, w, grad)?))
}

#[derive(Clone, Debug)]
pub struct FmseTerms<T> {
    pub masked: f64,
    pub unmasked: f64,
    /// Gradient of `w_mask·masked + w_unmask·unmasked`.
    pub grad: ComplexImage<T>,
}

/// Acquired-sample and unacquired-sample k-space errors,
/// `Σ_q ½‖y^q_M − M⊙F(C^q x̂)‖²` and the same on `1 − M`.
#[allow(clippy::too_many_arguments)]
pub fn loss_fmse<T: Real>(
    xhat: &ComplexImage<T>,
    y_mask: &MultiCoil<T>,
    y_unmask: &MultiCoil<T>,
    maps: &SensitivityMaps<T>,
    mask: &SamplingMask,
    plan: &Fft2Plan<T>,
    w_mask: f64,
    w_unmask: f64,
) -> Result<FmseTerms<T>> {
    check_maps(xhat, maps)?;
    let (h, w) = xhat.dims();
    if mask.dims() != (h, w) || y_mask.dims() != maps.dims() || y_unmask.dims() != maps.dims() {
        return Err(Error::invalid("k-space, mask and maps must agree in shape"));
    }
    let (wm, wu) = (T::of(w_mask), T::of(w_unmask));
    let zero = Complex::new(T::zero(), T::zero());
    let mut grad = vec![zero; h * w];
    let (mut lm, mut lu) = (0.0, 0.0);
    let mut buf = vec![zero; h * w];
    for q in 0..maps.coils() {
        let c = maps.coil(q);
        for ((b, &cv), &x) in buf.iter_mut().zip(c).zip(xhat.data()) {
            *b = cv * x;
        }
        plan.forward(&mut buf);
        let (ym, yu) = (y_mask.coil(q), y_unmask.coil(q));
        for (p, (b, &acq)) in buf.iter_mut().zip(mask.bits()).enumerate() {
            if acq {
                let r = *b - ym[p];
                lm += 0.5 * r.norm_sqr().as_f64();
                *b = r * wm;
            } else {
                let r = *b - yu[p];
                lu += 0.5 * r.norm_sqr().as_f64();
                *b = r * wu;
            }
        }
        plan.inverse(&mut buf);
        for ((g, &cv), &b) in grad.iter_mut().zip(c).zip(&buf) {
            *g += cv.conj() * b;
        }
    }
    Ok(FmseTerms {
        masked: lm,
        unmasked: lu,
        grad: ComplexImage::new(h, w, grad)?,
    })
}

/// Complex images to an `n × 2 × h × w` tensor of real and imaginary parts.
pub fn images_to_tensor<T: Real>(images: &[ComplexImage<T>]) -> Result<RealTensor<T>> {
    let first = images.first().ok_or_else(|| Error::invalid("no images"))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(images.len() * 2 * h * w);
    for img in images {
        if img.dims() != (h, w) {
            return Err(Error::invalid("images in a batch must share dims"));
        }
        data.extend(img.data().iter().map(|c| c.re));
        data.extend(img.data().iter().map(|c| c.im));
    }
    RealTensor::new([images.len(), 2, h, w], data)
}

pub fn tensor_to_images<T: Real>(t: &RealTensor<T>) -> Result<Vec<ComplexImage<T>>> {
    let [n, c, h, w] = t.dims();
    if c != 2 {
        return Err(Error::invalid(format!("complex tensors have 2 channels, got {c}")));
    }
    (0..n)
        .map(|b| {
            let (re, im) = (t.plane(b, 0), t.plane(b, 1));
            ComplexImage::new(h, w, re.iter().zip(im).map(|(&a, &b)| Complex::new(a, b)).collect())
        })
        .collect()
}

pub struct EdgeCache<T> {
    x: RealTensor<T>,
    magnitude: Vec<Vec<T>>,
    sobel: Vec<SobelCache<T>>,
}

/// Sobel edges of the guarded magnitude of each 2-channel sample, as an
/// `n × 1 × h × w` tensor.
pub fn edge_forward<T: Real>(x: &RealTensor<T>) -> Result<(RealTensor<T>, EdgeCache<T>)> {
    let [n, c, h, w] = x.dims();
    if c != 2 {
        return Err(Error::invalid("edge path expects 2-channel images"));
    }
    let guard = T::of(MAGNITUDE_GUARD);
    let mut out = Vec::with_capacity(n * h * w);
    let (mut mags, mut caches) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for b in 0..n {
        let mag: Vec<T> = x
            .plane(b, 0)
            .iter()
            .zip(x.plane(b, 1))
            .map(|(&re, &im)| (re * re + im * im + guard).sqrt())
            .collect();
        let cache = sobel_forward(&mag, h, w)?;
        out.extend_from_slice(cache.output());
        mags.push(mag);
        caches.push(cache);
    }
    Ok((
        RealTensor::new([n, 1, h, w], out)?,
        EdgeCache {
            x: x.clone(),
            magnitude: mags,
            sobel: caches,
        },
    ))
}

pub fn edge_backward<T: Real>(cache: &EdgeCache<T>, g: &RealTensor<T>) -> Result<RealTensor<T>> {
    let [n, _, h, w] = cache.x.dims();
    if g.dims() != [n, 1, h, w] {
        return Err(Error::invalid("edge gradient has the wrong shape"));
    }
    let mut dx = RealTensor::zeros(cache.x.dims());
    for b in 0..n {
        let dmag = sobel_backward(&cache.sobel[b], g.plane(b, 0))?;
        let mag = &cache.magnitude[b];
        let re = cache.x.plane(b, 0).to_vec();
        let im = cache.x.plane(b, 1).to_vec();
        let dre: Vec<T> = (0..h * w).map(|p| dmag[p] * re[p] / mag[p]).collect();
        let dim: Vec<T> = (0..h * w).map(|p| dmag[p] * im[p] / mag[p]).collect();
        dx.plane_mut(b, 0).copy_from_slice(&dre);
        dx.plane_mut(b, 1).copy_from_slice(&dim);
    }
    Ok(dx)
}
