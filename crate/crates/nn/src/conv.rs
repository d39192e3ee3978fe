//! Strided 2D convolution and transposed convolution (im2col + GEMM).

use pidd_core::real::{gemm, MatRef};
use pidd_core::{Error, Real, RealTensor, Result, RngStream};

use crate::param::{he_normal, join, Layer, Mode, Param, ParamVisitor};

/// Input plane `c × h × w` scanned by a `k × k` window at stride `s` with
/// zero padding `p`, giving `ho × wo` positions.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

/// Writes the patch matrix of one sample into columns `off..off+ho*wo` of a
/// row-major matrix with leading dimension `ld`.
fn im2col<T: Real>(src: &[T], g: &Geom, dst: &mut [T], ld: usize, off: usize) {
    let (k, s, p) = (g.k, g.s as isize, g.p as isize);
    for ci in 0..g.c {
        let plane = &src[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let base = row * ld + off;
                for oi in 0..g.ho {
                    let ii = oi as isize * s + ki as isize - p;
                    let seg = &mut dst[base + oi * g.wo..base + (oi + 1) * g.wo];
                    if ii < 0 || ii >= g.h as isize {
                        seg.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src_row = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, v) in seg.iter_mut().enumerate() {
                        let jj = oj as isize * s + kj as isize - p;
                        *v = if jj < 0 || jj >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into the image.
fn col2im<T: Real>(cols: &[T], g: &Geom, ld: usize, off: usize, dst: &mut [T]) {
    let (k, s, p) = (g.k, g.s as isize, g.p as isize);
    for ci in 0..g.c {
        let plane = &mut dst[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let base = row * ld + off;
                for oi in 0..g.ho {
                    let ii = oi as isize * s + ki as isize - p;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    let seg = &cols[base + oi * g.wo..base + (oi + 1) * g.wo];
                    for (oj, &v) in seg.iter().enumerate() {
                        let jj = oj as isize * s + kj as isize - p;
                        if jj >= 0 && jj < g.w as isize {
                            dst_row[jj as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `N×C×P` sample-major data to a `C × (N·P)` channel-major matrix.
fn to_channel_major<T: Real>(data: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for b in 0..n {
        for ch in 0..c {
            let src = &data[(b * c + ch) * p..(b * c + ch + 1) * p];
            out[ch * n * p + b * p..ch * n * p + (b + 1) * p].copy_from_slice(src);
        }
    }
    out
}

fn from_channel_major<T: Real>(data: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for ch in 0..c {
        for b in 0..n {
            let src = &data[ch * n * p + b * p..ch * n * p + (b + 1) * p];
            out[(b * c + ch) * p..(b * c + ch + 1) * p].copy_from_slice(src);
        }
    }
    out
}

fn add_bias<T: Real>(data: &mut [T], bias: &[T], n: usize, p: usize) {
    let c = bias.len();
    for b in 0..n {
        for (ch, &bv) in bias.iter().enumerate() {
            data[(b * c + ch) * p..(b * c + ch + 1) * p].iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn accumulate_bias_grad<T: Real>(g: &[T], n: usize, c: usize, p: usize, out: &mut [T]) {
    for b in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            *o += g[(b * c + ch) * p..(b * c + ch + 1) * p].iter().copied().sum::<T>();
        }
    }
}

struct ConvCache<T> {
    n: usize,
    geom: Geom,
    cols: Vec<T>,
}

/// Cross-correlation with weights `[out, in, k, k]` and bias `[out, 1, 1, 1]`.
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    /// Skip parameter gradients (fixed feature extractors).
    pub frozen: bool,
    cache: Option<ConvCache<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, pad: usize, rng: &mut RngStream) -> Self {
        Self {
            weight: Param::new(he_normal([cout, cin, k, k], cin * k * k, rng)),
            bias: Param::new(RealTensor::zeros([cout, 1, 1, 1])),
            cin,
            cout,
            k,
            stride,
            pad,
            frozen: false,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.cin
    }

    pub fn out_channels(&self) -> usize {
        self.cout
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (k, s, p) = (self.k, self.stride, self.pad);
        if h + 2 * p < k || w + 2 * p < k || s == 0 {
            return Err(Error::invalid(format!(
                "{h}x{w} input too small for a {k}x{k} kernel with padding {p}"
            )));
        }
        Ok(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &RealTensor<T>, _mode: Mode) -> Result<RealTensor<T>> {
        let [n, c, h, w] = x.dims();
        if c != self.cin {
            return Err(Error::invalid(format!("conv expects {} channels, got {c}", self.cin)));
        }
        let (ho, wo) = self.output_dims(h, w)?;
        let geom = Geom {
            c,
            h,
            w,
            k: self.k,
            s: self.stride,
            p: self.pad,
            ho,
            wo,
        };
        let (rows, pos) = (geom.rows(), geom.positions());
        let ld = n * pos;
        let mut cols = vec![T::zero(); rows * ld];
        for b in 0..n {
            im2col(x.sample(b), &geom, &mut cols, ld, b * pos);
        }
        let mut out = vec![T::zero(); self.cout * ld];
        gemm(
            MatRef::new(self.weight.value.data(), self.cout, rows),
            MatRef::new(&cols, rows, ld),
            T::zero(),
            &mut out,
        );
        let mut y = from_channel_major(&out, n, self.cout, pos);
        add_bias(&mut y, self.bias.value.data(), n, pos);
        self.cache = Some(ConvCache { n, geom, cols });
        RealTensor::new([n, self.cout, ho, wo], y)
    }

    fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>> {
        let ConvCache { n, geom, cols } = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("conv backward without forward"))?;
        let (rows, pos) = (geom.rows(), geom.positions());
        if grad_out.dims() != [n, self.cout, geom.ho, geom.wo] {
            return Err(Error::invalid("conv output gradient has the wrong shape"));
        }
        let ld = n * pos;
        let g = to_channel_major(grad_out.data(), n, self.cout, pos);
        if !self.frozen {
            gemm(
                MatRef::new(&g, self.cout, ld),
                MatRef::new(&cols, rows, ld).t(),
                T::one(),
                self.weight.grad_mut(),
            );
            accumulate_bias_grad(grad_out.data(), n, self.cout, pos, self.bias.grad_mut());
        }
        let mut dcols = cols;
        gemm(
            MatRef::new(self.weight.value.data(), self.cout, rows).t(),
            MatRef::new(&g, self.cout, ld),
            T::zero(),
            &mut dcols,
        );
        let mut dx = RealTensor::zeros([n, geom.c, geom.h, geom.w]);
        for b in 0..n {
            col2im(&dcols, &geom, ld, b * pos, dx.sample_mut(b));
        }
        Ok(dx)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

struct DeconvCache<T> {
    n: usize,
    geom: Geom,
    x: Vec<T>,
}

/// Transposed convolution with weights `[in, out, k, k]`; the adjoint of a
/// [`Conv2d`] with the same kernel, stride and padding. Output size is
/// `(h − 1)·s − 2p + k`, i.e. `2h` for `k = 4, s = 2, p = 1`.
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cache: Option<DeconvCache<T>>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, pad: usize, rng: &mut RngStream) -> Self {
        // Each output pixel sees about cin·k²/s² inputs.
        let fan_in = (cin * k * k / (stride * stride)).max(1);
        Self {
            weight: Param::new(he_normal([cin, cout, k, k], fan_in, rng)),
            bias: Param::new(RealTensor::zeros([cout, 1, 1, 1])),
            cin,
            cout,
            k,
            stride,
            pad,
            cache: None,
        }
    }

    /// The upsampling layer used by the generator: `k = 4, s = 2, p = 1`.
    pub fn upsample2(cin: usize, cout: usize, rng: &mut RngStream) -> Self {
        Self::new(cin, cout, 4, 2, 1, rng)
    }

    fn geom(&self, h: usize, w: usize) -> Result<Geom> {
        let (k, s, p) = (self.k, self.stride, self.pad);
        if h == 0 || w == 0 || (h - 1) * s + k < 2 * p + 1 || (w - 1) * s + k < 2 * p + 1 {
            return Err(Error::invalid(format!("transposed conv cannot expand {h}x{w}")));
        }
        Ok(Geom {
            c: self.cout,
            h: (h - 1) * s + k - 2 * p,
            w: (w - 1) * s + k - 2 * p,
            k,
            s,
            p,
            ho: h,
            wo: w,
        })
    }
}

impl<T: Real> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &RealTensor<T>, _mode: Mode) -> Result<RealTensor<T>> {
        let [n, c, h, w] = x.dims();
        if c != self.cin {
            return Err(Error::invalid(format!("deconv expects {} channels, got {c}", self.cin)));
        }
        let geom = self.geom(h, w)?;
        let (rows, pos) = (geom.rows(), geom.positions());
        let ld = n * pos;
        let xm = to_channel_major(x.data(), n, c, pos);
        let mut cols = vec![T::zero(); rows * ld];
        gemm(
            MatRef::new(self.weight.value.data(), self.cin, rows).t(),
            MatRef::new(&xm, self.cin, ld),
            T::zero(),
            &mut cols,
        );
        let mut y = RealTensor::zeros([n, self.cout, geom.h, geom.w]);
        for b in 0..n {
            col2im(&cols, &geom, ld, b * pos, y.sample_mut(b));
        }
        add_bias(y.data_mut(), self.bias.value.data(), n, geom.h * geom.w);
        self.cache = Some(DeconvCache { n, geom, x: xm });
        Ok(y)
    }

    fn backward(&mut self, grad_out: &RealTensor<T>) -> Result<RealTensor<T>> {
        let DeconvCache { n, geom, x } = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("deconv backward without forward"))?;
        if grad_out.dims() != [n, self.cout, geom.h, geom.w] {
            return Err(Error::invalid("deconv output gradient has the wrong shape"));
        }
        let (rows, pos) = (geom.rows(), geom.positions());
        let ld = n * pos;
        let mut gcols = vec![T::zero(); rows * ld];
        for b in 0..n {
            im2col(grad_out.sample(b), &geom, &mut gcols, ld, b * pos);
        }
        gemm(
            MatRef::new(&x, self.cin, ld),
            MatRef::new(&gcols, rows, ld).t(),
            T::one(),
            self.weight.grad_mut(),
        );
        accumulate_bias_grad(grad_out.data(), n, self.cout, geom.h * geom.w, self.bias.grad_mut());
        let mut dx = x;
        gemm(
            MatRef::new(self.weight.value.data(), self.cin, rows),
            MatRef::new(&gcols, rows, ld),
            T::zero(),
            &mut dx,
        );
        RealTensor::new([n, self.cin, geom.ho, geom.wo], from_channel_major(&dx, n, self.cin, pos))
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}
