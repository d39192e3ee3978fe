use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::container::{self, StoredTensor, TensorData};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Lowest accepted sampling fraction.
pub const MIN_FRACTION: f64 = 0.05;

/// Gaussian density width relative to `min(h, w)`.
const GAUSSIAN_SIGMA: f64 = 0.15;

/// Calibration disc radius relative to `min(h, w)`.
const ACS_FRACTION: f64 = 0.04;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskKind {
    Gaussian2d,
    Gaussian1d,
    Poisson2d,
}

impl MaskKind {
    pub const ALL: [MaskKind; 3] = [MaskKind::Gaussian2d, MaskKind::Gaussian1d, MaskKind::Poisson2d];

    pub fn as_str(&self) -> &'static str {
        match self {
            MaskKind::Gaussian2d => "gaussian2d",
            MaskKind::Gaussian1d => "gaussian1d",
            MaskKind::Poisson2d => "poisson2d",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian2d" => Ok(MaskKind::Gaussian2d),
            "gaussian1d" => Ok(MaskKind::Gaussian1d),
            "poisson2d" => Ok(MaskKind::Poisson2d),
            other => Err(Error::invalid(format!("unknown mask kind '{other}'"))),
        }
    }
}

/// Radius of the always-sampled calibration disc: `ceil(0.04 · min(h, w))`.
pub fn acs_radius(h: usize, w: usize) -> usize {
    (ACS_FRACTION * h.min(w) as f64).ceil() as usize
}

/// Binary k-space sampling pattern in the centered layout; `true` = acquired.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
    target_fraction: f64,
    kind: MaskKind,
    acs_radius: usize,
    seed: u64,
}

impl SamplingMask {
    pub fn from_bits(
        height: usize,
        width: usize,
        bits: Vec<bool>,
        kind: MaskKind,
        target_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::invalid("mask bit count does not match dims"));
        }
        Ok(Self {
            height,
            width,
            bits,
            target_fraction,
            kind,
            acs_radius: acs_radius(height, width),
            seed,
        })
    }

    /// All-ones mask.
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
            target_fraction: 1.0,
            kind: MaskKind::Gaussian2d,
            acs_radius: acs_radius(height, width),
            seed: 0,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn target_fraction(&self) -> f64 {
        self.target_fraction
    }

    pub fn acs_radius(&self) -> usize {
        self.acs_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.width + j]
    }

    pub fn acquired(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.acquired() as f64 / self.bits.len() as f64
    }

    /// The complementary pattern `1 − M`.
    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
            target_fraction: 1.0 - self.target_fraction,
            ..self.clone()
        }
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("meta")
    }

    /// Writes the bits as an f32 0/1 `PIDT` record plus a key-value sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let data: Vec<f32> = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        container::save(
            path,
            &StoredTensor::new(vec![self.height, self.width], TensorData::F32(data))?,
        )?;
        let meta = format!(
            "kind={}\nfraction={}\nseed={}\nacs_radius={}\n",
            self.kind, self.target_fraction, self.seed, self.acs_radius
        );
        let side = Self::sidecar_path(path);
        fs::write(&side, meta).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let t = container::load(path)?;
        if t.dims.len() != 2 {
            return Err(Error::format(9, "mask record must have rank 2"));
        }
        let bits = match t.data {
            TensorData::F32(v) => v.into_iter().map(|x| x != 0.0).collect::<Vec<_>>(),
            _ => return Err(Error::format(8, "mask record must be f32")),
        };
        let side = Self::sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let (mut kind, mut fraction, mut seed, mut acs) = (None, None, None, None);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Layout(format!("malformed sidecar line '{line}'")))?;
            let bad = || Error::Layout(format!("bad value for '{k}' in {}", side.display()));
            match k.trim() {
                "kind" => kind = Some(v.trim().parse::<MaskKind>()?),
                "fraction" => fraction = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
                "seed" => seed = Some(v.trim().parse::<u64>().map_err(|_| bad())?),
                "acs_radius" => acs = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
                other => return Err(Error::Layout(format!("unknown sidecar key '{other}'"))),
            }
        }
        let missing = |k: &str| Error::Layout(format!("sidecar {} lacks '{k}'", side.display()));
        Ok(Self {
            height: t.dims[0],
            width: t.dims[1],
            bits,
            kind: kind.ok_or_else(|| missing("kind"))?,
            target_fraction: fraction.ok_or_else(|| missing("fraction"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            acs_radius: acs.ok_or_else(|| missing("acs_radius"))?,
        })
    }
}

fn acs_disc(h: usize, w: usize, r: usize) -> Vec<bool> {
    let (ci, cj) = ((h / 2) as i64, (w / 2) as i64);
    let r2 = (r * r) as i64;
    let mut bits = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            let (di, dj) = (i as i64 - ci, j as i64 - cj);
            bits[i * w + j] = di * di + dj * dj <= r2;
        }
    }
    bits
}

/// Indices of the `count` largest Efraimidis-Spirakis keys `ln(u) / weight`,
/// i.e. a weighted sample without replacement.
fn weighted_sample(candidates: &[usize], weights: &[f64], count: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = candidates
        .iter()
        .map(|&c| (rng.uniform_open().ln() / weights[c].max(1e-300), c))
        .collect();
    if count == 0 {
        return Vec::new();
    }
    if count < keyed.len() {
        keyed.select_nth_unstable_by(count - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        keyed.truncate(count);
    }
    keyed.into_iter().map(|(_, c)| c).collect()
}

fn infeasible(fraction: f64, floor: usize, total: usize) -> Error {
    Error::invalid(format!(
        "fraction {fraction} is below the calibration region ({floor} of {total} samples)"
    ))
}

/// Generates a sampling mask with exactly `round(fraction · size)` acquired
/// samples (whole columns for `gaussian1d`), always including the central
/// calibration disc.
pub fn make_mask(
    kind: MaskKind,
    fraction: f64,
    height: usize,
    width: usize,
    rng: &mut RngStream,
) -> Result<SamplingMask> {
    if !(MIN_FRACTION..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "fraction {fraction} outside [{MIN_FRACTION}, 1]"
        )));
    }
    if height < 8 || width < 8 {
        return Err(Error::invalid("mask dims must be at least 8x8"));
    }
    let r = acs_radius(height, width);
    let seed = rng.seed();
    let build = |bits| SamplingMask {
        height,
        width,
        bits,
        target_fraction: fraction,
        kind,
        acs_radius: r,
        seed,
    };
    if fraction == 1.0 {
        return Ok(build(vec![true; height * width]));
    }
    let sigma = GAUSSIAN_SIGMA * height.min(width) as f64;
    let (ci, cj) = ((height / 2) as f64, (width / 2) as f64);
    let bits = match kind {
        MaskKind::Gaussian2d => {
            let total = height * width;
            let target = (fraction * total as f64).round() as usize;
            let mut bits = acs_disc(height, width, r);
            let floor = bits.iter().filter(|&&b| b).count();
            if target < floor {
                return Err(infeasible(fraction, floor, total));
            }
            let weights: Vec<f64> = (0..total)
                .map(|p| {
                    let (di, dj) = ((p / width) as f64 - ci, (p % width) as f64 - cj);
                    (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            let candidates: Vec<usize> = (0..total).filter(|&p| !bits[p]).collect();
            for p in weighted_sample(&candidates, &weights, target - floor, rng) {
                bits[p] = true;
            }
            bits
        }
        MaskKind::Gaussian1d => {
            let target = (fraction * width as f64).round() as usize;
            let acs_cols: Vec<bool> = (0..width)
                .map(|j| (j as i64 - (width / 2) as i64).unsigned_abs() as usize <= r)
                .collect();
            let floor = acs_cols.iter().filter(|&&b| b).count();
            if target < floor {
                return Err(infeasible(fraction, floor, width));
            }
            let weights: Vec<f64> = (0..width)
                .map(|j| {
                    let d = j as f64 - cj;
                    (-(d * d) / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            let candidates: Vec<usize> = (0..width).filter(|&j| !acs_cols[j]).collect();
            let mut cols = acs_cols;
            for j in weighted_sample(&candidates, &weights, target - floor, rng) {
                cols[j] = true;
            }
            (0..height * width).map(|p| cols[p % width]).collect()
        }
        MaskKind::Poisson2d => poisson_disc(height, width, r, fraction, rng)?,
    };
    Ok(build(bits))
}

/// Variable-density Poisson-disc sampling by dart throwing.
///
/// The exclusion radius grows linearly from the center to four times its
/// central value at the corners. The radius scale is bisected until the
/// accepted count lands just above the target; the most recently accepted
/// darts are then dropped to hit the target exactly.
fn poisson_disc(h: usize, w: usize, r_acs: usize, fraction: f64, rng: &mut RngStream) -> Result<Vec<bool>> {
    let total = h * w;
    let target = (fraction * total as f64).round() as usize;
    let acs = acs_disc(h, w, r_acs);
    let floor = acs.iter().filter(|&&b| b).count();
    if target < floor {
        return Err(infeasible(fraction, floor, total));
    }
    let need = target - floor;
    let (ci, cj) = ((h / 2) as f64, (w / 2) as f64);
    let rho_max = (ci * ci + cj * cj).sqrt();
    let growth: Vec<f64> = (0..total)
        .map(|p| {
            let (di, dj) = ((p / w) as f64 - ci, (p % w) as f64 - cj);
            1.0 + 3.0 * (di * di + dj * dj).sqrt() / rho_max
        })
        .collect();
    let mut order: Vec<usize> = (0..total).filter(|&p| !acs[p]).collect();
    rng.shuffle(&mut order);

    let throw = |scale: f64| -> Vec<usize> {
        let mut occupied = acs.clone();
        let mut accepted = Vec::new();
        for &p in &order {
            let r = scale * growth[p];
            let (pi, pj) = ((p / w) as i64, (p % w) as i64);
            let reach = r.ceil() as i64;
            let r2 = r * r;
            let mut free = true;
            'scan: for di in -reach..=reach {
                let i = pi + di;
                if i < 0 || i >= h as i64 {
                    continue;
                }
                for dj in -reach..=reach {
                    let j = pj + dj;
                    if j < 0 || j >= w as i64 || ((di * di + dj * dj) as f64) >= r2 {
                        continue;
                    }
                    if occupied[i as usize * w + j as usize] {
                        free = false;
                        break 'scan;
                    }
                }
            }
            if free {
                occupied[p] = true;
                accepted.push(p);
            }
        }
        accepted
    };

    let slack = ((0.002 * total as f64) as usize).max(1);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = order.clone();
    loop {
        let acc = throw(hi);
        if acc.len() < need {
            break;
        }
        lo = hi;
        best = acc;
        hi *= 2.0;
        if hi > (h.max(w) as f64) * 4.0 {
            break;
        }
    }
    for _ in 0..40 {
        if best.len() - need <= slack {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let acc = throw(mid);
        if acc.len() >= need {
            lo = mid;
            best = acc;
        } else {
            hi = mid;
        }
    }
    best.truncate(need);
    let mut bits = acs;
    for p in best {
        bits[p] = true;
    }
    Ok(bits)
}
