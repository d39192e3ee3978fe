//! Synthetic multi-coil phantoms, dataset files and the external loader hook.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;
use rayon::prelude::*;

use crate::container::{self, StoredTensor, TensorData};
use crate::error::{Error, Result};
use crate::image::{ComplexImage, MultiCoil};
use crate::mri::{combine_coils, SensitivityMaps};
use crate::rng::RngStream;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const DEFAULT_RATIOS: [f64; 3] = [0.5, 0.2, 0.3];

/// Stream id reserved for split assignment; sample `i` uses stream `i`.
const SPLIT_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub size: usize,
    /// Inclusive range for the number of inner ellipses.
    pub ellipses: (usize, usize),
    pub intensity: (f64, f64),
    pub coils: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 64,
            ellipses: (4, 8),
            intensity: (0.2, 1.0),
            coils: 4,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::invalid(format!("phantom size {} below 32", self.size)));
        }
        if self.coils == 0 {
            return Err(Error::invalid("phantom needs at least one coil"));
        }
        let (lo, hi) = self.intensity;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::invalid(format!("intensity range [{lo}, {hi}] not within [0, 1]")));
        }
        if self.ellipses.0 > self.ellipses.1 {
            return Err(Error::invalid("ellipse count range is reversed"));
        }
        Ok(())
    }
}

/// Ground truth, its coil images and the coil maps for one slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub truth: ComplexImage<f64>,
    pub coil_images: MultiCoil<f64>,
    pub maps: SensitivityMaps<f64>,
}

struct Ellipse {
    ci: f64,
    cj: f64,
    ai: f64,
    aj: f64,
    angle: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, i: f64, j: f64) -> bool {
        let (di, dj) = (i - self.ci, j - self.cj);
        let (s, c) = self.angle.sin_cos();
        let u = c * di + s * dj;
        let v = -s * di + c * dj;
        (u / self.ai).powi(2) + (v / self.aj).powi(2) <= 1.0
    }
}

/// Generates one phantom: a head-like outer ellipse with randomly posed inner
/// ellipses, a smooth linear phase, and a ring of Gaussian-lobed coils.
pub fn gen_phantom(spec: &PhantomSpec, rng: &mut RngStream) -> Result<Phantom> {
    spec.validate()?;
    let n = spec.size;
    let nf = n as f64;
    let (lo, hi) = spec.intensity;

    let mut shapes = vec![Ellipse {
        ci: nf / 2.0 + rng.uniform_range(-0.03, 0.03) * nf,
        cj: nf / 2.0 + rng.uniform_range(-0.03, 0.03) * nf,
        ai: rng.uniform_range(0.36, 0.44) * nf,
        aj: rng.uniform_range(0.28, 0.36) * nf,
        angle: rng.uniform_range(-0.2, 0.2),
        value: rng.uniform_range(lo, hi),
    }];
    let count = spec.ellipses.0 + rng.below((spec.ellipses.1 - spec.ellipses.0 + 1) as u64) as usize;
    for _ in 0..count {
        shapes.push(Ellipse {
            ci: nf / 2.0 + rng.uniform_range(-0.22, 0.22) * nf,
            cj: nf / 2.0 + rng.uniform_range(-0.18, 0.18) * nf,
            ai: rng.uniform_range(0.04, 0.16) * nf,
            aj: rng.uniform_range(0.04, 0.16) * nf,
            angle: rng.uniform_range(0.0, std::f64::consts::PI),
            value: rng.uniform_range(lo, hi),
        });
    }
    let mut mag = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (fi, fj) = (i as f64 + 0.5, j as f64 + 0.5);
            for e in &shapes {
                if e.contains(fi, fj) {
                    mag[i * n + j] = e.value;
                }
            }
        }
    }
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        mag.iter_mut().for_each(|v| *v /= peak);
    }
    let (pa, pb, pc) = (
        rng.uniform_range(-1.5, 1.5),
        rng.uniform_range(-1.5, 1.5),
        rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI),
    );
    let truth = ComplexImage::from_fn(n, n, |i, j| {
        let phase = pa * (i as f64 / nf - 0.5) + pb * (j as f64 / nf - 0.5) + pc;
        Complex::from_polar(mag[i * n + j], phase)
    })?;

    let q = spec.coils;
    let ring = 0.55 * nf;
    let width = 0.45 * nf;
    let mut raw = Vec::with_capacity(q * n * n);
    for c in 0..q {
        let theta = 2.0 * std::f64::consts::PI * c as f64 / q as f64 + rng.uniform_range(-0.1, 0.1);
        let (ci, cj) = (nf / 2.0 + ring * theta.sin(), nf / 2.0 + ring * theta.cos());
        let phase0 = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
        let (gi, gj) = (rng.uniform_range(-0.8, 0.8), rng.uniform_range(-0.8, 0.8));
        for i in 0..n {
            for j in 0..n {
                let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                let amp = (-d2 / (2.0 * width * width)).exp();
                let phase = phase0 + gi * (i as f64 / nf - 0.5) + gj * (j as f64 / nf - 0.5);
                raw.push(Complex::from_polar(amp, phase));
            }
        }
    }
    let maps = SensitivityMaps::normalize(MultiCoil::new(q, n, n, raw)?, &vec![true; n * n])?;
    let coil_images = weight_by_maps(&truth, &maps)?;
    Ok(Phantom {
        truth,
        coil_images,
        maps,
    })
}

/// Coil images `C^q ⊙ x`.
pub fn weight_by_maps(x: &ComplexImage<f64>, maps: &SensitivityMaps<f64>) -> Result<MultiCoil<f64>> {
    let (q, h, w) = maps.dims();
    if x.dims() != (h, w) {
        return Err(Error::invalid("image does not match maps"));
    }
    let mut out = MultiCoil::zeros(q, h, w)?;
    for c in 0..q {
        for ((o, s), v) in out.coil_mut(c).iter_mut().zip(maps.coil(c)).zip(x.data()) {
            *o = s * v;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Layout(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub split: Split,
    /// Relative to the manifest directory.
    pub image: PathBuf,
    pub maps: Option<PathBuf>,
}

/// Tab-separated `split<TAB>image_path<TAB>maps_path` lines; a maps path of
/// `-` marks a single-channel entry without maps.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Layout(format!(
                    "{}:{}: expected 3 tab-separated fields, found {}",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            entries.push(ManifestEntry {
                split: cols[0].parse()?,
                image: PathBuf::from(cols[1]),
                maps: (cols[2] != "-").then(|| PathBuf::from(cols[2])),
            });
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, entries })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let maps = e
                .maps
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned())
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!("{}\t{}\t{}\n", e.split, e.image.to_string_lossy(), maps));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Observed train/val/test proportions.
    pub fn ratios(&self) -> [f64; 3] {
        let n = self.entries.len().max(1) as f64;
        Split::ALL.map(|s| self.count(s) as f64 / n)
    }
}

/// Largest-remainder apportionment of `count` items over `ratios`.
pub fn split_counts(count: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let exact = ratios.map(|r| r * count as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut rest = count - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[k] += 1;
        rest -= 1;
    }
    Ok(counts)
}

fn sample_name(i: usize) -> String {
    format!("{i:05}.pidt")
}

/// Generates `count` phantoms into `out_dir` (`images/`, `maps/`,
/// `manifest.tsv`). Sample `i` draws from stream `i` of `spec.seed`, so the
/// output does not depend on how generation is scheduled.
pub fn build_dataset(spec: &PhantomSpec, count: usize, ratios: [f64; 3], out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    if count < 10 {
        return Err(Error::invalid(format!("dataset needs at least 10 samples, got {count}")));
    }
    let counts = split_counts(count, ratios)?;
    let out = out_dir.as_ref();
    for sub in ["images", "maps"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut order: Vec<usize> = (0..count).collect();
    RngStream::new(spec.seed, SPLIT_STREAM).shuffle(&mut order);
    let mut split_of = vec![Split::Train; count];
    for (rank, &idx) in order.iter().enumerate() {
        split_of[idx] = if rank < counts[0] {
            Split::Train
        } else if rank < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }

    let entries = (0..count)
        .into_par_iter()
        .map(|i| -> Result<ManifestEntry> {
            let ph = gen_phantom(spec, &mut RngStream::new(spec.seed, i as u64))?;
            let image = Path::new("images").join(sample_name(i));
            let maps = Path::new("maps").join(sample_name(i));
            container::save_multi_coil(out.join(&image), &ph.coil_images)?;
            container::save_multi_coil(out.join(&maps), ph.maps.maps())?;
            Ok(ManifestEntry {
                split: split_of[i],
                image,
                maps: Some(maps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.write(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// One loaded slice, magnitude-normalized so `max |truth| = 1`.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub split: Option<Split>,
    pub truth: ComplexImage<f64>,
    pub coil_images: MultiCoil<f64>,
    pub maps: SensitivityMaps<f64>,
}

impl Sample {
    pub fn dims(&self) -> (usize, usize) {
        self.truth.dims()
    }

    pub fn coils(&self) -> usize {
        self.maps.coils()
    }

    /// The same slice as single-channel data with unit maps.
    pub fn to_single_coil(&self) -> Result<Sample> {
        let (h, w) = self.dims();
        Ok(Sample {
            id: self.id.clone(),
            split: self.split,
            truth: self.truth.clone(),
            coil_images: MultiCoil::from_images(&[self.truth.clone()])?,
            maps: SensitivityMaps::trivial(h, w)?,
        })
    }
}

/// How [`load_external`] interprets its path.
#[derive(Clone, Debug, PartialEq)]
pub enum DataLayout {
    /// The path is a manifest; optionally keep one split.
    Manifest { split: Option<Split> },
    /// The path is one image container, with optional maps container.
    Volume { maps: Option<PathBuf> },
}

const MAPS_TOLERANCE: f64 = 1e-6;

fn complex_payload(t: StoredTensor, path: &Path) -> Result<(Vec<usize>, Vec<Complex<f64>>)> {
    let data = match t.data {
        TensorData::C128(v) => v,
        TensorData::C64(v) => v.into_iter().map(|c| Complex::new(c.re as f64, c.im as f64)).collect(),
        TensorData::F64(v) => v.into_iter().map(|r| Complex::new(r, 0.0)).collect(),
        TensorData::F32(v) => v.into_iter().map(|r| Complex::new(r as f64, 0.0)).collect(),
    };
    if t.dims.len() != 2 && t.dims.len() != 3 {
        return Err(Error::Layout(format!(
            "{}: expected rank 2 (image) or 3 (coils×H×W), found rank {}",
            path.display(),
            t.dims.len()
        )));
    }
    Ok((t.dims, data))
}

/// Loads one slice. Rank-2 images are single images; rank-3 images are coil
/// images and need maps unless they hold a single coil. Without maps, unit
/// single-coil maps are synthesized.
pub fn load_sample(id: &str, image: &Path, maps: Option<&Path>) -> Result<Sample> {
    let (dims, data) = complex_payload(container::load(image)?, image)?;
    let maps = match maps {
        Some(mp) => {
            let mc = container::load(mp)?;
            let (mdims, mdata) = complex_payload(mc, mp)?;
            if mdims.len() != 3 {
                return Err(Error::Layout(format!("{}: maps must be rank 3", mp.display())));
            }
            let raw = MultiCoil::new(mdims[0], mdims[1], mdims[2], mdata)?;
            Some(SensitivityMaps::new(raw, MAPS_TOLERANCE).map_err(|e| {
                Error::Layout(format!("{}: {e}", mp.display()))
            })?)
        }
        None => None,
    };
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    if let Some(m) = &maps {
        let (_, mh, mw) = m.dims();
        if (mh, mw) != (h, w) {
            return Err(Error::Layout(format!(
                "{}: image {h}x{w} does not match maps {mh}x{mw}",
                image.display()
            )));
        }
    }
    let (truth, coil_images, maps) = match (dims.len(), maps) {
        (2, maps) => {
            let truth = ComplexImage::new(h, w, data)?;
            let maps = match maps {
                Some(m) => m,
                None => SensitivityMaps::trivial(h, w)?,
            };
            let coils = weight_by_maps(&truth, &maps)?;
            (truth, coils, maps)
        }
        (_, Some(maps)) => {
            let coils = MultiCoil::new(dims[0], h, w, data)?;
            if coils.coils() != maps.coils() {
                return Err(Error::Layout(format!(
                    "{}: {} coil images but {} maps",
                    image.display(),
                    coils.coils(),
                    maps.coils()
                )));
            }
            let truth = combine_coils(&coils, &maps)?;
            (truth, coils, maps)
        }
        (_, None) if dims[0] == 1 => {
            let truth = ComplexImage::new(h, w, data)?;
            let maps = SensitivityMaps::trivial(h, w)?;
            let coils = weight_by_maps(&truth, &maps)?;
            (truth, coils, maps)
        }
        _ => {
            return Err(Error::Layout(format!(
                "{}: {} coil images supplied without sensitivity maps",
                image.display(),
                dims[0]
            )))
        }
    };
    let (truth, coil_images) = normalize_magnitude(truth, coil_images);
    Ok(Sample {
        id: id.to_string(),
        split: None,
        truth,
        coil_images,
        maps,
    })
}

fn normalize_magnitude(mut truth: ComplexImage<f64>, mut coils: MultiCoil<f64>) -> (ComplexImage<f64>, MultiCoil<f64>) {
    let peak = truth.data().iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak > 0.0 && peak != 1.0 {
        truth.data_mut().iter_mut().for_each(|c| *c /= peak);
        coils.data_mut().iter_mut().for_each(|c| *c /= peak);
    }
    (truth, coils)
}

pub fn load_external(path: impl AsRef<Path>, layout: &DataLayout) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    match layout {
        DataLayout::Volume { maps } => {
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(vec![load_sample(&id, path, maps.as_deref())?])
        }
        DataLayout::Manifest { split } => {
            let manifest = DatasetManifest::load(path)?;
            manifest
                .entries
                .iter()
                .filter(|e| split.is_none_or(|s| s == e.split))
                .map(|e| {
                    let id = e.image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    let maps = e.maps.as_ref().map(|m| manifest.root.join(m));
                    let mut s = load_sample(&id, &manifest.root.join(&e.image), maps.as_deref())?;
                    s.split = Some(e.split);
                    Ok(s)
                })
                .collect()
        }
    }
}
