//! Turning loaded samples into network-ready training items.

use std::path::Path;

use pidd_core::mri::{forward_encode, inject_noise, make_mask, zero_filled};
use pidd_core::phantom::{load_external, DataLayout, Sample, Split};
use pidd_core::{ComplexImage, Error, MultiCoil, Real, RealTensor, Result, RngStream, SamplingMask, SensitivityMaps};
use pidd_nn::gan::loss::images_to_tensor;
use pidd_nn::Batch;

use crate::config::{TrainConfig, TrainMode};

/// Noise streams are `NOISE_STREAM + split offset + index`.
const NOISE_STREAM: u64 = 1 << 40;
const SPLIT_OFFSET: u64 = 1 << 32;

/// One slice with its simulated acquisition.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    pub id: String,
    /// Zero-filled network input.
    pub x_u: ComplexImage<T>,
    pub truth: ComplexImage<T>,
    pub coil_truth: MultiCoil<T>,
    pub maps: SensitivityMaps<T>,
    /// Acquired k-space, noisy if a noise level is set.
    pub y_mask: MultiCoil<T>,
    /// Clean k-space at the unacquired locations.
    pub y_unmask: MultiCoil<T>,
    /// `|truth|` in f64, the metric reference.
    pub truth_mag: Vec<f64>,
}

/// The sampling mask every sample of a run shares.
pub fn run_mask(cfg: &TrainConfig, height: usize, width: usize) -> Result<SamplingMask> {
    make_mask(cfg.mask_kind, cfg.mask_fraction, height, width, &mut RngStream::new(cfg.mask_seed, 0))
}

/// Simulates acquisition of `sample` under `mask` with noise level `nl`.
pub fn prepare<T: Real>(sample: &Sample, mask: &SamplingMask, nl: f64, rng: &mut RngStream) -> Result<Prepared<T>> {
    let clean = forward_encode(&sample.truth, &sample.maps, mask)?;
    let y = inject_noise(&clean, mask, nl, rng)?;
    let y_unmask = forward_encode(&sample.truth, &sample.maps, &mask.complement())?;
    let x_u = zero_filled(&y, &sample.maps, mask)?;
    Ok(Prepared {
        id: sample.id.clone(),
        x_u: x_u.cast(),
        truth: sample.truth.cast(),
        coil_truth: sample.coil_images.cast(),
        maps: sample.maps.cast(),
        y_mask: y.cast(),
        y_unmask: y_unmask.cast(),
        truth_mag: sample.truth.magnitude(),
    })
}

fn split_index(split: Split) -> u64 {
    match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

/// Prepares a split in order, applying the mode's channel handling. Noise
/// draws come from a per-sample stream, so results do not depend on which
/// other samples are prepared.
pub fn prepare_split<T: Real>(
    samples: &[Sample],
    split: Split,
    cfg: &TrainConfig,
    mask: &SamplingMask,
) -> Result<Vec<Prepared<T>>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let owned;
            let s = if cfg.mode == TrainMode::NPidd {
                owned = s.to_single_coil()?;
                &owned
            } else {
                s
            };
            let stream = NOISE_STREAM + split_index(split) * SPLIT_OFFSET + i as u64;
            prepare(s, mask, cfg.noise_level, &mut RngStream::new(cfg.seed, stream))
        })
        .collect()
}

/// Training and validation items of one run.
pub struct TrainData<T> {
    pub height: usize,
    pub width: usize,
    pub mask: SamplingMask,
    pub train: Vec<Prepared<T>>,
    pub val: Vec<Prepared<T>>,
}

impl<T: Real> TrainData<T> {
    pub fn from_samples(cfg: &TrainConfig, train: &[Sample], val: &[Sample]) -> Result<Self> {
        let first = train.first().ok_or_else(|| Error::invalid("training split is empty"))?;
        if val.is_empty() {
            return Err(Error::invalid("validation split is empty"));
        }
        let (h, w) = first.dims();
        if let Some(s) = train.iter().chain(val).find(|s| s.dims() != (h, w)) {
            return Err(Error::invalid(format!("sample {} is not {h}x{w}", s.id)));
        }
        if train.len() < cfg.batch {
            return Err(Error::invalid(format!(
                "{} training samples cannot fill a batch of {}",
                train.len(),
                cfg.batch
            )));
        }
        let mask = run_mask(cfg, h, w)?;
        Ok(Self {
            height: h,
            width: w,
            train: prepare_split(train, Split::Train, cfg, &mask)?,
            val: prepare_split(val, Split::Val, cfg, &mask)?,
            mask,
        })
    }

    /// Loads the train and val splits of a manifest.
    pub fn from_manifest(cfg: &TrainConfig, manifest: &Path) -> Result<Self> {
        let train = load_external(manifest, &DataLayout::Manifest { split: Some(Split::Train) })?;
        let val = load_external(manifest, &DataLayout::Manifest { split: Some(Split::Val) })?;
        Self::from_samples(cfg, &train, &val)
    }
}

/// Real/imaginary tensor of the zero-filled inputs.
pub fn input_tensor<T: Real>(items: &[&Prepared<T>]) -> Result<RealTensor<T>> {
    let x: Vec<ComplexImage<T>> = items.iter().map(|p| p.x_u.clone()).collect();
    images_to_tensor(&x)
}

pub fn make_batch<T: Real>(items: &[&Prepared<T>], mask: &SamplingMask) -> Result<Batch<T>> {
    let truth: Vec<ComplexImage<T>> = items.iter().map(|p| p.truth.clone()).collect();
    Ok(Batch {
        x_u: input_tensor(items)?,
        truth: images_to_tensor(&truth)?,
        coil_truth: items.iter().map(|p| p.coil_truth.clone()).collect(),
        maps: items.iter().map(|p| p.maps.clone()).collect(),
        y_mask: items.iter().map(|p| p.y_mask.clone()).collect(),
        y_unmask: items.iter().map(|p| p.y_unmask.clone()).collect(),
        mask: mask.clone(),
    })
}
