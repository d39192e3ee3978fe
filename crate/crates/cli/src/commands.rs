//! Subcommand bodies.

use std::path::{Path, PathBuf};

use pidd_core::container::save_complex;
use pidd_core::edge::sobel;
use pidd_core::metrics::{score, MetricReport};
use pidd_core::mri::{make_mask, tv_reconstruct, TvParams};
use pidd_core::phantom::{build_dataset, load_external, DataLayout, PhantomSpec, Sample, Split, DEFAULT_RATIOS, MANIFEST_FILE};
use pidd_core::{Error, MaskKind, Result, RngStream, SamplingMask};
use pidd_nn::checkpoint::load_checkpoint;
use pidd_nn::PiddGan;
use pidd_train::data::{prepare_split, run_mask};
use pidd_train::trainer::{CHECKPOINT_FILE, CONFIG_FILE};
use pidd_train::{evaluate_items, reconstruct, run_ablation, train_with, TrainConfig, TrainData, Variant};
use rayon::prelude::*;

use crate::png::{save_minmax, save_unit};
use crate::resolve::Resolver;
use crate::{EvalArgs, MaskArgs, PhantomArgs, ReconArgs, TrainArgs};

/// Scale applied to `|recon − truth|` in difference images.
const DIFF_GAIN: f64 = 15.0;
const EVAL_CHUNK: usize = 8;

fn log_resolved(command: &str, text: &str) {
    eprintln!("pidd {command}: resolved configuration");
    for line in text.lines() {
        eprintln!("  {line}");
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// A dataset directory stands for its manifest.
fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST_FILE)
    } else {
        data.to_path_buf()
    }
}

fn is_manifest(data: &Path) -> bool {
    data.is_dir() || data.extension().is_some_and(|e| e == "tsv")
}

fn parse_ratios(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split([':', ',']).collect();
    let bad = || Error::invalid(format!("ratios must look like 5:2:3, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.trim().parse().map_err(|_| bad())?;
    }
    let total: f64 = out.iter().sum();
    if out.iter().any(|r| !r.is_finite() || *r < 0.0) || total <= 0.0 {
        return Err(bad());
    }
    Ok(out.map(|r| r / total))
}

pub fn phantom(a: PhantomArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let out = r.require_path("out", a.out)?;
    let count = r.or("count", a.count, 200usize)?;
    let defaults = PhantomSpec::default();
    let spec = PhantomSpec {
        size: r.or("size", a.size, defaults.size)?,
        coils: r.or("coils", a.coils, defaults.coils)?,
        seed: r.or("seed", a.seed, defaults.seed)?,
        ellipses: (
            r.or("ellipses_min", a.ellipses_min, defaults.ellipses.0)?,
            r.or("ellipses_max", a.ellipses_max, defaults.ellipses.1)?,
        ),
        ..defaults
    };
    let ratios = match r.get::<String>("ratios", a.ratios)? {
        Some(s) => parse_ratios(&s)?,
        None => DEFAULT_RATIOS,
    };
    r.reject_leftover()?;
    log_resolved("phantom", &r.resolved_text());
    let manifest = build_dataset(&spec, count, ratios, &out)?;
    eprintln!(
        "wrote {} phantoms to {} (train {}, val {}, test {})",
        manifest.entries.len(),
        out.join(MANIFEST_FILE).display(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test),
    );
    Ok(())
}

pub fn mask(a: MaskArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let kind: MaskKind = r.or("kind", a.kind.map(|k| k.parse()).transpose()?, MaskKind::Gaussian2d)?;
    let fraction = r.or("fraction", a.fraction, 0.3)?;
    let size = r.or("size", a.size, 256usize)?;
    let width = r.or("width", a.width, size)?;
    let seed = r.or("seed", a.seed, 0u64)?;
    let out = r.require_path("out", a.out)?;
    r.reject_leftover()?;
    log_resolved("mask", &r.resolved_text());
    let m = make_mask(kind, fraction, size, width, &mut RngStream::new(seed, 0))?;
    m.save(&out)?;
    eprintln!(
        "wrote {}×{} {} mask to {}: {} of {} samples ({:.4})",
        size,
        width,
        kind,
        out.display(),
        m.acquired(),
        size * width,
        m.fraction()
    );
    Ok(())
}

/// Config-file keys first, then typed flags, then `--set`.
fn train_config(r: &mut Resolver, a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (k, v) in r.leftover() {
        cfg.set(&k, &v)?;
    }
    let flags: [(&str, Option<String>); 6] = [
        ("seed", a.seed.map(|v| v.to_string())),
        ("mode", a.mode.clone()),
        ("batch", a.batch.map(|v| v.to_string())),
        ("epochs_max", a.epochs_max.map(|v| v.to_string())),
        ("max_steps", a.max_steps.map(|v| v.to_string())),
        ("noise_level", a.noise_level.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let data = r.require_path("data", a.data.clone())?;
    let out = r.require_path("out", a.out.clone())?;
    let ablate = r.flag("ablate", a.ablate)?;
    let cfg = train_config(&mut r, &a)?;
    log_resolved("train", &format!("{}{}", r.resolved_text(), cfg.to_text()));

    let train_data = TrainData::<f32>::from_manifest(&cfg, &manifest_path(&data))?;
    eprintln!(
        "{} training and {} validation images of {}×{}; mask fraction {:.4}",
        train_data.train.len(),
        train_data.val.len(),
        train_data.height,
        train_data.width,
        train_data.mask.fraction()
    );
    if ablate {
        let report = run_ablation(&cfg, &train_data, &Variant::ALL, Some(&out), &mut |v, e| {
            eprintln!(
                "{:>6} epoch {:>3}  val NMSE {:.5}  PSNR {:.2}  SSIM {:.4}  L_G {:.4}",
                v.name(),
                e.epoch,
                e.val.nmse,
                e.val.psnr,
                e.val.ssim,
                e.g_loss
            )
        })?;
        for run in &report.runs {
            eprintln!("{:>6} final val NMSE {:.5}", run.variant.name(), run.final_nmse());
        }
        return Ok(());
    }
    let (_, outcome) = train_with(&cfg, &train_data, Some(&out), &mut |row| {
        if let Some(v) = row.val {
            eprintln!(
                "epoch {:>3} step {:>6} lr {:.2e}  val NMSE {:.5}  PSNR {:.2}  SSIM {:.4}",
                row.epoch, row.step, row.lr, v.nmse, v.psnr, v.ssim
            );
        }
    })?;
    eprintln!(
        "best epoch {} (val NMSE {:.5}) after {} epochs, {} steps{}",
        outcome.best_epoch,
        outcome.best_val_nmse,
        outcome.epochs_run,
        outcome.steps,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

fn load_train_config(dir: &Path) -> Result<TrainConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    TrainConfig::from_text(&text)
}

/// The checkpointed model, shaped for `height`×`width` inputs.
fn load_model(dir: &Path, cfg: &TrainConfig, height: usize, width: usize) -> Result<PiddGan<f32>> {
    let mut model = PiddGan::<f32>::new(cfg.gan_config(height, width), cfg.seed)?;
    let hash = model.config().hash();
    load_checkpoint(&dir.join(CHECKPOINT_FILE), &hash, |f| model.visit_all(f))?;
    Ok(model)
}

fn load_data(data: &Path, split: Split, maps: Option<PathBuf>) -> Result<Vec<Sample>> {
    let samples = if is_manifest(data) {
        if maps.is_some() {
            return Err(Error::invalid("--maps only applies to a single image container"));
        }
        load_external(manifest_path(data), &DataLayout::Manifest { split: Some(split) })?
    } else {
        load_external(data, &DataLayout::Volume { maps })?
    };
    if samples.is_empty() {
        return Err(Error::invalid(format!("no {split} images in {}", data.display())));
    }
    Ok(samples)
}

fn dims_of(samples: &[Sample]) -> Result<(usize, usize)> {
    let (h, w) = samples[0].dims();
    if samples.iter().any(|s| s.dims() != (h, w)) {
        return Err(Error::Layout("images of one run must share their dimensions".into()));
    }
    Ok((h, w))
}

pub fn recon(a: ReconArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let ckpt = r.require_path("checkpoint", a.checkpoint)?;
    let data = r.require_path("data", a.data)?;
    let split = r.or("split", a.split.map(|s| s.parse()).transpose()?, Split::Test)?;
    let maps = r.path("maps", a.maps)?;
    let out = r.require_path("out", a.out)?;
    let noise = r.or("noise_level", a.noise_level, 0.0)?;
    let full = r.flag("fully_sampled", a.fully_sampled)?;
    r.reject_leftover()?;

    let mut cfg = load_train_config(&ckpt)?;
    cfg.noise_level = noise;
    cfg.validate()?;
    log_resolved("recon", &r.resolved_text());

    let samples = load_data(&data, split, maps)?;
    let (h, w) = dims_of(&samples)?;
    let mask = if full { SamplingMask::full(h, w) } else { run_mask(&cfg, h, w)? };
    let items = prepare_split::<f32>(&samples, split, &cfg, &mask)?;
    let mut model = load_model(&ckpt, &cfg, h, w)?;
    let recons = reconstruct(&mut model, &items, EVAL_CHUNK)?;

    create_dir(&out)?;
    for (item, rec) in items.iter().zip(&recons) {
        let id = &item.id;
        save_complex(out.join(format!("{id}_recon.pidt")), rec)?;
        let mag = rec.magnitude();
        save_minmax(&out.join(format!("{id}_recon.png")), &mag, h, w)?;
        let zf: Vec<f64> = item.x_u.magnitude().iter().map(|&v| v as f64).collect();
        save_minmax(&out.join(format!("{id}_zf.png")), &zf, h, w)?;
        let edges = sobel(&mag, h, w)?;
        save_minmax(&out.join(format!("{id}_edges.png")), &edges.values, h, w)?;
        let diff: Vec<f64> = mag
            .iter()
            .zip(&item.truth_mag)
            .map(|(p, t)| DIFF_GAIN * (p - t).abs())
            .collect();
        save_unit(&out.join(format!("{id}_diff.png")), &diff, h, w)?;
        let row = score(id, &mag, &item.truth_mag, h, w)?;
        eprintln!("{id}: NMSE {:.5}  PSNR {:.2}  SSIM {:.4}", row.nmse, row.psnr, row.ssim);
    }
    eprintln!("wrote {} reconstructions to {}", recons.len(), out.display());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Zf,
    Tv,
    Model,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zf" => Ok(Method::Zf),
            "tv" => Ok(Method::Tv),
            "model" => Ok(Method::Model),
            other => Err(Error::invalid(format!("unknown method '{other}' (expected zf, tv or model)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Zf => "zf",
            Method::Tv => "tv",
            Method::Model => "model",
        })
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let data = r.require_path("data", a.data)?;
    let split = r.or("split", a.split.map(|s| s.parse()).transpose()?, Split::Test)?;
    let method = r.or("method", a.method.map(|s| s.parse()).transpose()?, Method::Zf)?;
    let ckpt = r.path("checkpoint", a.checkpoint)?;
    let overrides: [(&str, Option<String>); 5] = [
        ("mask_kind", r.get::<String>("mask_kind", a.mask_kind)?),
        ("mask_fraction", r.get::<f64>("mask_fraction", a.mask_fraction)?.map(|v| v.to_string())),
        ("mask_seed", r.get::<u64>("mask_seed", a.mask_seed)?.map(|v| v.to_string())),
        ("noise_level", r.get::<f64>("noise_level", a.noise_level)?.map(|v| v.to_string())),
        ("seed", r.get::<u64>("seed", a.seed)?.map(|v| v.to_string())),
    ];
    let tv = TvParams {
        lambda: r.or("tv_lambda", a.tv_lambda, TvParams::default().lambda)?,
        iters: r.or("tv_iters", a.tv_iters, TvParams::default().iters)?,
        step: None,
    };
    let out = r.path("out", a.out)?;
    r.reject_leftover()?;

    let mut cfg = match (method, &ckpt) {
        (Method::Model, Some(dir)) => load_train_config(dir)?,
        (Method::Model, None) => return Err(Error::invalid("--method model needs --checkpoint")),
        (_, Some(_)) => return Err(Error::invalid("--checkpoint only applies to --method model")),
        (_, None) => TrainConfig::default(),
    };
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.validate()?;
    log_resolved("eval", &r.resolved_text());

    let samples = load_data(&data, split, None)?;
    let (h, w) = dims_of(&samples)?;
    let mask = run_mask(&cfg, h, w)?;
    let report = match method {
        Method::Zf => {
            let items = prepare_split::<f64>(&samples, split, &cfg, &mask)?;
            let rows = items
                .iter()
                .map(|it| score(&it.id, &it.x_u.magnitude(), &it.truth_mag, h, w))
                .collect::<Result<Vec<_>>>()?;
            MetricReport::from_rows(rows)?
        }
        Method::Tv => {
            let items = prepare_split::<f64>(&samples, split, &cfg, &mask)?;
            let rows = items
                .par_iter()
                .map(|it| {
                    let res = tv_reconstruct(&it.y_mask, &it.maps, &mask, &tv)?;
                    score(&it.id, &res.image.magnitude(), &it.truth_mag, h, w)
                })
                .collect::<Result<Vec<_>>>()?;
            MetricReport::from_rows(rows)?
        }
        Method::Model => {
            let dir = ckpt.as_deref().expect("checked above");
            let items = prepare_split::<f32>(&samples, split, &cfg, &mask)?;
            let mut model = load_model(dir, &cfg, h, w)?;
            evaluate_items(&mut model, &items, EVAL_CHUNK)?
        }
    };
    eprintln!(
        "{method} on {} {split} images: NMSE {:.5} ± {:.5}  PSNR {:.2} ± {:.2}  SSIM {:.4} ± {:.4}",
        report.rows.len(),
        report.mean.nmse,
        report.std.nmse,
        report.mean.psnr,
        report.std.psnr,
        report.mean.ssim,
        report.std.ssim
    );
    match out {
        Some(path) => report.write_csv(path),
        None => {
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}
