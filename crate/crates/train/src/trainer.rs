//! The alternating optimization loop.

use std::path::{Path, PathBuf};

use pidd_core::metrics::{score, MetricReport};
use pidd_core::{ComplexImage, Error, Real, RealTensor, Result, RngStream};
use pidd_nn::checkpoint::save_checkpoint;
use pidd_nn::gan::loss::tensor_to_images;
use pidd_nn::{Mode, PiddGan};

use crate::adam::{Adam, AdamConfig};
use crate::config::TrainConfig;
use crate::data::{input_tensor, make_batch, Prepared, TrainData};
use crate::log::{LogRow, TrainLog, ValMetrics};

const SHUFFLE_STREAM: u64 = 7;

pub const CHECKPOINT_FILE: &str = "best.pidt";
pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "train_log.csv";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: TrainLog,
    /// Epoch with the lowest validation NMSE.
    pub best_epoch: usize,
    pub best_val_nmse: f64,
    pub epochs_run: usize,
    pub steps: usize,
    pub stopped_early: bool,
    pub checkpoint: Option<PathBuf>,
}

/// Generator outputs for `items` in evaluation mode, `chunk` at a time.
pub fn reconstruct<T: Real>(model: &mut PiddGan<T>, items: &[Prepared<T>], chunk: usize) -> Result<Vec<ComplexImage<f64>>> {
    let mut out = Vec::with_capacity(items.len());
    for group in items.chunks(chunk.max(1)) {
        let refs: Vec<&Prepared<T>> = group.iter().collect();
        let y = model.generate(&input_tensor(&refs)?, Mode::Eval)?;
        out.extend(tensor_to_images(&y)?.into_iter().map(|img| img.cast()));
    }
    Ok(out)
}

/// Metrics of the model's reconstructions against `|truth|`.
pub fn evaluate_items<T: Real>(model: &mut PiddGan<T>, items: &[Prepared<T>], chunk: usize) -> Result<MetricReport> {
    let recon = reconstruct(model, items, chunk)?;
    let rows = recon
        .iter()
        .zip(items)
        .map(|(r, p)| {
            let (h, w) = r.dims();
            score(&p.id, &r.magnitude(), &p.truth_mag, h, w)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_rows(rows)
}

fn snapshot<T: Real>(model: &mut PiddGan<T>) -> Vec<RealTensor<T>> {
    let mut out = Vec::new();
    model.visit_all(&mut |_, p| out.push(p.value.clone()));
    out
}

fn restore<T: Real>(model: &mut PiddGan<T>, saved: Vec<RealTensor<T>>) {
    let mut it = saved.into_iter();
    model.visit_all(&mut |_, p| {
        if let Some(v) = it.next() {
            p.value.data_mut().copy_from_slice(v.data());
        }
    });
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// [`train_with`] without progress reporting.
pub fn train<T: Real>(cfg: &TrainConfig, data: &TrainData<T>, out_dir: Option<&Path>) -> Result<(PiddGan<T>, TrainOutcome)> {
    train_with(cfg, data, out_dir, &mut |_| {})
}

/// Trains from scratch and returns the model restored to its best
/// validation epoch. Each batch gets one discriminator update followed by
/// one generator update. With `out_dir`, the resolved config, the best
/// checkpoint and the CSV log are written there.
pub fn train_with<T: Real>(
    cfg: &TrainConfig,
    data: &TrainData<T>,
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&LogRow),
) -> Result<(PiddGan<T>, TrainOutcome)> {
    cfg.validate()?;
    let gan_cfg = cfg.gan_config(data.height, data.width);
    let hash = gan_cfg.hash();
    let mut model = PiddGan::new(gan_cfg, cfg.seed)?;
    let adam_cfg = AdamConfig {
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    };
    let mut opt_g = Adam::new(adam_cfg);
    let mut opt_d = Adam::new(adam_cfg);
    let mut rng = RngStream::new(cfg.seed, SHUFFLE_STREAM);
    let checkpoint = out_dir.map(|d| d.join(CHECKPOINT_FILE));
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    }

    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let (mut best_epoch, mut best_nmse, mut best_params) = (0, f64::INFINITY, None);
    let (mut steps, mut epochs_run, mut stopped_early) = (0, 0, false);

    'epochs: for epoch in 0..cfg.epochs_max {
        let lr = cfg.lr_at(epoch);
        rng.shuffle(&mut order);
        let mut last_row = None;
        for chunk in order.chunks_exact(cfg.batch) {
            let items: Vec<&Prepared<T>> = chunk.iter().map(|&i| &data.train[i]).collect();
            let batch = make_batch(&items, &data.mask)?;
            let fake = model.generate(&batch.x_u, Mode::Train)?;
            let disc = model.d_backward(&batch, &fake)?;
            opt_d.step(lr, |f| model.visit_discriminators(f));
            let parts = model.g_backward(&batch, &fake)?;
            steps += 1;
            if !(parts.is_finite() && disc.d1.is_finite() && disc.d2.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss at step {steps}: L_iMSE={} L_fMSE_mask={} L_fMSE_1mask={} L_perc={} L_adv_G={} L_D1={} L_D2={}",
                    parts.imse, parts.fmse_mask, parts.fmse_unmask, parts.perc, parts.adv_g, disc.d1, disc.d2
                )));
            }
            opt_g.step(lr, |f| model.visit_generator(f));
            if let Some(row) = last_row.take() {
                progress(&row);
                log.push(row);
            }
            last_row = Some(LogRow {
                step: steps,
                epoch,
                lr,
                parts,
                disc,
                val: None,
            });
            if cfg.max_steps > 0 && steps >= cfg.max_steps {
                break;
            }
        }
        let Some(mut row) = last_row else {
            return Err(Error::invalid("an epoch produced no full batch"));
        };
        epochs_run = epoch + 1;

        let report = evaluate_items(&mut model, &data.val, cfg.batch)?;
        let val = ValMetrics {
            nmse: report.mean.nmse,
            psnr: report.mean.psnr,
            ssim: report.mean.ssim,
        };
        if !val.nmse.is_finite() {
            return Err(Error::Numeric(format!("validation NMSE is {} after epoch {epoch}", val.nmse)));
        }
        row.val = Some(val);
        progress(&row);
        log.push(row);

        if val.nmse < best_nmse {
            best_nmse = val.nmse;
            best_epoch = epoch;
            best_params = Some(snapshot(&mut model));
            if let Some(path) = &checkpoint {
                save_checkpoint(path, &hash, |f| model.visit_all(f))?;
            }
        }
        if let Some(dir) = out_dir {
            log.write_csv(dir.join(LOG_FILE))?;
        }
        if cfg.max_steps > 0 && steps >= cfg.max_steps {
            break 'epochs;
        }
        if cfg.early_stop && epoch >= best_epoch + cfg.patience {
            stopped_early = true;
            break;
        }
    }
    if let Some(saved) = best_params {
        restore(&mut model, saved);
    }
    Ok((
        model,
        TrainOutcome {
            log,
            best_epoch,
            best_val_nmse: best_nmse,
            epochs_run,
            steps,
            stopped_early,
            checkpoint,
        },
    ))
}
