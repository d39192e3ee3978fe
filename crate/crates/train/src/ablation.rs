//! The four residual-learning variants trained on identical data and seed.

use std::fmt::Write as _;
use std::path::Path;

use pidd_core::{Error, Real, Result};

use crate::config::TrainConfig;
use crate::data::TrainData;
use crate::log::{EpochRecord, TrainLog};
use crate::trainer::train;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    GrLr,
    GrNLr,
    NGrLr,
    NGrNLr,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::GrLr, Variant::GrNLr, Variant::NGrLr, Variant::NGrNLr];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::GrLr => "GRLR",
            Variant::GrNLr => "GRnLR",
            Variant::NGrLr => "nGRLR",
            Variant::NGrNLr => "nGRnLR",
        }
    }

    /// `(use_gr, use_lr)`.
    pub fn flags(&self) -> (bool, bool) {
        match self {
            Variant::GrLr => (true, true),
            Variant::GrNLr => (true, false),
            Variant::NGrLr => (false, true),
            Variant::NGrNLr => (false, false),
        }
    }

    /// `cfg` with this variant's flags and early stopping turned off.
    pub fn apply(&self, cfg: &TrainConfig) -> TrainConfig {
        let (gr, lr) = self.flags();
        TrainConfig {
            use_gr: gr,
            use_lr: lr,
            early_stop: false,
            ..cfg.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct VariantRun {
    pub variant: Variant,
    pub log: TrainLog,
    pub epochs: Vec<EpochRecord>,
}

impl VariantRun {
    pub fn final_nmse(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.val.nmse)
    }

    /// First epoch whose validation NMSE is at or below `target`.
    pub fn first_epoch_reaching(&self, target: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.val.nmse <= target).map(|e| e.epoch)
    }
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub runs: Vec<VariantRun>,
}

pub const MERGED_FILE: &str = "ablation.csv";
pub const MERGED_HEADER: &str = "variant,epoch,val_NMSE,val_PSNR,val_SSIM,L_G";

impl AblationReport {
    pub fn run(&self, v: Variant) -> Option<&VariantRun> {
        self.runs.iter().find(|r| r.variant == v)
    }

    pub fn merged_csv(&self) -> String {
        let mut s = format!("{MERGED_HEADER}\n");
        for r in &self.runs {
            for e in &r.epochs {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.variant.name(),
                    e.epoch,
                    e.val.nmse,
                    e.val.psnr,
                    e.val.ssim,
                    e.g_loss
                );
            }
        }
        s
    }
}

/// Trains every variant in `variants`. With `out_dir`, writes one
/// `<variant>.csv` log per run plus the merged per-epoch table.
pub fn run_ablation<T: Real>(
    cfg: &TrainConfig,
    data: &TrainData<T>,
    variants: &[Variant],
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(Variant, &EpochRecord),
) -> Result<AblationReport> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut runs = Vec::with_capacity(variants.len());
    for &v in variants {
        let vcfg = v.apply(cfg);
        let (_, outcome) = train(&vcfg, data, None)?;
        let epochs = outcome.log.epochs(&vcfg.effective_weights());
        for e in &epochs {
            progress(v, e);
        }
        if let Some(dir) = out_dir {
            outcome.log.write_csv(dir.join(format!("{}.csv", v.name())))?;
        }
        runs.push(VariantRun {
            variant: v,
            log: outcome.log,
            epochs,
        });
    }
    let report = AblationReport { runs };
    if let Some(dir) = out_dir {
        let path = dir.join(MERGED_FILE);
        std::fs::write(&path, report.merged_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
