//! Append-only training log and its CSV form.

use std::fmt::Write as _;
use std::path::Path;

use pidd_core::{Error, Result};
use pidd_nn::gan::{loss_total, LossParts, LossWeights};
use pidd_nn::DiscLosses;

pub const LOG_HEADER: &str =
    "step,epoch,lr,L_iMSE,L_fMSE_mask,L_fMSE_1mask,L_perc,L_adv_G,L_D1,L_D2,val_NMSE,val_PSNR,val_SSIM";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValMetrics {
    pub nmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// One optimizer step. The last step of an epoch carries that epoch's
/// validation metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// One-based step count.
    pub step: usize,
    /// Zero-based epoch.
    pub epoch: usize,
    pub lr: f64,
    pub parts: LossParts,
    pub disc: DiscLosses,
    pub val: Option<ValMetrics>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val: ValMetrics,
    /// Mean total generator objective over the epoch's steps.
    pub g_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, row: LogRow) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            let p = &r.parts;
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.step, r.epoch, r.lr, p.imse, p.fmse_mask, p.fmse_unmask, p.perc, p.adv_g, r.disc.d1, r.disc.d2
            );
            match r.val {
                Some(v) => {
                    let _ = writeln!(s, ",{},{},{}", v.nmse, v.psnr, v.ssim);
                }
                None => s.push_str(",,,\n"),
            }
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Per-epoch validation metrics and mean generator objective.
    pub fn epochs(&self, weights: &LossWeights) -> Vec<EpochRecord> {
        let mut out = Vec::new();
        let (mut sum, mut count) = (0.0, 0usize);
        for r in &self.rows {
            sum += loss_total(&r.parts, weights);
            count += 1;
            if let Some(val) = r.val {
                out.push(EpochRecord {
                    epoch: r.epoch,
                    val,
                    g_loss: sum / count as f64,
                });
                sum = 0.0;
                count = 0;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut log = TrainLog::default();
        let parts = LossParts { imse: 1.0, fmse_mask: 2.0, fmse_unmask: 3.0, perc: 4.0, adv_g: 5.0 };
        let disc = DiscLosses { d1: 6.0, d2: 7.0 };
        log.push(LogRow { step: 1, epoch: 0, lr: 0.001, parts, disc, val: None });
        let val = ValMetrics { nmse: 0.1, psnr: 20.0, ssim: 0.5 };
        log.push(LogRow { step: 2, epoch: 0, lr: 0.001, parts, disc, val: Some(val) });
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines[1], "1,0,0.001,1,2,3,4,5,6,7,,,");
        assert_eq!(lines[2], "2,0,0.001,1,2,3,4,5,6,7,0.1,20,0.5");
        for l in &lines {
            assert_eq!(l.split(',').count(), 13);
        }
        let w = LossWeights::default();
        let e = log.epochs(&w);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].g_loss, loss_total(&parts, &w));
    }
}
