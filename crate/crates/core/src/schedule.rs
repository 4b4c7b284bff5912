//! Per-epoch learning rate: linear warmup followed by cosine annealing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("{field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("epoch {epoch} is outside 0..{total}")]
    EpochOutOfRange { epoch: usize, total: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub lr_peak: f64,
    pub lr_start: f64,
    /// Final rate as a fraction of `lr_peak`.
    pub lr_final_fraction: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { total_epochs: 50, warmup_epochs: 3, lr_peak: 0.01, lr_start: 0.0, lr_final_fraction: 0.01 }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |field, reason: String| Err(ScheduleError::InvalidConfig { field, reason });
        if self.total_epochs == 0 {
            return bad("total_epochs", "must be at least 1".into());
        }
        if self.warmup_epochs >= self.total_epochs {
            return bad(
                "warmup_epochs",
                format!("must be less than total_epochs ({}), got {}", self.total_epochs, self.warmup_epochs),
            );
        }
        if !(self.lr_peak.is_finite() && self.lr_peak > 0.0) {
            return bad("lr_peak", format!("must be positive and finite, got {}", self.lr_peak));
        }
        if !(self.lr_start.is_finite() && self.lr_start >= 0.0 && self.lr_start <= self.lr_peak) {
            return bad("lr_start", format!("must lie in [0, lr_peak], got {}", self.lr_start));
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return bad("lr_final_fraction", format!("must lie in (0, 1], got {}", self.lr_final_fraction));
        }
        Ok(())
    }

    pub fn lr_final(&self) -> f64 {
        self.lr_final_fraction * self.lr_peak
    }
}

/// Learning rate for `epoch` (0-based).
pub fn lr_at(cfg: &ScheduleConfig, epoch: usize) -> Result<f64, ScheduleError> {
    cfg.validate()?;
    if epoch >= cfg.total_epochs {
        return Err(ScheduleError::EpochOutOfRange { epoch, total: cfg.total_epochs });
    }
    Ok(lr_unchecked(cfg, epoch))
}

fn lr_unchecked(cfg: &ScheduleConfig, epoch: usize) -> f64 {
    let (tw, last) = (cfg.warmup_epochs, cfg.total_epochs - 1);
    if epoch < tw {
        return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * epoch as f64 / tw as f64;
    }
    // the endpoints are pinned so that they come out exact
    if epoch == tw {
        return cfg.lr_peak;
    }
    let lr_f = cfg.lr_final();
    if epoch == last {
        return lr_f;
    }
    let progress = (epoch - tw) as f64 / (last - tw) as f64;
    lr_f + (cfg.lr_peak - lr_f) / 2.0 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// `(epoch, lr)` for every epoch.
pub fn emit_schedule(cfg: &ScheduleConfig) -> Result<Vec<(usize, f64)>, ScheduleError> {
    cfg.validate()?;
    Ok((0..cfg.total_epochs).map(|e| (e, lr_unchecked(cfg, e))).collect())
}
