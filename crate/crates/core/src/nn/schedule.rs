use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup followed by cosine annealing with warm restarts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub cycle_length: u64,
    pub cycle_mult: f64,
    pub min_lr_fraction: f64,
}

impl LrSchedule {
    /// 5% warmup, one cycle over the remaining steps, floor at 1% of base.
    pub fn for_stage(total_steps: u64) -> Self {
        let warmup_steps = total_steps / 20;
        LrSchedule {
            warmup_steps,
            cycle_length: (total_steps - warmup_steps).max(1),
            cycle_mult: 1.0,
            min_lr_fraction: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycle_length < 1 {
            return Err(Error::Config("cycle_length must be at least 1".into()));
        }
        if !(self.cycle_mult >= 1.0 && self.cycle_mult.is_finite()) {
            return Err(Error::Config("cycle_mult must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.min_lr_fraction) {
            return Err(Error::Config("min_lr_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64, base_lr: f64) -> f64 {
        if step < self.warmup_steps {
            return base_lr * step as f64 / self.warmup_steps as f64;
        }
        let mut pos = step - self.warmup_steps;
        let mut len = self.cycle_length.max(1);
        if self.cycle_mult == 1.0 {
            pos %= len;
        } else {
            while pos >= len {
                pos -= len;
                len = ((len as f64 * self.cycle_mult).round() as u64).max(len + 1);
            }
        }
        let min = self.min_lr_fraction * base_lr;
        let phase = std::f64::consts::PI * pos as f64 / len as f64;
        min + (base_lr - min) * 0.5 * (1.0 + phase.cos())
    }
}
