use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the final learning rate of the cosine phase is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinLrMode {
    /// Decay to a constant floor regardless of the peak.
    FixedMin,
    /// Decay to `lr_max / 10`.
    Conventional,
}

/// Linear warmup followed by cosine decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub lr_max: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub min_mode: MinLrMode,
    pub lr_min_fixed: f64,
}

impl ScheduleSpec {
    pub const DEFAULT_WARMUP: u64 = 2000;
    pub const DEFAULT_LR_MIN: f64 = 1e-5;

    /// Fixed-floor schedule with 2000 warmup steps and a `1e-5` floor.
    pub fn new(lr_max: f64, total_steps: u64) -> Result<Self> {
        let spec = Self {
            lr_max,
            total_steps,
            warmup_steps: Self::DEFAULT_WARMUP,
            min_mode: MinLrMode::FixedMin,
            lr_min_fixed: Self::DEFAULT_LR_MIN,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_warmup(mut self, warmup_steps: u64) -> Result<Self> {
        self.warmup_steps = warmup_steps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: MinLrMode) -> Result<Self> {
        self.min_mode = mode;
        self.validate()?;
        Ok(self)
    }

    pub fn with_lr_min_fixed(mut self, lr_min: f64) -> Result<Self> {
        self.lr_min_fixed = lr_min;
        self.validate()?;
        Ok(self)
    }

    pub fn lr_min(&self) -> f64 {
        match self.min_mode {
            MinLrMode::FixedMin => self.lr_min_fixed,
            MinLrMode::Conventional => self.lr_max / 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_max.is_finite() && self.lr_max > 0.0) {
            return Err(Error::arg(format!("lr_max must be finite and > 0, got {}", self.lr_max)));
        }
        if self.warmup_steps == 0 || self.warmup_steps >= self.total_steps {
            return Err(Error::arg(format!(
                "need 0 < warmup_steps ({}) < total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        let lr_min = self.lr_min();
        if !(lr_min.is_finite() && lr_min >= 0.0 && self.lr_max > lr_min) {
            return Err(Error::arg(format!(
                "lr_max ({}) must exceed lr_min ({lr_min})",
                self.lr_max
            )));
        }
        Ok(())
    }
}

/// Learning rate at `step`.
pub fn schedule_value(step: u64, spec: &ScheduleSpec) -> Result<f64> {
    spec.validate()?;
    if step > spec.total_steps {
        return Err(Error::arg(format!(
            "step {step} is past total_steps {}",
            spec.total_steps
        )));
    }
    if step <= spec.warmup_steps {
        return Ok(spec.lr_max * (step as f64 / spec.warmup_steps as f64));
    }
    let lr_min = spec.lr_min();
    if step == spec.total_steps {
        return Ok(lr_min);
    }
    let progress = (step - spec.warmup_steps) as f64 / (spec.total_steps - spec.warmup_steps) as f64;
    Ok(lr_min + 0.5 * (spec.lr_max - lr_min) * (1.0 + (PI * progress).cos()))
}
