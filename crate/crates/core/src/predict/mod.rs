//! Closed-form hyperparameter laws.
//!
//! [`step_law`] evaluates the joint learning-rate / batch-size law
//! `lr = c·N^α·D^β`, `bs = d·D^γ`; [`baseline_predict`] evaluates the six
//! published alternatives it is usually compared against. All laws are
//! evaluated as `exp(ln c + Σ e·ln x)` so that `D ~ 1e13` never overflows an
//! intermediate power.

mod grid;
mod laws;
mod schedule;

pub use grid::{snap_to_grid, GridSpec};
pub use laws::{LawParams, MeituanParams, MicrosoftParams, StepLawParams};
pub use schedule::{schedule_value, MinLrMode, ScheduleSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training budget of one run family: parameter count and dataset size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScale", into = "RawScale")]
pub struct ModelScale {
    n_params: f64,
    d_tokens: f64,
    n_active: Option<f64>,
    flops_per_token: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawScale {
    n_params: f64,
    d_tokens: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_active: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flops_per_token: Option<f64>,
}

impl TryFrom<RawScale> for ModelScale {
    type Error = Error;

    fn try_from(raw: RawScale) -> Result<Self> {
        let mut scale = ModelScale::new(raw.n_params, raw.d_tokens)?;
        if let Some(a) = raw.n_active {
            scale = scale.with_active(a)?;
        }
        if let Some(m) = raw.flops_per_token {
            scale = scale.with_flops_per_token(m)?;
        }
        Ok(scale)
    }
}

impl From<ModelScale> for RawScale {
    fn from(s: ModelScale) -> Self {
        RawScale {
            n_params: s.n_params,
            d_tokens: s.d_tokens,
            n_active: s.n_active,
            flops_per_token: s.flops_per_token,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::arg(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl ModelScale {
    /// `n_params` counts non-vocabulary parameters; for MoE models this is
    /// the total, not the activated, count.
    pub fn new(n_params: f64, d_tokens: f64) -> Result<Self> {
        Ok(Self {
            n_params: positive("n_params", n_params)?,
            d_tokens: positive("d_tokens", d_tokens)?,
            n_active: None,
            flops_per_token: None,
        })
    }

    pub fn with_active(mut self, n_active: f64) -> Result<Self> {
        positive("n_active", n_active)?;
        if n_active > self.n_params {
            return Err(Error::arg(format!(
                "n_active ({n_active}) exceeds n_params ({})",
                self.n_params
            )));
        }
        self.n_active = Some(n_active);
        Ok(self)
    }

    pub fn with_flops_per_token(mut self, m: f64) -> Result<Self> {
        self.flops_per_token = Some(positive("flops_per_token", m)?);
        Ok(self)
    }

    pub fn n_params(&self) -> f64 {
        self.n_params
    }

    pub fn d_tokens(&self) -> f64 {
        self.d_tokens
    }

    pub fn n_active(&self) -> Option<f64> {
        self.n_active
    }

    pub fn flops_per_token(&self) -> Option<f64> {
        self.flops_per_token
    }
}

/// Total training compute in FLOPs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComputeBudget {
    flops: f64,
}

impl ComputeBudget {
    pub fn new(flops: f64) -> Result<Self> {
        Ok(Self {
            flops: positive("flops", flops)?,
        })
    }

    pub fn flops(&self) -> f64 {
        self.flops
    }
}

/// `C = factor · N_eff · D`, with `N_eff` the total or the activated count.
pub fn compute_budget(scale: &ModelScale, flops_factor: f64, use_active: bool) -> Result<ComputeBudget> {
    positive("flops_factor", flops_factor)?;
    let n_eff = if use_active {
        scale
            .n_active
            .ok_or_else(|| Error::arg("use_active requires n_active on the model scale"))?
    } else {
        scale.n_params
    };
    let flops = flops_factor * n_eff * scale.d_tokens;
    if !flops.is_finite() {
        return Err(Error::Domain(format!("compute budget overflows: {flops}")));
    }
    ComputeBudget::new(flops)
}

/// Extra inputs only some baseline laws need.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuxInputs {
    pub expected_loss: Option<f64>,
    pub meituan: Option<MeituanParams>,
}

impl AuxInputs {
    pub fn with_loss(mut self, loss: f64) -> Result<Self> {
        self.expected_loss = Some(positive("expected_loss", loss)?);
        Ok(self)
    }

    pub fn with_meituan(mut self, params: MeituanParams) -> Result<Self> {
        params.validate()?;
        self.meituan = Some(params);
        Ok(self)
    }
}

/// Identifier of a hyperparameter law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Step,
    OpenAi,
    Microsoft,
    DeepSeek,
    Porian,
    MiniCpm,
    Meituan,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Step,
        Method::OpenAi,
        Method::Microsoft,
        Method::DeepSeek,
        Method::Porian,
        Method::MiniCpm,
        Method::Meituan,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Step => "step",
            Method::OpenAi => "openai",
            Method::Microsoft => "microsoft",
            Method::DeepSeek => "deepseek",
            Method::Porian => "porian",
            Method::MiniCpm => "minicpm",
            Method::Meituan => "meituan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::arg(format!("unknown method `{s}`")))
    }
}

/// Recommended hyperparameters from one law.
///
/// `lr` is absent only for MiniCPM (no learning-rate rule); `bs_tokens` is
/// absent only for Microsoft (no batch-size rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub method: Method,
    pub lr: Option<f64>,
    #[serde(rename = "bs")]
    pub bs_tokens: Option<f64>,
    pub snapped: bool,
}

/// `exp(ln coef + Σ exponent·ln base)`.
pub(crate) fn power_law(coef: f64, terms: &[(f64, f64)]) -> Result<f64> {
    let log = terms
        .iter()
        .fold(coef.ln(), |acc, &(base, exponent)| acc + exponent * base.ln());
    let v = log.exp();
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!(
            "law evaluation left the representable range (log value {log})"
        )))
    }
}

/// Step Law with the published coefficients.
pub fn step_law(scale: &ModelScale) -> Result<Prediction> {
    LawParams::default().step_law(scale)
}

/// One of the six baseline laws with default coefficients.
pub fn baseline_predict(
    method: Method,
    scale: &ModelScale,
    budget: Option<ComputeBudget>,
    aux: &AuxInputs,
) -> Result<Prediction> {
    LawParams::default().baseline(method, scale, budget, aux)
}
