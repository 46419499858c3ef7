use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{power_law, positive, AuxInputs, ComputeBudget, Method, ModelScale, Prediction};
use crate::error::{Error, Result};

const OPENAI_LR_INTERCEPT: f64 = 3.239e-3;
const OPENAI_LR_SLOPE: f64 = 1.395e-4;
const OPENAI_BS_COEF: f64 = 2e18;
const OPENAI_BS_EXP: f64 = -4.76190;

const DEEPSEEK_LR: (f64, f64) = (0.3188, -0.1250);
const DEEPSEEK_BS: (f64, f64) = (0.2920, 0.3271);

const PORIAN_LR: (f64, f64) = (3.7, -0.36);
const PORIAN_BS: (f64, f64) = (0.7576, 0.703);

const MINICPM_BS_COEF: f64 = 2e18;
const MINICPM_BS_EXP: f64 = -6.24;

/// Coefficients of `lr = c·N^alpha·D^beta` and `bs = d·D^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepLawParams {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(alias = "d_coef")]
    pub d: f64,
    pub gamma: f64,
}

impl Default for StepLawParams {
    fn default() -> Self {
        Self {
            c: 1.79,
            alpha: -0.713,
            beta: 0.307,
            d: 0.58,
            gamma: 0.571,
        }
    }
}

impl StepLawParams {
    pub fn validate(&self) -> Result<()> {
        positive("step.c", self.c)?;
        positive("step.d", self.d)?;
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() {
                return Err(Error::arg(format!("step.{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// `lr = coef·N^alpha·D^beta`. The default coefficient is the tabulated
/// `1.3192e-5`, which looks like a transcription artifact; override it when
/// a better value is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicrosoftParams {
    pub coef: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for MicrosoftParams {
    fn default() -> Self {
        Self {
            coef: 1.3192e-5,
            alpha: -0.23,
            beta: -0.32,
        }
    }
}

/// Loss-parameterized law: `lr = lambda·L^-alpha`, `bs = lambda_b·L^(-1/alpha_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeituanParams {
    pub lambda: f64,
    pub alpha: f64,
    pub lambda_b: f64,
    pub alpha_b: f64,
}

impl MeituanParams {
    pub fn validate(&self) -> Result<()> {
        positive("meituan.lambda", self.lambda)?;
        positive("meituan.alpha", self.alpha)?;
        positive("meituan.lambda_b", self.lambda_b)?;
        positive("meituan.alpha_b", self.alpha_b)?;
        Ok(())
    }
}

/// Overridable law coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawParams {
    pub step: StepLawParams,
    pub microsoft: MicrosoftParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meituan: Option<MeituanParams>,
}

impl LawParams {
    /// Parses a law-override document.
    ///
    /// Two shapes are accepted: `{"step": {..}, "microsoft": {..}, "meituan": {..}}`
    /// with every section and field optional, or a fit report whose top level
    /// carries `c, alpha, beta, d, gamma` (other keys ignored), which becomes
    /// the Step Law override.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::parse(e.line() as u64, format!("law overrides: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::parse(0, "law overrides must be a JSON object"))?;
        let is_fit = ["c", "alpha", "beta", "d", "gamma"]
            .iter()
            .all(|k| obj.get(*k).is_some_and(Value::is_number));
        let params = if is_fit {
            let num = |k: &str| obj[k].as_f64().unwrap_or(f64::NAN);
            LawParams {
                step: StepLawParams {
                    c: num("c"),
                    alpha: num("alpha"),
                    beta: num("beta"),
                    d: num("d"),
                    gamma: num("gamma"),
                },
                ..LawParams::default()
            }
        } else {
            serde_json::from_value(value).map_err(|e| Error::parse(0, format!("law overrides: {e}")))?
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        positive("microsoft.coef", self.microsoft.coef)?;
        if let Some(m) = &self.meituan {
            m.validate()?;
        }
        Ok(())
    }

    pub fn step_law(&self, scale: &ModelScale) -> Result<Prediction> {
        let p = &self.step;
        let (n, d) = (scale.n_params(), scale.d_tokens());
        Ok(Prediction {
            method: Method::Step,
            lr: Some(power_law(p.c, &[(n, p.alpha), (d, p.beta)])?),
            bs_tokens: Some(power_law(p.d, &[(d, p.gamma)])?),
            snapped: false,
        })
    }

    /// Dispatches to Step Law or a baseline.
    pub fn predict(
        &self,
        method: Method,
        scale: &ModelScale,
        budget: Option<ComputeBudget>,
        aux: &AuxInputs,
    ) -> Result<Prediction> {
        match method {
            Method::Step => self.step_law(scale),
            other => self.baseline(other, scale, budget, aux),
        }
    }

    pub fn baseline(
        &self,
        method: Method,
        scale: &ModelScale,
        budget: Option<ComputeBudget>,
        aux: &AuxInputs,
    ) -> Result<Prediction> {
        let n = scale.n_params();
        let d = scale.d_tokens();
        let need_loss = || {
            aux.expected_loss
                .ok_or_else(|| Error::arg(format!("{method} batch-size rule requires expected_loss")))
        };
        let (lr, bs) = match method {
            Method::Step => {
                return Err(Error::arg("step is not a baseline law; use step_law"));
            }
            Method::OpenAi => {
                let lr = OPENAI_LR_INTERCEPT - OPENAI_LR_SLOPE * n.ln();
                if lr <= 0.0 || !lr.is_finite() {
                    let threshold = (OPENAI_LR_INTERCEPT / OPENAI_LR_SLOPE).exp();
                    return Err(Error::Domain(format!(
                        "openai learning rate is {lr:e} (non-positive for N >= {threshold:e})"
                    )));
                }
                let bs = power_law(OPENAI_BS_COEF, &[(need_loss()?, OPENAI_BS_EXP)])?;
                (Some(lr), Some(bs))
            }
            Method::Microsoft => {
                let m = &self.microsoft;
                (Some(power_law(m.coef, &[(n, m.alpha), (d, m.beta)])?), None)
            }
            Method::DeepSeek => {
                let c = budget
                    .ok_or_else(|| Error::arg("deepseek requires a compute budget"))?
                    .flops();
                (
                    Some(power_law(DEEPSEEK_LR.0, &[(c, DEEPSEEK_LR.1)])?),
                    Some(power_law(DEEPSEEK_BS.0, &[(c, DEEPSEEK_BS.1)])?),
                )
            }
            Method::Porian => (
                Some(power_law(PORIAN_LR.0, &[(n, PORIAN_LR.1)])?),
                Some(power_law(PORIAN_BS.0, &[(n, PORIAN_BS.1)])?),
            ),
            Method::MiniCpm => (
                None,
                Some(power_law(MINICPM_BS_COEF, &[(need_loss()?, MINICPM_BS_EXP)])?),
            ),
            Method::Meituan => {
                let m = aux
                    .meituan
                    .or(self.meituan)
                    .ok_or_else(|| Error::arg("meituan requires (lambda, alpha, lambda_b, alpha_b)"))?;
                m.validate()?;
                let loss = aux
                    .expected_loss
                    .ok_or_else(|| Error::arg("meituan requires expected_loss"))?;
                (
                    Some(power_law(m.lambda, &[(loss, -m.alpha)])?),
                    Some(power_law(m.lambda_b, &[(loss, -1.0 / m.alpha_b)])?),
                )
            }
        };
        Ok(Prediction {
            method,
            lr,
            bs_tokens: bs,
            snapped: false,
        })
    }
}
