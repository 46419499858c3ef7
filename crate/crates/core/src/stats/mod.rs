//! OLS diagnostics for `log B` against `log N` / `log D`, and nested F-tests
//! between the N-only, D-only and Full formulations.

pub mod dist;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{ols, DesignMatrix, OlsSolution, OptimumObservation};

pub use dist::{f_survival, student_t_cdf, student_t_quantile, student_t_two_sided_p};

/// Confidence level of the per-coefficient intervals.
pub const CI_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Predictor {
    #[serde(rename = "logN")]
    LogN,
    #[serde(rename = "logD")]
    LogD,
}

impl Predictor {
    pub fn as_str(self) -> &'static str {
        match self {
            Predictor::LogN => "logN",
            Predictor::LogD => "logD",
        }
    }

    fn value(self, o: &OptimumObservation) -> f64 {
        match self {
            Predictor::LogN => o.n_params.ln(),
            Predictor::LogD => o.d_tokens.ln(),
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logn" | "n" => Ok(Predictor::LogN),
            "logd" | "d" => Ok(Predictor::LogD),
            _ => Err(Error::arg(format!("unknown predictor `{s}` (expected logN or logD)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub coef: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    /// `[lower, upper]` of the 95% interval.
    pub ci: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub predictors: Vec<Predictor>,
    /// Intercept first, then one row per predictor in `predictors` order.
    pub coefficients: Vec<CoefficientRow>,
    pub n: usize,
    pub df_resid: usize,
    pub rss: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Overall-model F against the intercept-only model.
    pub f_statistic: f64,
    pub f_p_value: f64,
}

impl RegressionReport {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientRow> {
        self.coefficients.iter().find(|r| r.name == name)
    }

    pub fn p(&self) -> usize {
        self.predictors.len()
    }
}

fn t_and_p(coef: f64, se: f64, df: f64) -> (f64, f64) {
    if se > 0.0 {
        let t = coef / se;
        (t, student_t_two_sided_p(t, df))
    } else if coef == 0.0 {
        (0.0, 1.0)
    } else {
        (coef.signum() * f64::INFINITY, 0.0)
    }
}

/// Overall F and its upper-tail p from raw sums of squares.
fn overall_f(s: &OlsSolution) -> (f64, f64) {
    let (p, df) = (s.p as f64, s.df_resid() as f64);
    let explained = (s.tss - s.rss).max(0.0);
    let f = if s.rss > 0.0 {
        (explained / p) / (s.rss / df)
    } else if explained > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (f, f_survival(f, p, df))
}

/// OLS of `ln opt_bs_tokens` on an intercept plus the given predictors.
pub fn regress(predictors: &[Predictor], obs: &[OptimumObservation]) -> Result<RegressionReport> {
    if predictors.is_empty() {
        return Err(Error::arg("predictor set must not be empty"));
    }
    let mut sorted = predictors.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != predictors.len() {
        return Err(Error::arg("predictor set contains duplicates"));
    }
    let p = predictors.len();
    if obs.len() <= p + 1 {
        return Err(Error::arg(format!(
            "need more than {} observations for {p} predictor(s), got {}",
            p + 1,
            obs.len()
        )));
    }
    for o in obs {
        o.validate()?;
    }

    let columns: Vec<Vec<f64>> = predictors
        .iter()
        .map(|pr| obs.iter().map(|o| pr.value(o)).collect())
        .collect();
    let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let design = DesignMatrix::with_intercept(&refs)?;
    let y: Vec<f64> = obs.iter().map(|o| o.opt_bs_tokens.ln()).collect();
    let s = ols(&design, &y)?;

    let df = s.df_resid() as f64;
    let t_crit = student_t_quantile(0.5 + CI_LEVEL / 2.0, df);
    let names = std::iter::once("intercept").chain(predictors.iter().map(|p| p.as_str()));
    let coefficients = names
        .zip(s.coefficients.iter().zip(&s.std_errors))
        .map(|(name, (&coef, &se))| {
            let (t_value, p_value) = t_and_p(coef, se, df);
            let half = t_crit * se;
            CoefficientRow {
                name: name.to_string(),
                coef,
                std_error: se,
                t_value,
                p_value,
                ci: [coef - half, coef + half],
            }
        })
        .collect();
    let (f_statistic, f_p_value) = overall_f(&s);
    Ok(RegressionReport {
        predictors: predictors.to_vec(),
        coefficients,
        n: s.n,
        df_resid: s.df_resid(),
        rss: s.rss,
        r_squared: s.r_squared,
        adj_r_squared: s.adj_r_squared,
        f_statistic,
        f_p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedTest {
    pub restricted: String,
    pub full: String,
    /// Number of predictors dropped.
    pub q: usize,
    pub f_statistic: f64,
    pub p_value: f64,
}

fn label(predictors: &[Predictor]) -> String {
    match predictors {
        [Predictor::LogN] => "N-only".into(),
        [Predictor::LogD] => "D-only".into(),
        _ if predictors.len() == 2 => "Full".into(),
        _ => predictors.iter().map(|p| p.as_str()).collect::<Vec<_>>().join("+"),
    }
}

/// F-test of `restricted` nested inside `full`, both fitted on the same data.
pub fn nested_f_test(restricted: &RegressionReport, full: &RegressionReport) -> Result<NestedTest> {
    if restricted.n != full.n {
        return Err(Error::arg("nested models were fitted on different data"));
    }
    if restricted.predictors.iter().any(|p| !full.predictors.contains(p)) {
        return Err(Error::arg("restricted model is not nested in the full model"));
    }
    let q = full.p() - restricted.p();
    if q == 0 {
        return Err(Error::arg("restricted and full models coincide (q = 0)"));
    }
    let df = full.df_resid as f64;
    // clamp rounding noise so F stays non-negative
    let gain = (restricted.rss - full.rss).max(0.0);
    let f = if full.rss > 0.0 {
        (gain / q as f64) / (full.rss / df)
    } else if gain > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(NestedTest {
        restricted: label(&restricted.predictors),
        full: label(&full.predictors),
        q,
        f_statistic: f,
        p_value: f_survival(f, q as f64, df),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulationRow {
    pub name: String,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// `adj_r_squared − Full.adj_r_squared`.
    pub delta_adj_r_squared: f64,
    /// The same difference as a percentage of Full's adjusted R².
    pub delta_adj_r_squared_pct: f64,
    /// Overall-model F.
    pub f_statistic: f64,
    pub f_p_value: f64,
    /// F against Full; absent for Full itself.
    pub nested_f_statistic: Option<f64>,
    pub nested_p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormulationComparison {
    pub n: usize,
    /// N-only, D-only, Full.
    pub formulations: Vec<FormulationRow>,
    pub nested_tests: Vec<NestedTest>,
    /// Coefficient table of the Full formulation.
    pub full: RegressionReport,
}

impl FormulationComparison {
    pub fn formulation(&self, name: &str) -> Option<&FormulationRow> {
        self.formulations.iter().find(|r| r.name == name)
    }
}

pub fn compare_formulations(obs: &[OptimumObservation]) -> Result<FormulationComparison> {
    let full = regress(&[Predictor::LogN, Predictor::LogD], obs)?;
    let n_only = regress(&[Predictor::LogN], obs)?;
    let d_only = regress(&[Predictor::LogD], obs)?;

    let mut formulations = Vec::with_capacity(3);
    let mut nested_tests = Vec::with_capacity(2);
    for model in [&n_only, &d_only, &full] {
        let delta = model.adj_r_squared - full.adj_r_squared;
        let pct = if full.adj_r_squared != 0.0 {
            100.0 * delta / full.adj_r_squared.abs()
        } else {
            0.0
        };
        let nested = if model.p() < full.p() {
            let t = nested_f_test(model, &full)?;
            let out = (t.f_statistic, t.p_value);
            nested_tests.push(t);
            Some(out)
        } else {
            None
        };
        formulations.push(FormulationRow {
            name: label(&model.predictors),
            r_squared: model.r_squared,
            adj_r_squared: model.adj_r_squared,
            delta_adj_r_squared: delta,
            delta_adj_r_squared_pct: pct,
            f_statistic: model.f_statistic,
            f_p_value: model.f_p_value,
            nested_f_statistic: nested.map(|x| x.0),
            nested_p_value: nested.map(|x| x.1),
        });
    }
    Ok(FormulationComparison { n: full.n, formulations, nested_tests, full })
}
