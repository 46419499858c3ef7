//! Fitting `lr = c·N^α·D^β` and `bs = d·D^γ` to grid-search optima.
//!
//! Both laws are linear in logs, `ln lr = ln c + α ln N + β ln D` and
//! `ln bs = ln d + γ ln D`, and are fitted by OLS. [`bootstrap_fit`] repeats
//! the fit on resampled observation sets and reports the mean of the
//! per-resample `(ln c, α, β, ln d, γ)` plus 2.5/97.5 percentile bands.

mod ols;
mod observations;

pub use observations::{load_observations, write_observations, OptimumObservation};
pub use ols::{least_squares, ols, DesignMatrix, OlsSolution};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1000;
/// Redraws allowed for a resample whose design is degenerate.
pub const MAX_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrLawFit {
    pub log_c: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LrLawFit {
    pub fn c(&self) -> f64 {
        self.log_c.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BsLawFit {
    pub log_d: f64,
    pub gamma: f64,
}

impl BsLawFit {
    pub fn d(&self) -> f64 {
        self.log_d.exp()
    }
}

fn distinct(mut v: Vec<f64>) -> usize {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Observations in a canonical order, so fits do not depend on input order.
fn canonical(obs: &[OptimumObservation]) -> Vec<OptimumObservation> {
    let mut v = obs.to_vec();
    v.sort_by(|a, b| {
        a.n_params
            .total_cmp(&b.n_params)
            .then(a.d_tokens.total_cmp(&b.d_tokens))
            .then(a.opt_lr.total_cmp(&b.opt_lr))
            .then(a.opt_bs_tokens.total_cmp(&b.opt_bs_tokens))
    });
    v
}

fn validate(obs: &[OptimumObservation]) -> Result<()> {
    obs.iter().try_for_each(OptimumObservation::validate)
}

fn lr_law_sorted(obs: &[OptimumObservation]) -> Result<LrLawFit> {
    if obs.len() < 4 {
        return Err(Error::DegenerateDesign(format!(
            "learning-rate law needs at least 4 observations, got {}",
            obs.len()
        )));
    }
    let ln_n: Vec<f64> = obs.iter().map(|o| o.n_params.ln()).collect();
    let ln_d: Vec<f64> = obs.iter().map(|o| o.d_tokens.ln()).collect();
    if distinct(ln_n.clone()) < 2 || distinct(ln_d.clone()) < 2 {
        return Err(Error::DegenerateDesign(
            "learning-rate law needs at least 2 distinct N and 2 distinct D".into(),
        ));
    }
    let y: Vec<f64> = obs.iter().map(|o| o.opt_lr.ln()).collect();
    let b = least_squares(&DesignMatrix::with_intercept(&[&ln_n, &ln_d])?, &y)?;
    Ok(LrLawFit {
        log_c: b[0],
        alpha: b[1],
        beta: b[2],
    })
}

fn bs_law_sorted(obs: &[OptimumObservation]) -> Result<BsLawFit> {
    let ln_d: Vec<f64> = obs.iter().map(|o| o.d_tokens.ln()).collect();
    if obs.len() < 2 || distinct(ln_d.clone()) < 2 {
        return Err(Error::DegenerateDesign(
            "batch-size law needs at least 2 distinct D".into(),
        ));
    }
    let y: Vec<f64> = obs.iter().map(|o| o.opt_bs_tokens.ln()).collect();
    let b = least_squares(&DesignMatrix::with_intercept(&[&ln_d])?, &y)?;
    Ok(BsLawFit {
        log_d: b[0],
        gamma: b[1],
    })
}

/// OLS of `ln lr` on `(1, ln N, ln D)`.
pub fn fit_lr_law(obs: &[OptimumObservation]) -> Result<LrLawFit> {
    validate(obs)?;
    lr_law_sorted(&canonical(obs))
}

/// OLS of `ln bs` on `(1, ln D)`; `N` is deliberately not a regressor.
pub fn fit_bs_law(obs: &[OptimumObservation]) -> Result<BsLawFit> {
    validate(obs)?;
    bs_law_sorted(&canonical(obs))
}

/// `[ln c, α, β, ln d, γ]` of one resample.
pub type ResampleFit = [f64; 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientIntervals {
    pub c: Interval,
    pub alpha: Interval,
    pub beta: Interval,
    pub d: Interval,
    pub gamma: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
    pub gamma: f64,
    pub ci: CoefficientIntervals,
    pub resamples: usize,
    pub seed: u64,
    /// Per-resample fits in resample order.
    #[serde(skip)]
    pub samples: Vec<ResampleFit>,
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateDesign(_) | Error::Singular(_))
}

/// Fits one resample; draws come from the stream `(seed, index)` so results
/// do not depend on scheduling.
fn one_resample(obs: &[OptimumObservation], seed: u64, index: u64) -> Result<ResampleFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n = obs.len();
    let mut draw = Vec::with_capacity(n);
    for _ in 0..=MAX_RETRIES {
        draw.clear();
        draw.extend((0..n).map(|_| obs[rng.random_range(0..n)]));
        let sorted = canonical(&draw);
        let fits = lr_law_sorted(&sorted).and_then(|lr| Ok((lr, bs_law_sorted(&sorted)?)));
        match fits {
            Ok((lr, bs)) => return Ok([lr.log_c, lr.alpha, lr.beta, bs.log_d, bs.gamma]),
            Err(e) if is_degenerate(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::BootstrapFailure(format!(
        "resample {index} stayed degenerate after {MAX_RETRIES} retries"
    )))
}

/// Bootstrap over whole observations, `resamples` draws of size `|obs|`.
pub fn bootstrap_fit(obs: &[OptimumObservation], resamples: usize, seed: u64) -> Result<FitResult> {
    if resamples == 0 {
        return Err(Error::arg("resamples must be >= 1"));
    }
    let obs = canonical(obs);
    validate(&obs)?;
    lr_law_sorted(&obs)?;
    bs_law_sorted(&obs)?;

    let samples: Vec<ResampleFit> = (0..resamples as u64)
        .into_par_iter()
        .map(|i| one_resample(&obs, seed, i))
        .collect::<Result<_>>()?;

    let mut mean = [0.0; 5];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= resamples as f64;
    }

    let band = |k: usize| {
        let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        col.sort_by(f64::total_cmp);
        // the band always holds the point estimate, including the
        // zero-variance case where the mean and percentiles differ by ulps
        Interval {
            lower: percentile(&col, 0.025).min(mean[k]),
            upper: percentile(&col, 0.975).max(mean[k]),
        }
    };
    let exp_band = |iv: Interval| Interval {
        lower: iv.lower.exp(),
        upper: iv.upper.exp(),
    };
    let ci = CoefficientIntervals {
        c: exp_band(band(0)),
        alpha: band(1),
        beta: band(2),
        d: exp_band(band(3)),
        gamma: band(4),
    };
    Ok(FitResult {
        c: mean[0].exp(),
        alpha: mean[1],
        beta: mean[2],
        d: mean[3].exp(),
        gamma: mean[4],
        ci,
        resamples,
        seed,
        samples,
    })
}
