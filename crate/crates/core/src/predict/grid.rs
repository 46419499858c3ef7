use serde::{Deserialize, Serialize};

use super::Prediction;
use crate::error::{Error, Result};

/// Candidate learning rates and batch sizes of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    lr_values: Vec<f64>,
    bs_values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGrid {
    lr_values: Vec<f64>,
    bs_values: Vec<f64>,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.lr_values, raw.bs_values)
    }
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::arg(format!("{name} grid is empty")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::arg(format!("{name} grid values must be finite and > 0")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

impl GridSpec {
    pub fn new(lr_values: Vec<f64>, bs_values: Vec<f64>) -> Result<Self> {
        check_axis("lr", &lr_values)?;
        check_axis("bs", &bs_values)?;
        Ok(Self { lr_values, bs_values })
    }

    /// The standard sweep: `lr = 2^e` for `e = -10.5, -10.0, …, -7.0` and
    /// `bs = 32768·√2^k` for `k = 0..=14` (up to 4,194,304 tokens).
    ///
    /// Even-`k` batch sizes and integer-exponent learning rates are exact
    /// powers of two.
    pub fn standard() -> Self {
        let lr_values = (0..8).map(|i| 2f64.powf(-10.5 + 0.5 * i as f64)).collect();
        let bs_values = (0..15).map(|k| 32768.0 * 2f64.powf(k as f64 / 2.0)).collect();
        Self { lr_values, bs_values }
    }

    pub fn lr_values(&self) -> &[f64] {
        &self.lr_values
    }

    pub fn bs_values(&self) -> &[f64] {
        &self.bs_values
    }

    /// Nearest value in log space, ties toward the smaller value.
    pub fn nearest_lr(&self, lr: f64) -> f64 {
        nearest_log(&self.lr_values, lr)
    }

    pub fn nearest_bs(&self, bs: f64) -> f64 {
        nearest_log(&self.bs_values, bs)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::standard()
    }
}

pub(crate) fn nearest_log(values: &[f64], x: f64) -> f64 {
    let lx = x.ln();
    let mut best = values[0];
    let mut best_dist = (best.ln() - lx).abs();
    // increasing order + strict `<` keeps the smaller value on ties
    for &v in &values[1..] {
        let dist = (v.ln() - lx).abs();
        if dist < best_dist {
            best = v;
            best_dist = dist;
        }
    }
    best
}

/// Maps each present hyperparameter onto its nearest grid value, clamping
/// to the grid endpoints.
pub fn snap_to_grid(p: &Prediction, grid: &GridSpec) -> Prediction {
    Prediction {
        method: p.method,
        lr: p.lr.map(|lr| grid.nearest_lr(lr)),
        bs_tokens: p.bs_tokens.map(|bs| grid.nearest_bs(bs)),
        snapped: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::Method;
    use proptest::prelude::*;

    fn pred(lr: f64, bs: f64) -> Prediction {
        Prediction {
            method: Method::Step,
            lr: Some(lr),
            bs_tokens: Some(bs),
            snapped: false,
        }
    }

    #[test]
    fn standard_grid_shape() {
        let g = GridSpec::standard();
        assert_eq!(g.lr_values().len(), 8);
        assert_eq!(g.bs_values().len(), 15);
        assert_eq!(g.lr_values()[0], 2f64.powf(-10.5));
        assert_eq!(*g.lr_values().last().unwrap(), 2f64.powi(-7));
        assert_eq!(g.bs_values()[0], 32768.0);
        assert_eq!(*g.bs_values().last().unwrap(), 4194304.0);
        assert_eq!(g.bs_values()[6], 262144.0);
        for axis in [g.lr_values(), g.bs_values()] {
            let ratios: Vec<f64> = axis.windows(2).map(|w| w[1] / w[0]).collect();
            for r in &ratios {
                assert!(((r - ratios[0]) / ratios[0]).abs() < 1e-12);
            }
            assert!(((ratios[0] - 2f64.sqrt()) / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn snapping_examples() {
        let g = GridSpec::standard();
        // log-distance scan over the 8 values puts 1.374e-3 nearest 2^-9.5
        let s = snap_to_grid(&pred(1.374e-3, 262144.0), &g);
        assert_eq!(s.lr, Some(2f64.powf(-9.5)));
        assert!((s.lr.unwrap() - 1.3811e-3).abs() < 1e-7);
        assert_eq!(s.bs_tokens, Some(262144.0));
        assert!(s.snapped);
        let clamped = snap_to_grid(&pred(1.0, 1e9), &g);
        assert_eq!(clamped.bs_tokens, Some(4194304.0));
        assert_eq!(clamped.lr, Some(2f64.powi(-7)));
    }

    #[test]
    fn ties_go_to_smaller_value() {
        let g = GridSpec::new(vec![1.0, 4.0], vec![10.0]).unwrap();
        assert_eq!(g.nearest_lr(2.0), 1.0);
    }

    #[test]
    fn absent_fields_stay_absent() {
        let p = Prediction { method: Method::Microsoft, lr: Some(1e-3), bs_tokens: None, snapped: false };
        let s = snap_to_grid(&p, &GridSpec::standard());
        assert!(s.bs_tokens.is_none());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(vec![], vec![1.0]).is_err());
        assert!(GridSpec::new(vec![2.0, 1.0], vec![1.0]).is_err());
        assert!(GridSpec::new(vec![1.0], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn snap_is_idempotent(lr in 1e-6f64..1.0, bs in 1e3f64..1e8) {
            let g = GridSpec::standard();
            let once = snap_to_grid(&pred(lr, bs), &g);
            let twice = snap_to_grid(&once, &g);
            prop_assert_eq!(once, twice);
        }
    }
}
