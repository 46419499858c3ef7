//! Deterministic synthetic loss surfaces and law-consistent optimum
//! observations.
//!
//! Every random draw comes from a ChaCha8 stream keyed by `(seed, index)`, so
//! the value at a given point index does not depend on how many other points
//! are generated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::OptimumObservation;
use crate::predict::{GridSpec, ModelScale, StepLawParams};
use crate::surface::{LossSurface, SweepPoint};

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn default_n_params() -> f64 {
    1e9
}

fn default_d_tokens() -> f64 {
    1e11
}

/// `loss = base + a·x² + 2·cross·x·y + b·y²` with `x = ln(lr/opt_lr)`,
/// `y = ln(bs/opt_bs)`, times `exp(σ·z)` per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub opt_lr: f64,
    pub opt_bs: f64,
    pub curvature_lr: f64,
    pub curvature_bs: f64,
    #[serde(default)]
    pub cross_term: f64,
    pub base_loss: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_params")]
    pub n_params: f64,
    #[serde(default = "default_d_tokens")]
    pub d_tokens: f64,
    /// When set, each point also gets `val_loss = train loss + val_offset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch_tag: Option<String>,
}

impl SurfaceSpec {
    pub fn new(opt_lr: f64, opt_bs: f64, curvature_lr: f64, curvature_bs: f64, base_loss: f64) -> Self {
        Self {
            opt_lr,
            opt_bs,
            curvature_lr,
            curvature_bs,
            cross_term: 0.0,
            base_loss,
            noise_sigma: 0.0,
            seed: 0,
            n_params: default_n_params(),
            d_tokens: default_d_tokens(),
            val_offset: None,
            arch_tag: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("opt_lr", self.opt_lr), ("opt_bs", self.opt_bs), ("base_loss", self.base_loss)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::arg(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("curvature_lr", self.curvature_lr),
            ("curvature_bs", self.curvature_bs),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::arg(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.cross_term.is_finite()
            || self.cross_term * self.cross_term > self.curvature_lr * self.curvature_bs
        {
            return Err(Error::arg(format!(
                "cross_term {} breaks positive semi-definiteness (|cross| ≤ sqrt({}·{}))",
                self.cross_term, self.curvature_lr, self.curvature_bs
            )));
        }
        if let Some(v) = self.val_offset {
            if !v.is_finite() || self.base_loss + v <= 0.0 {
                return Err(Error::arg("val_offset must keep val loss positive"));
            }
        }
        ModelScale::new(self.n_params, self.d_tokens)?;
        Ok(())
    }

    /// Noiseless loss at `(lr, bs)`.
    pub fn loss_at(&self, lr: f64, bs: f64) -> f64 {
        let x = (lr / self.opt_lr).ln();
        let y = (bs / self.opt_bs).ln();
        self.base_loss
            + self.curvature_lr * x * x
            + 2.0 * self.cross_term * x * y
            + self.curvature_bs * y * y
    }

    /// Multiplicative noise factor of point `index`.
    pub fn noise_factor(&self, index: u64) -> f64 {
        if self.noise_sigma == 0.0 {
            return 1.0;
        }
        let z: f64 = stream(self.seed, index).sample(StandardNormal);
        (self.noise_sigma * z).exp()
    }
}

/// Evaluates `spec` on every grid node. Batch sizes are rounded to whole
/// tokens and the loss is evaluated at the rounded value. Point index is
/// `i_lr · |bs_values| + i_bs`.
pub fn generate_surface(spec: &SurfaceSpec, grid: &GridSpec) -> Result<LossSurface> {
    spec.validate()?;
    let n_bs = grid.bs_values().len();
    let mut points = Vec::with_capacity(grid.lr_values().len() * n_bs);
    for (i, &lr) in grid.lr_values().iter().enumerate() {
        for (j, &bs) in grid.bs_values().iter().enumerate() {
            let tokens = bs.round();
            if !(tokens >= 1.0 && tokens < u64::MAX as f64) {
                return Err(Error::arg(format!("grid batch size {bs} is not representable")));
            }
            let index = (i * n_bs + j) as u64;
            let loss = spec.loss_at(lr, tokens) * spec.noise_factor(index);
            let val = spec.val_offset.map(|v| loss + v);
            points.push(SweepPoint::new(lr, tokens as u64, loss, val));
        }
    }
    let scale = ModelScale::new(spec.n_params, spec.d_tokens)?;
    LossSurface::new(scale, spec.arch_tag.clone(), Some("synthetic".into()), points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticePoint {
    pub n_params: f64,
    pub d_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    #[serde(default)]
    pub law: StepLawParams,
    pub lattice: Vec<LatticePoint>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snap: bool,
    /// Grid used when `snap` is set; the standard grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
}

impl ObservationSpec {
    pub fn new(law: StepLawParams, lattice: Vec<LatticePoint>) -> Self {
        Self { law, lattice, noise_sigma: 0.0, seed: 0, snap: false, grid: None }
    }

    /// Every `(N, D)` combination of the two axes, N-major.
    pub fn product_lattice(ns: &[f64], ds: &[f64]) -> Vec<LatticePoint> {
        ns.iter()
            .flat_map(|&n_params| ds.iter().map(move |&d_tokens| LatticePoint { n_params, d_tokens }))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if self.lattice.is_empty() {
            return Err(Error::arg("lattice must not be empty"));
        }
        for p in &self.lattice {
            ModelScale::new(p.n_params, p.d_tokens)?;
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::arg(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// One observation per lattice point; point `i` draws `(z₁, z₂)` from stream `i`.
pub fn generate_observations(spec: &ObservationSpec) -> Result<Vec<OptimumObservation>> {
    spec.validate()?;
    let grid = spec.grid.clone().unwrap_or_default();
    let law = &spec.law;
    spec.lattice
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (z1, z2): (f64, f64) = if spec.noise_sigma > 0.0 {
                let mut rng = stream(spec.seed, i as u64);
                (rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                (0.0, 0.0)
            };
            let (ln_n, ln_d) = (p.n_params.ln(), p.d_tokens.ln());
            let mut lr = (law.c.ln() + law.alpha * ln_n + law.beta * ln_d + spec.noise_sigma * z1).exp();
            let mut bs = (law.d.ln() + law.gamma * ln_d + spec.noise_sigma * z2).exp();
            if !(lr.is_finite() && lr > 0.0 && bs.is_finite() && bs > 0.0) {
                return Err(Error::Domain(format!(
                    "law overflows at N={}, D={}",
                    p.n_params, p.d_tokens
                )));
            }
            if spec.snap {
                lr = grid.nearest_lr(lr);
                bs = grid.nearest_bs(bs);
            }
            Ok(OptimumObservation {
                n_params: p.n_params,
                d_tokens: p.d_tokens,
                opt_lr: lr,
                opt_bs_tokens: bs,
            })
        })
        .collect()
}
