//! Grid-search loss surfaces.
//!
//! A [`LossSurface`] holds the end-of-training losses of every (learning
//! rate, batch size) run for one `(N, D)` budget. Points are stored sorted by
//! `(lr, bs)`; analytics that need a full rectangle ([`LossSurface::interpolate_loss`],
//! [`LossSurface::convexity_report`]) check completeness first.

mod csv_io;

pub use csv_io::{load_surface, write_surface};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::ModelScale;

/// Relative-error undershoot tolerated (and clamped to zero) from
/// interpolation rounding.
const UNDERSHOOT_TOL: f64 = 1e-12;

/// Which recorded loss an analysis reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Train,
    Val,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Metric::Train),
            "val" => Ok(Metric::Val),
            other => Err(Error::arg(format!("unknown metric `{other}` (expected train or val)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lr: f64,
    pub bs_tokens: u64,
    pub train_smooth_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

impl SweepPoint {
    pub fn new(lr: f64, bs_tokens: u64, train_smooth_loss: f64, val_loss: Option<f64>) -> Self {
        Self {
            lr,
            bs_tokens,
            train_smooth_loss,
            val_loss,
        }
    }

    pub fn loss(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Train => Some(self.train_smooth_loss),
            Metric::Val => self.val_loss,
        }
    }

    pub fn hp(&self) -> Hp {
        Hp {
            lr: self.lr,
            bs_tokens: self.bs_tokens,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(format!("lr must be finite and > 0, got {}", self.lr));
        }
        if self.bs_tokens == 0 {
            return Err("bs_tokens must be > 0".into());
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.train_smooth_loss) {
            return Err(format!("train_smooth_loss must be finite and > 0, got {}", self.train_smooth_loss));
        }
        if let Some(v) = self.val_loss {
            if !ok(v) {
                return Err(format!("val_loss must be finite and > 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// A grid node: learning rate and token batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hp {
    pub lr: f64,
    #[serde(rename = "bs")]
    pub bs_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumReport {
    pub hp: Hp,
    pub loss: f64,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateauRegion {
    pub delta: f64,
    pub metric: Metric,
    pub optimum: Hp,
    pub members: Vec<Hp>,
}

impl PlateauRegion {
    pub fn contains(&self, hp: Hp) -> bool {
        self.members.contains(&hp)
    }
}

/// A one-dimensional cut through the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Slice {
    /// Batch size held fixed, learning rate varying.
    FixedBs { bs: u64 },
    /// Learning rate held fixed, batch size varying.
    FixedLr { lr: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub slice: Slice,
    /// Position along the slice of the value that breaks unimodality.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub row_unimodal_fraction: f64,
    pub col_unimodal_fraction: f64,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgminConsistency {
    pub consistent: bool,
    pub train_opt: OptimumReport,
    pub val_opt: OptimumReport,
}

/// Distinct axis values and the point index of every `(lr, bs)` cell.
#[derive(Debug, Clone, PartialEq)]
struct GridIndex {
    lrs: Vec<f64>,
    bss: Vec<u64>,
    /// Row-major over `lrs` then `bss`.
    cells: Vec<Option<usize>>,
}

impl GridIndex {
    fn build(points: &[SweepPoint]) -> Self {
        let mut lrs: Vec<f64> = points.iter().map(|p| p.lr).collect();
        lrs.sort_by(f64::total_cmp);
        lrs.dedup();
        let mut bss: Vec<u64> = points.iter().map(|p| p.bs_tokens).collect();
        bss.sort_unstable();
        bss.dedup();
        let mut cells = vec![None; lrs.len() * bss.len()];
        for (k, p) in points.iter().enumerate() {
            let i = lrs.partition_point(|&v| v < p.lr);
            let j = bss.partition_point(|&v| v < p.bs_tokens);
            cells[i * bss.len() + j] = Some(k);
        }
        Self { lrs, bss, cells }
    }

    fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }
}

/// Hyperparameter sweep results for one `(N, D)` run family.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSurface {
    scale: ModelScale,
    arch_tag: Option<String>,
    recipe_tag: Option<String>,
    points: Vec<SweepPoint>,
    grid: GridIndex,
}

impl LossSurface {
    pub fn new(
        scale: ModelScale,
        arch_tag: Option<String>,
        recipe_tag: Option<String>,
        mut points: Vec<SweepPoint>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("a loss surface needs at least one point"));
        }
        for p in &points {
            p.validate().map_err(Error::Argument)?;
        }
        points.sort_by(|a, b| a.lr.total_cmp(&b.lr).then(a.bs_tokens.cmp(&b.bs_tokens)));
        if let Some(w) = points
            .windows(2)
            .find(|w| w[0].lr == w[1].lr && w[0].bs_tokens == w[1].bs_tokens)
        {
            return Err(Error::arg(format!(
                "duplicate point (lr={}, bs={})",
                w[0].lr, w[0].bs_tokens
            )));
        }
        let grid = GridIndex::build(&points);
        Ok(Self {
            scale,
            arch_tag,
            recipe_tag,
            points,
            grid,
        })
    }

    pub fn scale(&self) -> &ModelScale {
        &self.scale
    }

    pub fn arch_tag(&self) -> Option<&str> {
        self.arch_tag.as_deref()
    }

    pub fn recipe_tag(&self) -> Option<&str> {
        self.recipe_tag.as_deref()
    }

    /// Points sorted by `(lr, bs)`.
    pub fn points(&self) -> &[SweepPoint] {
        &self.points
    }

    /// Distinct learning rates, increasing.
    pub fn lr_axis(&self) -> &[f64] {
        &self.grid.lrs
    }

    /// Distinct batch sizes, increasing.
    pub fn bs_axis(&self) -> &[u64] {
        &self.grid.bss
    }

    pub fn is_complete_grid(&self) -> bool {
        self.grid.is_complete()
    }

    pub fn has_val(&self) -> bool {
        self.points.iter().all(|p| p.val_loss.is_some())
    }

    /// Loss at grid cell `(i, j)` of a complete grid.
    pub fn cell_loss(&self, i: usize, j: usize, metric: Metric) -> Option<f64> {
        let k = (*self.grid.cells.get(i * self.grid.bss.len() + j)?)?;
        self.points[k].loss(metric)
    }

    fn require_metric(&self, metric: Metric) -> Result<()> {
        if metric == Metric::Val && !self.has_val() {
            return Err(Error::arg("val metric requested but some points lack val_loss"));
        }
        Ok(())
    }

    fn require_complete(&self) -> Result<()> {
        if self.is_complete_grid() {
            Ok(())
        } else {
            let missing = self.grid.cells.iter().filter(|c| c.is_none()).count();
            Err(Error::Shape(format!(
                "{} lr x {} bs grid is missing {missing} cells",
                self.grid.lrs.len(),
                self.grid.bss.len()
            )))
        }
    }

    /// Grid point with the lowest loss; ties go to the smaller lr, then the
    /// smaller batch size.
    pub fn find_optimum(&self, metric: Metric) -> Result<OptimumReport> {
        self.require_metric(metric)?;
        // points are sorted by (lr, bs), so the first strict minimum wins ties
        let mut best = &self.points[0];
        let mut best_loss = best.loss(metric).expect("checked");
        for p in &self.points[1..] {
            let l = p.loss(metric).expect("checked");
            if l < best_loss {
                best = p;
                best_loss = l;
            }
        }
        Ok(OptimumReport {
            hp: best.hp(),
            loss: best_loss,
            metric,
        })
    }

    /// Bilinear interpolation in `(ln lr, ln bs)`; exact at grid nodes.
    pub fn interpolate_loss(&self, lr: f64, bs: f64, metric: Metric) -> Result<f64> {
        self.require_metric(metric)?;
        self.require_complete()?;
        if !(lr.is_finite() && lr > 0.0 && bs.is_finite() && bs > 0.0) {
            return Err(Error::arg(format!("query ({lr}, {bs}) must be finite and positive")));
        }
        let lrs = &self.grid.lrs;
        let bss: Vec<f64> = self.grid.bss.iter().map(|&b| b as f64).collect();
        let (Some((i, t)), Some((j, u))) = (locate(lrs, lr), locate(&bss, bs)) else {
            let pick = |axis: &[f64], x: f64| {
                let (lo, hi) = (axis[0], axis[axis.len() - 1]);
                if (x.ln() - lo.ln()).abs() <= (x.ln() - hi.ln()).abs() {
                    lo
                } else {
                    hi
                }
            };
            return Err(Error::OutOfHull {
                lr,
                bs,
                corner_lr: pick(lrs, lr),
                corner_bs: pick(&bss, bs),
            });
        };
        let i1 = (i + 1).min(lrs.len() - 1);
        let j1 = (j + 1).min(bss.len() - 1);
        let v = |a, b| self.cell_loss(a, b, metric).expect("complete grid");
        Ok((1.0 - t) * (1.0 - u) * v(i, j)
            + t * (1.0 - u) * v(i1, j)
            + (1.0 - t) * u * v(i, j1)
            + t * u * v(i1, j1))
    }

    /// `(loss(hp) − min) / min`, with `loss(hp)` interpolated.
    pub fn relative_error(&self, lr: f64, bs: f64, metric: Metric) -> Result<f64> {
        let opt = self.find_optimum(metric)?;
        let at = self.interpolate_loss(lr, bs, metric)?;
        let rel = (at - opt.loss) / opt.loss;
        Ok(if rel < 0.0 && rel > -UNDERSHOOT_TOL { 0.0 } else { rel })
    }

    /// Points whose relative excess over the minimum is at most `delta`.
    pub fn plateau(&self, delta: f64, metric: Metric) -> Result<PlateauRegion> {
        if delta.is_nan() || delta < 0.0 {
            return Err(Error::arg(format!("plateau delta must be >= 0, got {delta}")));
        }
        let opt = self.find_optimum(metric)?;
        let members = self
            .points
            .iter()
            .filter(|p| {
                let l = p.loss(metric).expect("checked");
                (l - opt.loss) / opt.loss <= delta
            })
            .map(SweepPoint::hp)
            .collect();
        Ok(PlateauRegion {
            delta,
            metric,
            optimum: opt.hp,
            members,
        })
    }

    /// Discrete quasi-convexity of every fixed-bs and fixed-lr slice, each
    /// comparison slackened by `epsilon` loss units.
    pub fn convexity_report(&self, epsilon: f64, metric: Metric) -> Result<ConvexityReport> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::arg(format!("epsilon must be >= 0, got {epsilon}")));
        }
        self.require_metric(metric)?;
        self.require_complete()?;
        let (nl, nb) = (self.grid.lrs.len(), self.grid.bss.len());
        let v = |i, j| self.cell_loss(i, j, metric).expect("complete grid");
        let mut violations = Vec::new();

        let mut rows_ok = 0;
        for j in 0..nb {
            let slice: Vec<f64> = (0..nl).map(|i| v(i, j)).collect();
            let bad = unimodal_violations(&slice, epsilon);
            if bad.is_empty() {
                rows_ok += 1;
            }
            let s = Slice::FixedBs { bs: self.grid.bss[j] };
            violations.extend(bad.into_iter().map(|index| Violation { slice: s, index }));
        }
        let mut cols_ok = 0;
        for i in 0..nl {
            let slice: Vec<f64> = (0..nb).map(|j| v(i, j)).collect();
            let bad = unimodal_violations(&slice, epsilon);
            if bad.is_empty() {
                cols_ok += 1;
            }
            let s = Slice::FixedLr { lr: self.grid.lrs[i] };
            violations.extend(bad.into_iter().map(|index| Violation { slice: s, index }));
        }
        Ok(ConvexityReport {
            row_unimodal_fraction: rows_ok as f64 / nb as f64,
            col_unimodal_fraction: cols_ok as f64 / nl as f64,
            tolerance: epsilon,
            violations,
        })
    }

    /// Whether training and validation loss pick the same grid optimum.
    pub fn argmin_consistency(&self) -> Result<ArgminConsistency> {
        let val_opt = self.find_optimum(Metric::Val)?;
        let train_opt = self.find_optimum(Metric::Train)?;
        Ok(ArgminConsistency {
            consistent: train_opt.hp == val_opt.hp,
            train_opt,
            val_opt,
        })
    }
}

/// Cell index and weight of `x` on an increasing axis, in log coordinates.
fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    if x < axis[0] || x > axis[n - 1] {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = axis.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
    let (lo, hi) = (axis[i].ln(), axis[i + 1].ln());
    let t = if x == axis[i] {
        0.0
    } else if x == axis[i + 1] {
        1.0
    } else {
        ((x.ln() - lo) / (hi - lo)).clamp(0.0, 1.0)
    };
    Some((i, t))
}

/// Indices at which a slice stops being non-increasing-then-non-decreasing.
pub(crate) fn unimodal_violations(values: &[f64], epsilon: f64) -> Vec<usize> {
    let Some(m) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
    else {
        return Vec::new();
    };
    let mut bad = Vec::new();
    for k in 0..values.len().saturating_sub(1) {
        let (a, b) = (values[k], values[k + 1]);
        let broken = if k < m { b > a + epsilon } else { b < a - epsilon };
        if broken {
            bad.push(k + 1);
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale() -> ModelScale {
        ModelScale::new(1e9, 1e11).unwrap()
    }

    fn grid_surface(lrs: &[f64], bss: &[u64], f: impl Fn(usize, usize) -> f64) -> LossSurface {
        let mut pts = Vec::new();
        for (i, &lr) in lrs.iter().enumerate() {
            for (j, &bs) in bss.iter().enumerate() {
                pts.push(SweepPoint::new(lr, bs, f(i, j), Some(f(i, j) + 0.1)));
            }
        }
        LossSurface::new(scale(), None, None, pts).unwrap()
    }

    #[test]
    fn rejects_duplicates_and_bad_losses() {
        let p = SweepPoint::new(1e-3, 1024, 2.0, None);
        assert!(LossSurface::new(scale(), None, None, vec![p, p]).is_err());
        let neg = SweepPoint::new(1e-3, 1024, -2.0, None);
        assert!(LossSurface::new(scale(), None, None, vec![neg]).is_err());
        assert!(LossSurface::new(scale(), None, None, vec![]).is_err());
    }

    #[test]
    fn single_point_is_its_own_optimum() {
        let s = LossSurface::new(scale(), None, None, vec![SweepPoint::new(1e-3, 1024, 2.0, None)]).unwrap();
        let o = s.find_optimum(Metric::Train).unwrap();
        assert_eq!(o.hp, Hp { lr: 1e-3, bs_tokens: 1024 });
        assert_eq!(o.loss, 2.0);
        assert!(matches!(s.find_optimum(Metric::Val), Err(Error::Argument(_))));
        assert_eq!(s.interpolate_loss(1e-3, 1024.0, Metric::Train).unwrap(), 2.0);
    }

    #[test]
    fn optimum_ties_break_low() {
        let s = grid_surface(&[1e-3, 2e-3], &[100, 200], |_, _| 2.0);
        let o = s.find_optimum(Metric::Train).unwrap();
        assert_eq!(o.hp, Hp { lr: 1e-3, bs_tokens: 100 });
    }

    #[test]
    fn interpolation_midpoint() {
        // losses 2.0, 2.2 (lr high), 2.4 (bs high), 2.6 (both):
        // the log-midpoint takes the plain average, 2.3
        let s = grid_surface(&[1e-3, 4e-3], &[100, 400], |i, j| 2.0 + 0.2 * i as f64 + 0.4 * j as f64);
        let v = s.interpolate_loss(2e-3, 200.0, Metric::Train).unwrap();
        assert!((v - 2.3).abs() < 1e-12);
        let flat = grid_surface(&[1e-3, 4e-3], &[100, 400], |_, _| 2.0);
        assert!((flat.interpolate_loss(2e-3, 200.0, Metric::Train).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_hull_reports_corner() {
        let s = grid_surface(&[1e-3, 4e-3], &[100, 400], |_, _| 2.0);
        match s.interpolate_loss(1e-2, 50.0, Metric::Train) {
            Err(Error::OutOfHull { corner_lr, corner_bs, .. }) => {
                assert_eq!(corner_lr, 4e-3);
                assert_eq!(corner_bs, 100.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            s.relative_error(1e-2, 200.0, Metric::Train),
            Err(Error::OutOfHull { .. })
        ));
    }

    #[test]
    fn incomplete_grid_is_shape_error() {
        let pts = vec![
            SweepPoint::new(1e-3, 100, 2.0, None),
            SweepPoint::new(2e-3, 100, 2.1, None),
            SweepPoint::new(1e-3, 200, 2.2, None),
        ];
        let s = LossSurface::new(scale(), None, None, pts).unwrap();
        assert!(matches!(s.interpolate_loss(1e-3, 100.0, Metric::Train), Err(Error::Shape(_))));
        assert!(matches!(s.convexity_report(1e-3, Metric::Train), Err(Error::Shape(_))));
        // optimum and plateau do not need a full rectangle
        assert!(s.plateau(0.1, Metric::Train).is_ok());
    }

    #[test]
    fn plateau_extremes() {
        let s = grid_surface(&[1e-3, 2e-3, 4e-3], &[100, 200], |i, j| 2.0 + (i + j) as f64 * 0.01);
        let zero = s.plateau(0.0, Metric::Train).unwrap();
        assert_eq!(zero.members, vec![Hp { lr: 1e-3, bs_tokens: 100 }]);
        let all = s.plateau(f64::INFINITY, Metric::Train).unwrap();
        assert_eq!(all.members.len(), 6);
        assert!(s.plateau(-0.1, Metric::Train).is_err());
        assert!(s.plateau(f64::NAN, Metric::Train).is_err());
    }

    #[test]
    fn unimodality() {
        assert!(unimodal_violations(&[1.0, 2.0, 3.0], 0.0).is_empty());
        assert!(unimodal_violations(&[3.0, 2.0, 1.0], 0.0).is_empty());
        assert!(unimodal_violations(&[3.0, 1.0, 2.0, 2.0, 4.0], 0.0).is_empty());
        assert_eq!(unimodal_violations(&[3.0, 1.0, 2.2, 2.19, 4.0], 1e-3), vec![3]);
        assert!(unimodal_violations(&[3.0, 1.0, 2.2, 2.1995, 4.0], 1e-3).is_empty());
        assert_eq!(unimodal_violations(&[3.0, 3.5, 1.0], 0.1), vec![1]);
    }

    #[test]
    fn shifted_val_is_consistent() {
        let s = grid_surface(&[1e-3, 2e-3, 4e-3], &[100, 200], |i, j| 2.0 + ((i as f64 - 1.0).powi(2) + j as f64));
        let c = s.argmin_consistency().unwrap();
        assert!(c.consistent);
        assert_eq!(c.train_opt.hp, Hp { lr: 2e-3, bs_tokens: 100 });
        assert!((c.val_opt.loss - c.train_opt.loss - 0.1).abs() < 1e-12);
    }
}
