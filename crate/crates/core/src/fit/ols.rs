//! Ordinary least squares via Householder QR.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative threshold on `|R_kk|` below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Row-major `n × k` design matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    /// Prepends a column of ones to the given predictor columns.
    pub fn with_intercept(predictors: &[&[f64]]) -> Result<Self> {
        let rows = predictors.first().map_or(0, |c| c.len());
        if predictors.iter().any(|c| c.len() != rows) {
            return Err(Error::arg("predictor columns differ in length"));
        }
        if rows == 0 {
            return Err(Error::arg("design has no rows"));
        }
        let cols = predictors.len() + 1;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.push(1.0);
            data.extend(predictors.iter().map(|c| c[r]));
        }
        Self::from_parts(rows, cols, data)
    }

    /// Intercept-only design.
    pub fn intercept_only(rows: usize) -> Result<Self> {
        Self::from_parts(rows, 1, vec![1.0; rows])
    }

    fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("design contains non-finite values"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

/// Upper-triangular factor and `Qᵀy` of a Householder QR.
struct Qr {
    r: Vec<Vec<f64>>,
    qty: Vec<f64>,
}

fn householder(design: &DesignMatrix, response: &[f64]) -> Result<Qr> {
    let k = design.cols;
    let mut a: Vec<Vec<f64>> = (0..k).map(|c| design.column(c)).collect();
    let mut y = response.to_vec();
    let col_scale = a
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);

    for j in 0..k {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * col_scale {
            return Err(Error::Singular(format!("column {j} is linearly dependent on earlier columns")));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            let reflect = |col: &mut [f64]| {
                let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            };
            for col in a.iter_mut().skip(j) {
                reflect(&mut col[j..]);
            }
            reflect(&mut y[j..]);
        }
        a[j][j] = alpha;
        for x in a[j][j + 1..].iter_mut() {
            *x = 0.0;
        }
    }
    let r = (0..k).map(|row| (0..k).map(|c| if c >= row { a[c][row] } else { 0.0 }).collect()).collect();
    Ok(Qr { r, qty: y })
}

fn back_substitute(r: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let k = r.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r[i][j] * x[j]).sum();
        x[i] = (rhs[i] - s) / r[i][i];
    }
    x
}

fn check_shapes(design: &DesignMatrix, response: &[f64]) -> Result<()> {
    if design.rows != response.len() {
        return Err(Error::arg(format!(
            "design has {} rows but response has {} values",
            design.rows,
            response.len()
        )));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("response contains non-finite values"));
    }
    if (0..design.rows).any(|r| design.get(r, 0) != 1.0) {
        return Err(Error::arg("first design column must be the intercept (all ones)"));
    }
    Ok(())
}

/// Least-squares coefficients only; allows the saturated case `n == k`.
pub fn least_squares(design: &DesignMatrix, response: &[f64]) -> Result<Vec<f64>> {
    check_shapes(design, response)?;
    if design.rows < design.cols {
        return Err(Error::Singular(format!(
            "{} observations cannot identify {} coefficients",
            design.rows, design.cols
        )));
    }
    let qr = householder(design, response)?;
    Ok(back_substitute(&qr.r, &qr.qty[..design.cols]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsSolution {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub tss: f64,
    pub std_errors: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n: usize,
    /// Predictors excluding the intercept.
    pub p: usize,
}

impl OlsSolution {
    pub fn df_resid(&self) -> usize {
        self.n - self.p - 1
    }
}

/// Full OLS fit. Requires `n > k` so that the residual variance exists.
pub fn ols(design: &DesignMatrix, response: &[f64]) -> Result<OlsSolution> {
    check_shapes(design, response)?;
    let (n, k) = (design.rows, design.cols);
    if n <= k {
        return Err(Error::Singular(format!(
            "need more observations ({n}) than coefficients ({k})"
        )));
    }
    let qr = householder(design, response)?;
    let beta = back_substitute(&qr.r, &qr.qty[..k]);

    let residuals: Vec<f64> = (0..n)
        .map(|row| {
            let fitted: f64 = (0..k).map(|c| design.get(row, c) * beta[c]).sum();
            response[row] - fitted
        })
        .collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = response.iter().sum::<f64>() / n as f64;
    let tss: f64 = response.iter().map(|y| (y - mean) * (y - mean)).sum();

    // diag((RᵀR)⁻¹) from the rows of R⁻¹
    let mut rinv = vec![vec![0.0; k]; k];
    for c in 0..k {
        let unit: Vec<f64> = (0..k).map(|i| if i == c { 1.0 } else { 0.0 }).collect();
        let col = back_substitute(&qr.r, &unit);
        for (row, v) in rinv.iter_mut().zip(&col) {
            row[c] = *v;
        }
    }
    let sigma2 = rss / (n - k) as f64;
    let std_errors = rinv
        .iter()
        .map(|row| (sigma2 * row.iter().map(|v| v * v).sum::<f64>()).sqrt())
        .collect();

    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / (n - k) as f64;
    Ok(OlsSolution {
        coefficients: beta,
        residuals,
        rss,
        tss,
        std_errors,
        r_squared,
        adj_r_squared,
        n,
        p: k - 1,
    })
}
