use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical optimum of one `(N, D)` grid search.
///
/// `opt_bs_tokens` is real-valued: snapped optima on a √2 grid and
/// law-generated values are generally not integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumObservation {
    pub n_params: f64,
    pub d_tokens: f64,
    pub opt_lr: f64,
    pub opt_bs_tokens: f64,
}

impl OptimumObservation {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_params", self.n_params),
            ("d_tokens", self.d_tokens),
            ("opt_lr", self.opt_lr),
            ("opt_bs_tokens", self.opt_bs_tokens),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::arg(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Reads `n_params,d_tokens,opt_lr,opt_bs_tokens` rows (`#` comments allowed).
pub fn load_observations<R: Read>(source: R) -> Result<Vec<OptimumObservation>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let expected = ["n_params", "d_tokens", "opt_lr", "opt_bs_tokens"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record
            .map_err(|e| Error::parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let obs: OptimumObservation = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(line, e.to_string()))?;
        obs.validate().map_err(|e| Error::parse(line, e.to_string()))?;
        out.push(obs);
    }
    if out.is_empty() {
        return Err(Error::parse(1, "no observation rows"));
    }
    Ok(out)
}

pub fn write_observations<W: Write>(obs: &[OptimumObservation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in obs {
        w.serialize(o).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
