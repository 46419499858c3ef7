//! Surface CSV: `# key=value` metadata comments, then
//! `lr,bs_tokens,train_smooth_loss[,val_loss]` rows.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{LossSurface, SweepPoint};
use crate::error::{Error, Result};
use crate::predict::ModelScale;

const COLUMNS: [&str; 4] = ["lr", "bs_tokens", "train_smooth_loss", "val_loss"];

fn parse_f64(line: u64, what: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(line, format!("{what}: `{s}` is not a number")))
}

/// Token counts may be written in scientific notation but must be integral.
fn parse_tokens(line: u64, s: &str) -> Result<u64> {
    if let Ok(v) = s.trim().parse::<u64>() {
        return Ok(v);
    }
    let v = parse_f64(line, "bs_tokens", s)?;
    if v.fract() != 0.0 || v <= 0.0 || v > u64::MAX as f64 {
        return Err(Error::parse(line, format!("bs_tokens `{s}` is not a positive integer")));
    }
    Ok(v as u64)
}

pub fn load_surface<R: Read>(mut source: R) -> Result<LossSurface> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| Error::parse(0, format!("input is not readable UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(Error::parse(1, "empty surface file"));
    }

    let mut meta: BTreeMap<String, (u64, String)> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(body) = line.strip_prefix('#') {
            if let Some((key, value)) = body.split_once('=') {
                meta.insert(key.trim().to_string(), (k as u64 + 1, value.trim().to_string()));
            }
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_line = text
        .lines()
        .position(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map_or(1, |p| p as u64 + 1);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(header_line, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [None; 4];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = col(name);
    }
    for (name, found) in COLUMNS[..3].iter().zip(&idx) {
        if found.is_none() {
            return Err(Error::parse(header_line, format!("missing column `{name}`")));
        }
    }
    if let Some(extra) = headers.iter().find(|h| !COLUMNS.contains(h)) {
        return Err(Error::parse(header_line, format!("unknown column `{extra}`")));
    }

    let meta_f64 = |key: &str| -> Result<Option<f64>> {
        meta.get(key)
            .map(|(line, v)| parse_f64(*line, key, v))
            .transpose()
    };
    let n_params = meta_f64("n_params")?
        .ok_or_else(|| Error::parse(header_line, "missing `# n_params=` metadata"))?;
    let d_tokens = meta_f64("d_tokens")?
        .ok_or_else(|| Error::parse(header_line, "missing `# d_tokens=` metadata"))?;
    let meta_line = |key: &str| meta.get(key).map_or(header_line, |(l, _)| *l);
    let wrap = |key: &'static str| {
        move |e: Error| match e {
            Error::Argument(m) => Error::parse(meta_line(key), m),
            other => other,
        }
    };
    let mut scale = ModelScale::new(n_params, d_tokens).map_err(wrap("n_params"))?;
    if let Some(a) = meta_f64("n_active")? {
        scale = scale.with_active(a).map_err(wrap("n_active"))?;
    }
    if let Some(m) = meta_f64("flops_per_token")? {
        scale = scale.with_flops_per_token(m).map_err(wrap("flops_per_token"))?;
    }

    let mut points = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let lr = parse_f64(line, "lr", field(idx[0].unwrap()))?;
        let bs = parse_tokens(line, field(idx[1].unwrap()))?;
        let train = parse_f64(line, "train_smooth_loss", field(idx[2].unwrap()))?;
        let val = match idx[3].map(field) {
            Some(s) if !s.is_empty() => Some(parse_f64(line, "val_loss", s)?),
            _ => None,
        };
        let point = SweepPoint::new(lr, bs, train, val);
        point.validate().map_err(|m| Error::parse(line, m))?;
        if let Some(first) = seen.insert((lr.to_bits(), bs), line) {
            return Err(Error::parse(
                line,
                format!("duplicate (lr={lr}, bs={bs}), first seen at line {first}"),
            ));
        }
        points.push(point);
    }
    if points.is_empty() {
        return Err(Error::parse(header_line, "no data rows"));
    }

    let tag = |k: &str| meta.get(k).map(|(_, v)| v.clone());
    LossSurface::new(scale, tag("arch_tag"), tag("recipe_tag"), points)
        .map_err(|e| Error::parse(0, e.to_string()))
}

/// Writes `surface` in the same schema `load_surface` reads. Floats use the
/// shortest round-trip representation, so load ∘ write is lossless.
pub fn write_surface<W: Write>(surface: &LossSurface, mut out: W) -> Result<()> {
    let s = surface.scale();
    writeln!(out, "# n_params={}", s.n_params())?;
    writeln!(out, "# d_tokens={}", s.d_tokens())?;
    if let Some(a) = s.n_active() {
        writeln!(out, "# n_active={a}")?;
    }
    if let Some(m) = s.flops_per_token() {
        writeln!(out, "# flops_per_token={m}")?;
    }
    if let Some(t) = surface.arch_tag() {
        writeln!(out, "# arch_tag={t}")?;
    }
    if let Some(t) = surface.recipe_tag() {
        writeln!(out, "# recipe_tag={t}")?;
    }
    let with_val = surface.points().iter().any(|p| p.val_loss.is_some());
    if with_val {
        writeln!(out, "lr,bs_tokens,train_smooth_loss,val_loss")?;
    } else {
        writeln!(out, "lr,bs_tokens,train_smooth_loss")?;
    }
    for p in surface.points() {
        write!(out, "{},{},{}", p.lr, p.bs_tokens, p.train_smooth_loss)?;
        if with_val {
            match p.val_loss {
                Some(v) => write!(out, ",{v}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
