//! Thin adapters from parsed arguments to library calls and reports.

use std::path::{Path, PathBuf};

use hpscale_core::fit::{bootstrap_fit, load_observations, write_observations, OptimumObservation};
use hpscale_core::predict::{
    compute_budget, AuxInputs, ComputeBudget, GridSpec, LawParams, MeituanParams, Method, ModelScale,
    Prediction,
};
use hpscale_core::stats::{compare_formulations, regress, Predictor};
use hpscale_core::surface::{
    load_surface, write_surface, ArgminConsistency, ConvexityReport, LossSurface, Metric, OptimumReport,
    PlateauRegion,
};
use hpscale_core::synth::{generate_observations, generate_surface, ObservationSpec, SurfaceSpec};
use hpscale_core::Error;
use serde::{Deserialize, Serialize};

use crate::output::{emit, read_input, report_json, CliResult, Failure, Input, Meta};
use crate::plot::{render_svg, Marker, MarkerKind, PlotOptions};

/// Flags shared by every command.
pub struct Globals {
    pub laws: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Globals {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn load_laws(&self) -> CliResult<(LawParams, Option<Input>)> {
        match &self.laws {
            None => Ok((LawParams::default(), None)),
            Some(p) => {
                let input = read_input(p)?;
                let laws = LawParams::from_json(input.text()?).map_err(|e| input.context(e))?;
                Ok((laws, Some(input)))
            }
        }
    }
}

/// How a run derives optional law inputs.
pub struct LawInputs {
    pub loss: Option<f64>,
    pub meituan: Option<MeituanParams>,
    pub budget: Option<f64>,
    pub budget_factor: f64,
    pub use_active: bool,
}

impl LawInputs {
    fn aux(&self) -> CliResult<AuxInputs> {
        let mut aux = AuxInputs::default();
        if let Some(l) = self.loss {
            aux = aux.with_loss(l)?;
        }
        if let Some(m) = self.meituan {
            aux = aux.with_meituan(m)?;
        }
        Ok(aux)
    }

    /// Budget used by compute-parameterized laws: explicit, else `factor·N·D`.
    fn budget(&self, scale: &ModelScale) -> CliResult<ComputeBudget> {
        Ok(match self.budget {
            Some(c) => ComputeBudget::new(c)?,
            None => compute_budget(scale, self.budget_factor, self.use_active)?,
        })
    }

    fn predict(&self, laws: &LawParams, method: Method, scale: &ModelScale) -> CliResult<Prediction> {
        let budget = if method == Method::DeepSeek { Some(self.budget(scale)?) } else { None };
        Ok(laws.predict(method, scale, budget, &self.aux()?)?)
    }
}

pub fn parse_meituan(s: &str) -> Result<MeituanParams, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    let [lambda, alpha, lambda_b, alpha_b] = v[..] else {
        return Err("expected four comma-separated values: lambda,alpha,lambda_b,alpha_b".into());
    };
    let p = MeituanParams { lambda, alpha, lambda_b, alpha_b };
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn observations(path: &Path) -> CliResult<(Vec<OptimumObservation>, Input)> {
    let input = read_input(path)?;
    let obs = load_observations(input.bytes.as_slice()).map_err(|e| input.context(e))?;
    Ok((obs, input))
}

fn surface(path: &Path) -> CliResult<(LossSurface, Input)> {
    let input = read_input(path)?;
    let s = load_surface(input.bytes.as_slice()).map_err(|e| input.context(e))?;
    Ok((s, input))
}

#[derive(Serialize)]
struct PredictOut {
    #[serde(flatten)]
    prediction: Prediction,
    scale: ModelScale,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget_flops: Option<f64>,
}

pub struct PredictArgs {
    pub method: Method,
    pub scale: ModelScale,
    pub inputs: LawInputs,
    pub snap: bool,
}

pub fn predict(g: &Globals, a: &PredictArgs) -> CliResult<()> {
    let (laws, laws_input) = g.load_laws()?;
    let mut prediction = a.inputs.predict(&laws, a.method, &a.scale)?;
    if a.snap {
        prediction = hpscale_core::predict::snap_to_grid(&prediction, &GridSpec::standard());
    }
    let budget_flops = if a.method == Method::DeepSeek {
        Some(a.inputs.budget(&a.scale)?.flops())
    } else {
        None
    };
    let meta = Meta::new("predict", g.seed()).with_laws(laws_input.as_ref());
    let body = PredictOut { prediction, scale: a.scale, budget_flops };
    emit(g.out.as_deref(), &report_json(&meta, &body)?)
}

pub fn fit(g: &Globals, path: &Path, resamples: usize) -> CliResult<()> {
    let (obs, input) = observations(path)?;
    let seed = g.seed();
    let result = bootstrap_fit(&obs, resamples, seed)?;
    let meta = Meta::new("fit", seed).with_input(&input);
    emit(g.out.as_deref(), &report_json(&meta, &result)?)
}

pub fn stats(g: &Globals, path: &Path, predictors: Option<&[Predictor]>) -> CliResult<()> {
    let (obs, input) = observations(path)?;
    let meta = Meta::new("stats", g.seed()).with_input(&input);
    let json = match predictors {
        Some(p) => report_json(&meta, &regress(p, &obs)?)?,
        None => report_json(&meta, &compare_formulations(&obs)?)?,
    };
    emit(g.out.as_deref(), &json)
}

#[derive(Serialize)]
struct AnalyzeOut {
    scale: ModelScale,
    arch_tag: Option<String>,
    recipe_tag: Option<String>,
    points: usize,
    complete_grid: bool,
    lr_axis: Vec<f64>,
    bs_axis: Vec<u64>,
    optimum: OptimumReport,
    plateau: PlateauRegion,
    /// Absent when the grid has holes.
    convexity: Option<ConvexityReport>,
    /// Absent when the surface carries no validation loss.
    argmin_consistency: Option<ArgminConsistency>,
}

pub fn analyze(g: &Globals, path: &Path, delta: f64, epsilon: f64, metric: Metric) -> CliResult<()> {
    let (s, input) = surface(path)?;
    let body = AnalyzeOut {
        scale: *s.scale(),
        arch_tag: s.arch_tag().map(str::to_string),
        recipe_tag: s.recipe_tag().map(str::to_string),
        points: s.points().len(),
        complete_grid: s.is_complete_grid(),
        lr_axis: s.lr_axis().to_vec(),
        bs_axis: s.bs_axis().to_vec(),
        optimum: s.find_optimum(metric)?,
        plateau: s.plateau(delta, metric)?,
        convexity: if s.is_complete_grid() { Some(s.convexity_report(epsilon, metric)?) } else { None },
        argmin_consistency: if s.has_val() { Some(s.argmin_consistency()?) } else { None },
    };
    let meta = Meta::new("analyze", g.seed()).with_input(&input);
    emit(g.out.as_deref(), &report_json(&meta, &body)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpPair {
    pub lr: Option<f64>,
    pub bs: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    OutOfHull,
    Unsupported,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::OutOfHull => "out_of_hull",
            Status::Unsupported => "unsupported",
        }
    }
}

/// One law scored on one surface. `relative_error_permille` is present
/// exactly when `status` is `ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub predicted: HpPair,
    /// Prediction snapped onto the surface's own lr/bs axes.
    pub snapped: HpPair,
    pub interpolated_loss: Option<f64>,
    pub relative_error_permille: Option<f64>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Serialize)]
struct CompareOut<'a> {
    metric: Metric,
    scored: &'static str,
    optimum: OptimumReport,
    rows: &'a [CompareRow],
}

pub struct CompareArgs {
    pub methods: Vec<Method>,
    pub metric: Metric,
    pub inputs: LawInputs,
    pub score_snapped: bool,
    pub csv: Option<PathBuf>,
}

fn unsupported(method: Method, predicted: HpPair, note: String) -> CompareRow {
    CompareRow {
        method,
        predicted,
        snapped: HpPair { lr: None, bs: None },
        interpolated_loss: None,
        relative_error_permille: None,
        status: Status::Unsupported,
        note: Some(note),
    }
}

pub fn compare_rows(
    s: &LossSurface,
    laws: &LawParams,
    a: &CompareArgs,
) -> CliResult<Vec<CompareRow>> {
    if a.methods.is_empty() {
        return Err(Error::Argument("method list is empty".into()).into());
    }
    if !s.is_complete_grid() {
        return Err(Error::Shape("compare needs a complete lr x bs grid".into()).into());
    }
    let axes = GridSpec::new(
        s.lr_axis().to_vec(),
        s.bs_axis().iter().map(|&b| b as f64).collect(),
    )?;
    let mut rows = Vec::with_capacity(a.methods.len());
    for &method in &a.methods {
        let p = match a.inputs.predict(laws, method, s.scale()) {
            Ok(p) => p,
            Err(Failure::Core(e)) if matches!(e, Error::Argument(_) | Error::Domain(_)) => {
                rows.push(unsupported(method, HpPair { lr: None, bs: None }, e.to_string()));
                continue;
            }
            Err(other) => return Err(other),
        };
        let predicted = HpPair { lr: p.lr, bs: p.bs_tokens };
        let (Some(lr), Some(bs)) = (p.lr, p.bs_tokens) else {
            let missing = if p.lr.is_none() { "learning-rate" } else { "batch-size" };
            rows.push(unsupported(method, predicted, format!("law defines no {missing} rule")));
            continue;
        };
        let snapped = HpPair { lr: Some(axes.nearest_lr(lr)), bs: Some(axes.nearest_bs(bs)) };
        let (q_lr, q_bs) = if a.score_snapped { (snapped.lr.unwrap(), snapped.bs.unwrap()) } else { (lr, bs) };
        let row = match s.interpolate_loss(q_lr, q_bs, a.metric) {
            Ok(loss) => CompareRow {
                method,
                predicted,
                snapped,
                interpolated_loss: Some(loss),
                relative_error_permille: Some(1000.0 * s.relative_error(q_lr, q_bs, a.metric)?),
                status: Status::Ok,
                note: None,
            },
            Err(Error::OutOfHull { corner_lr, corner_bs, .. }) => CompareRow {
                method,
                predicted,
                snapped,
                interpolated_loss: None,
                relative_error_permille: None,
                status: Status::OutOfHull,
                note: Some(format!("nearest hull corner (lr={corner_lr}, bs={corner_bs})")),
            },
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn rows_csv(rows: &[CompareRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::Core(Error::Io(e.to_string()));
    w.write_record([
        "method",
        "status",
        "pred_lr",
        "pred_bs",
        "snapped_lr",
        "snapped_bs",
        "interpolated_loss",
        "relative_error_permille",
    ])
    .map_err(fail)?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            r.status.as_str().to_string(),
            cell(r.predicted.lr),
            cell(r.predicted.bs),
            cell(r.snapped.lr),
            cell(r.snapped.bs),
            cell(r.interpolated_loss),
            cell(r.relative_error_permille),
        ])
        .map_err(fail)?;
    }
    w.into_inner().map_err(|e| Failure::Core(Error::Io(e.to_string())))
}

pub fn compare(g: &Globals, path: &Path, a: &CompareArgs) -> CliResult<()> {
    let (s, input) = surface(path)?;
    let (laws, laws_input) = g.load_laws()?;
    let rows = compare_rows(&s, &laws, a)?;
    let body = CompareOut {
        metric: a.metric,
        scored: if a.score_snapped { "snapped" } else { "raw" },
        optimum: s.find_optimum(a.metric)?,
        rows: &rows,
    };
    let meta = Meta::new("compare", g.seed()).with_input(&input).with_laws(laws_input.as_ref());
    emit(g.out.as_deref(), &report_json(&meta, &body)?)?;
    if let Some(csv_path) = &a.csv {
        emit(Some(csv_path), &rows_csv(&rows)?)?;
    }
    Ok(())
}

fn parse_json<T: for<'de> Deserialize<'de>>(input: &Input, what: &str) -> CliResult<T> {
    serde_json::from_slice(&input.bytes).map_err(|e| {
        input.context(Error::Parse { line: e.line() as u64, message: format!("{what}: {e}") })
    })
}

pub fn synth_surface(g: &Globals, spec_path: &Path, grid_path: Option<&Path>) -> CliResult<()> {
    let input = read_input(spec_path)?;
    let mut spec: SurfaceSpec = parse_json(&input, "surface spec")?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let grid = match grid_path {
        Some(p) => parse_json(&read_input(p)?, "grid")?,
        None => GridSpec::standard(),
    };
    let s = generate_surface(&spec, &grid)?;
    let mut out = Meta::new("synth surface", spec.seed).with_input(&input).csv_comments().into_bytes();
    write_surface(&s, &mut out)?;
    emit(g.out.as_deref(), &out)
}

pub fn synth_observations(g: &Globals, spec_path: &Path) -> CliResult<()> {
    let input = read_input(spec_path)?;
    let mut spec: ObservationSpec = parse_json(&input, "observation spec")?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let obs = generate_observations(&spec)?;
    let mut out = Meta::new("synth observations", spec.seed).with_input(&input).csv_comments().into_bytes();
    write_observations(&obs, &mut out)?;
    emit(g.out.as_deref(), &out)
}

/// The subset of a compare report that the plotter reads.
#[derive(Deserialize)]
struct Overlay {
    rows: Vec<CompareRow>,
}

pub fn plot(
    g: &Globals,
    path: &Path,
    metric: Metric,
    levels: &[f64],
    overlay: Option<&Path>,
    overlay_snapped: bool,
) -> CliResult<()> {
    let (s, input) = surface(path)?;
    let mut markers = Vec::new();
    if let Some(p) = overlay {
        let o: Overlay = parse_json(&read_input(p)?, "overlay")?;
        for row in o.rows {
            let hp = if overlay_snapped { row.snapped } else { row.predicted };
            let (Some(lr), Some(bs)) = (hp.lr, hp.bs) else { continue };
            let kind = match row.status {
                Status::Ok => MarkerKind::Inside,
                Status::OutOfHull => MarkerKind::OutOfHull,
                Status::Unsupported => continue,
            };
            markers.push(Marker { label: row.method.as_str().to_string(), lr, bs, kind });
        }
    }
    let opts = PlotOptions {
        metric,
        levels_permille: levels.to_vec(),
        markers,
        provenance: format!("{} {} input_sha256={}", crate::output::TOOL, crate::output::VERSION, input.sha256),
    };
    let svg = render_svg(&s, &opts)?;
    emit(g.out.as_deref(), svg.as_bytes())
}
