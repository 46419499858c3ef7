//! One test per acceptance criterion. Each writes a `criterion N: PASS|FAIL|SKIP`
//! line to stderr, bypassing output capture so the lines show in every run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hpscale_core::fit::{bootstrap_fit, OptimumObservation};
use hpscale_core::predict::{schedule_value, step_law, GridSpec, MinLrMode, ModelScale, ScheduleSpec, StepLawParams};
use hpscale_core::stats::compare_formulations;
use hpscale_core::surface::Metric;
use hpscale_core::synth::{generate_observations, generate_surface, ObservationSpec, SurfaceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tempfile::TempDir;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

fn report(n: u32, title: &str, verdict: Verdict, detail: &str) {
    let tag = match verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    let line = format!("criterion {n}: {tag} {title} ({detail})\n");
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(!matches!(verdict, Verdict::Fail), "{}", line.trim_end());
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn criterion_1_reference_predictions() {
    let mut checks = Vec::new();
    for (n, d, lr, lr_tol, bs, bs_tol) in [
        (6.51e9, 1.0e10, 2.12e-4, 0.01, 294912.0, 0.03),
        (6.51e9, 1.3e11, 4.74e-4, 0.02, 1310720.0, 0.03),
    ] {
        let p = step_law(&ModelScale::new(n, d).unwrap()).unwrap();
        let (plr, pbs) = (p.lr.unwrap(), p.bs_tokens.unwrap());
        checks.push((rel(plr, lr) <= lr_tol && rel(pbs, bs) <= bs_tol, format!("D={d:e}: lr {plr:.4e}, bs {pbs:.0}")));
    }
    let ok = checks.iter().all(|c| c.0);
    let detail: Vec<_> = checks.into_iter().map(|c| c.1).collect();
    report(1, "step law at 6.51e9 params", verdict(ok), &detail.join("; "));
}

#[test]
fn criterion_2_grid_step_cross_check() {
    let p = step_law(&ModelScale::new(4.29e8, 8e9).unwrap()).unwrap();
    let step = 2f64.sqrt().ln();
    let dlr = (p.lr.unwrap() / 1.38e-3).ln().abs();
    let dbs = (p.bs_tokens.unwrap() / 262144.0).ln().abs();
    report(
        2,
        "step law within one grid step of observed optimum",
        verdict(dlr <= step && dbs <= step),
        &format!("|ln lr ratio| {dlr:.4}, |ln bs ratio| {dbs:.4}, bound {step:.4}"),
    );
}

fn table_lattice() -> Vec<hpscale_core::synth::LatticePoint> {
    ObservationSpec::product_lattice(&[6e7, 2.1e8, 4.3e8, 1.07e9], &[2e9, 8e9, 2e10, 1e11])
}

#[test]
fn criterion_3_fitter_round_trip() {
    let start = Instant::now();
    let truth = StepLawParams::default();
    let clean = generate_observations(&ObservationSpec::new(truth, table_lattice())).unwrap();
    let f = bootstrap_fit(&clean, 1000, 42).unwrap();
    let est_err = [(f.alpha - truth.alpha).abs(), (f.beta - truth.beta).abs(), (f.gamma - truth.gamma).abs()]
        .into_iter()
        .fold(0.0, f64::max);
    let widths = [f.ci.alpha.width(), f.ci.beta.width(), f.ci.gamma.width()].into_iter().fold(0.0, f64::max);
    // percentile bands of exact data differ by rounding only; held to the estimate tolerance
    let clean_ok = est_err <= 1e-9 && widths <= 1e-9;

    let (mut within, mut cover) = (0, [0usize; 3]);
    let mut max_dev: f64 = 0.0;
    for seed in 0..100 {
        let mut spec = ObservationSpec::new(truth, table_lattice());
        spec.noise_sigma = 0.05;
        spec.seed = seed;
        let obs = generate_observations(&spec).unwrap();
        let f = bootstrap_fit(&obs, 1000, 42).unwrap();
        let devs = [(f.alpha - truth.alpha).abs(), (f.beta - truth.beta).abs(), (f.gamma - truth.gamma).abs()];
        let dev = devs.into_iter().fold(0.0, f64::max);
        max_dev = max_dev.max(dev);
        within += (dev <= 0.03) as usize;
        cover[0] += f.ci.alpha.contains(truth.alpha) as usize;
        cover[1] += f.ci.beta.contains(truth.beta) as usize;
        cover[2] += f.ci.gamma.contains(truth.gamma) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    let noisy_ok = within >= 95 && cover.iter().all(|&c| c >= 95);
    report(
        3,
        "fitter round trip",
        verdict(clean_ok && noisy_ok && secs < 10.0),
        &format!(
            "noiseless max error {est_err:.1e}, max CI width {widths:.1e}; noisy: exponents within 0.03 in {within}/100 \
             (max {max_dev:.4}), CI coverage alpha {}/100 beta {}/100 gamma {}/100; {secs:.1} s",
            cover[0], cover[1], cover[2]
        ),
    );
}

fn independent_n(seed: u64) -> Vec<OptimumObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..40)
        .map(|_| {
            let ln_n: f64 = rng.random_range(18.0..23.0);
            let ln_d: f64 = rng.random_range(20.0..26.0);
            let z: f64 = rng.sample(StandardNormal);
            OptimumObservation {
                n_params: ln_n.exp(),
                d_tokens: ln_d.exp(),
                opt_lr: 1e-3,
                opt_bs_tokens: (0.58 * ln_d + 0.1 * z).exp(),
            }
        })
        .collect()
}

#[test]
fn criterion_4_n_independence() {
    let start = Instant::now();
    let (mut pattern, mut close) = (0, 0);
    for seed in 0..200 {
        let c = compare_formulations(&independent_n(seed)).unwrap();
        let p_n = c.full.coefficient("logN").unwrap().p_value;
        let p_d = c.full.coefficient("logD").unwrap().p_value;
        pattern += (p_n > 0.05 && p_d < 0.001) as usize;
        let gap = c.formulation("D-only").unwrap().adj_r_squared - c.formulation("Full").unwrap().adj_r_squared;
        close += (gap.abs() < 0.01) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "batch size independent of N",
        verdict(pattern >= 190 && close >= 180 && secs < 30.0),
        &format!("p pattern {pattern}/200, adj R2 gap < 0.01 in {close}/200; {secs:.2} s"),
    );
}

#[test]
fn criterion_5_landscape_oracle() {
    let grid = GridSpec::standard();
    let deltas = [0.0, 1e-4, 1e-3, 2.5e-3, 1e-2, 0.05, 0.2, 1.0, 10.0];
    let (mut surfaces, mut failures) = (0usize, Vec::new());
    for &lr in grid.lr_values() {
        for &bs in grid.bs_values() {
            for a in [0.05, 0.5, 2.0] {
                for b in [0.05, 0.5, 2.0] {
                    for rho in [-0.9, 0.0, 0.9] {
                        let mut spec = SurfaceSpec::new(lr, bs.round(), a, b, 2.0);
                        spec.cross_term = rho * (a * b).sqrt();
                        let s = generate_surface(&spec, &grid).unwrap();
                        surfaces += 1;
                        let opt = s.find_optimum(Metric::Train).unwrap();
                        let conv = s.convexity_report(0.0, Metric::Train).unwrap();
                        let at_opt = s.relative_error(opt.hp.lr, opt.hp.bs_tokens as f64, Metric::Train).unwrap();
                        let mut ok = opt.hp.lr == lr
                            && opt.hp.bs_tokens as f64 == bs.round()
                            && conv.row_unimodal_fraction == 1.0
                            && conv.col_unimodal_fraction == 1.0
                            && at_opt == 0.0;
                        let sets: Vec<_> = deltas.iter().map(|&d| s.plateau(d, Metric::Train).unwrap()).collect();
                        for w in sets.windows(2) {
                            ok &= w[0].members.iter().all(|hp| w[1].contains(*hp));
                        }
                        if !ok {
                            failures.push(format!("lr={lr:e} bs={bs} a={a} b={b} rho={rho}"));
                        }
                    }
                }
            }
        }
    }
    let detail = match failures.first() {
        None => format!("{surfaces} noiseless surfaces"),
        Some(f) => format!("{} of {surfaces} failed, first {f}", failures.len()),
    };
    report(5, "noiseless synthetic surfaces", verdict(failures.is_empty()), &detail);
}

#[test]
fn criterion_6_schedule() {
    let (lr_max, warmup, total) = (3e-3, 2000u64, 12_000u64);
    let fixed = ScheduleSpec::new(lr_max, total).and_then(|s| s.with_warmup(warmup)).unwrap();
    let conv = fixed.with_mode(MinLrMode::Conventional).unwrap();
    let end_fixed = schedule_value(total, &fixed).unwrap();
    let end_conv = schedule_value(total, &conv).unwrap();
    let mut ok = end_fixed == 1e-5 && end_conv == lr_max / 10.0;
    let mut worst_jump: f64 = 0.0;
    for spec in [&fixed, &conv] {
        let at = schedule_value(warmup, spec).unwrap();
        worst_jump = worst_jump.max((at - lr_max).abs() / lr_max);
        let mut prev = at;
        for step in warmup + 1..=total {
            let v = schedule_value(step, spec).unwrap();
            ok &= v <= prev;
            prev = v;
        }
    }
    ok &= worst_jump <= 1e-15;
    report(
        6,
        "warmup plus cosine schedule",
        verdict(ok),
        &format!("fixed end {end_fixed:e}, conventional end {end_conv:e}, boundary gap {worst_jump:.1e}, 10000-step scan"),
    );
}

fn hpscale(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hpscale")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn criterion_7_released_grid() {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/fig1_1b_100b.csv");
    if !fixture.exists() {
        report(7, "released 1B/100B grid", Verdict::Skip, &format!("fixture {} absent", fixture.display()));
        return;
    }
    let out = hpscale(&["compare", "--surface", s(&fixture), "--methods", "step"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
    let err = v["rows"][0]["relative_error_permille"].as_f64();
    let ok = out.status.success() && err.is_some_and(|e| (e - 0.94).abs() <= 0.2);
    report(7, "released 1B/100B grid", verdict(ok), &format!("step relative error {err:?} permille"));
}

#[test]
fn criterion_8_determinism() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    fs::write(
        p("surface.json"),
        r#"{"opt_lr":0.0016,"opt_bs":1000000,"curvature_lr":0.5,"curvature_bs":0.3,"cross_term":0.1,
            "base_loss":2.0,"noise_sigma":0.002,"seed":9,"val_offset":0.05}"#,
    )
    .unwrap();
    let mut lattice = Vec::new();
    for n in [6e7, 2.1e8, 4.3e8, 1.07e9] {
        for d in [2e9, 8e9, 2e10, 1e11] {
            lattice.push(serde_json::json!({"n_params": n, "d_tokens": d}));
        }
    }
    fs::write(p("obs.json"), serde_json::json!({"lattice": lattice, "noise_sigma": 0.05}).to_string()).unwrap();
    let (surface_spec, obs_spec) = (p("surface.json"), p("obs.json"));
    let (surface, obs) = (p("surface.csv"), p("obs.csv"));
    let setup = [
        vec!["synth", "surface", "--spec", s(&surface_spec), "--seed", "3", "--out", s(&surface)],
        vec!["synth", "observations", "--spec", s(&obs_spec), "--seed", "4", "--out", s(&obs)],
    ];
    for args in &setup {
        assert!(hpscale(args).status.success());
    }
    let runs: Vec<Vec<&str>> = vec![
        setup[0][..6].to_vec(),
        setup[1][..6].to_vec(),
        vec!["predict", "--n", "1e9", "--d", "1e11"],
        vec!["predict", "--method", "deepseek", "--n", "1e9", "--d", "1e11", "--snap"],
        vec!["fit", "--observations", s(&obs), "--bootstrap", "300", "--seed", "42"],
        vec!["stats", "--observations", s(&obs)],
        vec!["analyze", "--surface", s(&surface)],
        vec!["compare", "--surface", s(&surface), "--loss", "2.1", "--meituan", "0.5,0.3,1e5,0.2"],
        vec!["plot", "--surface", s(&surface)],
    ];
    let mut outputs = 0;
    let mut diverged = Vec::new();
    for args in &runs {
        let a = hpscale(args);
        let b = hpscale(args);
        outputs += 1;
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        if a.stdout != b.stdout || a.stdout.is_empty() {
            diverged.push(args[..2].join(" "));
        }
    }

    // overlay plot and the compare CSV go through files
    let cmp = p("cmp.json");
    let compare_to = |csv: &Path| {
        hpscale(&["compare", "--surface", s(&surface), "--out", s(&cmp), "--csv", s(csv)]);
        let svg = hpscale(&["plot", "--surface", s(&surface), "--overlay", s(&cmp)]).stdout;
        (fs::read(&cmp).unwrap(), fs::read(csv).unwrap(), svg)
    };
    let first = compare_to(&p("a.csv"));
    let second = compare_to(&p("b.csv"));
    outputs += 3;
    if first != second {
        diverged.push("compare/plot overlay".into());
    }
    report(
        8,
        "byte-identical reruns",
        verdict(diverged.is_empty()),
        &format!("{outputs} outputs compared, diverged: {diverged:?}"),
    );
}
