use hpscale_core::fit::{bootstrap_fit, fit_bs_law, fit_lr_law, OptimumObservation};
use hpscale_core::predict::{
    schedule_value, snap_to_grid, step_law, GridSpec, MinLrMode, ModelScale, ScheduleSpec, StepLawParams,
};
use hpscale_core::stats::{nested_f_test, regress, Predictor};
use hpscale_core::surface::{LossSurface, Metric, SweepPoint};
use hpscale_core::synth::{generate_observations, generate_surface, ObservationSpec, SurfaceSpec};
use proptest::prelude::*;

fn log_space(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

fn lattice() -> Vec<hpscale_core::synth::LatticePoint> {
    ObservationSpec::product_lattice(&[6e7, 2.1e8, 4.3e8, 1.07e9], &[2e9, 8e9, 2e10, 1e11])
}

#[test]
fn step_law_monotone_on_lattice() {
    let ns = log_space(1e7, 1e12, 10);
    let ds = log_space(1e9, 1e13, 10);
    let at = |n, d| step_law(&ModelScale::new(n, d).unwrap()).unwrap();
    for &d in &ds {
        for w in ns.windows(2) {
            assert!(at(w[1], d).lr.unwrap() < at(w[0], d).lr.unwrap());
        }
    }
    for &n in &ns {
        for w in ds.windows(2) {
            assert!(at(n, w[1]).lr.unwrap() > at(n, w[0]).lr.unwrap());
            assert!(at(n, w[1]).bs_tokens.unwrap() > at(n, w[0]).bs_tokens.unwrap());
        }
    }
}

#[test]
fn step_law_homogeneous_in_n() {
    for &(n, d) in &[(1e8, 1e10), (6.51e9, 1.3e11), (3e7, 5e12)] {
        let base = step_law(&ModelScale::new(n, d).unwrap()).unwrap().lr.unwrap();
        for k in [2.0f64, 10.0, 100.0] {
            let scaled = step_law(&ModelScale::new(k * n, d).unwrap()).unwrap().lr.unwrap();
            let expected = k.powf(-0.713);
            assert!((scaled / base / expected - 1.0).abs() < 1e-12, "k={k}");
        }
    }
}

proptest! {
    #[test]
    fn step_bs_ignores_n(ln_n1 in 10.0f64..30.0, ln_n2 in 10.0f64..30.0, ln_d in 15.0f64..32.0) {
        let d = ln_d.exp();
        let a = step_law(&ModelScale::new(ln_n1.exp(), d).unwrap()).unwrap();
        let b = step_law(&ModelScale::new(ln_n2.exp(), d).unwrap()).unwrap();
        prop_assert_eq!(a.bs_tokens.unwrap().to_bits(), b.bs_tokens.unwrap().to_bits());
    }

    #[test]
    fn snapping_is_idempotent(ln_n in 15.0f64..25.0, ln_d in 18.0f64..30.0) {
        let grid = GridSpec::standard();
        let p = step_law(&ModelScale::new(ln_n.exp(), ln_d.exp()).unwrap()).unwrap();
        let once = snap_to_grid(&p, &grid);
        prop_assert_eq!(snap_to_grid(&once, &grid), once);
        prop_assert!(grid.lr_values().contains(&once.lr.unwrap()));
        prop_assert!(grid.bs_values().contains(&once.bs_tokens.unwrap()));
    }

    #[test]
    fn schedule_shape(lr_max in 1e-4f64..1e-1, warmup in 1u64..5000, extra in 1u64..50_000, conventional: bool) {
        let total = warmup + extra;
        let mode = if conventional { MinLrMode::Conventional } else { MinLrMode::FixedMin };
        let spec = ScheduleSpec::new(lr_max, total)
            .and_then(|s| s.with_warmup(warmup))
            .and_then(|s| s.with_mode(mode));
        prop_assume!(spec.is_ok());
        let spec = spec.unwrap();
        let at_warmup = schedule_value(warmup, &spec).unwrap();
        prop_assert!((at_warmup - lr_max).abs() <= 1e-15 * lr_max);
        let end = schedule_value(total, &spec).unwrap();
        prop_assert_eq!(end, spec.lr_min());
        let stride = (extra / 200).max(1);
        let mut prev = at_warmup;
        let mut step = warmup + stride;
        while step <= total {
            let v = schedule_value(step, &spec).unwrap();
            prop_assert!(v <= prev);
            prev = v;
            step += stride;
        }
        prop_assert!(schedule_value(total + 1, &spec).is_err());
    }
}

/// Random PSD quadratic surfaces planted on a standard-grid node.
fn surface_spec() -> impl Strategy<Value = SurfaceSpec> {
    (0usize..8, 0usize..8, 0.01f64..2.0, 0.01f64..2.0, -0.99f64..0.99, 0.5f64..5.0).prop_map(
        |(i, j, a, b, rho, base)| {
            let grid = GridSpec::standard();
            // even bs indices are exact powers of two, so the planted node survives rounding
            let mut s = SurfaceSpec::new(grid.lr_values()[i], grid.bs_values()[2 * j], a, b, base);
            s.cross_term = rho * (a * b).sqrt();
            s
        },
    )
}

fn arbitrary_surface() -> impl Strategy<Value = LossSurface> {
    (2usize..6, 2usize..6)
        .prop_flat_map(|(nl, nb)| (Just(nl), Just(nb), prop::collection::vec(1.0f64..4.0, nl * nb)))
        .prop_map(|(nl, nb, losses)| {
            let mut points = Vec::new();
            for i in 0..nl {
                for j in 0..nb {
                    let lr = 1e-3 * 2f64.powi(i as i32);
                    let bs = 1u64 << (15 + j);
                    points.push(SweepPoint::new(lr, bs, losses[i * nb + j], None));
                }
            }
            LossSurface::new(ModelScale::new(1e9, 1e11).unwrap(), None, None, points).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_synthetic_surfaces(spec in surface_spec()) {
        let s = generate_surface(&spec, &GridSpec::standard()).unwrap();
        let opt = s.find_optimum(Metric::Train).unwrap();
        prop_assert_eq!(opt.hp.lr, spec.opt_lr);
        prop_assert_eq!(opt.hp.bs_tokens as f64, spec.opt_bs);
        prop_assert_eq!(s.relative_error(opt.hp.lr, opt.hp.bs_tokens as f64, Metric::Train).unwrap(), 0.0);
        let c = s.convexity_report(0.0, Metric::Train).unwrap();
        prop_assert_eq!(c.row_unimodal_fraction, 1.0);
        prop_assert_eq!(c.col_unimodal_fraction, 1.0);
    }

    #[test]
    fn surface_invariants(s in arbitrary_surface(), scale in 0.1f64..10.0, shift in -0.5f64..5.0) {
        let opt = s.find_optimum(Metric::Train).unwrap();
        for p in s.points() {
            prop_assert!(opt.loss <= p.train_smooth_loss);
            let at = s.interpolate_loss(p.lr, p.bs_tokens as f64, Metric::Train).unwrap();
            prop_assert_eq!(at.to_bits(), p.train_smooth_loss.to_bits());
        }
        prop_assert_eq!(s.relative_error(opt.hp.lr, opt.hp.bs_tokens as f64, Metric::Train).unwrap(), 0.0);

        // positive affine transforms keep the argmin
        let moved: Vec<SweepPoint> = s
            .points()
            .iter()
            .map(|p| SweepPoint::new(p.lr, p.bs_tokens, scale * p.train_smooth_loss + shift, None))
            .collect();
        let t = LossSurface::new(*s.scale(), None, None, moved).unwrap();
        prop_assert_eq!(t.find_optimum(Metric::Train).unwrap().hp, opt.hp);

        // plateau membership grows with delta
        let deltas = [0.0, 0.01, 0.05, 0.2, 1.0, f64::INFINITY];
        let sets: Vec<_> = deltas.iter().map(|&d| s.plateau(d, Metric::Train).unwrap()).collect();
        prop_assert!(sets[0].contains(opt.hp));
        prop_assert_eq!(sets[5].members.len(), s.points().len());
        for w in sets.windows(2) {
            prop_assert!(w[0].members.iter().all(|hp| w[1].contains(*hp)));
        }
    }
}

fn noisy_obs(seed: u64, sigma: f64) -> Vec<OptimumObservation> {
    let mut spec = ObservationSpec::new(StepLawParams::default(), lattice());
    spec.noise_sigma = sigma;
    spec.seed = seed;
    generate_observations(&spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fit_ignores_ordering(seed in 0u64..1000, rotate in 0usize..16) {
        let obs = noisy_obs(seed, 0.1);
        let mut shuffled = obs.clone();
        shuffled.rotate_left(rotate);
        shuffled.reverse();
        prop_assert_eq!(fit_lr_law(&obs).unwrap(), fit_lr_law(&shuffled).unwrap());
        prop_assert_eq!(fit_bs_law(&obs).unwrap(), fit_bs_law(&shuffled).unwrap());
        let a = bootstrap_fit(&obs, 50, seed).unwrap();
        let b = bootstrap_fit(&shuffled, 50, seed).unwrap();
        prop_assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
        prop_assert_eq!(a.gamma.to_bits(), b.gamma.to_bits());
    }

    #[test]
    fn rescaling_d_moves_only_intercepts(seed in 0u64..1000, ln_k in -5.0f64..5.0) {
        let obs = noisy_obs(seed, 0.1);
        let k = ln_k.exp();
        let scaled: Vec<_> = obs.iter().map(|o| OptimumObservation { d_tokens: o.d_tokens * k, ..*o }).collect();
        let (lr, lr_k) = (fit_lr_law(&obs).unwrap(), fit_lr_law(&scaled).unwrap());
        let (bs, bs_k) = (fit_bs_law(&obs).unwrap(), fit_bs_law(&scaled).unwrap());
        prop_assert!((lr.alpha - lr_k.alpha).abs() < 1e-10);
        prop_assert!((lr.beta - lr_k.beta).abs() < 1e-10);
        prop_assert!((bs.gamma - bs_k.gamma).abs() < 1e-10);
        prop_assert!((lr_k.log_c - (lr.log_c - lr.beta * ln_k)).abs() < 1e-9);
        prop_assert!((bs_k.log_d - (bs.log_d - bs.gamma * ln_k)).abs() < 1e-9);
    }

    #[test]
    fn law_round_trip(c in 0.1f64..10.0, alpha in -1.0f64..0.0, beta in -0.5f64..0.8, d in 0.1f64..10.0, gamma in 0.2f64..0.9) {
        let law = StepLawParams { c, alpha, beta, d, gamma };
        let obs = generate_observations(&ObservationSpec::new(law, lattice())).unwrap();
        let lr = fit_lr_law(&obs).unwrap();
        let bs = fit_bs_law(&obs).unwrap();
        prop_assert!((lr.alpha - alpha).abs() < 1e-9);
        prop_assert!((lr.beta - beta).abs() < 1e-9);
        prop_assert!((bs.gamma - gamma).abs() < 1e-9);
        prop_assert!((lr.c() / c - 1.0).abs() < 1e-9);
        prop_assert!((bs.d() / d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nesting_orders_rss(seed in 0u64..1000, sigma in 0.01f64..1.0) {
        let obs = noisy_obs(seed, sigma);
        let full = regress(&[Predictor::LogN, Predictor::LogD], &obs).unwrap();
        for restricted in [[Predictor::LogN], [Predictor::LogD]] {
            let r = regress(&restricted, &obs).unwrap();
            prop_assert!(full.rss <= r.rss * (1.0 + 1e-12));
            prop_assert!(full.r_squared >= r.r_squared - 1e-12);
            let t = nested_f_test(&r, &full).unwrap();
            prop_assert!(t.f_statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&t.p_value));
        }
        for row in &full.coefficients {
            prop_assert_eq!(row.t_value, row.coef / row.std_error);
            prop_assert!(((row.ci[1] - row.coef) - (row.coef - row.ci[0])).abs() <= 1e-12 * row.coef.abs().max(1.0));
        }
    }
}

#[test]
fn bootstrap_reproducible_and_seed_free_on_noiseless_data() {
    let noisy = noisy_obs(3, 0.05);
    let a = bootstrap_fit(&noisy, 200, 11).unwrap();
    let b = bootstrap_fit(&noisy, 200, 11).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let clean = noisy_obs(0, 0.0);
    let single_lr = fit_lr_law(&clean).unwrap();
    let single_bs = fit_bs_law(&clean).unwrap();
    let fits: Vec<_> = [1u64, 2, 99].iter().map(|&s| bootstrap_fit(&clean, 200, s).unwrap()).collect();
    // per-resample QR solves differ from the full-data solve only by rounding
    const TOL: f64 = 1e-12;
    for f in &fits {
        assert!((f.alpha - single_lr.alpha).abs() < TOL);
        assert!((f.beta - single_lr.beta).abs() < TOL);
        assert!((f.gamma - single_bs.gamma).abs() < TOL);
        assert!((f.c / single_lr.c() - 1.0).abs() < TOL * 50.0);
        assert!(f.ci.alpha.width() < TOL && f.ci.gamma.width() < TOL);
        assert!((f.alpha - fits[0].alpha).abs() < TOL);
    }
}

#[test]
fn different_bootstrap_seeds_differ_on_noisy_data() {
    let noisy = noisy_obs(3, 0.05);
    let a = bootstrap_fit(&noisy, 200, 1).unwrap();
    let b = bootstrap_fit(&noisy, 200, 2).unwrap();
    assert_ne!(a.samples, b.samples);
    assert!((a.alpha - b.alpha).abs() < 0.01);
}
