use kronvar_core::estimate::{
    alternating_gvar, estimate_weights, gvar_regional, mar_als, mar_projection, structural_init, var_ols,
    AlternatingOptions, FitReport, FittedModel, GvarSpec, WeightMethod,
};
use kronvar_core::kron::{Dims, KronTerm, KroneckerSum};
use kronvar_core::models::{equal_weights, validate_weights, GvarModel, MarModel, NoiseSpec, VarModel};
use kronvar_core::simulate::{simulate_gvar, simulate_mar, simulate_var, MatrixSeries};
use kronvar_core::transforms::{gvar_to_structural, mar_to_var, structural_to_reduced};
use kronvar_core::KronError;
use kronvar_testkit::Gen;
use nalgebra::DMatrix;

fn max_block_error(est: &GvarModel, truth: &GvarModel) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..truth.dims().n {
        for j in 1..=truth.p() {
            worst = worst.max((est.a(i, j) - truth.a(i, j)).amax());
        }
        for l in 0..=truth.q() {
            worst = worst.max((est.b(i, l) - truth.b(i, l)).amax());
        }
    }
    worst
}

fn assert_non_increasing(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "trace increased: {trace:?}");
    }
}

fn gvar_fit(report: &FitReport) -> &GvarModel {
    match &report.estimate {
        FittedModel::Gvar(g) => g,
        other => panic!("expected a GVAR estimate, got {}", other.kind()),
    }
}

fn mar_fit(report: &FitReport) -> &MarModel {
    match &report.estimate {
        FittedModel::Mar(m) => m,
        other => panic!("expected a MAR estimate, got {}", other.kind()),
    }
}

/// Triangular three-region DGP whose last region loads 0.7/0.3 on the others.
fn triangular_dgp(m: usize, seed: u64) -> GvarModel {
    let mut g = Gen::new(seed);
    let dims = Dims::new(m, 3).unwrap();
    let base = g.stable_gvar(dims, 1, 1, true, 0.4, 0.6);
    let mut w = DMatrix::zeros(3, 3);
    w[(1, 0)] = 1.0;
    w[(2, 0)] = 0.7;
    w[(2, 1)] = 0.3;
    let noise = NoiseSpec::BlockDiagonal { blocks: vec![DMatrix::identity(m, m); 3] };
    GvarModel::new(dims, base.a_blocks().to_vec(), base.b_blocks().to_vec(), w, true, noise).unwrap()
}

#[test]
fn var_ols_null_model_within_three_standard_errors() {
    let dims = Dims::new(2, 2).unwrap();
    let t = 5000;
    let zero = VarModel::new(dims, vec![DMatrix::zeros(4, 4)], DMatrix::identity(4, 4)).unwrap();
    let y = simulate_var(&zero, t, 0, 1).unwrap();
    let fit = var_ols(&y, 1).unwrap();
    let phi = &fit.estimate.reduced_coefficients().unwrap()[0];
    let mut xtx = DMatrix::zeros(4, 4);
    for s in 0..t - 1 {
        let v = y.vectorized(s);
        xtx += &v * v.transpose();
    }
    let inv = xtx.try_inverse().unwrap();
    for r in 0..4 {
        for c in 0..4 {
            let se = (fit.residual_covariance[(r, r)] * inv[(c, c)]).sqrt();
            assert!(phi[(r, c)].abs() < 3.0 * se, "({r},{c}) = {} se {se}", phi[(r, c)]);
        }
    }
    assert_eq!(fit.residuals.t_len(), t - 1);
    assert!(fit.aic.is_finite() && fit.bic.is_finite());
}

#[test]
fn var_ols_is_consistent_and_rejects_short_samples() {
    let mut g = Gen::new(2);
    let dims = Dims::new(2, 2).unwrap();
    let var = mar_to_var(&g.stable_mar(dims, &[2], 0.8, NoiseSpec::identity(dims))).unwrap();
    let y = simulate_var(&var, 10_000, 500, 3).unwrap();
    let fit = var_ols(&y, 1).unwrap();
    let est = &fit.estimate.reduced_coefficients().unwrap()[0];
    assert!((est - &var.coeff_mats()[0]).amax() < 0.05);

    let short = MatrixSeries::new(dims, y.data()[..4].to_vec()).unwrap();
    assert!(matches!(var_ols(&short, 1), Err(KronError::RankDeficientRegressors(_))));
}

#[test]
fn mar_projection_examples() {
    let mut g = Gen::new(4);
    let dims = Dims::new(2, 3).unwrap();
    let truth = g.stable_mar(dims, &[1], 0.8, NoiseSpec::identity(dims));
    let y = simulate_mar(&truth, 10_000, 500, 5).unwrap();
    let fit = mar_projection(&y, 1, &[1]).unwrap();
    let est = mar_to_var(mar_fit(&fit)).unwrap();
    let true_var = mar_to_var(&truth).unwrap();
    assert!((&est.coeff_mats()[0] - &true_var.coeff_mats()[0]).norm() < 0.05);

    let ols = var_ols(&y, 1).unwrap();
    let full = mar_projection(&y, 1, &[dims.max_terms()]).unwrap();
    let a = &full.estimate.reduced_coefficients().unwrap()[0];
    let b = &ols.estimate.reduced_coefficients().unwrap()[0];
    assert!((a - b).amax() < 1e-10);

    let truth2 = g.stable_mar(dims, &[3], 0.8, NoiseSpec::identity(dims));
    let y2 = simulate_mar(&truth2, 2000, 500, 6).unwrap();
    let small = mar_projection(&y2, 1, &[1]).unwrap();
    assert!(small.rss() > var_ols(&y2, 1).unwrap().rss());
}

#[test]
fn mar_als_examples_and_monotone_trace() {
    let mut g = Gen::new(7);
    let dims = Dims::new(3, 3).unwrap();
    let truth = g.stable_mar(dims, &[2], 0.8, NoiseSpec::identity(dims));
    let y = simulate_mar(&truth, 2000, 500, 8).unwrap();

    let proj = mar_projection(&y, 1, &[2]).unwrap();
    let als = mar_als(&y, 1, &[2], mar_fit(&proj), 1e-10, 200).unwrap();
    assert!(als.rss() <= proj.rss() * (1.0 + 1e-12));
    assert_non_increasing(&als.objective_trace);
    assert!(als.converged);

    // A converged fit is a fixed point: restarting stops after one cycle.
    let again = mar_als(&y, 1, &[2], mar_fit(&als), 1e-8, 200).unwrap();
    assert!(again.converged && again.iterations <= 1);
    assert!((again.rss() - als.rss()).abs() <= 1e-8 * als.rss());

    // Started at the truth, the fit settles within two cycles at a loose tolerance.
    let big = simulate_mar(&truth, 10_000, 500, 9).unwrap();
    let at_truth = mar_als(&big, 1, &[2], &truth, 1e-4, 200).unwrap();
    assert!(at_truth.converged && at_truth.iterations <= 2, "{} iterations", at_truth.iterations);

    let none = mar_als(&y, 1, &[2], &truth, 1e-8, 0).unwrap();
    assert!(!none.converged);
    assert_eq!(none.iterations, 0);
    for (a, b) in mar_fit(&none).coeffs().iter().zip(truth.coeffs()) {
        assert!((a.materialize() - b.materialize()).amax() < 1e-12);
    }
}

#[test]
fn gvar_regional_recovers_triangular_dgp() {
    let truth = triangular_dgp(2, 10);
    let y = simulate_gvar(&truth, 10_000, 500, 11).unwrap();
    let spec = GvarSpec { p: 1, q: 1, triangular: true };
    let fit = gvar_regional(&y, truth.weights(), spec).unwrap();
    assert!(max_block_error(gvar_fit(&fit), &truth) < 0.05);
    assert_eq!(fit.residuals.t_len(), 10_000 - 1);
    assert!(fit.loglik_gaussian.is_finite());
}

#[test]
fn gvar_regional_null_spillovers_and_single_region() {
    let mut g = Gen::new(12);
    let dims = Dims::new(2, 3).unwrap();
    let base = g.stable_gvar(dims, 1, 1, false, 0.0, 0.6);
    let zero_b = (0..3).map(|_| vec![DMatrix::zeros(2, 2); 2]).collect();
    let truth =
        GvarModel::new(dims, base.a_blocks().to_vec(), zero_b, base.weights().clone(), false, base.noise().clone())
            .unwrap();
    let y = simulate_gvar(&truth, 10_000, 500, 13).unwrap();
    let fit = gvar_regional(&y, truth.weights(), GvarSpec { p: 1, q: 1, triangular: false }).unwrap();
    let est = gvar_fit(&fit);
    for i in 0..3 {
        for l in 0..=1 {
            assert!(est.b(i, l).amax() < 0.05);
        }
    }

    let one = Dims::new(3, 1).unwrap();
    let var = mar_to_var(&g.stable_mar(one, &[1], 0.7, NoiseSpec::identity(one))).unwrap();
    let y = simulate_var(&var, 500, 100, 14).unwrap();
    let regional = gvar_regional(&y, &DMatrix::zeros(1, 1), GvarSpec { p: 2, q: 0, triangular: false }).unwrap();
    let ols = var_ols(&y, 2).unwrap();
    let a = regional.estimate.reduced_coefficients().unwrap();
    let b = ols.estimate.reduced_coefficients().unwrap();
    for (x, z) in a.iter().zip(&b) {
        assert!((x - z).amax() < 1e-10);
    }
}

#[test]
fn weight_estimation_examples() {
    let truth = triangular_dgp(2, 15);
    let y = simulate_gvar(&truth, 10_000, 500, 16).unwrap();
    let w = estimate_weights(&y, &truth, WeightMethod::Gls).unwrap();
    assert!((&w - truth.weights()).amax() < 0.05);
    validate_weights(&w, true).unwrap();

    let ls = estimate_weights(&y, &truth, WeightMethod::Ls).unwrap();
    assert!((&ls - &w).amax() < 1e-8, "identity noise blocks make GLS and LS coincide");

    let iv = estimate_weights(&y, &truth, WeightMethod::Iv).unwrap();
    validate_weights(&iv, true).unwrap();

    // two regions: the simplex leaves no freedom
    let mut g = Gen::new(17);
    let dims = Dims::new(2, 2).unwrap();
    let model = g.stable_gvar(dims, 1, 0, false, 0.2, 0.6);
    let y = simulate_gvar(&model, 300, 100, 18).unwrap();
    for method in [WeightMethod::Ls, WeightMethod::Gls, WeightMethod::Iv] {
        let w = estimate_weights(&y, &model, method).unwrap();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }
}

#[test]
fn alternating_recovers_weights_from_equal_start() {
    let truth = triangular_dgp(2, 19);
    let y = simulate_gvar(&truth, 10_000, 500, 20).unwrap();
    let spec = GvarSpec { p: 1, q: 1, triangular: true };
    for method in [WeightMethod::Gls, WeightMethod::Ls] {
        let opts = AlternatingOptions { method, ..Default::default() };
        let fit = alternating_gvar(&y, &equal_weights(3, true), spec, opts).unwrap();
        let est = gvar_fit(&fit);
        assert!((est.weights() - truth.weights()).amax() < 0.05, "{method}: {}", est.weights());
        validate_weights(est.weights(), true).unwrap();
        assert_non_increasing(&fit.objective_trace);
        assert!(fit.converged);
    }
}

#[test]
fn alternating_iteration_accounting_and_start_at_truth() {
    let truth = triangular_dgp(2, 21);
    let y = simulate_gvar(&truth, 5000, 500, 22).unwrap();
    let spec = GvarSpec { p: 1, q: 1, triangular: true };
    let one = AlternatingOptions { max_iter: 1, ..Default::default() };
    let fit = alternating_gvar(&y, &equal_weights(3, true), spec, one).unwrap();
    assert_eq!(fit.iterations, 1);
    assert_eq!(fit.objective_trace.len(), 2);

    let full = alternating_gvar(&y, truth.weights(), spec, AlternatingOptions::default()).unwrap();
    let first = alternating_gvar(&y, truth.weights(), spec, one).unwrap();
    let fixed_point = *full.objective_trace.last().unwrap();
    let after_first = *first.objective_trace.last().unwrap();
    assert!((after_first - fixed_point).abs() <= 1e-3 * fixed_point.abs().max(1.0));
}

#[test]
fn projection_dominance_in_sample() {
    let truth = triangular_dgp(2, 23);
    let y = simulate_gvar(&truth, 400, 200, 24).unwrap();
    let ols = var_ols(&y, 1).unwrap().rss();
    let proj = mar_projection(&y, 1, &[4]).unwrap().rss();
    // GVAR residuals are structural; compare reduced-form residuals instead.
    let gvar_fit = gvar_regional(&y, truth.weights(), GvarSpec { p: 1, q: 1, triangular: true }).unwrap();
    let phi = &gvar_fit.estimate.reduced_coefficients().unwrap()[0];
    let gvar: f64 = (1..y.t_len()).map(|t| (y.vectorized(t) - phi * y.vectorized(t - 1)).norm_squared()).sum();
    assert!(ols <= proj);
    assert!(ols <= gvar);
}

fn exact_fit(model: &GvarModel, y: &MatrixSeries) -> FitReport {
    let reduced = structural_to_reduced(&gvar_to_structural(model)).unwrap();
    let dims = model.dims();
    let lag = reduced.p();
    let residuals = MatrixSeries::new(dims, vec![DMatrix::zeros(dims.m, dims.n); y.t_len() - lag]).unwrap();
    FitReport {
        estimate: FittedModel::Var(reduced),
        residuals,
        residual_covariance: DMatrix::zeros(dims.mn(), dims.mn()),
        loglik_gaussian: 0.0,
        aic: 0.0,
        bic: 0.0,
        n_params: 0,
        iterations: 0,
        converged: true,
        objective_trace: Vec::new(),
    }
}

#[test]
fn structural_init_recovers_exact_blocks_with_known_weights() {
    let mut g = Gen::new(25);
    for (m, p) in [(2usize, 1usize), (3, 1), (2, 2)] {
        let dims = Dims::new(m, 3).unwrap();
        let truth = g.stable_gvar(dims, p, p, false, 0.3, 0.7);
        let y = simulate_gvar(&truth, 100, 50, 26).unwrap();
        let fit = exact_fit(&truth, &y);
        let est = structural_init(&y, &fit, Some(truth.weights()), p, false).unwrap();
        assert!(max_block_error(&est, &truth) < 1e-8, "m={m} p={p}: {}", max_block_error(&est, &truth));
        assert_eq!(est.weights(), truth.weights());
    }
}

#[test]
fn structural_init_with_unknown_weights_recovers_exact_model() {
    // Without residuals the moment conditions vanish, and at p = 1 the lag
    // equations alone (p·m·mn = 12 per region) only match the block unknowns
    // (3m² = 12), so the weights are identified from two lags onwards.
    let mut g = Gen::new(27);
    let dims = Dims::new(2, 3).unwrap();
    let truth = g.stable_gvar(dims, 2, 2, false, 0.3, 0.7);
    let y = simulate_gvar(&truth, 100, 50, 28).unwrap();
    let est = structural_init(&y, &exact_fit(&truth, &y), None, 2, false).unwrap();
    validate_weights(est.weights(), false).unwrap();
    assert!((est.weights() - truth.weights()).amax() < 1e-6, "{}", est.weights());
    assert!(max_block_error(&est, &truth) < 1e-6);
}

#[test]
fn structural_init_decoupled_and_underidentified_cases() {
    let mut g = Gen::new(29);
    let dims = Dims::new(2, 3).unwrap();
    let blocks: Vec<DMatrix<f64>> = (0..3).map(|_| g.matrix(2, 2) * 0.3).collect();
    let mut phi = DMatrix::zeros(6, 6);
    for (i, b) in blocks.iter().enumerate() {
        phi.view_mut((i * 2, i * 2), (2, 2)).copy_from(b);
    }
    let reduced = VarModel::new(dims, vec![phi], DMatrix::identity(6, 6)).unwrap();
    let y = simulate_var(&reduced, 200, 50, 30).unwrap();
    let mut fit = var_ols(&y, 1).unwrap();
    fit.estimate = FittedModel::Var(reduced);
    let est = structural_init(&y, &fit, Some(&equal_weights(3, false)), 1, false).unwrap();
    for i in 0..3 {
        assert!((est.a(i, 1) - &blocks[i]).amax() < 1e-8);
        assert!(est.b(i, 0).amax() < 1e-8 && est.b(i, 1).amax() < 1e-8);
    }

    let two = Dims::new(3, 2).unwrap();
    let model = g.stable_gvar(two, 1, 1, false, 0.2, 0.6);
    let y = simulate_gvar(&model, 300, 50, 31).unwrap();
    let fit = mar_projection(&y, 1, &[4]).unwrap();
    assert_eq!(structural_init(&y, &fit, None, 1, false).unwrap_err(), KronError::IdentificationDeficit { count: -2 });
}

#[test]
fn structural_init_from_noisy_mar_fit_is_feasible() {
    let truth = triangular_dgp(3, 32);
    let y = simulate_gvar(&truth, 2000, 500, 33).unwrap();
    let fit = mar_projection(&y, 1, &[6]).unwrap();
    let est = structural_init(&y, &fit, None, 1, true).unwrap();
    validate_weights(est.weights(), true).unwrap();
    est.noise().validate(est.dims()).unwrap();
}

#[test]
fn kronecker_sum_helper_terms_are_unchanged_by_estimation_inputs() {
    // mar_projection never alters the data it is given
    let dims = Dims::new(2, 2).unwrap();
    let term = KronTerm { a: DMatrix::identity(2, 2) * 0.5, b: DMatrix::identity(2, 2) };
    let model = MarModel::new(dims, vec![KroneckerSum::new(dims, vec![term]).unwrap()], NoiseSpec::identity(dims))
        .unwrap();
    let y = simulate_mar(&model, 300, 50, 34).unwrap();
    let copy = y.clone();
    mar_projection(&y, 1, &[1]).unwrap();
    assert_eq!(y, copy);
}
