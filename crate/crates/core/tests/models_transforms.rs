use kronvar_core::kron::{kron, min_term_count, Dims, KronTerm, KroneckerSum, DEFAULT_RANK_TOL};
use kronvar_core::linalg::block_diag;
use kronvar_core::models::{
    equal_weights, gvar_overidentification_count, is_stable, mar_param_count, validate_weights, GvarModel,
    MarModel, NoiseSpec, VarModel,
};
use kronvar_core::simulate::MatrixSeries;
use kronvar_core::transforms::{
    cholesky_identify, expand_weights, gvar_embed_mar, gvar_to_structural, mar_to_var, star_series,
    structural_to_reduced,
};
use kronvar_core::KronError;
use kronvar_testkit::{
    companion, mar_param_count_oracle, overidentification_oracle, spectral_radius_oracle, structural_oracle, Gen,
};
use nalgebra::DMatrix;

fn upper_blocks_max(a: &DMatrix<f64>, m: usize, n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for k in i + 1..n {
            worst = worst.max(a.view((i * m, k * m), (m, m)).amax());
        }
    }
    worst
}

#[test]
fn counting_formulas_match_enumeration() {
    for m in 1..=6 {
        for n in 1..=6 {
            let dims = Dims::new(m, n).unwrap();
            for p in 1..=3 {
                assert_eq!(gvar_overidentification_count(dims, p), overidentification_oracle(m, n, p));
            }
            let max = dims.max_terms();
            for j1 in 0..=max.min(4) {
                for j2 in 0..=max.min(3) {
                    let terms = [j1, j2];
                    assert_eq!(mar_param_count(dims, &terms) as i64, mar_param_count_oracle(m, n, &terms));
                }
            }
        }
    }
    assert_eq!(mar_param_count(Dims::new(2, 2).unwrap(), &[1]), 7);
    assert_eq!(mar_param_count(Dims::new(2, 3).unwrap(), &[2, 1]), 34);
    assert_eq!(gvar_overidentification_count(Dims::new(2, 3).unwrap(), 1), 6);
    assert_eq!(gvar_overidentification_count(Dims::new(1, 3).unwrap(), 1), -3);
    for m in 1..=6 {
        assert!(gvar_overidentification_count(Dims::new(m, 2).unwrap(), 1) < 0);
    }
}

#[test]
fn param_count_increases_below_half_the_factor_size() {
    let dims = Dims::new(3, 4).unwrap();
    let half = (9 + 16) as f64 / 2.0;
    for j in 0..dims.max_terms() {
        if (j as f64) < half {
            assert!(mar_param_count(dims, &[j + 1]) > mar_param_count(dims, &[j]) || (j + 1) as f64 >= half);
        }
    }
}

#[test]
fn stability_matches_power_oracle() {
    let dims = Dims::new(2, 2).unwrap();
    let zero = VarModel::new(dims, vec![DMatrix::zeros(4, 4)], DMatrix::identity(4, 4)).unwrap();
    assert!(is_stable(&zero, 0.0));
    let half = VarModel::new(dims, vec![DMatrix::identity(4, 4) * 0.5], DMatrix::identity(4, 4)).unwrap();
    assert!(is_stable(&half, 0.0));
    let unit = VarModel::new(dims, vec![DMatrix::identity(4, 4)], DMatrix::identity(4, 4)).unwrap();
    assert!(!is_stable(&unit, 0.0));

    let mut g = Gen::new(41);
    for _ in 0..20 {
        let dims = g.dims(2, 3);
        let model = g.stable_mar(dims, &[2, 1], 0.9, NoiseSpec::identity(dims));
        let var = mar_to_var(&model).unwrap();
        assert!(is_stable(&var, 0.0));
        let rho = spectral_radius_oracle(&companion(var.coeff_mats()));
        assert!((var.spectral_radius() - rho).abs() < 1e-6, "{} vs {rho}", var.spectral_radius());
    }
}

#[test]
fn weight_validation_rejects_each_violation() {
    let good = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 1.0, 0.0, 0.0, 0.3, 0.7, 0.0]);
    validate_weights(&good, false).unwrap();
    let mut diag = good.clone();
    diag[(0, 0)] = 0.1;
    diag[(0, 1)] = 0.4;
    assert!(validate_weights(&diag, false).is_err());
    let mut neg = good.clone();
    neg[(0, 1)] = -0.5;
    neg[(0, 2)] = 1.5;
    assert!(validate_weights(&neg, false).is_err());
    let mut sum = good.clone();
    sum[(0, 1)] = 0.6;
    assert!(validate_weights(&sum, false).is_err());
    assert!(validate_weights(&good, true).is_err());
    validate_weights(&equal_weights(4, true), true).unwrap();
    validate_weights(&equal_weights(4, false), false).unwrap();

    let dims = Dims::new(2, 3).unwrap();
    let blocks = vec![vec![DMatrix::zeros(2, 2)]; 3];
    let err = GvarModel::new(dims, blocks.clone(), blocks, sum, false, NoiseSpec::block_identity(dims));
    assert!(matches!(err, Err(KronError::InvalidModel(_))));
}

#[test]
fn separable_noise_with_identity_column_factor_has_equal_blocks() {
    let mut g = Gen::new(2);
    let dims = Dims::new(3, 2).unwrap();
    let sigma_r = g.spd(3);
    let cov = NoiseSpec::Separable { sigma_r: sigma_r.clone(), sigma_c: DMatrix::identity(2, 2) }
        .covariance(dims)
        .unwrap();
    assert_eq!(cov, block_diag(&[sigma_r.clone(), sigma_r]));
}

#[test]
fn mar_to_var_sums_kronecker_terms() {
    let mut g = Gen::new(4);
    let dims = Dims::new(2, 3).unwrap();
    let ks = g.kron_sum(dims, 2);
    let direct = kron(&ks.terms()[0].b, &ks.terms()[0].a) + kron(&ks.terms()[1].b, &ks.terms()[1].a);
    let model = MarModel::new(dims, vec![ks], NoiseSpec::identity(dims)).unwrap();
    let var = mar_to_var(&model).unwrap();
    assert!((&var.coeff_mats()[0] - direct).amax() < 1e-12);

    let a = g.matrix(2, 2);
    let single = KroneckerSum::new(dims, vec![KronTerm { a: a.clone(), b: DMatrix::identity(3, 3) }]).unwrap();
    let model = MarModel::new(dims, vec![single], NoiseSpec::identity(dims)).unwrap();
    let var = mar_to_var(&model).unwrap();
    assert!((&var.coeff_mats()[0] - block_diag(&[a.clone(), a.clone(), a])).amax() < 1e-12);
}

#[test]
fn weight_expansion_and_star_series_agree_with_block_loops() {
    let mut g = Gen::new(5);
    let (m, n) = (3, 4);
    let w = g.weights(n, false);
    let big = expand_weights(&w, m);
    for i in 0..n {
        for k in 0..n {
            let expected = DMatrix::<f64>::identity(m, m) * w[(i, k)];
            assert_eq!(big.view((i * m, k * m), (m, m)).into_owned(), expected);
        }
    }
    let dims = Dims::new(m, n).unwrap();
    let y = MatrixSeries::new(dims, (0..5).map(|_| g.matrix(m, n)).collect()).unwrap();
    let star = star_series(&y, &w).unwrap();
    for t in 0..5 {
        let via_vec = &big * y.vectorized(t);
        assert!((star.vectorized(t) - via_vec).amax() < 1e-12);
    }
    // equal weights give averages of the other regions
    let eq = equal_weights(3, false);
    let y = MatrixSeries::new(Dims::new(2, 3).unwrap(), vec![g.matrix(2, 3)]).unwrap();
    let star = star_series(&y, &eq).unwrap();
    let yt = y.get(0);
    for i in 0..3 {
        let others: Vec<usize> = (0..3).filter(|&k| k != i).collect();
        let mean = (yt.column(others[0]) + yt.column(others[1])) / 2.0;
        assert!((star.get(0).column(i) - mean).amax() < 1e-15);
    }
}

#[test]
fn structural_form_matches_block_assembly_and_solve_oracle() {
    let mut g = Gen::new(6);
    for &(triangular, q) in &[(false, 1usize), (true, 2), (false, 0)] {
        let dims = Dims::new(2, 3).unwrap();
        let model = g.stable_gvar(dims, 2, q, triangular, 0.2, 0.8);
        let s = gvar_to_structural(&model);
        let (g0, lags) = structural_oracle(dims, model.a_blocks(), model.b_blocks(), model.weights());
        assert!((&s.g0 - &g0).amax() < 1e-14);
        assert_eq!(s.lag_mats.len(), lags.len());
        for (x, y) in s.lag_mats.iter().zip(&lags) {
            assert!((x - y).amax() < 1e-14);
        }
        for i in 0..3 {
            assert_eq!(s.g0.view((i * 2, i * 2), (2, 2)).into_owned(), DMatrix::identity(2, 2));
        }
        let reduced = structural_to_reduced(&s).unwrap();
        for (phi, l) in reduced.coeff_mats().iter().zip(&lags) {
            let solved = g0.clone().lu().solve(l).unwrap();
            assert!((phi - solved).amax() < 1e-10);
        }
        if triangular {
            assert_eq!(upper_blocks_max(&s.g0, 2, 3), 0.0);
            for l in &s.lag_mats {
                assert_eq!(upper_blocks_max(l, 2, 3), 0.0);
            }
            for phi in reduced.coeff_mats() {
                assert!(upper_blocks_max(phi, 2, 3) < 1e-10);
            }
            let inv = s.g0.clone().try_inverse().unwrap();
            assert!(upper_blocks_max(&inv, 2, 3) < 1e-10);
        }
    }
}

#[test]
fn zero_contemporaneous_blocks_give_identity_g0() {
    let dims = Dims::new(2, 3).unwrap();
    let mut g = Gen::new(7);
    let model = g.stable_gvar(dims, 1, 1, false, 0.0, 0.5);
    let s = gvar_to_structural(&model);
    assert_eq!(s.g0, DMatrix::identity(6, 6));
    let reduced = structural_to_reduced(&s).unwrap();
    assert_eq!(reduced.coeff_mats()[0], s.lag_mats[0]);
}

#[test]
fn singular_g0_reports_condition() {
    let dims = Dims::new(1, 2).unwrap();
    let one = DMatrix::from_element(1, 1, 1.0);
    let a = vec![vec![DMatrix::zeros(1, 1)]; 2];
    let b = vec![vec![one.clone()], vec![one]];
    let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let model = GvarModel::new(dims, a, b, w, false, NoiseSpec::block_identity(dims)).unwrap();
    match structural_to_reduced(&gvar_to_structural(&model)) {
        Err(KronError::SingularG0 { condition }) => assert!(condition > 1e12 || condition.is_infinite()),
        other => panic!("expected SingularG0, got {other:?}"),
    }
}

#[test]
fn term_count_bounds_and_embedding_consistency() {
    let mut g = Gen::new(8);
    for k in 0..60 {
        let dims = g.dims(2, 4);
        let triangular = k % 2 == 0;
        let model = g.stable_gvar(dims, 1, 1, triangular, 0.3, 0.7);
        let s = gvar_to_structural(&model);
        let n = dims.n;
        for l in &s.lag_mats {
            assert!(min_term_count(l, dims, DEFAULT_RANK_TOL).unwrap() <= 2 * n);
        }
        let g0_count = min_term_count(&s.g0, dims, DEFAULT_RANK_TOL).unwrap();
        assert!(g0_count <= n + 1);
        if triangular {
            assert!(g0_count <= n * (n - 1) / 2 + 1);
        }
        let emb = gvar_embed_mar(&model).unwrap();
        let mar = emb.lag_mar(NoiseSpec::identity(dims)).unwrap();
        let var = mar_to_var(&mar).unwrap();
        for (x, y) in var.coeff_mats().iter().zip(&s.lag_mats) {
            assert!((x - y).norm() < 1e-9);
        }
        let e = (emb.g0.materialize() - &s.g0).norm();
        assert!(e < 1e-10, "{e} {dims:?} {triangular} {g0_count} {}", emb.g0.len());
    }
}

#[test]
fn embedding_without_star_lags_is_block_diagonal() {
    let dims = Dims::new(2, 3).unwrap();
    let mut g = Gen::new(9);
    let model = g.stable_gvar(dims, 1, 1, true, 0.3, 0.6);
    let zero_b: Vec<Vec<DMatrix<f64>>> = (0..3).map(|_| vec![DMatrix::zeros(2, 2); 2]).collect();
    let model = GvarModel::new(
        dims,
        model.a_blocks().to_vec(),
        zero_b,
        model.weights().clone(),
        true,
        model.noise().clone(),
    )
    .unwrap();
    let emb = gvar_embed_mar(&model).unwrap();
    assert!(emb.lag_term_counts().iter().all(|&c| c <= 3));
}

#[test]
fn cholesky_identification_round_trip() {
    let mut g = Gen::new(10);
    for _ in 0..40 {
        let dims = g.dims(1, 4);
        let model = g.stable_gvar(dims, 1, 1, true, 0.5, 0.7);
        let s = gvar_to_structural(&model);
        let reduced = structural_to_reduced(&s).unwrap();
        let id = cholesky_identify(reduced.sigma(), dims).unwrap();
        let g0_inv = s.g0.clone().try_inverse().unwrap();
        assert!((&id.g0_inv - &g0_inv).amax() < 1e-8);
        for (blk, sigma) in id.sigma_sqrt_blocks.iter().zip(model.noise_blocks()) {
            let l = sigma.clone().cholesky().unwrap().l();
            assert!((blk - l).amax() < 1e-8);
        }
    }
    let scalar = cholesky_identify(&DMatrix::from_element(1, 1, 4.0), Dims::new(1, 1).unwrap()).unwrap();
    assert_eq!(scalar.g0_inv[(0, 0)], 1.0);
    assert_eq!(scalar.sigma_sqrt_blocks[0][(0, 0)], 2.0);
}
