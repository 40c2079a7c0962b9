use kronvar_core::kron::{
    inverse_rearrange, kron, min_term_count, nkp_decompose, nkp_decompose_with, normalize_identifiable,
    rearrange, Dims, KronTerm, KroneckerSum, NkpOptions, DEFAULT_RANK_TOL,
};
use kronvar_core::linalg::vec;
use kronvar_core::KronError;
use kronvar_testkit::{kron_oracle, rearrange_oracle, tail_energy_oracle, truncated_svd_oracle, Gen};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn small_dims() -> impl Strategy<Value = Dims> {
    (1usize..=4, 1usize..=4).prop_map(|(m, n)| Dims::new(m, n).unwrap())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn square_for(dims: Dims) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(dims.mn(), dims.mn())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rearrangement_round_trip_is_exact((dims, c) in small_dims().prop_flat_map(|d| (Just(d), square_for(d)))) {
        let r = rearrange(&c, dims).unwrap();
        prop_assert_eq!(&r, &rearrange_oracle(&c, dims.m, dims.n));
        prop_assert_eq!(inverse_rearrange(&r, dims).unwrap(), c);
    }

    #[test]
    fn rearrangement_is_linear(
        (dims, c1, c2) in small_dims().prop_flat_map(|d| (Just(d), square_for(d), square_for(d))),
        alpha in prop::sample::select(vec![-2.0, -0.5, 0.25, 1.0, 3.0]),
        beta in prop::sample::select(vec![-1.0, 0.5, 2.0, 4.0]),
    ) {
        let lhs = rearrange(&(&c1 * alpha + &c2 * beta), dims).unwrap();
        let rhs = rearrange(&c1, dims).unwrap() * alpha + rearrange(&c2, dims).unwrap() * beta;
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn rearranged_kron_is_rank_one_outer_product(
        (dims, a, b) in small_dims().prop_flat_map(|d| (Just(d), matrix(d.m, d.m), matrix(d.n, d.n)))
    ) {
        let k = kron(&b, &a);
        prop_assert_eq!(&k, &kron_oracle(&b, &a));
        prop_assert_eq!(rearrange(&k, dims).unwrap(), vec(&a) * vec(&b).transpose());
    }

    #[test]
    fn nkp_error_is_tail_singular_energy((dims, c) in small_dims().prop_flat_map(|d| (Just(d), square_for(d)))) {
        let scale = c.norm().max(1.0);
        for j in 1..=dims.max_terms() {
            let d = nkp_decompose_with(&c, dims, j, NkpOptions::default()).unwrap();
            let err = (&c - d.sum.materialize()).norm();
            let tail = tail_energy_oracle(&c, dims.m, dims.n, j);
            prop_assert!((err - tail).abs() <= 1e-10 * scale, "j={} err={} tail={}", j, err, tail);
        }
    }

    #[test]
    fn equal_materializations_normalize_identically(seed in any::<u64>(), j in 1usize..=3) {
        let mut g = Gen::new(seed);
        let dims = Dims::new(3, 3).unwrap();
        let ks = g.kron_sum(dims, j);
        // An invertible mixing of the terms leaves the materialization unchanged.
        let mix = g.matrix(j, j) + DMatrix::identity(j, j) * 3.0;
        let inv_t = mix.clone().try_inverse().unwrap().transpose();
        let terms = (0..j)
            .map(|k| {
                let mut a = DMatrix::zeros(3, 3);
                let mut b = DMatrix::zeros(3, 3);
                for l in 0..j {
                    a += &ks.terms()[l].a * mix[(l, k)];
                    b += &ks.terms()[l].b * inv_t[(l, k)];
                }
                KronTerm { a, b }
            })
            .collect();
        let other = KroneckerSum::new(dims, terms).unwrap();
        prop_assert!((ks.materialize() - other.materialize()).norm() <= 1e-10 * ks.materialize().norm());
        let (_, s1) = normalize_identifiable(&ks).unwrap();
        let (_, s2) = normalize_identifiable(&other).unwrap();
        prop_assert!((&s1.a_stack - &s2.a_stack).amax() <= 1e-10);
        prop_assert!((&s1.b_stack - &s2.b_stack).amax() <= 1e-10 * s1.b_stack.amax().max(1.0));
    }
}

#[test]
fn kron_documented_entries() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let b = DMatrix::from_row_slice(2, 2, &[5.0, 6.0, 7.0, 8.0]);
    let k = kron(&b, &a);
    assert_eq!(k, kron_oracle(&b, &a));
    assert_eq!(k[(0, 0)], 5.0);
    assert_eq!(k[(2, 2)], 8.0);
}

#[test]
fn rearrange_random_6x6_matches_permutation_oracle() {
    let dims = Dims::new(2, 3).unwrap();
    let c = Gen::new(11).matrix(6, 6);
    let r = rearrange(&c, dims).unwrap();
    assert_eq!(r, rearrange_oracle(&c, 2, 3));
    assert_eq!(inverse_rearrange(&r, dims).unwrap(), c);
}

#[test]
fn inverse_rearrange_of_outer_product_is_kron() {
    let mut g = Gen::new(3);
    let dims = Dims::new(2, 3).unwrap();
    let a = g.matrix(2, 2);
    let b = g.matrix(3, 3);
    assert_eq!(inverse_rearrange(&(vec(&a) * vec(&b).transpose()), dims).unwrap(), kron(&b, &a));
}

#[test]
fn nkp_recovers_two_term_sum_like_truncated_svd() {
    let mut g = Gen::new(5);
    let dims = Dims::new(3, 2).unwrap();
    let c = g.kron_sum(dims, 2).materialize();
    let approx = nkp_decompose(&c, dims, 2, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(approx.len(), 2);
    assert!((approx.materialize() - &c).norm() < 1e-10);
    let oracle = inverse_rearrange(&truncated_svd_oracle(&rearrange_oracle(&c, 3, 2), 2), dims).unwrap();
    assert!((approx.materialize() - oracle).norm() < 1e-10);
}

#[test]
fn nkp_rank_one_exact_and_full_rank_exact() {
    let mut g = Gen::new(8);
    let dims = Dims::new(2, 3).unwrap();
    let a = g.matrix(2, 2);
    let b = g.matrix(3, 3);
    let c = kron(&b, &a);
    let one = nkp_decompose(&c, dims, 1, DEFAULT_RANK_TOL).unwrap();
    assert!((one.materialize() - &c).norm() < 1e-12 * c.norm());

    let c = g.matrix(6, 6);
    let full = nkp_decompose(&c, dims, dims.max_terms(), DEFAULT_RANK_TOL).unwrap();
    assert!((full.materialize() - &c).norm() < 1e-12 * c.norm());
}

#[test]
fn strict_mode_rejects_more_terms_than_rank() {
    let mut g = Gen::new(9);
    let dims = Dims::new(2, 2).unwrap();
    let c = kron(&g.matrix(2, 2), &g.matrix(2, 2));
    let err = nkp_decompose_with(&c, dims, 2, NkpOptions { tol: 1e-10, strict: true }).unwrap_err();
    assert_eq!(err, KronError::RankDeficient { requested: 2, rank: 1 });
    assert!(matches!(nkp_decompose(&c, dims, 5, 1e-10), Err(KronError::InvalidTermCount { requested: 5, max: 4 })));
}

#[test]
fn normalization_invariants_for_random_sums() {
    let mut g = Gen::new(21);
    for _ in 0..50 {
        let dims = Dims::new(g.int(2, 4), g.int(2, 4)).unwrap();
        let j = g.int(1, 3);
        let ks = g.kron_sum(dims, j);
        let (norm, stacks) = normalize_identifiable(&ks).unwrap();
        let scale = ks.materialize().norm();
        assert!((norm.materialize() - ks.materialize()).norm() <= 1e-12 * scale.max(1.0) * 10.0);

        assert!((stacks.a_stack.transpose() * &stacks.a_stack - DMatrix::identity(j, j)).amax() < 1e-12);
        let bt = stacks.b_stack.transpose();
        for r in 0..j {
            assert!(bt[(r, r)] > 0.0);
            for c in 0..r {
                assert_eq!(bt[(r, c)], 0.0);
            }
        }
        let (again, stacks2) = normalize_identifiable(&norm).unwrap();
        for (t1, t2) in norm.terms().iter().zip(again.terms()) {
            assert!((&t1.a - &t2.a).amax() < 1e-12);
            assert!((&t1.b - &t2.b).amax() < 1e-12 * t1.b.amax().max(1.0));
        }
        assert_eq!(stacks.pivots, stacks2.pivots);
    }
}

#[test]
fn structured_term_counts() {
    let mut g = Gen::new(31);
    let dims = Dims::new(3, 3).unwrap();
    // lower block triangular
    let mut c = g.matrix(9, 9);
    for i in 0..3 {
        for j in i + 1..3 {
            c.view_mut((i * 3, j * 3), (3, 3)).fill(0.0);
        }
    }
    assert!(min_term_count(&c, dims, DEFAULT_RANK_TOL).unwrap() <= 6);
    // block diagonal with distinct generic blocks
    let mut d = DMatrix::zeros(9, 9);
    for i in 0..3 {
        d.view_mut((i * 3, i * 3), (3, 3)).copy_from(&g.matrix(3, 3));
    }
    assert_eq!(min_term_count(&d, dims, DEFAULT_RANK_TOL).unwrap(), 3);
    assert_eq!(min_term_count(&kron(&g.matrix(3, 3), &g.matrix(3, 3)), dims, DEFAULT_RANK_TOL).unwrap(), 1);
}
