mod common;

use common::oracle::{abs_cosine, gaussian, ols_fit, rng, svd_pca};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sensolab_core::dataset::{auto_labels, Dataset, Role};
use sensolab_core::latent::{
    correlation_loadings, fit_pca, fit_pcr, fit_plsr, fit_validated, loo_validate, Block, ModelKind, PlotPayload,
    PreprocessSpec,
};
use sensolab_core::Error;

fn block(m: DMatrix<f64>) -> Block {
    let (r, c) = m.shape();
    Block::new(m, auto_labels("R", r), auto_labels("C", c)).unwrap()
}

const RAW: PreprocessSpec = PreprocessSpec { standardise: false };
const STD: PreprocessSpec = PreprocessSpec { standardise: true };

#[test]
fn pca_matches_svd_on_random_matrices() {
    let mut r = rng(7);
    for case in 0..50 {
        let (j, k) = (2 + case % 19, 2 + (case * 7) % 19);
        let x = gaussian(&mut r, j, k);
        let a = j.min(k) - 1;
        let m = fit_pca(&block(x.clone()), RAW, a).unwrap();
        let (v, ev) = svd_pca(&x);
        for c in 0..a {
            let cos = abs_cosine(&m.x_loadings.column(c).clone_owned(), &v.column(c).clone_owned());
            assert!(cos >= 1.0 - 1e-8, "case {case} comp {c}: {cos}");
            assert!((m.calib_explvar_x[c] - ev[c]).abs() < 1e-8, "case {case} comp {c}");
        }
    }
}

#[test]
fn rank_one_data_is_fully_explained() {
    let t = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.5]);
    let p = DVector::from_vec(vec![0.6, 0.8, 0.0]);
    let m = fit_pca(&block(&t * p.transpose()), RAW, 1).unwrap();
    assert!((m.calib_explvar_x[0] - 100.0).abs() < 1e-9);
}

#[test]
fn zero_variance_column_is_excluded_and_reported() {
    let x = DMatrix::from_row_slice(4, 3, &[1.0, 4.0, 2.0, 2.0, 4.0, 0.0, 3.0, 4.0, 5.0, 5.0, 4.0, 1.0]);
    let m = fit_pca(&block(x), STD, 2).unwrap();
    assert_eq!(m.excluded_x_vars(), vec!["C2".to_string()]);
    assert_eq!(m.x_loadings.nrows(), 2);
    assert_eq!(m.export().excluded_x_vars, vec!["C2".to_string()]);
}

#[test]
fn missing_cells_are_refused() {
    let cells = sensolab_core::dataset::CellMatrix::from_rows(vec![
        vec![Some(1.0), Some(2.0)],
        vec![None, Some(3.0)],
        vec![Some(2.0), Some(1.0)],
    ])
    .unwrap();
    let d = Dataset::new("x", Role::Descriptive, cells, auto_labels("R", 3), auto_labels("C", 2)).unwrap();
    let err = Block::from_dataset(&d).unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
    assert_eq!(err.to_string(), "missing values present at (2,1)");
}

#[test]
fn plsr_on_exact_linear_relation() {
    let mut r = rng(3);
    let x = gaussian(&mut r, 8, 3);
    let y = DMatrix::from_fn(8, 1, |i, _| 2.0 * x[(i, 0)]);
    let m = fit_plsr(&block(x), &block(y), RAW, RAW, 1).unwrap();
    // y is not in the span of the first weight unless X has a single column,
    // so check the whole model at full rank instead
    assert!(m.calib_explvar_y[0] > 0.0);
    let x1 = gaussian(&mut r, 8, 1);
    let y1 = DMatrix::from_fn(8, 1, |i, _| 2.0 * x1[(i, 0)]);
    let m = fit_plsr(&block(x1), &block(y1), RAW, RAW, 1).unwrap();
    assert!((m.calib_explvar_y[0] - 100.0).abs() < 1e-9);
}

#[test]
fn plsr_first_weight_is_parallel_to_xty() {
    let mut r = rng(11);
    for _ in 0..20 {
        let x = gaussian(&mut r, 10, 4);
        let y = gaussian(&mut r, 10, 1);
        let m = fit_plsr(&block(x.clone()), &block(y.clone()), RAW, RAW, 2).unwrap();
        let xc = common::oracle::center(&x);
        let yc = common::oracle::center(&y);
        let xty = (xc.transpose() * yc).column(0).clone_owned();
        let w = m.x_weights.as_ref().unwrap().column(0).clone_owned();
        assert!(abs_cosine(&w, &xty) >= 1.0 - 1e-10);
    }
}

#[test]
fn plsr_self_regression_matches_pca() {
    let mut r = rng(5);
    let x = gaussian(&mut r, 9, 4);
    let pls = fit_plsr(&block(x.clone()), &block(x.clone()), RAW, RAW, 3).unwrap();
    let pca = fit_pca(&block(x), RAW, 3).unwrap();
    for a in 0..3 {
        let cos = abs_cosine(&pls.x_scores.column(a).clone_owned(), &pca.x_scores.column(a).clone_owned());
        assert!(cos >= 1.0 - 1e-8, "component {a}: {cos}");
        let ratio = pls.x_scores.column(a).norm() / pca.x_scores.column(a).norm();
        assert!((ratio - 1.0).abs() < 1e-6);
    }
}

#[test]
fn plsr_self_regression_scores_match_svd() {
    // this matrix drives the third weight's shifted solve to an exactly
    // singular pivot
    let mut r = rng(500);
    let x = gaussian(&mut r, 9, 4);
    let pls = fit_plsr(&block(x.clone()), &block(x.clone()), RAW, RAW, 3).unwrap();
    let svd = common::oracle::center(&x).svd(true, false);
    let u = svd.u.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    for (a, &k) in order.iter().take(3).enumerate() {
        let want = u.column(k) * svd.singular_values[k];
        let got = pls.x_scores.column(a).clone_owned();
        let got = &got * got.dot(&want).signum();
        assert!((got - want).abs().max() < 1e-12, "component {a}");
    }
}

#[test]
fn pcr_full_rank_equals_ols() {
    let mut r = rng(17);
    for _ in 0..10 {
        let x = gaussian(&mut r, 12, 4);
        let y = gaussian(&mut r, 12, 2);
        let m = fit_pcr(&block(x.clone()), &block(y.clone()), RAW, RAW, 4).unwrap();
        let ols = ols_fit(&x, &y);
        assert!((&m.y_reconstructions[3] - ols).abs().max() < 1e-8);
    }
}

#[test]
fn pcr_orthogonal_y_explains_nothing() {
    let x = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
    let y = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, -1.0, -1.0]);
    let m = fit_pcr(&block(x), &block(y), RAW, RAW, 1).unwrap();
    assert!(m.calib_explvar_y[0].abs() < 1e-12);
}

#[test]
fn pcr_scores_are_pca_scores() {
    let mut r = rng(23);
    let x = gaussian(&mut r, 7, 3);
    let y = gaussian(&mut r, 7, 2);
    let pcr = fit_pcr(&block(x.clone()), &block(y), STD, RAW, 3).unwrap();
    let pca = fit_pca(&block(x), STD, 3).unwrap();
    assert_eq!(pcr.x_scores, pca.x_scores);
}

#[test]
fn duplicated_rank_one_rows_have_zero_press() {
    let base = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
    let x = DMatrix::from_fn(6, 2, |i, j| base[(i / 2, j)]);
    let v = loo_validate(ModelKind::Pca, &x, None, RAW, RAW, 1).unwrap();
    assert!((v.valid_explvar_x[0] - 100.0).abs() < 1e-9);
    assert!(v.rmse_cv.max() < 1e-9);
}

#[test]
fn noise_validates_below_calibration() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let x = gaussian(&mut r, 10, 6);
        let m = fit_validated(ModelKind::Pca, &block(x), None, STD, RAW, 4).unwrap();
        let v = m.validation.as_ref().unwrap();
        for a in 0..4 {
            assert!(v.valid_explvar_x[a] <= m.calib_explvar_x[a] + 1e-9, "seed {seed} comp {a}");
        }
    }
}

#[test]
fn correlation_loadings_of_rank_two_data_lie_on_the_unit_circle() {
    let x = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, -2.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    let m = fit_pca(&block(x.clone()), RAW, 2).unwrap();
    for e in &m.x_corr_loadings.explained {
        assert!((e - 1.0).abs() < 1e-12);
    }
    let c = correlation_loadings(&x, &m.x_scores, &auto_labels("C", 2));
    assert_eq!(c.values, m.x_corr_loadings.values);
}

#[test]
fn plots_and_export_serialise() {
    let mut r = rng(1);
    let x = gaussian(&mut r, 6, 3);
    let m = fit_validated(ModelKind::Pca, &block(x), None, RAW, RAW, 2).unwrap();
    for name in PlotPayload::NAMES {
        let p = m.plot(name).unwrap();
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["plot"], name);
    }
    let PlotPayload::CorrLoadings { ring_radii, .. } = m.plot("corr_loadings").unwrap() else {
        panic!()
    };
    assert!((ring_radii[0] - 0.5f64.sqrt()).abs() < 1e-15);
    assert!(m.plot("biplot").is_err());
    let back: sensolab_core::latent::ModelExport = serde_json::from_str(&m.to_json()).unwrap();
    assert_eq!(back, m.export());
}

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = DMatrix<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_loadings_orthonormal_and_scores_orthogonal(x in matrix(3..12, 2..8)) {
        let a = (x.nrows()).min(x.ncols());
        let m = fit_pca(&block(x), RAW, a).unwrap();
        let gram = m.x_loadings.transpose() * &m.x_loadings;
        prop_assert!((gram - DMatrix::identity(a, a)).abs().max() < 1e-8);
        for i in 0..a {
            for j in 0..i {
                let (ti, tj) = (m.x_scores.column(i), m.x_scores.column(j));
                prop_assert!(ti.dot(&tj).abs() <= 1e-8 * ti.norm() * tj.norm() + 1e-12);
            }
        }
        for w in m.calib_explvar_x.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        prop_assert!(m.calib_explvar_x.iter().all(|&e| e <= 100.0 + 1e-9));
        prop_assert!(m.x_corr_loadings.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn standardised_pca_ignores_positive_column_scaling(
        x in matrix(4..10, 2..6),
        factors in prop::collection::vec(0.1f64..20.0, 6),
    ) {
        let scaled = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * factors[j]);
        let a = 2.min(x.ncols());
        let (Ok(m1), Ok(m2)) = (fit_pca(&block(x), STD, a), fit_pca(&block(scaled), STD, a)) else {
            return Ok(());
        };
        for c in 0..a {
            prop_assert!((m1.calib_explvar_x[c] - m2.calib_explvar_x[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn full_rank_reaches_one_hundred_percent(x in matrix(3..9, 2..6)) {
        let c = common::oracle::center(&x);
        let rank = c.rank(1e-9 * c.norm().max(1.0));
        prop_assume!(rank >= 1);
        let m = fit_pca(&block(x), RAW, rank).unwrap();
        prop_assert!((m.calib_explvar_x[rank - 1] - 100.0).abs() < 1e-8);
    }
}

