mod common;

use common::lmm::{classical, liking_dataset, Sim};
use nalgebra::{dmatrix, DMatrix};
use proptest::prelude::*;
use sensolab_core::conjoint::{
    analyze, bonferroni, build_terms, fit_reml, melt, test_random, ConjointOptions, EffectPlot, LongTable, Structure,
};
use sensolab_core::dataset::{Dataset, Role};

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn two_factor_long(sim: &Sim, seed: u64) -> (DMatrix<f64>, LongTable) {
    let y = sim.liking(seed);
    let long = melt(&liking_dataset(&y), &sim.design(), None).unwrap();
    (y, long)
}

#[test]
fn balanced_two_factor_matches_classical_anova() {
    let sim = Sim::two_factor(20, 3, 2);
    for seed in 0..5 {
        let (y, long) = two_factor_long(&sim, seed);
        let oracle = classical(&y, 3, 2);
        assert!(oracle.var_c > 0.0 && oracle.var_ca > 0.0 && oracle.var_cb > 0.0, "{oracle:?}");
        let spec = build_terms(&names(&["A", "B"]), Structure::Struct2).unwrap();
        let fit = fit_reml(&long, &spec).unwrap();
        assert_eq!(
            fit.variance_components.iter().map(|v| v.term.as_str()).collect::<Vec<_>>(),
            ["Consumer", "A:Consumer", "B:Consumer"]
        );
        assert_eq!(fit.merged_random.len(), 1);
        let vc: Vec<f64> = fit.variance_components.iter().map(|v| v.variance).collect();
        assert!((vc[0] - oracle.var_c).abs() < 1e-7, "{vc:?} {oracle:?}");
        assert!((vc[1] - oracle.var_ca).abs() < 1e-7);
        assert!((vc[2] - oracle.var_cb).abs() < 1e-7);

        let anova = fit.anova_fixed().unwrap();
        let expect = [(oracle.f_a, oracle.df_a), (oracle.f_b, oracle.df_b), (oracle.f_ab, oracle.df_ab)];
        for (row, (f, df)) in anova.iter().zip(expect) {
            assert!((row.f_value - f).abs() < 1e-6, "{}: {} vs {f}", row.term, row.f_value);
            assert!((row.den_df - df).abs() < 1e-3, "{}: {} vs {df}", row.term, row.den_df);
        }
        let ls = fit.ls_means("A").unwrap();
        for (r, m) in ls.iter().zip(&oracle.mean_a) {
            assert!((r.estimate - m).abs() < 1e-9);
            assert!(r.lower < r.estimate && r.estimate < r.upper);
        }
        let ls = fit.ls_means("A:B").unwrap();
        assert_eq!(ls[1].label, "A:B  2 1");
        assert!((ls[1].estimate - oracle.mean_ab[1][0]).abs() < 1e-9);
    }
}

#[test]
fn shift_and_permutation_invariance() {
    let sim = Sim::two_factor(12, 3, 2);
    let (_, long) = two_factor_long(&sim, 7);
    let spec = build_terms(&names(&["A", "B"]), Structure::Struct2).unwrap();
    let opts = ConjointOptions::default();
    let base = analyze("y", &long, &spec, opts).unwrap();

    let shifted = long.with_response(long.response.iter().map(|v| v + 3.5).collect()).unwrap();
    let s = analyze("y", &shifted, &spec, opts).unwrap();
    for (a, b) in base.tables.ls_means.iter().zip(&s.tables.ls_means) {
        assert!((b.estimate - a.estimate - 3.5).abs() < 1e-9);
    }
    for (a, b) in base.tables.fixed_anova.iter().zip(&s.tables.fixed_anova) {
        assert!((a.f_value - b.f_value).abs() < 1e-9 && (a.p_value - b.p_value).abs() < 1e-9);
    }
    for (a, b) in base.tables.random_tests.iter().zip(&s.tables.random_tests) {
        assert!((a.chi_sq - b.chi_sq).abs() < 1e-9 && (a.p_value - b.p_value).abs() < 1e-9);
    }

    let n = long.len();
    let order: Vec<usize> = (0..n).map(|i| (i * 37 + 11) % n).collect();
    let p = analyze("y", &long.permuted(&order), &spec, opts).unwrap();
    for (a, b) in base.tables.fixed_anova.iter().zip(&p.tables.fixed_anova) {
        assert!((a.f_value - b.f_value).abs() < 1e-10 && (a.den_df - b.den_df).abs() < 1e-10);
    }
    for (a, b) in base.tables.pairwise.iter().zip(&p.tables.pairwise) {
        assert!((a.estimate - b.estimate).abs() < 1e-10 && (a.p_value - b.p_value).abs() < 1e-10);
    }
}

#[test]
fn random_lr_tests_and_elimination() {
    let mut sim = Sim::two_factor(30, 4, 2);
    sim.sd_ca = 1.0;
    sim.sd_cb = 0.0;
    let (_, long) = two_factor_long(&sim, 3);
    let spec = build_terms(&names(&["A", "B"]), Structure::Struct1).unwrap();
    let fit = fit_reml(&long, &spec).unwrap();
    let red = test_random(&fit, &long, 0.1, true).unwrap();
    let row = |t: &str| red.rows.iter().find(|r| r.term == t).unwrap().clone();
    assert!(row("A:Consumer").p_value < 0.001);
    assert_eq!(row("A:Consumer").eliminated, None);
    assert_eq!(red.rows.last().unwrap().term, "Consumer");
    assert!(red.rows.iter().all(|r| r.chi_sq >= 0.0 && (0.0..=1.0).contains(&r.p_value)));
    // Full model log-likelihood is at least that of every reduction.
    assert!(red.fit.reml_loglik() <= fit.reml_loglik() + 1e-6);
}

#[test]
fn intercept_only_ls_mean() {
    // One factor with identical level means and no consumer×factor term:
    // the intercept LS mean is the grand mean with n_consumers − 1 df.
    let y = dmatrix![3.0, 5.0, 8.0, 4.0; 3.5, 4.0, 7.0, 6.0; 2.5, 6.0, 9.0, 2.0];
    let design = Dataset::from_dense("d", Role::Design, &dmatrix![1.0; 2.0; 3.0]).unwrap();
    let long = melt(&liking_dataset(&y), &design, None).unwrap();
    let mut spec = build_terms(&names(&["C1"]), Structure::Struct1).unwrap();
    spec.fixed.clear();
    spec.random.truncate(1);
    let fit = fit_reml(&long, &spec).unwrap();
    let ls = fit.ls_means("(Intercept)").unwrap();
    assert!((ls[0].estimate - y.mean()).abs() < 1e-12);
    assert!((ls[0].df - 3.0).abs() < 1e-6, "{}", ls[0].df);
}

#[test]
fn pairwise_bonferroni_and_plots() {
    let sim = Sim::two_factor(15, 4, 2);
    let (_, long) = two_factor_long(&sim, 11);
    let spec = build_terms(&names(&["A", "B"]), Structure::Struct2).unwrap();
    let fit = fit_reml(&long, &spec).unwrap();
    let pw = fit.pairwise_differences("A").unwrap();
    assert_eq!(pw.len(), 6);
    assert_eq!(pw[0].label, "A 1-2");
    for r in &pw {
        assert_eq!(r.p_adjusted, (6.0 * r.p_value).min(1.0));
        assert!(r.lower <= r.estimate && r.estimate <= r.upper);
    }
    assert_eq!(fit.pairwise_differences("B").unwrap()[0].p_adjusted, fit.pairwise_differences("B").unwrap()[0].p_value);
    assert!((bonferroni(0.0019, 6) - 0.0114).abs() < 1e-15);
    assert_eq!(fit.pairwise_differences("A:B").unwrap()[0].label, "A:B  1 1 - 2 1");

    match fit.effect_plot("A").unwrap() {
        EffectPlot::Main { points, .. } => assert_eq!(points.len(), 4),
        other => panic!("{other:?}"),
    }
    match fit.effect_plot("B:A").unwrap() {
        EffectPlot::Interaction { series, x_factor, .. } => {
            assert_eq!(x_factor, "B");
            assert_eq!((series.len(), series[0].points.len()), (4, 2));
        }
        other => panic!("{other:?}"),
    }
    assert!(fit.ls_means("C").is_err());
}

#[test]
fn additive_data_gives_parallel_series() {
    // Zero interaction and zero noise beyond a consumer offset.
    let (a, b, n) = (4, 2, 5);
    let y = DMatrix::from_fn(a * b, n, |p, c| 1.0 + (p % a) as f64 * 0.7 + (p / a) as f64 * 1.3 + c as f64 * 0.25);
    let sim = Sim::two_factor(n, a, b);
    let long = melt(&liking_dataset(&y), &sim.design(), None).unwrap();
    let spec = build_terms(&names(&["A", "B"]), Structure::Struct2).unwrap();
    let fit = fit_reml(&long, &spec).unwrap();
    assert!(fit.zero_residual);
    let EffectPlot::Interaction { series, .. } = fit.effect_plot("A:B").unwrap() else {
        panic!()
    };
    let offset = series[1].points[0].estimate - series[0].points[0].estimate;
    assert!((offset - 1.3).abs() < 1e-8);
    for k in 0..a {
        assert!((series[1].points[k].estimate - series[0].points[k].estimate - offset).abs() < 1e-8);
    }
}

#[test]
fn identical_level_means_give_no_effect() {
    let (a, n) = (3, 6);
    // Consumer offsets only: every level of A has the same mean.
    let y = DMatrix::from_fn(a, n, |_, c| 4.0 + c as f64);
    let design = Dataset::from_dense("d", Role::Design, &dmatrix![1.0; 2.0; 3.0])
        .unwrap()
        .with_labels(names(&["P1", "P2", "P3"]), names(&["A"]))
        .unwrap();
    let long = melt(&liking_dataset(&y), &design, None).unwrap();
    let spec = build_terms(&names(&["A"]), Structure::Struct1).unwrap();
    let fit = fit_reml(&long, &spec).unwrap();
    let row = &fit.anova_fixed().unwrap()[0];
    assert!(row.f_value < 1e-6 && row.p_value > 0.999, "{row:?}");
    for r in fit.pairwise_differences("A").unwrap() {
        assert!(r.estimate.abs() < 1e-9 && r.p_value > 0.999);
    }
}

#[test]
fn rank_deficiency_names_columns() {
    // B duplicates A, so B's columns are aliased.
    let design = Dataset::from_dense("d", Role::Design, &dmatrix![1.0, 1.0; 2.0, 2.0; 1.0, 1.0; 2.0, 2.0])
        .unwrap()
        .with_labels(names(&["P1", "P2", "P3", "P4"]), names(&["A", "B"]))
        .unwrap();
    let y = DMatrix::from_fn(4, 5, |p, c| (p * 3 + c * 7 % 5) as f64);
    let long = melt(&liking_dataset(&y), &design, None).unwrap();
    let spec = build_terms(&names(&["A", "B"]), Structure::Struct1).unwrap();
    let err = fit_reml(&long, &spec).unwrap_err();
    assert_eq!(err.to_string(), "design matrix is rank deficient; aliased columns: B2");
}

#[test]
fn characteristics_drop_out_of_random_groupings() {
    let sim = Sim::two_factor(16, 2, 4);
    let y = sim.liking(5);
    let sex = DMatrix::from_fn(16, 1, |c, _| (c % 2 + 1) as f64);
    let chars = Dataset::from_dense("c", Role::Characteristics, &sex)
        .unwrap()
        .with_labels((1..=16).map(|i| format!("C{i}")).collect(), names(&["Sex"]))
        .unwrap();
    let long = melt(&liking_dataset(&y), &sim.design(), Some(&chars)).unwrap();
    assert_eq!(long.len(), 128);
    let spec = build_terms(&names(&["B", "A", "Sex"]), Structure::Struct2).unwrap();
    let res = analyze("liking", &long, &spec, ConjointOptions::default()).unwrap();
    let terms: Vec<&str> = res.tables.random_tests.iter().map(|r| r.term.as_str()).collect();
    assert_eq!(terms, ["B:Consumer", "A:Consumer", "Consumer"]);
    let [ls, fixed, random, pw] = res.tables();
    assert_eq!(
        ls.columns,
        names(&[
            "Model parameter", "B", "A", "Sex", "Estimate", "Standard Error", "DF", "t-value", "Lower CI", "Upper CI"
        ])
    );
    assert_eq!(fixed.columns[0], "Model parameters");
    assert_eq!(random.columns, names(&["Model parameters", "Chi.sq", "Chi.DF", "p.value"]));
    assert_eq!(pw.columns.last().unwrap(), "p-value.adjust");
    assert_eq!(fixed.rows.len(), 6);
    let json = res.to_json();
    let back: sensolab_core::conjoint::ConjointAnalysis = serde_json::from_str(&json).unwrap();
    assert_eq!(back, res);
}

#[test]
fn struct3_reduces_fixed_part_by_marginality() {
    let mut sim = Sim::two_factor(20, 3, 2);
    sim.eff_b = vec![0.0, 0.0];
    let (_, long) = two_factor_long(&sim, 21);
    let spec = build_terms(&names(&["A", "B"]), Structure::Struct3).unwrap();
    let res = analyze("y", &long, &spec, ConjointOptions::default()).unwrap();
    let fixed = &res.tables.fixed_anova;
    assert_eq!(fixed.len(), 3);
    // A:B must go before B can; A carries a real effect and stays.
    let elim = |t: &str| fixed.iter().find(|r| r.term == t).unwrap().elim_num.unwrap();
    assert_eq!(elim("A"), 0);
    if elim("B") > 0 {
        assert!(elim("A:B") > 0 && elim("A:B") < elim("B"));
    }
    assert!(res.tables()[1].columns.contains(&"elim.num".to_owned()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn inference_table_invariants(seed in 0u64..1000) {
        let sim = Sim::two_factor(8, 2, 3);
        let (_, long) = two_factor_long(&sim, seed);
        let spec = build_terms(&names(&["A", "B"]), Structure::Struct2).unwrap();
        let res = analyze("y", &long, &spec, ConjointOptions::default()).unwrap();
        for r in &res.tables.ls_means {
            prop_assert!(r.lower <= r.estimate && r.estimate <= r.upper);
        }
        for r in &res.tables.pairwise {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert!(r.p_adjusted >= r.p_value && r.p_adjusted <= 1.0);
        }
        for r in &res.tables.fixed_anova {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
        for v in &res.fit.variance_components {
            prop_assert!(v.variance >= 0.0);
        }
        prop_assert!(res.fit.residual_variance > 0.0);
    }
}
