//! Mixed-model conjoint analysis.
//!
//! Liking, design and consumer characteristics are melted into a long
//! table, a term structure is chosen, and a linear mixed model with
//! consumer-nested variance components is fitted by REML. Results come as
//! LS means, a Type-III ANOVA with Satterthwaite denominator df, likelihood
//! ratio tests of the random terms and Bonferroni-adjusted pairwise
//! differences.

mod design;
mod inference;
mod long;
mod reml;
mod terms;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::table::{Cell, Table};
use design::{Design, Dropped};
use reml::{Problem, RemlFit};

pub use inference::{bonferroni, FixedRow, LsMeanRow, PairwiseRow};
pub use long::{melt, Factor, FactorKind, LongTable};
pub use reml::{DEVIANCE_TOL, SNAP};
pub use terms::{build_terms, ModelSpec, Structure, Term};

/// Characteristics factors with more levels than this trigger a warning.
pub const MAX_CHARACTERISTIC_LEVELS: usize = 6;
/// Selecting more factors than this triggers a warning.
pub const MAX_FACTORS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponent {
    pub term: String,
    pub variance: f64,
}

/// A random term of the spec that is not estimated separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedTerm {
    pub term: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FittedLmm {
    pub spec: ModelSpec,
    pub column_names: Vec<String>,
    /// Variance of every estimated random term.
    pub variance_components: Vec<VarianceComponent>,
    pub residual_variance: f64,
    /// True when the random effects reproduce the data exactly; the
    /// residual variance is then reported as 0.
    pub zero_residual: bool,
    pub merged_random: Vec<MergedTerm>,
    pub n_observations: usize,
    pub n_consumers: usize,
    level_labels: Vec<Vec<String>>,
    design: Design,
    reml: RemlFit,
}

impl FittedLmm {
    pub fn beta(&self) -> &DVector<f64> {
        &self.reml.beta
    }

    pub fn cov_beta(&self) -> &DMatrix<f64> {
        &self.reml.cov_beta
    }

    pub fn reml_loglik(&self) -> f64 {
        self.reml.reml_loglik()
    }

    pub fn deviance(&self) -> f64 {
        self.reml.deviance
    }

    /// Names of the variance parameters that are not on the zero boundary,
    /// in the order of [`FittedLmm::vcov_variances`].
    pub fn free_variances(&self) -> Vec<String> {
        let m = self.variance_components.len();
        self.reml
            .free
            .iter()
            .map(|&i| {
                if i == m {
                    "Residual".to_owned()
                } else {
                    self.variance_components[i].term.clone()
                }
            })
            .collect()
    }

    /// Asymptotic covariance of the free variance estimates.
    pub fn vcov_variances(&self) -> &DMatrix<f64> {
        &self.reml.vcov
    }

    pub fn level_labels(&self, factor: &str) -> Option<&[String]> {
        let i = self.spec.factors.iter().position(|f| f == factor)?;
        Some(&self.level_labels[i])
    }

    pub fn summary(&self) -> FitSummary {
        FitSummary {
            fixed_terms: self.spec.fixed_names(),
            random_terms: self.variance_components.iter().map(|v| v.term.clone()).collect(),
            coefficients: self
                .column_names
                .iter()
                .zip(self.reml.beta.iter())
                .map(|(n, &b)| (n.clone(), b))
                .collect(),
            variance_components: self.variance_components.clone(),
            residual_variance: self.residual_variance,
            reml_loglik: self.reml_loglik(),
            n_observations: self.n_observations,
            n_consumers: self.n_consumers,
            merged_random: self.merged_random.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub fixed_terms: Vec<String>,
    pub random_terms: Vec<String>,
    pub coefficients: Vec<(String, f64)>,
    pub variance_components: Vec<VarianceComponent>,
    pub residual_variance: f64,
    pub reml_loglik: f64,
    pub n_observations: usize,
    pub n_consumers: usize,
    pub merged_random: Vec<MergedTerm>,
}

/// Fit the model by REML.
///
/// Random terms are crossed with the consumer. Consumer characteristics are
/// constant within a consumer, so they drop out of a random term's grouping;
/// a term whose grouping repeats an earlier one, or puts every observation
/// in its own group (and so duplicates the residual), is listed in
/// [`FittedLmm::merged_random`] instead of being estimated.
pub fn fit_reml(long: &LongTable, spec: &ModelSpec) -> Result<FittedLmm> {
    let design = Design::build(long, spec)?;
    let groups: Vec<Vec<usize>> = design.groupings.iter().map(|g| g.group.clone()).collect();
    let problem = Problem::new(&design.x, &long.response, &long.consumer, &long.product, &groups);
    let reml = problem.fit()?;
    let merged_random = design
        .dropped
        .iter()
        .map(|(ri, why)| MergedTerm {
            term: spec.random_name(&spec.random[*ri]),
            reason: match why {
                Dropped::Duplicate(of) => format!("same grouping as {of}"),
                Dropped::Residual => "one observation per group; confounded with the residual".to_owned(),
            },
        })
        .collect();
    let level_labels = design
        .factor_idx
        .iter()
        .map(|&i| {
            let f = &long.factors[i];
            (0..f.levels.len()).map(|c| f.level_label(c)).collect()
        })
        .collect();
    let mut consumers = long.consumer.clone();
    consumers.sort_unstable();
    consumers.dedup();
    Ok(FittedLmm {
        spec: spec.clone(),
        column_names: design.names(),
        variance_components: design
            .groupings
            .iter()
            .zip(&reml.sigma2_k)
            .map(|(g, &v)| VarianceComponent {
                term: g.name.clone(),
                variance: v,
            })
            .collect(),
        residual_variance: reml.sigma2,
        zero_residual: reml.zero_residual,
        merged_random,
        n_observations: problem.n(),
        n_consumers: consumers.len(),
        level_labels,
        design,
        reml,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomRow {
    pub term: String,
    pub chi_sq: f64,
    pub chi_df: usize,
    pub p_value: f64,
    /// Elimination step (1-based) if the term was removed.
    pub eliminated: Option<usize>,
}

/// Spec without the random term behind grouping `k` and the terms merged
/// into it.
fn without_grouping(fit: &FittedLmm, k: usize) -> ModelSpec {
    let g = &fit.design.groupings[k];
    let mut drop = vec![g.term];
    for (ri, why) in &fit.design.dropped {
        if matches!(why, Dropped::Duplicate(of) if *of == g.name) {
            drop.push(*ri);
        }
    }
    let mut spec = fit.spec.clone();
    spec.random = spec
        .random
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, t)| t.clone())
        .collect();
    spec
}

fn lr_tests(fit: &FittedLmm, long: &LongTable) -> Result<Vec<(String, f64, f64)>> {
    (0..fit.design.groupings.len())
        .into_par_iter()
        .map(|k| {
            let name = fit.design.groupings[k].name.clone();
            let reduced = fit_reml(long, &without_grouping(fit, k)).map_err(|e| Error::Refit {
                term: name.clone(),
                source: Box::new(e),
            })?;
            let chi = (reduced.deviance() - fit.deviance()).max(0.0);
            Ok((name, chi, inference::chi_square_upper(chi, 1.0)))
        })
        .collect()
}

pub struct RandomReduction {
    /// One row per estimated random term of the starting model, with the
    /// plain consumer term last.
    pub rows: Vec<RandomRow>,
    pub fit: FittedLmm,
}

/// Likelihood ratio tests of the random terms with backward elimination.
///
/// Every round refits the model without each remaining term in turn. The
/// least significant term with p above `alpha` is removed and the round is
/// repeated. The plain consumer term is tested and reported but never
/// removed. With `eliminate` off a single round of tests is reported.
pub fn test_random(fit: &FittedLmm, long: &LongTable, alpha: f64, eliminate: bool) -> Result<RandomReduction> {
    let mut current = fit.clone();
    let mut rows: Vec<RandomRow> = Vec::new();
    let mut step = 0;
    loop {
        let tests = lr_tests(&current, long)?;
        let candidate = tests
            .iter()
            .filter(|(name, _, p)| name != "Consumer" && *p > alpha)
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)));
        match candidate {
            Some((name, chi, p)) if eliminate => {
                step += 1;
                rows.push(RandomRow {
                    term: name.clone(),
                    chi_sq: *chi,
                    chi_df: 1,
                    p_value: *p,
                    eliminated: Some(step),
                });
                let k = current
                    .design
                    .groupings
                    .iter()
                    .position(|g| g.name == *name)
                    .expect("tested term exists");
                let spec = without_grouping(&current, k);
                current = fit_reml(long, &spec)?;
            }
            _ => {
                rows.extend(tests.into_iter().map(|(term, chi_sq, p_value)| RandomRow {
                    term,
                    chi_sq,
                    chi_df: 1,
                    p_value,
                    eliminated: None,
                }));
                break;
            }
        }
    }
    let order: Vec<String> = fit.design.groupings.iter().map(|g| g.name.clone()).collect();
    let key = |t: &str| {
        let i = order.iter().position(|o| o == t).unwrap_or(usize::MAX);
        (t == "Consumer", i)
    };
    rows.sort_by_key(|r| key(&r.term));
    Ok(RandomReduction { rows, fit: current })
}

pub struct FixedReduction {
    pub rows: Vec<FixedRow>,
    pub fit: FittedLmm,
}

/// Backward elimination of fixed terms respecting marginality: only terms
/// not contained in another remaining term are candidates, and the least
/// significant one with p above `alpha` is removed each round.
pub fn reduce_fixed(fit: &FittedLmm, long: &LongTable, alpha: f64) -> Result<FixedReduction> {
    let mut current = fit.clone();
    let mut eliminated: Vec<FixedRow> = Vec::new();
    loop {
        let table = current.anova_fixed()?;
        let fixed = &current.spec.fixed;
        let candidate = table
            .iter()
            .enumerate()
            .filter(|(i, _)| !fixed.iter().enumerate().any(|(j, t)| j != *i && fixed[*i].is_contained_in(t)))
            .filter(|(_, r)| r.p_value > alpha)
            .max_by(|a, b| a.1.p_value.total_cmp(&b.1.p_value));
        let Some((i, row)) = candidate else {
            let mut rows = eliminated;
            rows.extend(table.into_iter().map(|r| FixedRow {
                elim_num: Some(0),
                ..r
            }));
            let order = fit.spec.fixed_names();
            rows.sort_by_key(|r| order.iter().position(|o| *o == r.term));
            return Ok(FixedReduction { rows, fit: current });
        };
        eliminated.push(FixedRow {
            elim_num: Some(eliminated.len() + 1),
            ..row.clone()
        });
        let mut spec = current.spec.clone();
        spec.fixed.remove(i);
        current = fit_reml(long, &spec)?;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConjointOptions {
    /// Significance level for keeping random terms.
    pub alpha_random: f64,
    /// Significance level for keeping fixed terms in reduced models.
    pub alpha_fixed: f64,
    pub reduce_random: bool,
    /// Defaults to on for [`Structure::Struct3`] and off otherwise.
    pub reduce_fixed: Option<bool>,
}

impl Default for ConjointOptions {
    fn default() -> Self {
        Self {
            alpha_random: 0.1,
            alpha_fixed: 0.05,
            reduce_random: true,
            reduce_fixed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTables {
    pub ls_means: Vec<LsMeanRow>,
    pub fixed_anova: Vec<FixedRow>,
    pub random_tests: Vec<RandomRow>,
    pub pairwise: Vec<PairwiseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjointAnalysis {
    pub response: String,
    pub spec: ModelSpec,
    pub final_spec: ModelSpec,
    pub fit: FitSummary,
    pub tables: InferenceTables,
    pub plots: Vec<EffectPlot>,
    pub warnings: Vec<String>,
}

fn warnings(long: &LongTable, spec: &ModelSpec) -> Vec<String> {
    let mut w = Vec::new();
    if spec.factors.len() > MAX_FACTORS {
        w.push(format!(
            "{} factors selected; models with more than {MAX_FACTORS} factors are hard to interpret",
            spec.factors.len()
        ));
    }
    for f in &spec.factors {
        if let Some(fac) = long.factor(f) {
            if fac.kind == FactorKind::Characteristic && fac.levels.len() > MAX_CHARACTERISTIC_LEVELS {
                w.push(format!(
                    "characteristic '{f}' has {} levels; consider merging to at most {MAX_CHARACTERISTIC_LEVELS}",
                    fac.levels.len()
                ));
            }
        }
    }
    w
}

/// Fit, reduce and tabulate one conjoint model.
pub fn analyze(response: &str, long: &LongTable, spec: &ModelSpec, opts: ConjointOptions) -> Result<ConjointAnalysis> {
    let fit = fit_reml(long, spec)?;
    let random = test_random(&fit, long, opts.alpha_random, opts.reduce_random)?;
    let reduce = opts.reduce_fixed.unwrap_or(spec.structure == Structure::Struct3);
    let (fixed_anova, fit) = if reduce {
        let r = reduce_fixed(&random.fit, long, opts.alpha_fixed)?;
        (r.rows, r.fit)
    } else {
        (random.fit.anova_fixed()?, random.fit)
    };
    let mut ls_means = Vec::new();
    let mut pairwise = Vec::new();
    let mut plots = Vec::new();
    for name in fit.spec.fixed_names() {
        ls_means.extend(fit.ls_means(&name)?);
        pairwise.extend(fit.pairwise_differences(&name)?);
        if fit.spec.find_fixed(&name).is_some_and(|i| fit.spec.fixed[i].order() <= 2) {
            plots.push(fit.effect_plot(&name)?);
        }
    }
    Ok(ConjointAnalysis {
        response: response.to_owned(),
        spec: spec.clone(),
        final_spec: fit.spec.clone(),
        fit: fit.summary(),
        tables: InferenceTables {
            ls_means,
            fixed_anova,
            random_tests: random.rows,
            pairwise,
        },
        plots,
        warnings: warnings(long, spec),
    })
}

/// Analyse several liking datasets against the same design, one
/// independent job per dataset, in parallel.
pub fn analyze_many(
    likings: &[&Dataset],
    design: &Dataset,
    characteristics: Option<&Dataset>,
    spec: &ModelSpec,
    opts: ConjointOptions,
) -> Vec<Result<ConjointAnalysis>> {
    likings
        .par_iter()
        .map(|l| {
            let long = melt(l, design, characteristics)?;
            analyze(l.name(), &long, spec, opts)
        })
        .collect()
}

impl InferenceTables {
    /// The four result tables with their export column headers. `factors`
    /// are the selected factor names (one LS-means column each).
    pub fn to_tables(&self, factors: &[String], with_elim: bool) -> [Table; 4] {
        let mut cols: Vec<&str> = vec!["Model parameter"];
        cols.extend(factors.iter().map(String::as_str));
        cols.extend(["Estimate", "Standard Error", "DF", "t-value", "Lower CI", "Upper CI"]);
        let mut ls = Table::new("ls_means", &cols);
        for r in &self.ls_means {
            let mut row = vec![Cell::from(r.label.as_str())];
            row.extend(r.levels.iter().map(|l| Cell::from(l.clone())));
            row.extend([r.estimate, r.std_error, r.df, r.t_value, r.lower, r.upper].map(Cell::from));
            ls.push(row);
        }

        let mut cols = vec!["Model parameters", "Sum Sq", "Mean Sq", "NumDF", "DenDF", "F.value", "Pr(>F)"];
        if with_elim {
            cols.push("elim.num");
        }
        let mut fixed = Table::new("fixed_anova", &cols);
        for r in &self.fixed_anova {
            let mut row = vec![
                Cell::from(r.term.as_str()),
                r.sum_sq.into(),
                r.mean_sq.into(),
                r.num_df.into(),
                r.den_df.into(),
                r.f_value.into(),
                r.p_value.into(),
            ];
            if with_elim {
                row.push(r.elim_num.unwrap_or(0).into());
            }
            fixed.push(row);
        }

        let mut random = Table::new("random_tests", &["Model parameters", "Chi.sq", "Chi.DF", "p.value"]);
        for r in &self.random_tests {
            random.push(vec![r.term.as_str().into(), r.chi_sq.into(), r.chi_df.into(), r.p_value.into()]);
        }

        let mut pw = Table::new(
            "pairwise",
            &[
                "Model parameters",
                "Estimate",
                "Standard Error",
                "DF",
                "t-value",
                "Lower CI",
                "Upper CI",
                "p-value",
                "p-value.adjust",
            ],
        );
        for r in &self.pairwise {
            pw.push(vec![
                r.label.as_str().into(),
                r.estimate.into(),
                r.std_error.into(),
                r.df.into(),
                r.t_value.into(),
                r.lower.into(),
                r.upper.into(),
                r.p_value.into(),
                r.p_adjusted.into(),
            ]);
        }
        [ls, fixed, random, pw]
    }
}

impl ConjointAnalysis {
    pub fn tables(&self) -> [Table; 4] {
        self.tables
            .to_tables(&self.spec.factors, self.spec.structure == Structure::Struct3)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("analysis is always serialisable")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectPoint {
    pub level: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSeries {
    /// Level of the second factor.
    pub level: String,
    pub points: Vec<EffectPoint>,
}

/// LS means with 95% intervals for a main effect, or one series per level
/// of the second factor of a two-factor interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plot", rename_all = "snake_case")]
pub enum EffectPlot {
    Main {
        term: String,
        points: Vec<EffectPoint>,
    },
    Interaction {
        term: String,
        x_factor: String,
        series_factor: String,
        series: Vec<EffectSeries>,
    },
}

impl FittedLmm {
    /// Plot payload for a fixed main effect (`"A"`) or two-factor
    /// interaction (`"A:B"`, A on the horizontal axis).
    pub fn effect_plot(&self, term: &str) -> Result<EffectPlot> {
        let parts: Vec<&str> = term.split(':').map(str::trim).collect();
        let rows = self.ls_means(term)?;
        let point = |r: &LsMeanRow, f: usize| EffectPoint {
            level: r.levels[f].clone().unwrap_or_default(),
            estimate: r.estimate,
            lower: r.lower,
            upper: r.upper,
        };
        let index = |name: &str| self.spec.factors.iter().position(|f| f == name).expect("term was found");
        match parts.as_slice() {
            [a] => {
                let fa = index(a);
                Ok(EffectPlot::Main {
                    term: rows[0].term.clone(),
                    points: rows.iter().map(|r| point(r, fa)).collect(),
                })
            }
            [a, b] => {
                let (fa, fb) = (index(a), index(b));
                let series = self.level_labels[fb]
                    .iter()
                    .map(|lb| EffectSeries {
                        level: lb.clone(),
                        points: self.level_labels[fa]
                            .iter()
                            .map(|la| {
                                let r = rows
                                    .iter()
                                    .find(|r| r.levels[fa].as_ref() == Some(la) && r.levels[fb].as_ref() == Some(lb))
                                    .expect("every combination has an LS mean");
                                point(r, fa)
                            })
                            .collect(),
                    })
                    .collect();
                Ok(EffectPlot::Interaction {
                    term: rows[0].term.clone(),
                    x_factor: (*a).to_owned(),
                    series_factor: (*b).to_owned(),
                    series,
                })
            }
            _ => Err(Error::InvalidInput(format!(
                "effect plots cover main effects and two-factor interactions, not '{term}'"
            ))),
        }
    }
}
