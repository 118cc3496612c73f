//! Type-III F tests, LS means and pairwise comparisons on a fitted model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use super::design::level_combinations;
use super::terms::Term;
use super::FittedLmm;
use crate::error::{Error, Result};

/// Degrees of freedom above this are treated as infinite.
const DF_INFINITE: f64 = 1e10;

pub(crate) fn t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    let p = if df.is_finite() && df < DF_INFINITE {
        2.0 * StudentsT::new(0.0, 1.0, df).expect("df > 0").sf(t.abs())
    } else {
        2.0 * Normal::standard().sf(t.abs())
    };
    p.min(1.0)
}

pub(crate) fn t_quantile(p: f64, df: f64) -> f64 {
    if df.is_finite() && df < DF_INFINITE {
        StudentsT::new(0.0, 1.0, df).expect("df > 0").inverse_cdf(p)
    } else {
        Normal::standard().inverse_cdf(p)
    }
}

pub(crate) fn f_upper(f: f64, num: f64, den: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if den.is_finite() && den < DF_INFINITE {
        FisherSnedecor::new(num, den).expect("df > 0").sf(f)
    } else {
        chi_square_upper(f * num, num)
    }
}

pub(crate) fn chi_square_upper(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        ChiSquared::new(df).expect("df > 0").sf(x)
    }
}

/// Combine per-contrast Satterthwaite df into one denominator df for a
/// multi-degree-of-freedom F test.
pub(crate) fn pooled_df(nu: &[f64]) -> f64 {
    if nu.len() == 1 {
        return nu[0];
    }
    if nu.iter().all(|v| v.is_infinite()) {
        return f64::INFINITY;
    }
    if nu.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-8) {
        return nu.iter().sum::<f64>() / nu.len() as f64;
    }
    if nu.iter().any(|&v| v <= 2.0) {
        return 2.0;
    }
    let e: f64 = nu.iter().map(|&v| if v.is_infinite() { 1.0 } else { v / (v - 2.0) }).sum();
    let q = nu.len() as f64;
    if e <= q {
        return f64::INFINITY;
    }
    2.0 * e / (e - q)
}

/// Bonferroni adjustment for `k` comparisons.
pub fn bonferroni(p: f64, k: usize) -> f64 {
    (p * k as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRow {
    pub term: String,
    pub sum_sq: f64,
    pub mean_sq: f64,
    pub num_df: usize,
    pub den_df: f64,
    pub f_value: f64,
    pub p_value: f64,
    /// Elimination step for reduced models; 0 for terms kept.
    pub elim_num: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsMeanRow {
    pub term: String,
    pub label: String,
    /// Level of every selected factor, `None` where the factor is not part
    /// of the term.
    pub levels: Vec<Option<String>>,
    pub estimate: f64,
    pub std_error: f64,
    pub df: f64,
    pub t_value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub term: String,
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub df: f64,
    pub t_value: f64,
    pub lower: f64,
    pub upper: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
}

impl FittedLmm {
    fn fixed_term(&self, name: &str) -> Result<Term> {
        if name == "(Intercept)" {
            return Ok(Term(Vec::new()));
        }
        self.spec
            .find_fixed(name)
            .map(|i| self.spec.fixed[i].clone())
            .ok_or_else(|| Error::NoSuchTerm(name.to_owned()))
    }

    /// Rows of LS-mean coefficients, one per level combination of the term
    /// with the first factor varying fastest.
    fn ls_matrix(&self, term: &Term) -> (Vec<Vec<usize>>, DMatrix<f64>) {
        let combos = level_combinations(&term.0, &self.design.n_levels, 0);
        let p = self.design.columns.len();
        let mut m = DMatrix::zeros(combos.len(), p);
        for (i, c) in combos.iter().enumerate() {
            m.row_mut(i).copy_from(&self.design.marginal_row(term, c).transpose());
        }
        (combos, m)
    }

    /// Estimate, standard error, df, t and 95% CI for `l'β`.
    fn estimate(&self, l: &DVector<f64>) -> (f64, f64, f64, f64, f64, f64) {
        let est = l.dot(&self.reml.beta);
        let (var, df) = self.reml.contrast(l);
        let se = var.max(0.0).sqrt();
        let t = est / se;
        let half = t_quantile(0.975, df) * se;
        (est, se, df, t, est - half, est + half)
    }

    fn combo_label(&self, term: &Term, combo: &[usize]) -> String {
        term.0
            .iter()
            .zip(combo)
            .map(|(&f, &c)| self.level_labels[f][c].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Space between term name and levels: one for main effects, two for
    /// interactions.
    fn label_gap(term: &Term) -> &'static str {
        if term.order() > 1 {
            "  "
        } else {
            " "
        }
    }

    pub fn ls_means(&self, term: &str) -> Result<Vec<LsMeanRow>> {
        let t = self.fixed_term(term)?;
        let name = self.spec.term_name(&t);
        let (combos, m) = self.ls_matrix(&t);
        Ok(combos
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (estimate, std_error, df, t_value, lower, upper) = self.estimate(&m.row(i).transpose());
                let levels = (0..self.spec.factors.len())
                    .map(|f| t.0.iter().position(|&g| g == f).map(|k| self.level_labels[f][c[k]].clone()))
                    .collect();
                let label = if t.0.is_empty() {
                    name.clone()
                } else {
                    format!("{name}{}{}", Self::label_gap(&t), self.combo_label(&t, c))
                };
                LsMeanRow {
                    term: name.clone(),
                    label,
                    levels,
                    estimate,
                    std_error,
                    df,
                    t_value,
                    lower,
                    upper,
                }
            })
            .collect())
    }

    pub fn pairwise_differences(&self, term: &str) -> Result<Vec<PairwiseRow>> {
        let t = self.fixed_term(term)?;
        let name = self.spec.term_name(&t);
        let (combos, m) = self.ls_matrix(&t);
        if combos.len() < 2 {
            return Err(Error::InvalidInput(format!("term '{name}' has a single level combination")));
        }
        let pairs: Vec<(usize, usize)> = (0..combos.len())
            .flat_map(|i| (i + 1..combos.len()).map(move |j| (i, j)))
            .collect();
        let k = pairs.len();
        Ok(pairs
            .into_iter()
            .map(|(i, j)| {
                let l = (m.row(i) - m.row(j)).transpose();
                let (estimate, std_error, df, t_value, lower, upper) = self.estimate(&l);
                let p_value = t_two_sided(t_value, df);
                let (a, b) = (self.combo_label(&t, &combos[i]), self.combo_label(&t, &combos[j]));
                let label = if t.order() > 1 {
                    format!("{name}  {a} - {b}")
                } else {
                    format!("{name} {a}-{b}")
                };
                PairwiseRow {
                    term: name.clone(),
                    label,
                    estimate,
                    std_error,
                    df,
                    t_value,
                    lower,
                    upper,
                    p_value,
                    p_adjusted: bonferroni(p_value, k),
                }
            })
            .collect())
    }

    /// Type-III contrast matrix: products of "level − reference level"
    /// differences of the term's LS means.
    fn type3_contrast(&self, t: &Term) -> DMatrix<f64> {
        let (combos, m) = self.ls_matrix(t);
        let targets = level_combinations(&t.0, &self.design.n_levels, 1);
        let mut coef = DMatrix::<f64>::zeros(targets.len(), combos.len());
        for (r, target) in targets.iter().enumerate() {
            for (c, combo) in combos.iter().enumerate() {
                coef[(r, c)] = combo
                    .iter()
                    .zip(target)
                    .map(|(&lv, &tg)| {
                        if lv == tg {
                            1.0
                        } else if lv == 0 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .product();
            }
        }
        coef * m
    }

    /// F test of one fixed term.
    pub fn test_fixed(&self, term: &str) -> Result<FixedRow> {
        let t = self.fixed_term(term)?;
        let name = self.spec.term_name(&t);
        if t.0.is_empty() {
            return Err(Error::NoSuchTerm(name));
        }
        let l = self.type3_contrast(&t);
        let q = l.nrows();
        let lcl = &l * &self.reml.cov_beta * l.transpose();
        let eig = lcl.symmetric_eigen();
        let top = eig.eigenvalues.amax();
        if !(top > 0.0) || eig.eigenvalues.iter().any(|&d| d <= 1e-12 * top) {
            return Err(Error::SingularContrast(name));
        }
        let lb = &l * &self.reml.beta;
        let rotated = eig.eigenvectors.transpose() * &l;
        let proj = eig.eigenvectors.tr_mul(&lb);
        let f_value = (0..q).map(|i| proj[i] * proj[i] / eig.eigenvalues[i]).sum::<f64>() / q as f64;
        let nu: Vec<f64> = (0..q).map(|i| self.reml.contrast(&rotated.row(i).transpose()).1).collect();
        let den_df = pooled_df(&nu);
        let mean_sq = f_value * self.residual_variance;
        Ok(FixedRow {
            term: name,
            sum_sq: mean_sq * q as f64,
            mean_sq,
            num_df: q,
            den_df,
            f_value,
            p_value: f_upper(f_value, q as f64, den_df),
            elim_num: None,
        })
    }

    pub fn anova_fixed(&self) -> Result<Vec<FixedRow>> {
        self.spec.fixed_names().iter().map(|n| self.test_fixed(n)).collect()
    }
}
