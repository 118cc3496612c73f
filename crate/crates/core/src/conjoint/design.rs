//! Treatment coding of the fixed part and consumer-nested random groupings.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::long::{FactorKind, LongTable};
use super::terms::{ModelSpec, Term};
use crate::error::{Error, Result};

/// One column of the fixed-effects design: the indicator product of a
/// non-reference level for every factor of its term.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Column {
    /// `None` for the intercept, else an index into `spec.fixed`.
    pub term: Option<usize>,
    /// (spec factor index, level code) pairs, all codes ≥ 1.
    pub levels: Vec<(usize, usize)>,
    pub name: String,
}

/// A random grouping after characteristics are dropped from its key.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Grouping {
    /// Index into `spec.random`.
    pub term: usize,
    pub name: String,
    /// Group index of every long row.
    pub group: Vec<usize>,
    pub n_groups: usize,
}

/// Why a random term of the spec is not estimated on its own.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Dropped {
    /// Same grouping as an earlier term (named).
    Duplicate(String),
    /// Every group holds a single observation, so the term is the residual.
    Residual,
}

#[derive(Debug, Clone)]
pub(crate) struct Design {
    /// Long-table factor index of every spec factor.
    pub factor_idx: Vec<usize>,
    pub n_levels: Vec<usize>,
    pub columns: Vec<Column>,
    pub x: DMatrix<f64>,
    pub groupings: Vec<Grouping>,
    pub dropped: Vec<(usize, Dropped)>,
}

impl Design {
    pub fn build(long: &LongTable, spec: &ModelSpec) -> Result<Self> {
        let factor_idx = spec
            .factors
            .iter()
            .map(|f| long.factor_index(f))
            .collect::<Result<Vec<_>>>()?;
        if factor_idx.iter().all(|&i| long.factors[i].kind != FactorKind::Design) {
            return Err(Error::InvalidInput("at least one design factor must be selected".into()));
        }
        let n_levels: Vec<usize> = factor_idx.iter().map(|&i| long.factors[i].levels.len()).collect();
        if let Some(k) = n_levels.iter().position(|&l| l < 2) {
            return Err(Error::InvalidInput(format!("factor '{}' has a single level", spec.factors[k])));
        }

        let mut columns = vec![Column {
            term: None,
            levels: Vec::new(),
            name: "(Intercept)".into(),
        }];
        for (ti, t) in spec.fixed.iter().enumerate() {
            for combo in level_combinations(&t.0, &n_levels, 1) {
                let name = t
                    .0
                    .iter()
                    .zip(&combo)
                    .map(|(&f, &c)| format!("{}{}", spec.factors[f], long.factors[factor_idx[f]].level_label(c)))
                    .collect::<Vec<_>>()
                    .join(":");
                columns.push(Column {
                    term: Some(ti),
                    levels: t.0.iter().copied().zip(combo).collect(),
                    name,
                });
            }
        }
        let n = long.len();
        let x = DMatrix::from_fn(n, columns.len(), |r, c| {
            let ok = columns[c]
                .levels
                .iter()
                .all(|&(f, l)| long.factors[factor_idx[f]].codes[r] == l);
            if ok {
                1.0
            } else {
                0.0
            }
        });
        check_rank(&x, &columns)?;

        let mut groupings: Vec<Grouping> = Vec::new();
        let mut dropped = Vec::new();
        for (ri, t) in spec.random.iter().enumerate() {
            let design_factors: Vec<usize> = t
                .0
                .iter()
                .copied()
                .filter(|&f| long.factors[factor_idx[f]].kind == FactorKind::Design)
                .collect();
            let group = grouping(long, &design_factors, &factor_idx);
            let n_groups = group.iter().max().map_or(0, |m| m + 1);
            if n_groups < 2 {
                return Err(Error::InvalidInput(format!(
                    "random term '{}' has fewer than two groups",
                    spec.random_name(t)
                )));
            }
            if let Some(g) = groupings.iter().find(|g| g.group == group) {
                dropped.push((ri, Dropped::Duplicate(g.name.clone())));
            } else if n_groups == n {
                dropped.push((ri, Dropped::Residual));
            } else {
                groupings.push(Grouping {
                    term: ri,
                    name: spec.random_name(t),
                    group,
                    n_groups,
                });
            }
        }
        Ok(Self {
            factor_idx,
            n_levels,
            columns,
            x,
            groupings,
            dropped,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Equal-weight average of the design row over the levels of every
    /// factor outside `term`, at the given levels of the factors in `term`.
    pub fn marginal_row(&self, term: &Term, levels: &[usize]) -> DVector<f64> {
        DVector::from_iterator(
            self.columns.len(),
            self.columns.iter().map(|c| {
                c.levels
                    .iter()
                    .map(|&(f, l)| match term.0.iter().position(|&g| g == f) {
                        Some(k) => f64::from(u8::from(levels[k] == l)),
                        None => 1.0 / self.n_levels[f] as f64,
                    })
                    .product()
            }),
        )
    }
}

/// Level combinations of the given factors with the first factor varying
/// fastest, each code starting at `from`.
pub(crate) fn level_combinations(factors: &[usize], n_levels: &[usize], from: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &f in factors {
        let mut next = Vec::new();
        for l in from..n_levels[f] {
            for prefix in &out {
                let mut v: Vec<usize> = prefix.clone();
                v.push(l);
                next.push(v);
            }
        }
        out = next;
    }
    // Built with the last factor varying fastest; flip to first-fastest.
    out.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
    out
}

/// Group index per row for consumer × the given design factors, numbered by
/// first appearance in canonical (consumer, product) order so that equal
/// partitions compare equal regardless of row order.
fn grouping(long: &LongTable, design_factors: &[usize], factor_idx: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..long.len()).collect();
    order.sort_by_key(|&r| (long.consumer[r], long.product[r]));
    let key = |r: usize| -> Vec<usize> {
        let mut k = vec![long.consumer[r]];
        k.extend(design_factors.iter().map(|&f| long.factors[factor_idx[f]].codes[r]));
        k
    };
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut group = vec![0; long.len()];
    for r in order {
        let next = ids.len();
        group[r] = *ids.entry(key(r)).or_insert(next);
    }
    group
}

/// Sequential Gram-Schmidt: a column is aliased when it lies in the span of
/// the columns before it.
fn check_rank(x: &DMatrix<f64>, columns: &[Column]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut aliased = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let mut v = x.column(j).into_owned();
        let norm0 = v.norm();
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            aliased.push(col.name.clone());
        } else {
            basis.push(v / norm);
        }
    }
    if aliased.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(aliased))
    }
}
