//! Long-format table: one row per (product, consumer) rating.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Where a factor's levels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    /// A column of the design matrix: levels vary across products.
    Design,
    /// A column of the characteristics matrix: levels are fixed per consumer.
    Characteristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub kind: FactorKind,
    /// Sorted distinct values. The first one is the reference level.
    pub levels: Vec<f64>,
    /// Level index of every long row.
    pub codes: Vec<usize>,
}

impl Factor {
    pub fn level_label(&self, code: usize) -> String {
        format_level(self.levels[code])
    }
}

pub(crate) fn format_level(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTable {
    pub consumer_labels: Vec<String>,
    pub product_labels: Vec<String>,
    /// Consumer index of every row.
    pub consumer: Vec<usize>,
    /// Product index of every row.
    pub product: Vec<usize>,
    pub response: Vec<f64>,
    pub factors: Vec<Factor>,
}

impl LongTable {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub(crate) fn factor_index(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown factor '{name}'")))
    }

    /// Copy with the response replaced, keeping the row layout.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        if response.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} responses for {} long rows",
                response.len(),
                self.len()
            )));
        }
        Ok(Self {
            response,
            ..self.clone()
        })
    }

    /// Reorder the rows. Used to check that results do not depend on row order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let pick = |v: &[usize]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            consumer_labels: self.consumer_labels.clone(),
            product_labels: self.product_labels.clone(),
            consumer: pick(&self.consumer),
            product: pick(&self.product),
            response: order.iter().map(|&i| self.response[i]).collect(),
            factors: self
                .factors
                .iter()
                .map(|f| Factor {
                    codes: pick(&f.codes),
                    ..f.clone()
                })
                .collect(),
        }
    }
}

fn factor_codes(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut levels = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let codes = values
        .iter()
        .map(|v| levels.binary_search_by(|l| l.total_cmp(v)).expect("value is a level"))
        .collect();
    (levels, codes)
}

/// Join liking (products × consumers), design (products × factors) and
/// optional characteristics (consumers × variables) into long format.
///
/// Missing liking cells are dropped. Design and characteristics must be
/// complete because every kept row needs all of its levels.
pub fn melt(liking: &Dataset, design: &Dataset, characteristics: Option<&Dataset>) -> Result<LongTable> {
    if design.nrows() != liking.nrows() {
        return Err(Error::Dimension(format!(
            "liking has {} products but design has {} rows",
            liking.nrows(),
            design.nrows()
        )));
    }
    if let Some(c) = characteristics {
        if c.nrows() != liking.ncols() {
            return Err(Error::Dimension(format!(
                "liking has {} consumers but characteristics has {} rows",
                liking.ncols(),
                c.nrows()
            )));
        }
    }
    let d = design.dense()?;
    let ch = characteristics.map(Dataset::dense).transpose()?;

    let mut names: Vec<&str> = design.col_labels().iter().map(String::as_str).collect();
    if let Some(c) = characteristics {
        names.extend(c.col_labels().iter().map(String::as_str));
    }
    for (i, n) in names.iter().enumerate() {
        if *n == "Consumer" {
            return Err(Error::InvalidInput("'Consumer' is reserved and cannot name a factor".into()));
        }
        if names[..i].contains(n) {
            return Err(Error::InvalidInput(format!("factor name '{n}' is used twice")));
        }
    }

    let (mut consumer, mut product, mut response) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..liking.nrows() {
        for n in 0..liking.ncols() {
            if let Some(v) = liking.values().get(j, n) {
                consumer.push(n);
                product.push(j);
                response.push(v);
            }
        }
    }
    if response.is_empty() {
        return Err(Error::InvalidInput("liking data has no observed values".into()));
    }

    let mut factors = Vec::new();
    for (k, name) in design.col_labels().iter().enumerate() {
        let values: Vec<f64> = product.iter().map(|&j| d[(j, k)]).collect();
        let (levels, codes) = factor_codes(&values);
        factors.push(Factor {
            name: name.clone(),
            kind: FactorKind::Design,
            levels,
            codes,
        });
    }
    if let (Some(c), Some(m)) = (characteristics, ch.as_ref()) {
        for (k, name) in c.col_labels().iter().enumerate() {
            let values: Vec<f64> = consumer.iter().map(|&n| m[(n, k)]).collect();
            let (levels, codes) = factor_codes(&values);
            factors.push(Factor {
                name: name.clone(),
                kind: FactorKind::Characteristic,
                levels,
                codes,
            });
        }
    }
    Ok(LongTable {
        consumer_labels: liking.col_labels().to_vec(),
        product_labels: liking.row_labels().to_vec(),
        consumer,
        product,
        response,
        factors,
    })
}
