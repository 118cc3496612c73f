//! Descriptive statistics of liking data: box-plot five-number summaries
//! and rating histograms, computed per product (row-wise) or per consumer
//! (column-wise).
//!
//! Quartiles use linear interpolation between order statistics: for a
//! sorted series `x[0..n]` the `p` quantile is read at position `(n-1)p`.
//! Whiskers span the full observed range.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{require, Dataset, MethodNeeds};
use crate::error::{Error, Result};
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[default]
    RowWise,
    ColumnWise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub series_label: String,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn series(d: &Dataset, axis: Axis) -> Vec<(String, Vec<Option<f64>>)> {
    match axis {
        Axis::RowWise => (0..d.nrows())
            .map(|r| (d.row_labels()[r].clone(), d.values().row(r).to_vec()))
            .collect(),
        Axis::ColumnWise => (0..d.ncols())
            .map(|c| (d.col_labels()[c].clone(), d.values().column(c)))
            .collect(),
    }
}

pub fn box_stats(d: &Dataset, axis: Axis) -> Result<Vec<BoxSummary>> {
    require(d, &MethodNeeds::complete())?;
    Ok(series(d, axis)
        .into_iter()
        .map(|(label, vals)| {
            let mut v: Vec<f64> = vals.into_iter().flatten().collect();
            v.sort_by(f64::total_cmp);
            BoxSummary {
                series_label: label,
                min: v[0],
                q25: quantile_sorted(&v, 0.25),
                median: quantile_sorted(&v, 0.5),
                q75: quantile_sorted(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect())
}

pub fn box_table(stats: &[BoxSummary]) -> Table {
    let mut t = Table::new("box_plot", &["series", "max", "q75", "median", "q25", "min"]);
    for b in stats {
        t.push(vec![
            b.series_label.as_str().into(),
            b.max.into(),
            b.q75.into(),
            b.median.into(),
            b.q25.into(),
            b.min.into(),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HistogramOptions {
    pub as_percent: bool,
    /// Inclusive rating range; defaults to the observed min..max.
    pub scale: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramTable {
    pub series_labels: Vec<String>,
    pub bin_values: Vec<i64>,
    /// series × bins
    pub counts: Vec<Vec<usize>>,
    pub percents: Vec<Vec<f64>>,
    pub as_percent: bool,
}

impl HistogramTable {
    pub fn to_table(&self, name: &str) -> Table {
        let bins: Vec<String> = self.bin_values.iter().map(i64::to_string).collect();
        let mut cols = vec!["series"];
        cols.extend(bins.iter().map(String::as_str));
        let mut t = Table::new(name, &cols);
        for (i, label) in self.series_labels.iter().enumerate() {
            let mut row = vec![Cell::from(label.as_str())];
            if self.as_percent {
                row.extend(self.percents[i].iter().map(|&p| Cell::from(p)));
            } else {
                row.extend(self.counts[i].iter().map(|&c| Cell::from(c)));
            }
            t.push(row);
        }
        t
    }
}

fn rating(v: f64) -> Result<i64> {
    if v.fract() != 0.0 || v.abs() > 1e15 {
        return Err(Error::InvalidInput(format!(
            "histograms need integer ratings, found {v}"
        )));
    }
    Ok(v as i64)
}

fn histogram(series: Vec<(String, Vec<Option<f64>>)>, opts: HistogramOptions) -> Result<HistogramTable> {
    let mut per_series = Vec::with_capacity(series.len());
    let mut all = BTreeMap::<i64, ()>::new();
    for (label, vals) in series {
        let mut counts = BTreeMap::<i64, usize>::new();
        for v in vals.into_iter().flatten() {
            let r = rating(v)?;
            *counts.entry(r).or_default() += 1;
            all.insert(r, ());
        }
        per_series.push((label, counts));
    }
    let (lo, hi) = match opts.scale {
        Some((lo, hi)) if lo <= hi => (lo, hi),
        Some((lo, hi)) => return Err(Error::InvalidInput(format!("empty rating scale {lo}..{hi}"))),
        None => match (all.keys().next(), all.keys().next_back()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => return Err(Error::InvalidInput("no ratings present".into())),
        },
    };
    if let Some(&outside) = all.keys().find(|&&r| r < lo || r > hi) {
        return Err(Error::InvalidInput(format!(
            "rating {outside} lies outside the scale {lo}..{hi}"
        )));
    }
    if hi - lo > 10_000 {
        return Err(Error::InvalidInput("rating scale too wide for a histogram".into()));
    }
    let bin_values: Vec<i64> = (lo..=hi).collect();
    let mut table = HistogramTable {
        series_labels: Vec::new(),
        bin_values,
        counts: Vec::new(),
        percents: Vec::new(),
        as_percent: opts.as_percent,
    };
    for (label, counts) in per_series {
        let row: Vec<usize> = table
            .bin_values
            .iter()
            .map(|b| counts.get(b).copied().unwrap_or(0))
            .collect();
        let n: usize = row.iter().sum();
        let pct = row
            .iter()
            .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
            .collect();
        table.series_labels.push(label);
        table.counts.push(row);
        table.percents.push(pct);
    }
    Ok(table)
}

/// Count of each rating level per series; missing cells are skipped.
pub fn stacked_histogram(d: &Dataset, axis: Axis, opts: HistogramOptions) -> Result<HistogramTable> {
    histogram(series(d, axis), opts)
}

/// Histogram of a single row, looked up by its label.
pub fn product_histogram(d: &Dataset, series_label: &str, opts: HistogramOptions) -> Result<HistogramTable> {
    let r = d
        .row_index(series_label)
        .ok_or_else(|| Error::NoSuchSeries(series_label.to_owned()))?;
    histogram(
        vec![(series_label.to_owned(), d.values().row(r).to_vec())],
        opts,
    )
}
