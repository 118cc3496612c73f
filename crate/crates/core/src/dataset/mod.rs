//! Role-tagged data matrices with labels, missing cells and group metadata.
//!
//! A [`Dataset`] is immutable once built. Every transformation
//! ([`transpose_copy`], [`Dataset::with_name`]) returns a new value with a
//! fresh id.

mod export;
mod import;
mod workbook;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, ImportError, Result};

pub use export::to_delimited;
pub use import::{import_dataset, Decimal, Delimiter, Encoding, FileFormat, ImportOptions};

/// What a dataset holds, which fixes the meaning of its axes.
///
/// | role            | rows      | columns        |
/// |-----------------|-----------|----------------|
/// | liking          | products  | consumers      |
/// | characteristics | consumers | variables      |
/// | design          | products  | design factors |
/// | descriptive     | products  | attributes     |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Liking,
    Characteristics,
    Design,
    Descriptive,
    Other,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Liking => "liking",
            Role::Characteristics => "characteristics",
            Role::Design => "design",
            Role::Descriptive => "descriptive",
            Role::Other => "other",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "liking" => Ok(Role::Liking),
            "characteristics" => Ok(Role::Characteristics),
            "design" => Ok(Role::Design),
            "descriptive" => Ok(Role::Descriptive),
            "other" => Ok(Role::Other),
            _ => Err(format!("unknown dataset role '{s}'")),
        }
    }
}

/// Row-major matrix of optional values; `None` is a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CellMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Option<f64>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("a dataset needs at least one row and one column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} cells supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix cells must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::Dimension(format!(
                "row {} has {} cells, expected {k}",
                i + 1,
                r.len()
            )));
        }
        Self::new(n, k, rows.into_iter().flatten().collect())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| Some(m[(i, j)])))
            .collect();
        Self::new(m.nrows(), m.ncols(), data)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Option<f64>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Option<f64>> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.data
    }

    pub fn missing_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(move |(i, _)| (i / self.cols, i % self.cols))
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(Option::is_none)
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Dense copy, or `None` when any cell is missing.
    pub fn to_dense(&self) -> Option<DMatrix<f64>> {
        if self.has_missing() {
            return None;
        }
        Some(DMatrix::from_fn(self.rows, self.cols, |r, c| {
            self.get(r, c).unwrap_or_default()
        }))
    }

    pub fn to_nested(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

impl Serialize for CellMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_nested().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<Option<f64>>>::deserialize(d)?;
        CellMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// Category labels attached to every row (or every column) of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub labels: Vec<String>,
}

/// A named, role-tagged numeric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetDocument", into = "DatasetDocument")]
pub struct Dataset {
    id: String,
    name: String,
    role: Role,
    values: CellMatrix,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    row_groups: Vec<Group>,
    col_groups: Vec<Group>,
}

pub(crate) fn fresh_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

pub fn auto_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        role: Role,
        values: CellMatrix,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        if row_labels.len() != values.nrows() || col_labels.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} row labels and {} column labels for a {}x{} matrix",
                row_labels.len(),
                col_labels.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self {
            id: fresh_id(),
            name: name.into(),
            role,
            values,
            row_labels,
            col_labels,
            row_groups: Vec::new(),
            col_groups: Vec::new(),
        })
    }

    /// Build from a dense matrix with auto-generated `R1..`/`C1..` labels.
    pub fn from_dense(name: impl Into<String>, role: Role, m: &DMatrix<f64>) -> Result<Self> {
        let values = CellMatrix::from_dense(m)?;
        let rows = auto_labels("R", m.nrows());
        let cols = auto_labels("C", m.ncols());
        Self::new(name, role, values, rows, cols)
    }

    pub fn with_labels(mut self, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        if row_labels.len() != self.nrows() || col_labels.len() != self.ncols() {
            return Err(Error::Dimension("label count does not match matrix".into()));
        }
        self.row_labels = row_labels;
        self.col_labels = col_labels;
        Ok(self)
    }

    pub fn with_row_group(mut self, name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if labels.len() != self.nrows() {
            return Err(Error::Dimension(format!(
                "row group '{name}' has {} labels for {} rows",
                labels.len(),
                self.nrows()
            )));
        }
        self.row_groups.push(Group { name, labels });
        Ok(self)
    }

    pub fn with_col_group(mut self, name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if labels.len() != self.ncols() {
            return Err(Error::Dimension(format!(
                "column group '{name}' has {} labels for {} columns",
                labels.len(),
                self.ncols()
            )));
        }
        self.col_groups.push(Group { name, labels });
        Ok(self)
    }

    /// Copy under a new name and a fresh id.
    pub fn with_name(&self, name: impl Into<String>) -> Self {
        Self {
            id: fresh_id(),
            name: name.into(),
            ..self.clone()
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn values(&self) -> &CellMatrix {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn row_groups(&self) -> &[Group] {
        &self.row_groups
    }

    pub fn col_groups(&self) -> &[Group] {
        &self.col_groups
    }

    pub fn row_index(&self, label: &str) -> Option<usize> {
        self.row_labels.iter().position(|l| l == label)
    }

    pub fn col_index(&self, label: &str) -> Option<usize> {
        self.col_labels.iter().position(|l| l == label)
    }

    /// Dense values; fails with a missing-value violation otherwise.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        self.values.to_dense().ok_or_else(|| {
            Error::Validation(vec![Violation::MissingValues {
                cells: self.values.missing_cells().collect(),
            }])
        })
    }
}

/// On-disk / wire representation of a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetDocument {
    pub meta: DatasetMeta,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub groups: GroupsDocument,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub id: String,
    pub name: String,
    pub role: Role,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroupsDocument {
    #[serde(default)]
    pub rows: Vec<Group>,
    #[serde(default)]
    pub cols: Vec<Group>,
}

impl From<Dataset> for DatasetDocument {
    fn from(d: Dataset) -> Self {
        Self {
            meta: DatasetMeta {
                id: d.id,
                name: d.name,
                role: d.role,
            },
            values: d.values.to_nested(),
            row_labels: d.row_labels,
            col_labels: d.col_labels,
            groups: GroupsDocument {
                rows: d.row_groups,
                cols: d.col_groups,
            },
        }
    }
}

impl TryFrom<DatasetDocument> for Dataset {
    type Error = ImportError;

    fn try_from(doc: DatasetDocument) -> std::result::Result<Self, Self::Error> {
        let bad = |e: Error| ImportError::Document(e.to_string());
        let values = CellMatrix::from_rows(doc.values).map_err(bad)?;
        let mut d = Dataset::new(doc.meta.name, doc.meta.role, values, doc.row_labels, doc.col_labels)
            .map_err(bad)?;
        d.id = doc.meta.id;
        for g in doc.groups.rows {
            d = d.with_row_group(g.name, g.labels).map_err(bad)?;
        }
        for g in doc.groups.cols {
            d = d.with_col_group(g.name, g.labels).map_err(bad)?;
        }
        Ok(d)
    }
}

impl Dataset {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> std::result::Result<Self, ImportError> {
        serde_json::from_slice(bytes).map_err(|e| ImportError::Document(e.to_string()))
    }
}

/// New dataset with rows and columns swapped, including labels and groups.
pub fn transpose_copy(d: &Dataset) -> Dataset {
    Dataset {
        id: fresh_id(),
        name: format!("{}-transposed", d.name),
        role: d.role,
        values: d.values.transpose(),
        row_labels: d.col_labels.clone(),
        col_labels: d.row_labels.clone(),
        row_groups: d.col_groups.clone(),
        col_groups: d.row_groups.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub cols: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub missing_count: usize,
    /// Set when only one value is present; `std` is then reported as 0.
    pub std_degenerate: bool,
}

/// Statistics over all non-missing cells; `std` uses the n-1 denominator.
pub fn summarize(d: &Dataset) -> DatasetSummary {
    let present: Vec<f64> = d.values.cells().iter().flatten().copied().collect();
    let missing_count = d.values.cells().len() - present.len();
    let (rows, cols) = (d.nrows(), d.ncols());
    if present.is_empty() {
        return DatasetSummary {
            rows,
            cols,
            mean: None,
            std: None,
            min: None,
            max: None,
            missing_count,
            std_degenerate: false,
        };
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let (std, std_degenerate) = if present.len() == 1 {
        (0.0, true)
    } else {
        let ss: f64 = present.iter().map(|v| (v - mean).powi(2)).sum();
        ((ss / (n - 1.0)).sqrt(), false)
    };
    let min = present.iter().copied().fold(f64::INFINITY, f64::min);
    let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    DatasetSummary {
        rows,
        cols,
        // clamp guards the last-ulp case where the float mean drifts outside [min, max]
        mean: Some(mean.clamp(min, max)),
        std: Some(std),
        min: Some(min),
        max: Some(max),
        missing_count,
        std_degenerate,
    }
}

/// What a statistical method requires of its input dataset.
#[derive(Debug, Clone, Default)]
pub struct MethodNeeds {
    pub no_missing: bool,
    pub min_rows: usize,
    pub min_cols: usize,
    /// Empty means any role is accepted.
    pub roles: Vec<Role>,
}

impl MethodNeeds {
    pub fn complete() -> Self {
        Self {
            no_missing: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingValues { cells: Vec<(usize, usize)> },
    TooFewRows { need: usize, have: usize },
    TooFewCols { need: usize, have: usize },
    WrongRole { found: Role, allowed: Vec<Role> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingValues { cells } => {
                let shown: Vec<String> = cells
                    .iter()
                    .take(5)
                    .map(|(r, c)| format!("({},{})", r + 1, c + 1))
                    .collect();
                let more = if cells.len() > 5 {
                    format!(" and {} more", cells.len() - 5)
                } else {
                    String::new()
                };
                write!(f, "missing values present at {}{more}", shown.join(", "))
            }
            Violation::TooFewRows { need, have } => {
                write!(f, "at least {need} rows required, dataset has {have}")
            }
            Violation::TooFewCols { need, have } => {
                write!(f, "at least {need} columns required, dataset has {have}")
            }
            Violation::WrongRole { found, allowed } => {
                let names: Vec<&str> = allowed.iter().map(|r| r.as_str()).collect();
                write!(f, "dataset role '{found}' not accepted; expected one of {}", names.join(", "))
            }
        }
    }
}

/// Collect every unmet requirement, not just the first.
pub fn validate_for_method(d: &Dataset, needs: &MethodNeeds) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if needs.no_missing && d.values.has_missing() {
        out.push(Violation::MissingValues {
            cells: d.values.missing_cells().collect(),
        });
    }
    if d.nrows() < needs.min_rows {
        out.push(Violation::TooFewRows {
            need: needs.min_rows,
            have: d.nrows(),
        });
    }
    if d.ncols() < needs.min_cols {
        out.push(Violation::TooFewCols {
            need: needs.min_cols,
            have: d.ncols(),
        });
    }
    if !needs.roles.is_empty() && !needs.roles.contains(&d.role) {
        out.push(Violation::WrongRole {
            found: d.role,
            allowed: needs.roles.clone(),
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// `validate_for_method` lifted into the crate error type.
pub fn require(d: &Dataset, needs: &MethodNeeds) -> Result<()> {
    validate_for_method(d, needs).map_err(Error::Validation)
}
