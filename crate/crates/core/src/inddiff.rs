//! Individual differences: relating liking to consumer characteristics.
//!
//! Characteristics are the X block of a PLS regression. The Y block is
//! either the raw liking data with consumers as rows, a selection of PCA
//! loadings of the liking data, or the membership indicators of a set of
//! consumer segments (PLS-DA).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{CellMatrix, Dataset, Role};
use crate::error::{Error, Result};
use crate::latent::{fit_plsr, fit_pca, fit_validated, Block, LatentModel, ModelKind, PreprocessSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyExpansion {
    pub source: String,
    pub levels: Vec<f64>,
    /// Column labels, `<source>.<level>`.
    pub labels: Vec<String>,
    /// Rows × levels indicator matrix.
    #[serde(with = "crate::latent::nested")]
    pub matrix: DMatrix<f64>,
    pub warning: Option<String>,
}

/// Full indicator coding of a categorical column: one column per distinct
/// level, no reference level dropped.
pub fn dummify(source: &str, values: &[f64]) -> Result<DummyExpansion> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "column '{source}' has a non-finite value at row {}",
            i + 1
        )));
    }
    let mut levels = values.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let matrix = DMatrix::from_fn(values.len(), levels.len(), |i, j| f64::from(u8::from(values[i] == levels[j])));
    let warning = (levels.len() == 1).then(|| {
        format!("column '{source}' has a single level; its indicator is constant and collinear with the intercept")
    });
    Ok(DummyExpansion {
        source: source.to_owned(),
        labels: levels.iter().map(|l| format!("{source}.{l}")).collect(),
        levels,
        matrix,
        warning,
    })
}

/// Characteristics as an X block, with the named columns replaced in place
/// by their indicator expansions.
pub fn characteristics_block(characteristics: &Dataset, categorical: &[String]) -> Result<(Block, Vec<String>)> {
    for c in categorical {
        if characteristics.col_index(c).is_none() {
            return Err(Error::InvalidInput(format!("unknown characteristic '{c}'")));
        }
    }
    let m = characteristics.dense()?;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut warnings = Vec::new();
    for (j, label) in characteristics.col_labels().iter().enumerate() {
        let column: Vec<f64> = m.column(j).iter().copied().collect();
        if categorical.contains(label) {
            let d = dummify(label, &column)?;
            warnings.extend(d.warning.clone());
            for k in 0..d.levels.len() {
                cols.push(d.matrix.column(k).iter().copied().collect());
            }
            labels.extend(d.labels);
        } else {
            cols.push(column);
            labels.push(label.clone());
        }
    }
    let x = DMatrix::from_fn(m.nrows(), cols.len(), |i, j| cols[j][i]);
    Ok((Block::new(x, characteristics.row_labels().to_vec(), labels)?, warnings))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LikingMode {
    /// Y = liking with consumers as rows.
    RawLiking,
    /// Y = selected loading columns (1-based component numbers) of a PCA of
    /// the liking data.
    PcaLoadings { components: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndDiffSpec {
    /// Characteristics to expand into indicator columns.
    pub categorical: Vec<String>,
    pub standardise_x: bool,
    pub standardise_y: bool,
    pub n_components: usize,
    pub validate: bool,
}

impl Default for IndDiffSpec {
    fn default() -> Self {
        Self {
            categorical: Vec::new(),
            standardise_x: true,
            standardise_y: false,
            n_components: 2,
            validate: true,
        }
    }
}

fn fit(x: &Block, y: &Block, spec: &IndDiffSpec) -> Result<LatentModel> {
    let sx = PreprocessSpec {
        standardise: spec.standardise_x,
    };
    let sy = PreprocessSpec {
        standardise: spec.standardise_y,
    };
    if spec.validate {
        fit_validated(ModelKind::Plsr, x, Some(y), sx, sy, spec.n_components)
    } else {
        fit_plsr(x, y, sx, sy, spec.n_components)
    }
}

#[derive(Debug, Clone)]
pub struct IndDiffModel {
    pub model: LatentModel,
    pub warnings: Vec<String>,
}

pub fn pls_individual(
    liking: &Dataset,
    characteristics: &Dataset,
    mode: &LikingMode,
    spec: &IndDiffSpec,
) -> Result<IndDiffModel> {
    if liking.ncols() != characteristics.nrows() {
        return Err(Error::Dimension(format!(
            "liking has {} consumers but characteristics has {} rows",
            liking.ncols(),
            characteristics.nrows()
        )));
    }
    let (x, warnings) = characteristics_block(characteristics, &spec.categorical)?;
    let lik = liking.dense()?;
    let y = match mode {
        LikingMode::RawLiking => Block::new(lik.transpose(), x.row_labels.clone(), liking.row_labels().to_vec())?,
        LikingMode::PcaLoadings { components } => {
            if components.is_empty() {
                return Err(Error::InvalidInput("no principal components selected".into()));
            }
            let top = *components.iter().max().expect("non-empty");
            if components.contains(&0) {
                return Err(Error::InvalidInput("component numbers start at 1".into()));
            }
            let pca = fit_pca(
                &Block::new(lik, liking.row_labels().to_vec(), liking.col_labels().to_vec())?,
                PreprocessSpec::default(),
                top,
            )?;
            let loadings = &pca.x_loadings;
            let y = DMatrix::from_fn(loadings.nrows(), components.len(), |i, j| loadings[(i, components[j] - 1)]);
            Block::new(y, x.row_labels.clone(), components.iter().map(|c| format!("PC{c}")).collect())?
        }
    };
    Ok(IndDiffModel {
        model: fit(&x, &y, spec)?,
        warnings,
    })
}

/// Consumer segments; not every consumer needs to belong to one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SegmentDocument", into = "SegmentDocument")]
pub struct SegmentSet {
    name: String,
    labels: Vec<String>,
    assignment: Vec<Option<usize>>,
    n_segments: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SegmentDocument {
    name: String,
    labels: Vec<String>,
    assignment: Vec<Option<usize>>,
}

impl TryFrom<SegmentDocument> for SegmentSet {
    type Error = Error;

    fn try_from(d: SegmentDocument) -> Result<Self> {
        SegmentSet::new(d.name, d.labels, d.assignment)
    }
}

impl From<SegmentSet> for SegmentDocument {
    fn from(s: SegmentSet) -> Self {
        Self {
            name: s.name,
            labels: s.labels,
            assignment: s.assignment,
        }
    }
}

impl SegmentSet {
    /// The number of segments is one past the largest index used.
    pub fn new(name: impl Into<String>, labels: Vec<String>, assignment: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != assignment.len() {
            return Err(Error::Dimension(format!(
                "{} consumer labels but {} assignments",
                labels.len(),
                assignment.len()
            )));
        }
        let n_segments = assignment.iter().flatten().max().map_or(0, |m| m + 1);
        Ok(Self {
            name: name.into(),
            labels,
            assignment,
            n_segments,
        })
    }

    /// Read segment indices from one column of a consumer-rows dataset.
    /// Missing cells are unassigned; other values must be non-negative
    /// integers.
    pub fn from_column(d: &Dataset, column: &str) -> Result<Self> {
        let j = d
            .col_index(column)
            .ok_or_else(|| Error::InvalidInput(format!("no column '{column}' in '{}'", d.name())))?;
        let assignment = d
            .values()
            .column(j)
            .into_iter()
            .enumerate()
            .map(|(i, v)| match v {
                None => Ok(None),
                Some(x) if x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64 => Ok(Some(x as usize)),
                Some(x) => Err(Error::InvalidInput(format!(
                    "segment index {x} at row {} is not a non-negative integer",
                    i + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(column, d.row_labels().to_vec(), assignment)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    /// Segment indices with at least one member, ascending.
    pub fn used_segments(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.assignment.iter().flatten().copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_segments];
        for k in self.assignment.iter().flatten() {
            s[*k] += 1;
        }
        s
    }
}

/// Consumers × 1 dataset of segment indices; unassigned consumers are
/// missing.
pub fn segments_to_dataset(s: &SegmentSet) -> Result<Dataset> {
    let cells = CellMatrix::new(
        s.labels.len(),
        1,
        s.assignment.iter().map(|a| a.map(|k| k as f64)).collect(),
    )?;
    Dataset::new(s.name.clone(), Role::Characteristics, cells, s.labels.clone(), vec![s.name.clone()])
}

/// PLS-DA: segment membership indicators of the assigned consumers
/// regressed on their characteristics.
pub fn segment_discriminant(segments: &SegmentSet, characteristics: &Dataset, spec: &IndDiffSpec) -> Result<IndDiffModel> {
    if segments.labels.len() != characteristics.nrows() {
        return Err(Error::Dimension(format!(
            "segment set covers {} consumers but characteristics has {} rows",
            segments.labels.len(),
            characteristics.nrows()
        )));
    }
    let used = segments.used_segments();
    if used.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "segment discrimination needs at least 2 segments, found {}",
            used.len()
        )));
    }
    let rows: Vec<usize> = (0..segments.labels.len())
        .filter(|&i| segments.assignment[i].is_some())
        .collect();
    if rows.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "segment discrimination needs at least 3 assigned consumers, found {}",
            rows.len()
        )));
    }
    let (full, warnings) = characteristics_block(characteristics, &spec.categorical)?;
    let row_labels: Vec<String> = rows.iter().map(|&i| full.row_labels[i].clone()).collect();
    let x = Block::new(
        DMatrix::from_fn(rows.len(), full.matrix.ncols(), |i, j| full.matrix[(rows[i], j)]),
        row_labels.clone(),
        full.col_labels,
    )?;
    let y = Block::new(
        DMatrix::from_fn(rows.len(), used.len(), |i, k| {
            f64::from(u8::from(segments.assignment[rows[i]] == Some(used[k])))
        }),
        row_labels,
        used.iter().map(|k| format!("Segment {k}")).collect(),
    )?;
    Ok(IndDiffModel {
        model: fit(&x, &y, spec)?,
        warnings,
    })
}

/// Colour cycle for a priori groups, in sorted level order. Groups beyond
/// the palette length reuse colours from the start.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub level: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoredPoints {
    pub labels: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Legend index of every point.
    pub group: Vec<usize>,
    pub legend: Vec<LegendEntry>,
}

/// Colour plot points (one per consumer) by the levels of a discrete
/// characteristics column.
pub fn apriori_color_payload(labels: &[String], points: &[(f64, f64)], column: &[f64]) -> Result<ColoredPoints> {
    if points.len() != column.len() || labels.len() != points.len() {
        return Err(Error::Dimension(format!(
            "{} points, {} labels and {} grouping values",
            points.len(),
            labels.len(),
            column.len()
        )));
    }
    let d = dummify("group", column)?;
    let group = (0..column.len())
        .map(|i| (0..d.levels.len()).find(|&k| d.matrix[(i, k)] == 1.0).expect("every row has a level"))
        .collect();
    Ok(ColoredPoints {
        labels: labels.to_vec(),
        x: points.iter().map(|p| p.0).collect(),
        y: points.iter().map(|p| p.1).collect(),
        group,
        legend: d
            .levels
            .iter()
            .enumerate()
            .map(|(k, l)| LegendEntry {
                level: format!("{l}"),
                color: PALETTE[k % PALETTE.len()].to_owned(),
            })
            .collect(),
    })
}
