//! Bilinear latent-variable models: PCA, PLS regression and principal
//! component regression, all extracted with NIPALS.
//!
//! Every fit works on centered (optionally standardised) data. Explained
//! variances are reported cumulatively in percent of the preprocessed total
//! sum of squares; reconstructions and RMSE values are in original units.

mod corr;
mod export;
mod nipals;
mod preprocess;
mod validate;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub use corr::{correlation_loadings, pearson, CorrLoadings};
pub use export::{ModelExport, PlotPayload, RING_RADII};
pub use nipals::{MAX_ITERATIONS, TOLERANCE};
pub use preprocess::{preprocess, PreprocessSpec, Preprocessed, Scaling};
pub use validate::{loo_validate, Validation};
pub(crate) use export::nested;

use nipals::Components;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pca,
    Plsr,
    Pcr,
}

impl ModelKind {
    pub fn is_regression(self) -> bool {
        !matches!(self, ModelKind::Pca)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pca => "pca",
            ModelKind::Plsr => "plsr",
            ModelKind::Pcr => "pcr",
        }
    }
}

/// One side of a model: dense values plus labels.
#[derive(Debug, Clone)]
pub struct Block {
    pub matrix: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl Block {
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        Ok(Self {
            matrix: d.dense()?,
            row_labels: d.row_labels().to_vec(),
            col_labels: d.col_labels().to_vec(),
        })
    }

    pub fn new(matrix: DMatrix<f64>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        if row_labels.len() != matrix.nrows() || col_labels.len() != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "labels ({}×{}) do not match a {}×{} matrix",
                row_labels.len(),
                col_labels.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            row_labels,
            col_labels,
        })
    }
}

/// Fitted PCA, PLSR or PCR model.
#[derive(Debug, Clone)]
pub struct LatentModel {
    pub kind: ModelKind,
    pub n_components: usize,
    pub row_labels: Vec<String>,
    /// All X variable labels, including excluded ones.
    pub x_labels: Vec<String>,
    pub y_labels: Vec<String>,
    pub x_scaling: Scaling,
    pub y_scaling: Option<Scaling>,
    /// J×A
    pub x_scores: DMatrix<f64>,
    /// retained X vars × A
    pub x_loadings: DMatrix<f64>,
    pub x_weights: Option<DMatrix<f64>>,
    /// retained Y vars × A
    pub y_loadings: Option<DMatrix<f64>>,
    pub x_corr_loadings: CorrLoadings,
    pub y_corr_loadings: Option<CorrLoadings>,
    pub calib_explvar_x: Vec<f64>,
    pub calib_explvar_y: Vec<f64>,
    /// Cumulative reconstructions after 1..=A components, original units.
    pub x_reconstructions: Vec<DMatrix<f64>>,
    pub y_reconstructions: Vec<DMatrix<f64>>,
    /// Per-variable RMSE of the target block (X for PCA, Y otherwise), vars × A.
    pub rmse_calib: DMatrix<f64>,
    /// False for components past the rank of the data.
    pub active: Vec<bool>,
    pub validation: Option<Validation>,
}

impl LatentModel {
    pub fn excluded_x_vars(&self) -> Vec<String> {
        self.x_scaling.excluded.iter().map(|&j| self.x_labels[j].clone()).collect()
    }

    pub fn excluded_y_vars(&self) -> Vec<String> {
        self.y_scaling
            .as_ref()
            .map(|s| s.excluded.iter().map(|&j| self.y_labels[j].clone()).collect())
            .unwrap_or_default()
    }

    pub fn retained_x_labels(&self) -> Vec<String> {
        self.x_scaling.retained.iter().map(|&j| self.x_labels[j].clone()).collect()
    }

    pub fn retained_y_labels(&self) -> Vec<String> {
        self.y_scaling
            .as_ref()
            .map(|s| s.retained.iter().map(|&j| self.y_labels[j].clone()).collect())
            .unwrap_or_default()
    }

    pub fn component_labels(&self) -> Vec<String> {
        (1..=self.n_components).map(|a| format!("PC{a}")).collect()
    }

    /// Scores of new rows given in original X units.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self.x_scaling.apply(x);
        project_preprocessed(&z, &self.x_loadings, self.x_weights.as_ref(), &self.active)
    }
}

/// Sequential projection mirroring the deflation used during fitting.
pub(crate) fn project_preprocessed(
    z: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    weights: Option<&DMatrix<f64>>,
    active: &[bool],
) -> DMatrix<f64> {
    let a_max = loadings.ncols();
    let mut e = z.clone();
    let mut t = DMatrix::zeros(z.nrows(), a_max);
    for a in 0..a_max {
        if !active[a] {
            continue;
        }
        let w = weights.unwrap_or(loadings).column(a);
        let ta: DVector<f64> = &e * w;
        let p = loadings.column(a);
        e -= &ta * p.transpose();
        t.set_column(a, &ta);
    }
    t
}

/// Cumulative reconstructions `T_a B_aᵀ` for a = 1..=A in preprocessed space.
pub(crate) fn cumulative(t: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let mut acc = DMatrix::zeros(t.nrows(), b.nrows());
    (0..t.ncols())
        .map(|a| {
            acc += t.column(a) * b.column(a).transpose();
            acc.clone()
        })
        .collect()
}

fn explvar(ss: &[f64]) -> Vec<f64> {
    let total = ss[0];
    ss[1..]
        .iter()
        .map(|&r| if total > 0.0 { (100.0 * (1.0 - r / total)).clamp(0.0, 100.0) } else { 0.0 })
        .collect()
}

/// RMSE per variable (rows) and component (columns).
pub(crate) fn rmse(truth: &DMatrix<f64>, fits: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = truth.nrows() as f64;
    DMatrix::from_fn(truth.ncols(), fits.len(), |j, a| {
        let d = fits[a].column(j) - truth.column(j);
        (d.norm_squared() / n).sqrt()
    })
}

fn check_components(kind: ModelKind, rows: usize, retained: usize, a: usize) -> Result<()> {
    let max = match kind {
        ModelKind::Pca => rows.min(retained),
        _ => rows.saturating_sub(1).min(retained),
    };
    if a == 0 || a > max {
        return Err(Error::InvalidInput(format!(
            "number of components must be between 1 and {max}, got {a}"
        )));
    }
    Ok(())
}

pub(crate) struct Engine {
    pub x: Preprocessed,
    pub y: Option<Preprocessed>,
    pub comps: Components,
}

/// Preprocess and extract components without any of the reporting.
pub(crate) fn run_engine(
    kind: ModelKind,
    x: &DMatrix<f64>,
    y: Option<&DMatrix<f64>>,
    spec_x: PreprocessSpec,
    spec_y: PreprocessSpec,
    a: usize,
) -> Result<Engine> {
    let px = preprocess(x, spec_x)?;
    let py = y.map(|y| preprocess(y, spec_y)).transpose()?;
    let comps = match (kind, &py) {
        (ModelKind::Pca, _) => nipals::pca(&px.matrix, a)?,
        (ModelKind::Plsr, Some(py)) => nipals::pls(&px.matrix, &py.matrix, a)?,
        (ModelKind::Pcr, Some(py)) => nipals::pcr(&px.matrix, &py.matrix, a)?,
        _ => return Err(Error::InvalidInput(format!("{} needs a Y block", kind.as_str()))),
    };
    Ok(Engine { x: px, y: py, comps })
}

fn fit(kind: ModelKind, x: &Block, y: Option<&Block>, spec_x: PreprocessSpec, spec_y: PreprocessSpec, a: usize) -> Result<LatentModel> {
    if let Some(y) = y {
        if y.matrix.nrows() != x.matrix.nrows() {
            return Err(Error::Dimension(format!(
                "row counts differ ({} vs {})",
                x.matrix.nrows(),
                y.matrix.nrows()
            )));
        }
    }
    let rows = x.matrix.nrows();
    let px = preprocess(&x.matrix, spec_x)?;
    check_components(kind, rows, px.matrix.ncols(), a)?;
    let Engine { x: px, y: py, comps } = run_engine(kind, &x.matrix, y.map(|b| &b.matrix), spec_x, spec_y, a)?;

    let x_rec: Vec<_> = cumulative(&comps.scores, &comps.loadings)
        .iter()
        .map(|z| px.scaling.restore(z))
        .collect();
    let y_rec: Vec<_> = match (&py, &comps.y_loadings) {
        (Some(py), Some(q)) => cumulative(&comps.scores, q).iter().map(|z| py.scaling.restore(z)).collect(),
        _ => Vec::new(),
    };
    let rmse_calib = match y {
        Some(y) => rmse(&y.matrix, &y_rec),
        None => rmse(&x.matrix, &x_rec),
    };
    let x_corr = correlation_loadings(&x.matrix, &comps.scores, &x.col_labels);
    let y_corr = y.map(|y| correlation_loadings(&y.matrix, &comps.scores, &y.col_labels));

    Ok(LatentModel {
        kind,
        n_components: a,
        row_labels: x.row_labels.clone(),
        x_labels: x.col_labels.clone(),
        y_labels: y.map(|b| b.col_labels.clone()).unwrap_or_default(),
        x_scaling: px.scaling,
        y_scaling: py.map(|p| p.scaling),
        calib_explvar_x: explvar(&comps.x_ss),
        calib_explvar_y: comps.y_ss.as_deref().map(explvar).unwrap_or_default(),
        x_scores: comps.scores,
        x_loadings: comps.loadings,
        x_weights: comps.weights,
        y_loadings: comps.y_loadings,
        x_corr_loadings: x_corr,
        y_corr_loadings: y_corr,
        x_reconstructions: x_rec,
        y_reconstructions: y_rec,
        rmse_calib,
        active: comps.active,
        validation: None,
    })
}

pub fn fit_pca(x: &Block, spec: PreprocessSpec, a: usize) -> Result<LatentModel> {
    fit(ModelKind::Pca, x, None, spec, PreprocessSpec::default(), a)
}

pub fn fit_plsr(x: &Block, y: &Block, spec_x: PreprocessSpec, spec_y: PreprocessSpec, a: usize) -> Result<LatentModel> {
    fit(ModelKind::Plsr, x, Some(y), spec_x, spec_y, a)
}

pub fn fit_pcr(x: &Block, y: &Block, spec_x: PreprocessSpec, spec_y: PreprocessSpec, a: usize) -> Result<LatentModel> {
    fit(ModelKind::Pcr, x, Some(y), spec_x, spec_y, a)
}

/// Fit followed by leave-one-out validation attached to the model.
pub fn fit_validated(
    kind: ModelKind,
    x: &Block,
    y: Option<&Block>,
    spec_x: PreprocessSpec,
    spec_y: PreprocessSpec,
    a: usize,
) -> Result<LatentModel> {
    let mut m = fit(kind, x, y, spec_x, spec_y, a)?;
    m.validation = Some(loo_validate(kind, &x.matrix, y.map(|b| &b.matrix), spec_x, spec_y, a)?);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::auto_labels;

    pub(crate) fn block(m: DMatrix<f64>) -> Block {
        let (r, c) = m.shape();
        Block::new(m, auto_labels("R", r), auto_labels("C", c)).unwrap()
    }

    #[test]
    fn cross_example_through_public_api() {
        let x = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, -2.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let m = fit_pca(&block(x), PreprocessSpec::default(), 2).unwrap();
        assert!((m.calib_explvar_x[0] - 80.0).abs() < 1e-12);
        assert!((m.calib_explvar_x[1] - 100.0).abs() < 1e-12);
        assert_eq!(m.x_loadings.column(0).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn too_many_components() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        assert!(matches!(fit_pca(&block(x.clone()), PreprocessSpec::default(), 3), Err(Error::InvalidInput(_))));
        let y = block(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 4.0]));
        assert!(fit_plsr(&block(x.clone()), &y, PreprocessSpec::default(), PreprocessSpec::default(), 2).is_ok());
        assert!(fit_plsr(&block(x), &y, PreprocessSpec::default(), PreprocessSpec::default(), 3).is_err());
    }

    #[test]
    fn row_mismatch_message() {
        let x = block(DMatrix::zeros(5, 2));
        let y = block(DMatrix::zeros(8, 2));
        let err = fit_plsr(&x, &y, PreprocessSpec::default(), PreprocessSpec::default(), 1).unwrap_err();
        assert_eq!(err.to_string(), "row counts differ (5 vs 8)");
    }

    #[test]
    fn projection_reproduces_training_scores() {
        let x = DMatrix::from_row_slice(
            5,
            3,
            &[1.0, 2.0, 0.5, 3.0, 1.0, 2.0, 0.0, 4.0, 1.0, 2.0, 2.0, 3.0, 5.0, 0.0, 0.0],
        );
        let y = DMatrix::from_column_slice(5, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 0.5, 1.5, 1.0, 0.0, 2.0]);
        let m = fit_plsr(&block(x.clone()), &block(y), PreprocessSpec::standardised(), PreprocessSpec::default(), 2).unwrap();
        let t = m.project(&x);
        assert!((t - &m.x_scores).abs().max() < 1e-10);
    }
}
