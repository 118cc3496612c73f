//! Full (leave-one-out) cross-validation.
//!
//! Each fold refits the model on the remaining rows with fresh centering
//! and scaling, maps the left-out row through the training statistics and
//! reconstructs it cumulatively after each component. Prediction errors are
//! accumulated in the preprocessed scale of the full data so validated and
//! calibrated explained variances share one denominator.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{cumulative, preprocess, project_preprocessed, rmse, run_engine, ModelKind, PreprocessSpec, Scaling};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Validation {
    pub valid_explvar_x: Vec<f64>,
    pub valid_explvar_y: Vec<f64>,
    /// Per-variable RMSECV of the target block, vars × A.
    pub rmse_cv: DMatrix<f64>,
    /// Validated predictions after 1..=A components, original units.
    pub x_predictions: Vec<DMatrix<f64>>,
    pub y_predictions: Vec<DMatrix<f64>>,
}

struct FoldOutput {
    x_hat: Vec<Vec<f64>>,
    y_hat: Vec<Vec<f64>>,
}

fn drop_row(m: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    m.clone().remove_row(j)
}

fn single_row(m: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    m.rows(j, 1).clone_owned()
}

fn fold(
    kind: ModelKind,
    j: usize,
    x: &DMatrix<f64>,
    y: Option<&DMatrix<f64>>,
    spec_x: PreprocessSpec,
    spec_y: PreprocessSpec,
    full_excluded: (&[usize], &[usize]),
    a: usize,
) -> Result<FoldOutput> {
    let train_y = y.map(|y| drop_row(y, j));
    let engine = run_engine(kind, &drop_row(x, j), train_y.as_ref(), spec_x, spec_y, a)?;
    check_same_exclusions("X", &engine.x.scaling, full_excluded.0)?;
    if let Some(py) = &engine.y {
        check_same_exclusions("Y", &py.scaling, full_excluded.1)?;
    }
    let c = &engine.comps;
    let z = engine.x.scaling.apply(&single_row(x, j));
    let t = project_preprocessed(&z, &c.loadings, c.weights.as_ref(), &c.active);
    let x_hat = cumulative(&t, &c.loadings)
        .iter()
        .map(|r| engine.x.scaling.restore(r).iter().copied().collect())
        .collect();
    let y_hat = match (&engine.y, &c.y_loadings) {
        (Some(py), Some(q)) => cumulative(&t, q)
            .iter()
            .map(|r| py.scaling.restore(r).iter().copied().collect())
            .collect(),
        _ => Vec::new(),
    };
    Ok(FoldOutput { x_hat, y_hat })
}

fn check_same_exclusions(block: &str, fold: &Scaling, full: &[usize]) -> Result<()> {
    if let Some(&c) = fold.excluded.iter().find(|c| !full.contains(c)) {
        return Err(Error::InvalidInput(format!(
            "{block} column {} has zero variance in the training rows",
            c + 1
        )));
    }
    Ok(())
}

/// Assemble per-component prediction matrices and the validated explained
/// variance against the full-data preprocessing.
fn merge(rows: &[&Vec<Vec<f64>>], truth: &DMatrix<f64>, full: &Scaling, full_matrix: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<f64>) {
    let (n, k) = truth.shape();
    let a_max = rows.first().map_or(0, |r| r.len());
    let total = full_matrix.norm_squared();
    let mut preds = Vec::with_capacity(a_max);
    let mut explained = Vec::with_capacity(a_max);
    for a in 0..a_max {
        let p = DMatrix::from_fn(n, k, |i, j| rows[i][a][j]);
        let mut press = 0.0;
        for &j in &full.retained {
            for i in 0..n {
                press += ((p[(i, j)] - truth[(i, j)]) / full.scales[j]).powi(2);
            }
        }
        explained.push(if total > 0.0 { 100.0 * (1.0 - press / total) } else { 0.0 });
        preds.push(p);
    }
    (preds, explained)
}

/// Leave-one-out validation of a PCA, PLSR or PCR model. Folds run in
/// parallel and are merged in row order. Fold errors carry the 1-based
/// number of the left-out row.
pub fn loo_validate(
    kind: ModelKind,
    x: &DMatrix<f64>,
    y: Option<&DMatrix<f64>>,
    spec_x: PreprocessSpec,
    spec_y: PreprocessSpec,
    a: usize,
) -> Result<Validation> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs at least 3 rows, got {n}"
        )));
    }
    if kind.is_regression() != y.is_some() {
        return Err(Error::InvalidInput(format!("{} needs exactly the blocks it models", kind.as_str())));
    }
    if let Some(y) = y {
        if y.nrows() != n {
            return Err(Error::Dimension(format!("row counts differ ({} vs {})", n, y.nrows())));
        }
    }
    let full_x = preprocess(x, spec_x)?;
    let full_y = y.map(|y| preprocess(y, spec_y)).transpose()?;
    let no_exclusions = Vec::new();
    let y_excluded = full_y.as_ref().map_or(&no_exclusions, |p| &p.scaling.excluded);

    let results: Vec<Result<FoldOutput>> = (0..n)
        .into_par_iter()
        .map(|j| fold(kind, j, x, y, spec_x, spec_y, (&full_x.scaling.excluded, y_excluded), a))
        .collect();
    let mut folds = Vec::with_capacity(n);
    for (j, r) in results.into_iter().enumerate() {
        folds.push(r.map_err(|e| Error::Fold {
            fold: j + 1,
            source: Box::new(e),
        })?);
    }

    let xr: Vec<_> = folds.iter().map(|f| &f.x_hat).collect();
    let (x_predictions, valid_explvar_x) = merge(&xr, x, &full_x.scaling, &full_x.matrix);
    let (y_predictions, valid_explvar_y) = match (y, &full_y) {
        (Some(y), Some(py)) => {
            let yr: Vec<_> = folds.iter().map(|f| &f.y_hat).collect();
            merge(&yr, y, &py.scaling, &py.matrix)
        }
        _ => (Vec::new(), Vec::new()),
    };
    let rmse_cv = match y {
        Some(y) => rmse(y, &y_predictions),
        None => rmse(x, &x_predictions),
    };
    Ok(Validation {
        valid_explvar_x,
        valid_explvar_y,
        rmse_cv,
        x_predictions,
        y_predictions,
    })
}
