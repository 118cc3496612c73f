//! JSON exports and plot payloads for fitted latent models.

use serde::{Deserialize, Serialize};

use super::{LatentModel, ModelKind};
use crate::error::{Error, Result};
use crate::table::LabeledMatrix;

/// Radii of the 50% and 100% explained-variance circles of a correlation
/// loadings plot.
pub const RING_RADII: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, 1.0];

/// Serde adapter storing a `DMatrix` as row-major nested arrays.
pub(crate) mod nested {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub kind: ModelKind,
    pub n_components: usize,
    pub x_scores: LabeledMatrix,
    pub x_loadings: LabeledMatrix,
    pub x_weights: Option<LabeledMatrix>,
    pub y_loadings: Option<LabeledMatrix>,
    pub x_corr_loadings: LabeledMatrix,
    pub y_corr_loadings: Option<LabeledMatrix>,
    pub calib_explvar_x: Vec<f64>,
    pub valid_explvar_x: Option<Vec<f64>>,
    pub calib_explvar_y: Vec<f64>,
    pub valid_explvar_y: Option<Vec<f64>>,
    pub x_means: Vec<f64>,
    pub x_stds: Vec<f64>,
    pub y_means: Vec<f64>,
    pub y_stds: Vec<f64>,
    pub excluded_x_vars: Vec<String>,
    pub excluded_y_vars: Vec<String>,
    pub rmse_calib: LabeledMatrix,
    pub rmse_cv: Option<LabeledMatrix>,
    pub x_reconstructions: Vec<LabeledMatrix>,
    pub y_reconstructions: Vec<LabeledMatrix>,
    pub x_validated_predictions: Vec<LabeledMatrix>,
    pub y_validated_predictions: Vec<LabeledMatrix>,
}

/// Data behind one of the standard model plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plot", rename_all = "snake_case")]
pub enum PlotPayload {
    Scores {
        scores: LabeledMatrix,
        explvar_x: Vec<f64>,
    },
    Loadings {
        x: LabeledMatrix,
        y: Option<LabeledMatrix>,
    },
    CorrLoadings {
        x: LabeledMatrix,
        y: Option<LabeledMatrix>,
        x_explained: Vec<f64>,
        y_explained: Vec<f64>,
        ring_radii: [f64; 2],
    },
    Explvar {
        components: Vec<usize>,
        calibrated_x: Vec<f64>,
        validated_x: Option<Vec<f64>>,
        calibrated_y: Vec<f64>,
        validated_y: Option<Vec<f64>>,
    },
}

impl PlotPayload {
    pub const NAMES: [&'static str; 4] = ["scores", "loadings", "corr_loadings", "explvar"];
}

impl LatentModel {
    fn target_labels(&self) -> Vec<String> {
        if self.kind.is_regression() {
            self.y_labels.clone()
        } else {
            self.x_labels.clone()
        }
    }

    pub fn export(&self) -> ModelExport {
        let pcs = self.component_labels();
        let lm = |m: &nalgebra::DMatrix<f64>, rows: Vec<String>| LabeledMatrix::from_dmatrix(m, rows, pcs.clone());
        let per_component = |ms: &[nalgebra::DMatrix<f64>], cols: &[String]| -> Vec<LabeledMatrix> {
            ms.iter()
                .map(|m| LabeledMatrix::from_dmatrix(m, self.row_labels.clone(), cols.to_vec()))
                .collect()
        };
        let v = self.validation.as_ref();
        ModelExport {
            kind: self.kind,
            n_components: self.n_components,
            x_scores: lm(&self.x_scores, self.row_labels.clone()),
            x_loadings: lm(&self.x_loadings, self.retained_x_labels()),
            x_weights: self.x_weights.as_ref().map(|w| lm(w, self.retained_x_labels())),
            y_loadings: self.y_loadings.as_ref().map(|q| lm(q, self.retained_y_labels())),
            x_corr_loadings: lm(&self.x_corr_loadings.values, self.x_labels.clone()),
            y_corr_loadings: self.y_corr_loadings.as_ref().map(|c| lm(&c.values, self.y_labels.clone())),
            calib_explvar_x: self.calib_explvar_x.clone(),
            valid_explvar_x: v.map(|v| v.valid_explvar_x.clone()),
            calib_explvar_y: self.calib_explvar_y.clone(),
            valid_explvar_y: v.filter(|_| self.kind.is_regression()).map(|v| v.valid_explvar_y.clone()),
            x_means: self.x_scaling.means.clone(),
            x_stds: self.x_scaling.stds.clone(),
            y_means: self.y_scaling.as_ref().map(|s| s.means.clone()).unwrap_or_default(),
            y_stds: self.y_scaling.as_ref().map(|s| s.stds.clone()).unwrap_or_default(),
            excluded_x_vars: self.excluded_x_vars(),
            excluded_y_vars: self.excluded_y_vars(),
            rmse_calib: lm(&self.rmse_calib, self.target_labels()),
            rmse_cv: v.map(|v| lm(&v.rmse_cv, self.target_labels())),
            x_reconstructions: per_component(&self.x_reconstructions, &self.x_labels),
            y_reconstructions: per_component(&self.y_reconstructions, &self.y_labels),
            x_validated_predictions: v.map(|v| per_component(&v.x_predictions, &self.x_labels)).unwrap_or_default(),
            y_validated_predictions: v.map(|v| per_component(&v.y_predictions, &self.y_labels)).unwrap_or_default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.export()).expect("export is always serialisable")
    }

    /// Payload for one of [`PlotPayload::NAMES`].
    pub fn plot(&self, name: &str) -> Result<PlotPayload> {
        let e = self.export();
        Ok(match name {
            "scores" => PlotPayload::Scores {
                scores: e.x_scores,
                explvar_x: e.calib_explvar_x,
            },
            "loadings" => PlotPayload::Loadings {
                x: e.x_loadings,
                y: e.y_loadings,
            },
            "corr_loadings" => PlotPayload::CorrLoadings {
                x: e.x_corr_loadings,
                y: e.y_corr_loadings,
                x_explained: self.x_corr_loadings.explained.clone(),
                y_explained: self
                    .y_corr_loadings
                    .as_ref()
                    .map(|c| c.explained.clone())
                    .unwrap_or_default(),
                ring_radii: RING_RADII,
            },
            "explvar" => PlotPayload::Explvar {
                components: (1..=self.n_components).collect(),
                calibrated_x: e.calib_explvar_x,
                validated_x: e.valid_explvar_x,
                calibrated_y: e.calib_explvar_y,
                validated_y: e.valid_explvar_y,
            },
            other => return Err(Error::InvalidInput(format!("unknown plot '{other}'"))),
        })
    }
}
