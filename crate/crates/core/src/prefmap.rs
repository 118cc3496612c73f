//! Preference mapping: liking and descriptive data in one PLSR or PCR
//! model, plus angular segmentation of the consumer correlation loadings.
//!
//! In an internal map the liking data is the X block and the descriptive
//! data is Y; an external map swaps the two.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::latent::{fit_pcr, fit_plsr, fit_validated, Block, LatentModel, ModelKind, PreprocessSpec};

pub const MIN_SECTORS: usize = 2;
pub const MAX_SECTORS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Internal,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Plsr,
    Pcr,
}

impl Engine {
    fn kind(self) -> ModelKind {
        match self {
            Engine::Plsr => ModelKind::Plsr,
            Engine::Pcr => ModelKind::Pcr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrefmapSpec {
    pub direction: Direction,
    pub engine: Engine,
    pub standardise_x: bool,
    pub standardise_y: bool,
    pub n_components: usize,
    /// Run leave-one-out validation alongside the fit.
    pub validate: bool,
}

impl Default for PrefmapSpec {
    fn default() -> Self {
        Self {
            direction: Direction::Internal,
            engine: Engine::Plsr,
            standardise_x: false,
            standardise_y: false,
            n_components: 2,
            validate: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrefmapModel {
    pub spec: PrefmapSpec,
    pub model: LatentModel,
}

impl PrefmapModel {
    /// Liking correlation loadings: one point per consumer.
    pub fn consumer_loadings(&self) -> &crate::latent::CorrLoadings {
        match self.spec.direction {
            Direction::Internal => &self.model.x_corr_loadings,
            Direction::External => self.model.y_corr_loadings.as_ref().expect("regression model"),
        }
    }

    /// Descriptive correlation loadings: one point per attribute.
    pub fn attribute_loadings(&self) -> &crate::latent::CorrLoadings {
        match self.spec.direction {
            Direction::Internal => self.model.y_corr_loadings.as_ref().expect("regression model"),
            Direction::External => &self.model.x_corr_loadings,
        }
    }

    /// Consumer points on the plane of two components (0-based).
    pub fn consumer_points(&self, pcs: (usize, usize)) -> Result<Vec<(f64, f64)>> {
        let c = self.consumer_loadings();
        let a = c.values.ncols();
        if pcs.0 >= a || pcs.1 >= a || pcs.0 == pcs.1 {
            return Err(Error::InvalidInput(format!(
                "components {} and {} are not a valid pair for a {a}-component model",
                pcs.0 + 1,
                pcs.1 + 1
            )));
        }
        Ok((0..c.values.nrows()).map(|j| (c.values[(j, pcs.0)], c.values[(j, pcs.1)])).collect())
    }

    pub fn sectors(&self, n: usize, pcs: (usize, usize)) -> Result<SectorPayload> {
        let points = self.consumer_points(pcs)?;
        let s = assign_sectors(&points, n)?;
        Ok(SectorPayload {
            labels: self.consumer_loadings().labels.clone(),
            components: (pcs.0 + 1, pcs.1 + 1),
            sector_boundaries: s.boundaries,
            sector_counts: s.counts,
            point_sector: s.point_sector,
            at_origin: s.at_origin,
        })
    }
}

pub fn build_prefmap(liking: &Dataset, descriptive: &Dataset, spec: PrefmapSpec) -> Result<PrefmapModel> {
    if liking.nrows() != descriptive.nrows() {
        return Err(Error::Dimension(format!(
            "row counts differ ({} vs {})",
            liking.nrows(),
            descriptive.nrows()
        )));
    }
    let (x, y) = match spec.direction {
        Direction::Internal => (Block::from_dataset(liking)?, Block::from_dataset(descriptive)?),
        Direction::External => (Block::from_dataset(descriptive)?, Block::from_dataset(liking)?),
    };
    let sx = PreprocessSpec {
        standardise: spec.standardise_x,
    };
    let sy = PreprocessSpec {
        standardise: spec.standardise_y,
    };
    let model = if spec.validate {
        fit_validated(spec.engine.kind(), &x, Some(&y), sx, sy, spec.n_components)?
    } else {
        match spec.engine {
            Engine::Plsr => fit_plsr(&x, &y, sx, sy, spec.n_components)?,
            Engine::Pcr => fit_pcr(&x, &y, sx, sy, spec.n_components)?,
        }
    };
    Ok(PrefmapModel { spec, model })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorAssignment {
    pub n_sectors: usize,
    /// Start angle of each sector in radians; sector k spans
    /// `[boundaries[k], boundaries[k] + 2π/n)`.
    pub boundaries: Vec<f64>,
    pub point_sector: Vec<usize>,
    pub counts: Vec<usize>,
    /// Indices of points at the exact origin (placed in sector 0).
    pub at_origin: Vec<usize>,
}

/// Plot payload fields added to a preference map when sectors are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPayload {
    pub labels: Vec<String>,
    /// 1-based component numbers spanning the plane.
    pub components: (usize, usize),
    pub sector_boundaries: Vec<f64>,
    pub sector_counts: Vec<usize>,
    pub point_sector: Vec<usize>,
    pub at_origin: Vec<usize>,
}

/// Split the plane into `n` equal wedges counterclockwise from the positive
/// first axis and count the points in each.
pub fn assign_sectors(points: &[(f64, f64)], n: usize) -> Result<SectorAssignment> {
    if !(MIN_SECTORS..=MAX_SECTORS).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "number of sectors must be between {MIN_SECTORS} and {MAX_SECTORS}, got {n}"
        )));
    }
    if let Some(i) = points.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput(format!("point {} is not finite", i + 1)));
    }
    let width = TAU / n as f64;
    let mut counts = vec![0; n];
    let mut at_origin = Vec::new();
    let point_sector: Vec<usize> = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let k = if x == 0.0 && y == 0.0 {
                at_origin.push(i);
                0
            } else {
                let mut angle = y.atan2(x);
                if angle < 0.0 {
                    angle += TAU;
                }
                ((angle / width).floor() as usize).min(n - 1)
            };
            counts[k] += 1;
            k
        })
        .collect();
    Ok(SectorAssignment {
        n_sectors: n,
        boundaries: (0..n).map(|k| k as f64 * width).collect(),
        point_sector,
        counts,
        at_origin,
    })
}
