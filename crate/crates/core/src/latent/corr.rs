use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Correlations between original variables and score columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrLoadings {
    pub labels: Vec<String>,
    /// variables × A
    #[serde(with = "crate::latent::export::nested")]
    pub values: DMatrix<f64>,
    /// Σ r² over all components per variable, the radius used for ring plots.
    pub explained: Vec<f64>,
    /// Variables whose correlation is undefined; their rows are zero.
    pub zero_variance: Vec<String>,
}

/// Pearson correlation, `None` when either side has no spread.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let scale_a = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let scale_b = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if saa <= 1e-24 * scale_a * scale_a * n || sbb <= 1e-24 * scale_b * scale_b * n {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn correlation_loadings(data: &DMatrix<f64>, scores: &DMatrix<f64>, labels: &[String]) -> CorrLoadings {
    let k = data.ncols();
    let a_max = scores.ncols();
    let mut values = DMatrix::zeros(k, a_max);
    let mut zero_variance = Vec::new();
    for j in 0..k {
        let col: Vec<f64> = data.column(j).iter().copied().collect();
        if pearson(&col, &col).is_none() {
            zero_variance.push(labels[j].clone());
            continue;
        }
        for a in 0..a_max {
            let t: Vec<f64> = scores.column(a).iter().copied().collect();
            values[(j, a)] = pearson(&col, &t).unwrap_or(0.0);
        }
    }
    let explained = (0..k).map(|j| values.row(j).norm_squared()).collect();
    CorrLoadings {
        labels: labels.to_vec(),
        values,
        explained,
        zero_variance,
    }
}
