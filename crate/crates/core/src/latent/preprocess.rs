use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub standardise: bool,
}

impl PreprocessSpec {
    pub fn standardised() -> Self {
        Self { standardise: true }
    }
}

/// Column statistics learned from a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    /// Means of every input column.
    pub means: Vec<f64>,
    /// Divisor per input column: the sample std when standardising, else 1.
    pub scales: Vec<f64>,
    /// Sample standard deviation of every input column.
    pub stds: Vec<f64>,
    /// Input columns kept in the preprocessed matrix, ascending.
    pub retained: Vec<usize>,
    /// Input columns dropped for zero variance (standardise only).
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub matrix: DMatrix<f64>,
    pub scaling: Scaling,
}

pub(crate) fn column_mean_std(x: &DMatrix<f64>, j: usize) -> (f64, f64) {
    let n = x.nrows() as f64;
    let col = x.column(j);
    let mean = col.iter().sum::<f64>() / n;
    let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
    let std = if x.nrows() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

fn is_constant(x: &DMatrix<f64>, j: usize, mean: f64) -> bool {
    let spread = x.column(j).iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    spread <= 1e-12 * mean.abs().max(1.0)
}

/// Center every column; with `standardise`, also drop zero-variance
/// columns and scale the rest to unit sample standard deviation.
pub fn preprocess(x: &DMatrix<f64>, spec: PreprocessSpec) -> Result<Preprocessed> {
    let k = x.ncols();
    let mut means = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    let mut stds = Vec::with_capacity(k);
    let mut retained = Vec::with_capacity(k);
    let mut excluded = Vec::new();
    for j in 0..k {
        let (mean, std) = column_mean_std(x, j);
        means.push(mean);
        stds.push(std);
        if spec.standardise {
            if is_constant(x, j, mean) {
                excluded.push(j);
                scales.push(1.0);
            } else {
                retained.push(j);
                scales.push(std);
            }
        } else {
            retained.push(j);
            scales.push(1.0);
        }
    }
    if retained.is_empty() {
        return Err(Error::AllZeroVariance);
    }
    let scaling = Scaling {
        means,
        scales,
        stds,
        retained,
        excluded,
    };
    let matrix = scaling.apply(x);
    Ok(Preprocessed { matrix, scaling })
}

impl Scaling {
    /// Center and scale rows of `x` (all input columns) into the retained space.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.retained.len(), |i, c| {
            let j = self.retained[c];
            (x[(i, j)] - self.means[j]) / self.scales[j]
        })
    }

    /// Map a preprocessed-space matrix back to all input columns; dropped
    /// columns come back as their training mean.
    pub fn restore(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::from_fn(z.nrows(), self.means.len(), |_, j| self.means[j]);
        for (c, &j) in self.retained.iter().enumerate() {
            for i in 0..z.nrows() {
                out[(i, j)] += z[(i, c)] * self.scales[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let p = preprocess(&x, PreprocessSpec::default()).unwrap();
        assert_eq!(p.matrix.as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn standardising() {
        let x = DMatrix::from_column_slice(3, 2, &[-2.0, 0.0, 2.0, 4.0, 4.0, 4.0]);
        let p = preprocess(&x, PreprocessSpec::standardised()).unwrap();
        assert_eq!(p.scaling.excluded, vec![1]);
        assert_eq!(p.matrix.ncols(), 1);
        assert_eq!(p.matrix.as_slice(), &[-1.0, 0.0, 1.0]);
        let back = p.scaling.restore(&p.matrix);
        assert_eq!(back, x);
    }

    #[test]
    fn all_constant_fails() {
        let x = DMatrix::from_element(4, 2, 3.0);
        assert!(matches!(
            preprocess(&x, PreprocessSpec::standardised()),
            Err(Error::AllZeroVariance)
        ));
        // centering alone never excludes
        assert_eq!(preprocess(&x, PreprocessSpec::default()).unwrap().matrix.ncols(), 2);
    }
}
