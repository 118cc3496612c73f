//! Independent reference computations used to check the engines.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn center(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for j in 0..x.ncols() {
        let m = x.column(j).mean();
        c.column_mut(j).add_scalar_mut(-m);
    }
    c
}

/// Eigenvectors of the centered cross-product matrix (columns, by
/// decreasing eigenvalue) and the cumulative explained variance.
pub fn svd_pca(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let c = center(x);
    let eig = (c.transpose() * &c).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = c.norm_squared();
    let mut acc = 0.0;
    let mut explained = Vec::new();
    let mut v = DMatrix::zeros(x.ncols(), order.len());
    for (k, &i) in order.iter().enumerate() {
        acc += eig.eigenvalues[i].max(0.0);
        explained.push(100.0 * acc / total);
        v.set_column(k, &eig.eigenvectors.column(i));
    }
    (v, explained)
}

pub fn abs_cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).abs()
}

/// Least-squares fit of Y on X with an intercept.
pub fn ols_fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let xc = center(x);
    let yc = center(y);
    let beta = (xc.transpose() * &xc).try_inverse().unwrap() * xc.transpose() * &yc;
    let mut fit = &xc * beta;
    for j in 0..y.ncols() {
        let m = y.column(j).mean();
        fit.column_mut(j).add_scalar_mut(m);
    }
    fit
}
