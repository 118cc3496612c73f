//! NIPALS extraction on already preprocessed matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative change of `t't` below which the power iteration stops. The
/// iterate is then refined to full precision (see [`polish`]).
pub const TOLERANCE: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 500;
/// Residual sum of squares (relative to the start) treated as exhausted.
const EXHAUSTED: f64 = 1e-20;

/// Raw output of one of the engines. Column `a` of every matrix belongs to
/// component `a`.
#[derive(Debug, Clone)]
pub(crate) struct Components {
    pub scores: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
    pub weights: Option<DMatrix<f64>>,
    pub y_loadings: Option<DMatrix<f64>>,
    /// False for components extracted after the data was exhausted; their
    /// scores are zero and projections skip them.
    pub active: Vec<bool>,
    /// Residual sum of squares of X after 0, 1, ..., A components.
    pub x_ss: Vec<f64>,
    pub y_ss: Option<Vec<f64>>,
}

fn max_ss_column(m: &DMatrix<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..m.ncols() {
        let ss = m.column(j).norm_squared();
        if ss > best.1 {
            best = (j, ss);
        }
    }
    best.0
}

/// Flip so that the element of largest magnitude is positive.
fn sign_of_max(v: &DVector<f64>) -> f64 {
    let mut best = (0.0f64, 1.0);
    for &x in v.iter() {
        if x.abs() > best.0 {
            best = (x.abs(), x.signum());
        }
    }
    best.1
}

/// Unit vector orthogonal to all `previous` columns.
fn complement_direction(previous: &DMatrix<f64>, used: usize) -> DVector<f64> {
    let k = previous.nrows();
    for i in 0..k {
        let mut v = DVector::zeros(k);
        v[i] = 1.0;
        for _ in 0..2 {
            for a in 0..used {
                let p = previous.column(a);
                let d = p.dot(&v);
                v -= p * d;
            }
        }
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
    DVector::zeros(k)
}

/// Rayleigh quotient iteration on the symmetric positive semi-definite `m`,
/// started from `v`. Returns a unit eigenvector or `None` if the residual
/// does not settle.
fn polish(m: &DMatrix<f64>, v: DVector<f64>) -> Option<DVector<f64>> {
    let scale = m.norm();
    let mut v = v.normalize();
    if !v.iter().all(|x| x.is_finite()) {
        return None;
    }
    for _ in 0..POLISH_STEPS {
        let mv = m * &v;
        let sigma = v.dot(&mv);
        if (mv - &v * sigma).norm() <= POLISH_RESIDUAL * scale {
            return Some(v);
        }
        let shifted = m - DMatrix::identity(m.nrows(), m.ncols()) * sigma;
        match shifted.lu().solve(&v) {
            Some(y) if y.iter().all(|x| x.is_finite()) && y.norm() > 0.0 => v = y.normalize(),
            // the shift hit an eigenvalue to working precision
            _ => return Some(nearest_eigenvector(m, &v)),
        }
    }
    None
}

/// Eigenvector of the symmetric `m` best aligned with `v`, signed like `v`.
fn nearest_eigenvector(m: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let eig = m.clone().symmetric_eigen();
    let (mut best, mut dot) = (0, 0.0f64);
    for k in 0..eig.eigenvalues.len() {
        let d = eig.eigenvectors.column(k).dot(v);
        if d.abs() > dot.abs() {
            (best, dot) = (k, d);
        }
    }
    eig.eigenvectors.column(best) * dot.signum()
}

const POLISH_STEPS: usize = 30;
const POLISH_RESIDUAL: f64 = 1e-13;

/// Dominant right singular direction of `e` by the NIPALS power iteration,
/// refined by a few Rayleigh quotient steps in the smaller of the two
/// cross-product spaces. Returns the unit loading and its score vector.
fn dominant_direction(e: &DMatrix<f64>, component: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut t = e.column(max_ss_column(e)).clone_owned();
    let mut tt = t.norm_squared();
    let mut p = DVector::zeros(e.ncols());
    for _ in 0..MAX_ITERATIONS {
        p = e.tr_mul(&t) / tt;
        p /= p.norm();
        let t_new = e * &p;
        let tt_new = t_new.norm_squared();
        let done = (tt_new - tt).abs() <= TOLERANCE * tt_new;
        t = t_new;
        tt = tt_new;
        if done {
            break;
        }
    }
    let failed = Error::Convergence {
        component,
        iterations: MAX_ITERATIONS,
    };
    let p = if e.ncols() <= e.nrows() {
        polish(&e.tr_mul(e), p).ok_or(failed)?
    } else {
        let t = polish(&(e * e.transpose()), t).ok_or(failed)?;
        e.tr_mul(&t).normalize()
    };
    let s = sign_of_max(&p);
    let p = p * s;
    let t = e * &p;
    Ok((p, t))
}

pub(crate) fn pca(e0: &DMatrix<f64>, n_components: usize) -> Result<Components> {
    let (j, k) = e0.shape();
    let mut e = e0.clone();
    let mut scores = DMatrix::zeros(j, n_components);
    let mut loadings = DMatrix::zeros(k, n_components);
    let mut active = Vec::with_capacity(n_components);
    let total = e0.norm_squared();
    let mut x_ss = vec![total];
    for a in 0..n_components {
        let resid = e.norm_squared();
        if resid <= EXHAUSTED * total || resid == 0.0 {
            let p = complement_direction(&loadings, a);
            loadings.set_column(a, &p);
            active.push(false);
            x_ss.push(resid);
            continue;
        }
        let (p, t) = dominant_direction(&e, a + 1)?;
        e -= &t * p.transpose();
        scores.set_column(a, &t);
        loadings.set_column(a, &p);
        active.push(true);
        x_ss.push(e.norm_squared());
    }
    Ok(Components {
        scores,
        loadings,
        weights: None,
        y_loadings: None,
        active,
        x_ss,
        y_ss: None,
    })
}

/// PLS2 by NIPALS: alternate between the X and Y blocks until the X score
/// converges, then deflate both blocks by the score.
pub(crate) fn pls(e0: &DMatrix<f64>, f0: &DMatrix<f64>, n_components: usize) -> Result<Components> {
    let (j, k) = e0.shape();
    let l = f0.ncols();
    let mut e = e0.clone();
    let mut f = f0.clone();
    let mut scores = DMatrix::zeros(j, n_components);
    let mut loadings = DMatrix::zeros(k, n_components);
    let mut weights = DMatrix::zeros(k, n_components);
    let mut y_loadings = DMatrix::zeros(l, n_components);
    let mut active = Vec::with_capacity(n_components);
    let (x_total, y_total) = (e0.norm_squared(), f0.norm_squared());
    let mut x_ss = vec![x_total];
    let mut y_ss = vec![y_total];

    for a in 0..n_components {
        let x_resid = e.norm_squared();
        if x_resid <= EXHAUSTED * x_total || x_resid == 0.0 {
            let w = complement_direction(&weights, a);
            weights.set_column(a, &w);
            active.push(false);
            x_ss.push(x_resid);
            y_ss.push(f.norm_squared());
            continue;
        }
        let y_resid = f.norm_squared();
        let (w, t) = if y_resid <= EXHAUSTED * y_total || y_resid == 0.0 {
            // Y is used up; keep decomposing X along its dominant direction
            dominant_direction(&e, a + 1)?
        } else {
            pls_weight(&e, &f, a + 1)?
        };
        let tt = t.norm_squared();
        let p = e.tr_mul(&t) / tt;
        let q = f.tr_mul(&t) / tt;
        e -= &t * p.transpose();
        f -= &t * q.transpose();
        scores.set_column(a, &t);
        loadings.set_column(a, &p);
        weights.set_column(a, &w);
        y_loadings.set_column(a, &q);
        active.push(true);
        x_ss.push(e.norm_squared());
        y_ss.push(f.norm_squared());
    }
    Ok(Components {
        scores,
        loadings,
        weights: Some(weights),
        y_loadings: Some(y_loadings),
        active,
        x_ss,
        y_ss: Some(y_ss),
    })
}

fn pls_weight(e: &DMatrix<f64>, f: &DMatrix<f64>, component: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut u = f.column(max_ss_column(f)).clone_owned();
    let mut tt_prev = f64::NAN;
    let mut w = DVector::zeros(e.ncols());
    let mut q = DVector::zeros(f.ncols());
    for _ in 0..MAX_ITERATIONS {
        w = e.tr_mul(&u) / u.norm_squared();
        let wn = w.norm();
        if wn == 0.0 {
            // u orthogonal to X; fall back to the X-only direction
            return dominant_direction(e, component);
        }
        w /= wn;
        let t = e * &w;
        let tt = t.norm_squared();
        q = f.tr_mul(&t) / tt;
        let qq = q.norm_squared();
        if qq == 0.0 {
            return dominant_direction(e, component);
        }
        u = f * &q / qq;
        if (tt - tt_prev).abs() <= TOLERANCE * tt {
            break;
        }
        tt_prev = tt;
    }
    // w is the dominant eigenvector of E'FF'E; q that of F'EE'F
    let etf = e.tr_mul(f);
    let failed = Error::Convergence {
        component,
        iterations: MAX_ITERATIONS,
    };
    let w = if e.ncols() <= f.ncols() {
        polish(&(&etf * etf.transpose()), w).ok_or(failed)?
    } else {
        let q = polish(&etf.tr_mul(&etf), q).ok_or(failed)?;
        let w = &etf * q;
        if w.norm() == 0.0 {
            return dominant_direction(e, component);
        }
        w.normalize()
    };
    let s = sign_of_max(&w);
    let w = w * s;
    let t = e * &w;
    Ok((w, t))
}

/// PCA of X followed by regression of Y on each score column. Scores are
/// orthogonal, so the sequential regressions equal the joint least-squares fit.
pub(crate) fn pcr(e0: &DMatrix<f64>, f0: &DMatrix<f64>, n_components: usize) -> Result<Components> {
    let mut c = pca(e0, n_components)?;
    let l = f0.ncols();
    let mut f = f0.clone();
    let mut y_loadings = DMatrix::zeros(l, n_components);
    let mut y_ss = vec![f0.norm_squared()];
    for a in 0..n_components {
        if c.active[a] {
            let t = c.scores.column(a);
            let q = f0.tr_mul(&t) / t.norm_squared();
            f -= t * q.transpose();
            y_loadings.set_column(a, &q);
        }
        y_ss.push(f.norm_squared());
    }
    c.y_loadings = Some(y_loadings);
    c.y_ss = Some(y_ss);
    Ok(c)
}
