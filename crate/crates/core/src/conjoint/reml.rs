//! REML estimation for models whose random effects are all nested within
//! consumers, so the marginal covariance is block diagonal by consumer.
//!
//! Parameters: one variance per random grouping plus the residual variance.
//! The search runs a simplex over θ with variance ratio λ = θ² and the
//! residual variance profiled out; the optimum is then refined by Newton
//! steps on the variances themselves using the analytic REML gradient and
//! Hessian. The same derivatives give the asymptotic covariance of the
//! variance estimates used for Satterthwaite degrees of freedom.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Variance ratios below this are set to exactly zero.
pub const SNAP: f64 = 1e-8;
/// Simplex convergence: spread of deviance values over the simplex.
pub const DEVIANCE_TOL: f64 = 1e-10;
const MAX_EVALS: usize = 20_000;
const MAX_RESTARTS: usize = 25;
/// Residual variance used when random effects reproduce the data exactly,
/// relative to the response variance.
const RESIDUAL_FLOOR: f64 = 1e-10;

/// One consumer's rows, rotated to an orthonormal basis whose first `r`
/// vectors span the random-effect indicators. In that basis the remaining
/// directions carry only residual variance, exactly.
#[derive(Debug, Clone)]
struct Block {
    x: DMatrix<f64>,
    y: DVector<f64>,
    /// `Z Zᵀ` of every grouping restricted to this consumer, rotated.
    v: Vec<DMatrix<f64>>,
    r: usize,
}

fn rotate(x: DMatrix<f64>, y: DVector<f64>, v: Vec<DMatrix<f64>>) -> Block {
    let nc = y.len();
    let mut sum = DMatrix::zeros(nc, nc);
    for vk in &v {
        sum += vk;
    }
    let eig = sum.symmetric_eigen();
    let mut idx: Vec<usize> = (0..nc).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues.iter().fold(1.0f64, |a, &b| a.max(b));
    let r = idx.iter().filter(|&&i| eig.eigenvalues[i] > 1e-9 * top).count();
    let basis = DMatrix::from_fn(nc, nc, |i, j| eig.eigenvectors[(i, idx[j])]);
    let v = v
        .iter()
        .map(|vk| {
            let mut t = basis.tr_mul(&(vk * &basis));
            for i in 0..nc {
                for j in 0..nc {
                    if i >= r || j >= r {
                        t[(i, j)] = 0.0;
                    }
                }
            }
            t
        })
        .collect();
    Block {
        x: basis.tr_mul(&x),
        y: basis.tr_mul(&y),
        v,
        r,
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    blocks: Vec<Block>,
    n: usize,
    p: usize,
    m: usize,
    /// OLS coefficients removed from the response before fitting. REML is
    /// invariant to this shift and it keeps residual quadratic forms free
    /// of cancellation.
    offset: DVector<f64>,
    response_var: f64,
}

/// Unprofiled REML quantities at given variances.
struct Full {
    deviance: f64,
    beta: DVector<f64>,
    cov_beta: DMatrix<f64>,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    g: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct RemlFit {
    /// Variance of every grouping, in grouping order.
    pub sigma2_k: Vec<f64>,
    pub sigma2: f64,
    pub beta: DVector<f64>,
    /// Covariance of `beta`.
    pub cov_beta: DMatrix<f64>,
    /// REML deviance, −2 × restricted log-likelihood.
    pub deviance: f64,
    /// Variance parameters (grouping indices, then `m` for the residual)
    /// that are not on the zero boundary.
    pub free: Vec<usize>,
    /// Asymptotic covariance of the free variance parameters.
    pub vcov: DMatrix<f64>,
    /// Derivative of `X'V⁻¹X` (negated) for each free parameter.
    pub g: Vec<DMatrix<f64>>,
    pub zero_residual: bool,
}

impl Problem {
    /// Rows are grouped by consumer; within a consumer they are ordered by
    /// product then response so that the input row order is irrelevant.
    pub fn new(x: &DMatrix<f64>, y: &[f64], consumer: &[usize], product: &[usize], groups: &[Vec<usize>]) -> Self {
        let (n, p) = x.shape();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            (consumer[a], product[a])
                .cmp(&(consumer[b], product[b]))
                .then(y[a].total_cmp(&y[b]))
        });
        let yv = DVector::from_column_slice(y);
        let offset = x
            .clone()
            .svd(true, true)
            .solve(&yv, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(p));
        let resid = &yv - x * &offset;
        let mean = y.iter().sum::<f64>() / n as f64;
        let response_var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;

        let mut blocks = Vec::new();
        let mut start = 0;
        while start < n {
            let c = consumer[order[start]];
            let mut end = start;
            while end < n && consumer[order[end]] == c {
                end += 1;
            }
            let rows = &order[start..end];
            let nc = rows.len();
            blocks.push(rotate(
                DMatrix::from_fn(nc, p, |i, j| x[(rows[i], j)]),
                DVector::from_fn(nc, |i, _| resid[rows[i]]),
                groups
                    .iter()
                    .map(|g| DMatrix::from_fn(nc, nc, |i, j| f64::from(u8::from(g[rows[i]] == g[rows[j]]))))
                    .collect(),
            ));
            start = end;
        }
        Self {
            blocks,
            n,
            p,
            m: groups.len(),
            offset,
            response_var,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Profiled REML deviance at variance ratios `lambda`.
    fn profiled(&self, lambda: &[f64]) -> f64 {
        let p = self.p;
        let mut logdet_h = 0.0;
        let mut xhx = DMatrix::zeros(p, p);
        let mut xhy = DVector::zeros(p);
        let mut yhy = 0.0;
        for b in &self.blocks {
            let nc = b.y.len();
            let mut h: DMatrix<f64> = DMatrix::identity(nc, nc);
            for (v, &l) in b.v.iter().zip(lambda) {
                h += v * l;
            }
            let Some(ch) = h.cholesky() else {
                return f64::INFINITY;
            };
            logdet_h += 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let hx = ch.solve(&b.x);
            let hy = ch.solve(&b.y);
            xhx += b.x.tr_mul(&hx);
            xhy += b.x.tr_mul(&hy);
            yhy += b.y.dot(&hy);
        }
        let Some(cm) = xhx.cholesky() else {
            return f64::INFINITY;
        };
        let logdet_m = 2.0 * cm.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let beta = cm.solve(&xhy);
        let r = yhy - beta.dot(&xhy);
        if r.is_nan() || r <= 0.0 {
            return f64::INFINITY;
        }
        let df = (self.n - p) as f64;
        df * (1.0 + (TAU * r / df).ln()) + logdet_h + logdet_m
    }

    /// Residual variance that maximises the REML likelihood at `lambda`.
    fn profiled_sigma2(&self, lambda: &[f64]) -> f64 {
        let phi: Vec<f64> = lambda.iter().copied().chain([1.0]).collect();
        // With σ² = 1 the weighted residual sum of squares is r.
        let r = self
            .full(&phi, false)
            .map_or(f64::NAN, |f| f.deviance_quadratic);
        r / (self.n - self.p) as f64
    }

    fn full(&self, phi: &[f64], derivs: bool) -> Option<FullRaw> {
        let (p, m) = (self.p, self.m);
        let sigma2 = phi[m];
        let mut logdet_v = 0.0;
        let mut xwx = DMatrix::zeros(p, p);
        let mut xwy = DVector::zeros(p);
        // Per block: eigenvectors, D^{-1/2}, whitened X and y. Working in
        // the eigenbasis keeps quadratic forms accurate when V is badly
        // conditioned (a near-zero residual variance).
        let mut white = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let nc = b.y.len();
            let r = b.r;
            let mut top = DMatrix::identity(r, r) * sigma2;
            for (vk, &s) in b.v.iter().zip(phi) {
                top += vk.view((0, 0), (r, r)) * s;
            }
            let mut vecs = DMatrix::identity(nc, nc);
            let mut vals = DVector::from_element(nc, sigma2);
            if r > 0 {
                let eig = top.symmetric_eigen();
                vecs.view_mut((0, 0), (r, r)).copy_from(&eig.eigenvectors);
                vals.rows_mut(0, r).copy_from(&eig.eigenvalues);
            }
            if vals.iter().any(|&d| !(d > 0.0)) {
                return None;
            }
            logdet_v += vals.iter().map(|d| d.ln()).sum::<f64>();
            let isd = vals.map(|d| 1.0 / d.sqrt());
            let mut xt = vecs.tr_mul(&b.x);
            let mut yt = vecs.tr_mul(&b.y);
            for i in 0..nc {
                xt.row_mut(i).scale_mut(isd[i]);
                yt[i] *= isd[i];
            }
            xwx += xt.tr_mul(&xt);
            xwy += xt.tr_mul(&yt);
            white.push((vecs, isd, xt, yt));
        }
        let cm = xwx.clone().cholesky()?;
        let logdet_m = 2.0 * cm.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let c = cm.inverse();
        let beta = cm.solve(&xwy);

        let q = m + 1;
        let mut quad = 0.0;
        let mut tr_wv = vec![0.0; q];
        let mut g = vec![DMatrix::zeros(p, p); q];
        let mut ypvpy = vec![0.0; q];
        let mut s = vec![DVector::zeros(p); q];
        let mut tr_wvwv = DMatrix::<f64>::zeros(q, q);
        let mut bmat = vec![DMatrix::zeros(p, p); q * q];
        let mut uwu = DMatrix::<f64>::zeros(q, q);
        for (b, (qv, isd, xt, yt)) in self.blocks.iter().zip(&white) {
            let nc = b.y.len();
            let rt = yt - xt * &beta;
            quad += rt.norm_squared();
            if !derivs {
                continue;
            }
            let scaled = DMatrix::from_fn(nc, nc, |i, j| qv[(i, j)] * isd[j]);
            let w = &(&scaled * scaled.transpose());
            let wx = &(&scaled * xt);
            let py = &scaled * &rt;
            let eye = DMatrix::identity(nc, nc);
            let vi: Vec<&DMatrix<f64>> = b.v.iter().chain(std::iter::once(&eye)).collect();
            let wv: Vec<DMatrix<f64>> = vi.iter().map(|v| w * *v).collect();
            let yi: Vec<DMatrix<f64>> = vi.iter().map(|v| *v * wx).collect();
            let ui: Vec<DVector<f64>> = vi.iter().map(|v| *v * &py).collect();
            for i in 0..q {
                tr_wv[i] += wv[i].trace();
                g[i] += wx.tr_mul(&yi[i]);
                ypvpy[i] += py.dot(&ui[i]);
                s[i] += wx.tr_mul(&ui[i]);
                let wyi = w * &yi[i];
                let wui = w * &ui[i];
                for j in i..q {
                    tr_wvwv[(i, j)] += wv[i].component_mul(&wv[j].transpose()).sum();
                    bmat[i * q + j] += yi[j].tr_mul(&wyi).transpose();
                    uwu[(i, j)] += ui[j].dot(&wui);
                }
            }
        }
        let df = (self.n - p) as f64;
        let deviance = logdet_v + logdet_m + quad + df * TAU.ln();
        let mut grad = DVector::zeros(q);
        let mut hess = DMatrix::zeros(q, q);
        if derivs {
            let cg: Vec<DMatrix<f64>> = g.iter().map(|gi| &c * gi).collect();
            for i in 0..q {
                grad[i] = tr_wv[i] - cg[i].trace() - ypvpy[i];
                for j in i..q {
                    let tr_pvpv: f64 = tr_wvwv[(i, j)] - 2.0 * (&c * &bmat[i * q + j]).trace() + (&cg[i] * &cg[j]).trace();
                    let y_pvpvp_y = uwu[(i, j)] - s[i].dot(&(&c * &s[j]));
                    hess[(i, j)] = -tr_pvpv + 2.0 * y_pvpvp_y;
                    hess[(j, i)] = hess[(i, j)];
                }
            }
        }
        Some(FullRaw {
            full: Full {
                deviance,
                beta,
                cov_beta: c,
                grad,
                hess,
                g,
            },
            deviance_quadratic: quad,
        })
    }

    /// Residual sum of squares left after both the fixed effects and every
    /// grouping have absorbed what they can.
    fn residual_beyond_random(&self) -> (f64, f64) {
        let p = self.p;
        let mut a = DMatrix::zeros(p, p);
        let mut bv = DVector::zeros(p);
        let mut cc = 0.0;
        let mut total = 0.0;
        for b in &self.blocks {
            let nc = b.y.len();
            total += b.y.norm_squared();
            let xn = b.x.rows(b.r, nc - b.r);
            let yn = b.y.rows(b.r, nc - b.r);
            a += xn.tr_mul(&xn);
            bv += xn.tr_mul(&yn);
            cc += yn.norm_squared();
        }
        let beta = a.svd(true, true).solve(&bv, 1e-12).unwrap_or_else(|_| DVector::zeros(p));
        ((cc - beta.dot(&bv)).max(0.0), total)
    }

    pub fn fit(&self) -> Result<RemlFit> {
        if self.n <= self.p {
            return Err(Error::InvalidInput(format!(
                "{} observations cannot support {} fixed-effect columns",
                self.n, self.p
            )));
        }
        let m = self.m;
        let (rss, total) = self.residual_beyond_random();
        let zero_residual = rss <= 1e-20 * total.max(f64::MIN_POSITIVE) || total == 0.0;
        let floor = RESIDUAL_FLOOR * if self.response_var > 0.0 { self.response_var } else { 1.0 };

        let mut phi: Vec<f64>;
        if zero_residual {
            let scale = self.response_var.max(f64::MIN_POSITIVE);
            let obj = |t: &[f64]| -> f64 {
                let phi: Vec<f64> = t.iter().map(|v| v * v * scale).chain([floor]).collect();
                self.full(&phi, false).map_or(f64::INFINITY, |f| f.full.deviance)
            };
            let theta = minimise(obj, m)?;
            phi = theta.iter().map(|v| v * v * scale).chain([floor]).collect();
            for k in 0..m {
                if phi[k] < SNAP * scale {
                    phi[k] = 0.0;
                }
            }
        } else {
            let theta = minimise(|t: &[f64]| self.profiled(&t.iter().map(|v| v * v).collect::<Vec<_>>()), m)?;
            let mut lambda: Vec<f64> = theta.iter().map(|v| v * v).collect();
            for l in &mut lambda {
                if *l < SNAP {
                    *l = 0.0;
                }
            }
            let s2 = self.profiled_sigma2(&lambda);
            phi = lambda.iter().map(|l| l * s2).chain([s2]).collect();
        }
        let mut free: Vec<usize> = (0..m).filter(|&k| phi[k] > 0.0).collect();
        if !zero_residual {
            free.push(m);
        }
        self.polish(&mut phi, &mut free, !zero_residual)?;

        let f = self
            .full(&phi, true)
            .ok_or_else(|| Error::Optimizer("covariance is not positive definite at the optimum".into()))?
            .full;
        let h = DMatrix::from_fn(free.len(), free.len(), |i, j| f.hess[(free[i], free[j])]);
        let vcov = if free.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            h.try_inverse()
                .ok_or_else(|| Error::Optimizer("REML information matrix is singular".into()))?
                * 2.0
        };
        let mut beta = f.beta;
        beta += &self.offset;
        let mut sigma2_k = phi[..m].to_vec();
        let sigma2 = if zero_residual { 0.0 } else { phi[m] };
        for s in &mut sigma2_k {
            if !s.is_finite() {
                *s = 0.0;
            }
        }
        let deviance = if zero_residual { f.deviance } else { self.profiled(&ratios(&phi, m)) };
        Ok(RemlFit {
            sigma2_k,
            sigma2,
            beta,
            cov_beta: f.cov_beta,
            deviance,
            g: free.iter().map(|&i| f.g[i].clone()).collect(),
            free,
            vcov,
            zero_residual,
        })
    }

    /// Newton refinement of the free variance parameters. A parameter that
    /// would cross zero is fixed at the boundary.
    fn polish(&self, phi: &mut [f64], free: &mut Vec<usize>, check_gradient: bool) -> Result<()> {
        for _ in 0..50 {
            if free.is_empty() {
                return Ok(());
            }
            let Some(raw) = self.full(phi, true) else {
                return Err(Error::Optimizer("covariance lost positive definiteness".into()));
            };
            let f = raw.full;
            let k = free.len();
            let h = DMatrix::from_fn(k, k, |i, j| f.hess[(free[i], free[j])]);
            let g = DVector::from_fn(k, |i, _| f.grad[free[i]]);
            let Some(step) = h.clone().cholesky().map(|c| -c.solve(&g)) else {
                return Ok(());
            };
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let mut trial = phi.to_vec();
                for (i, &fi) in free.iter().enumerate() {
                    trial[fi] += t * step[i];
                }
                if free.iter().all(|&fi| trial[fi] > 0.0) {
                    if let Some(d) = self.full(&trial, false).map(|r| r.full.deviance) {
                        if d <= f.deviance + 1e-12 * f.deviance.abs().max(1.0) {
                            phi.copy_from_slice(&trial);
                            moved = true;
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            if !moved {
                // A step towards the boundary that cannot be taken: pin the
                // parameter with the most negative target at zero.
                let target: Vec<(usize, f64)> = free.iter().enumerate().map(|(i, &fi)| (fi, phi[fi] + step[i])).collect();
                if let Some(&(fi, _)) = target
                    .iter()
                    .filter(|(fi, v)| *fi < self.m && *v < 0.0)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                {
                    phi[fi] = 0.0;
                    free.retain(|&x| x != fi);
                    continue;
                }
                return Ok(());
            }
            let rel = free
                .iter()
                .enumerate()
                .map(|(i, &fi)| (t * step[i]).abs() / phi[fi].abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            if rel < 1e-12 {
                break;
            }
        }
        if !check_gradient {
            // Near-singular covariance: derivatives are too noisy to judge.
            return Ok(());
        }
        let f = self.full(phi, true).expect("checked above").full;
        let worst = free
            .iter()
            .map(|&i| (f.grad[i] * phi[i]).abs())
            .fold(0.0, f64::max);
        if worst > 1e-4 {
            return Err(Error::Optimizer(format!(
                "REML gradient did not vanish (scaled norm {worst:.3e})"
            )));
        }
        Ok(())
    }
}

struct FullRaw {
    full: Full,
    deviance_quadratic: f64,
}

fn ratios(phi: &[f64], m: usize) -> Vec<f64> {
    phi[..m].iter().map(|v| v / phi[m]).collect()
}

/// Simplex search with restarts from the best point until a restart no
/// longer improves the objective by more than [`DEVIANCE_TOL`].
fn minimise(f: impl Fn(&[f64]) -> f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Ok(Vec::new());
    }
    let mut x = vec![1.0; dim];
    let mut best = f(&x);
    for _ in 0..MAX_RESTARTS {
        let r = nelder_mead(&f, &x, DEVIANCE_TOL, MAX_EVALS);
        let improved = best - r.f;
        if r.f <= best {
            x = r.x;
            best = r.f;
        }
        if r.converged && improved.abs() < DEVIANCE_TOL {
            return Ok(x.iter().map(|v| v.abs()).collect());
        }
    }
    Err(Error::Optimizer(format!(
        "simplex search did not settle after {MAX_RESTARTS} restarts"
    )))
}

pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
}

/// Nelder-Mead with standard coefficients. Converged when the objective
/// spread over the simplex is below `ftol`.
pub(crate) fn nelder_mead(f: &impl Fn(&[f64]) -> f64, x0: &[f64], ftol: f64, max_evals: usize) -> SimplexResult {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if p[i].abs() > 1e-3 { 0.25 * p[i].abs().max(0.2) } else { 0.2 };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    loop {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        if spread.is_finite() && spread < ftol {
            return SimplexResult {
                x: pts[0].clone(),
                f: vals[0],
                converged: true,
            };
        }
        if evals >= max_evals {
            return SimplexResult {
                x: pts[0].clone(),
                f: vals[0],
                converged: false,
            };
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (pts[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    pts[i] = (0..n).map(|j| pts[0][j] + 0.5 * (pts[i][j] - pts[0][j])).collect();
                    vals[i] = f(&pts[i]);
                }
                evals += n;
            }
        }
    }
}

impl RemlFit {
    /// Variance of `l'β` and its Satterthwaite degrees of freedom.
    pub fn contrast(&self, l: &DVector<f64>) -> (f64, f64) {
        let cl = &self.cov_beta * l;
        let var = l.dot(&cl);
        let grad = DVector::from_iterator(self.g.len(), self.g.iter().map(|g| cl.dot(&(g * &cl))));
        let denom = grad.dot(&(&self.vcov * &grad));
        let df = if denom > 0.0 && var > 0.0 {
            2.0 * var * var / denom
        } else {
            f64::INFINITY
        };
        (var, df)
    }

    pub fn reml_loglik(&self) -> f64 {
        -0.5 * self.deviance
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2) + 2.0;
        let r = nelder_mead(&f, &[0.0, 0.0], 1e-14, 10_000);
        assert!(r.converged);
        assert!((r.x[0] - 1.5).abs() < 1e-5 && (r.x[1] + 0.5).abs() < 1e-5);
    }

    fn one_way(y: &[f64], consumer: &[usize]) -> RemlFit {
        let n = y.len();
        let x = DMatrix::from_element(n, 1, 1.0);
        let product: Vec<usize> = (0..n).collect();
        Problem::new(&x, y, consumer, &product, &[consumer.to_vec()]).fit().unwrap()
    }

    #[test]
    fn zero_residual_two_by_two() {
        let f = one_way(&[4.0, 4.0, 6.0, 6.0], &[0, 0, 1, 1]);
        assert!(f.zero_residual);
        assert_eq!(f.sigma2, 0.0);
        assert!((f.sigma2_k[0] - 2.0).abs() < 1e-6, "{:?}", f.sigma2_k);
        assert!((f.beta[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_one_way_closed_form() {
        // Three consumers, three ratings each.
        let y = [1.0, 2.0, 3.0, 4.0, 6.0, 5.0, 9.0, 7.0, 8.0];
        let c = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        let f = one_way(&y, &c);
        let msw = (1.0 + 0.0 + 1.0 + 0.0 + 1.0 + 1.0 + 1.0 + 1.0 + 0.0) / 6.0;
        let msb = 3.0 * ((2.0f64 - 5.0).powi(2) + 0.0 + 9.0) / 2.0;
        assert!((f.sigma2 - msw).abs() < 1e-9, "{}", f.sigma2);
        assert!((f.sigma2_k[0] - (msb - msw) / 3.0).abs() < 1e-9);
        // Intercept df for a balanced one-way layout is (groups − 1).
        let (var, df) = f.contrast(&DVector::from_element(1, 1.0));
        assert!((var - msb / 9.0).abs() < 1e-9);
        assert!((df - 2.0).abs() < 1e-6, "{df}");
    }

    #[test]
    fn negative_moment_estimate_hits_boundary() {
        // Between-consumer spread smaller than the within spread.
        let y = [1.0, 5.0, 3.0, 2.0, 4.0, 3.0];
        let f = one_way(&y, &[0, 0, 0, 1, 1, 1]);
        assert_eq!(f.sigma2_k[0], 0.0);
        assert_eq!(f.free, vec![1]);
    }

    #[test]
    fn no_random_terms_is_ordinary_least_squares() {
        let y = [1.0, 2.0, 4.0, 3.0, 6.0, 8.0];
        let x = DMatrix::from_element(6, 1, 1.0);
        let c = [0, 0, 1, 1, 2, 2];
        let f = Problem::new(&x, &y, &c, &[0, 1, 0, 1, 0, 1], &[]).fit().unwrap();
        let mean = 4.0;
        let s2 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 5.0;
        assert!((f.beta[0] - mean).abs() < 1e-12);
        assert!((f.sigma2 - s2).abs() < 1e-9, "{}", f.sigma2);
        let (var, df) = f.contrast(&DVector::from_element(1, 1.0));
        assert!((var - s2 / 6.0).abs() < 1e-9);
        assert!((df - 5.0).abs() < 1e-6, "{df}");
    }
}
