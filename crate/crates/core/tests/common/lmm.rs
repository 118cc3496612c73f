//! Simulated conjoint data and the classical balanced mixed-ANOVA oracle.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use sensolab_core::dataset::{Dataset, Role};

use super::oracle::rng;

pub struct Sim {
    pub n_consumers: usize,
    pub a: usize,
    pub b: usize,
    /// Standard deviations: consumer, consumer×A, consumer×B, residual.
    pub sd_c: f64,
    pub sd_ca: f64,
    pub sd_cb: f64,
    pub sd_e: f64,
    /// Fixed A and B effects per level.
    pub eff_a: Vec<f64>,
    pub eff_b: Vec<f64>,
}

impl Sim {
    pub fn two_factor(n_consumers: usize, a: usize, b: usize) -> Self {
        Self {
            n_consumers,
            a,
            b,
            sd_c: 1.0,
            sd_ca: 0.8,
            sd_cb: 0.6,
            sd_e: 0.5,
            eff_a: (0..a).map(|i| 0.3 * i as f64).collect(),
            eff_b: (0..b).map(|j| -0.2 * j as f64).collect(),
        }
    }

    /// Liking (products × consumers) with products in A-fastest order.
    pub fn liking(&self, seed: u64) -> DMatrix<f64> {
        let mut r = rng(seed);
        let norm = |sd: f64| Normal::new(0.0, sd).unwrap();
        let (a, b, n) = (self.a, self.b, self.n_consumers);
        let mut y = DMatrix::zeros(a * b, n);
        for c in 0..n {
            let uc = norm(self.sd_c).sample(&mut r);
            let ua: Vec<f64> = (0..a).map(|_| norm(self.sd_ca).sample(&mut r)).collect();
            let ub: Vec<f64> = (0..b).map(|_| norm(self.sd_cb).sample(&mut r)).collect();
            for j in 0..b {
                for i in 0..a {
                    let e = norm(self.sd_e).sample(&mut r);
                    y[(j * a + i, c)] = 5.0 + self.eff_a[i] + self.eff_b[j] + uc + ua[i] + ub[j] + e;
                }
            }
        }
        y
    }

    pub fn design(&self) -> Dataset {
        let (a, b) = (self.a, self.b);
        let m = DMatrix::from_fn(a * b, 2, |p, k| if k == 0 { (p % a + 1) as f64 } else { (p / a + 1) as f64 });
        Dataset::from_dense("design", Role::Design, &m)
            .unwrap()
            .with_labels(
                (1..=a * b).map(|p| format!("P{p}")).collect(),
                vec!["A".into(), "B".into()],
            )
            .unwrap()
    }
}

pub fn liking_dataset(y: &DMatrix<f64>) -> Dataset {
    Dataset::from_dense("liking", Role::Liking, y).unwrap()
}

/// Classical three-way layout (consumer random, A and B fixed, one
/// observation per cell) computed from marginal means.
#[derive(Debug)]
pub struct Classical {
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub mean_ab: Vec<Vec<f64>>,
    pub f_a: f64,
    pub f_b: f64,
    pub f_ab: f64,
    pub df_a: f64,
    pub df_b: f64,
    pub df_ab: f64,
    /// Moment estimates of the consumer, consumer×A, consumer×B variances.
    pub var_c: f64,
    pub var_ca: f64,
    pub var_cb: f64,
}

pub fn classical(y: &DMatrix<f64>, a: usize, b: usize) -> Classical {
    let n = y.ncols();
    let cell = |i: usize, j: usize, c: usize| y[(j * a + i, c)];
    let nf = n as f64;
    let (af, bf) = (a as f64, b as f64);
    let g = y.mean();
    let ma: Vec<f64> = (0..a)
        .map(|i| (0..b).flat_map(|j| (0..n).map(move |c| (j, c))).map(|(j, c)| cell(i, j, c)).sum::<f64>() / (bf * nf))
        .collect();
    let mb: Vec<f64> = (0..b)
        .map(|j| (0..a).flat_map(|i| (0..n).map(move |c| (i, c))).map(|(i, c)| cell(i, j, c)).sum::<f64>() / (af * nf))
        .collect();
    let mc: Vec<f64> = (0..n).map(|c| y.column(c).mean()).collect();
    let mab: Vec<Vec<f64>> = (0..a)
        .map(|i| (0..b).map(|j| (0..n).map(|c| cell(i, j, c)).sum::<f64>() / nf).collect())
        .collect();
    let mac: Vec<Vec<f64>> = (0..a)
        .map(|i| (0..n).map(|c| (0..b).map(|j| cell(i, j, c)).sum::<f64>() / bf).collect())
        .collect();
    let mbc: Vec<Vec<f64>> = (0..b)
        .map(|j| (0..n).map(|c| (0..a).map(|i| cell(i, j, c)).sum::<f64>() / af).collect())
        .collect();

    let ss_a = bf * nf * ma.iter().map(|m| (m - g).powi(2)).sum::<f64>();
    let ss_b = af * nf * mb.iter().map(|m| (m - g).powi(2)).sum::<f64>();
    let ss_c = af * bf * mc.iter().map(|m| (m - g).powi(2)).sum::<f64>();
    let mut ss_ab = 0.0;
    for i in 0..a {
        for j in 0..b {
            ss_ab += nf * (mab[i][j] - ma[i] - mb[j] + g).powi(2);
        }
    }
    let mut ss_ca = 0.0;
    for i in 0..a {
        for c in 0..n {
            ss_ca += bf * (mac[i][c] - ma[i] - mc[c] + g).powi(2);
        }
    }
    let mut ss_cb = 0.0;
    for j in 0..b {
        for c in 0..n {
            ss_cb += af * (mbc[j][c] - mb[j] - mc[c] + g).powi(2);
        }
    }
    let ss_tot: f64 = y.iter().map(|v| (v - g).powi(2)).sum();
    let ss_res = ss_tot - ss_a - ss_b - ss_c - ss_ab - ss_ca - ss_cb;

    let df_c = nf - 1.0;
    let df_ca = df_c * (af - 1.0);
    let df_cb = df_c * (bf - 1.0);
    let df_res = df_c * (af - 1.0) * (bf - 1.0);
    let ms_c = ss_c / df_c;
    let ms_ca = ss_ca / df_ca;
    let ms_cb = ss_cb / df_cb;
    let ms_res = ss_res / df_res;
    Classical {
        mean_a: ma,
        mean_b: mb,
        mean_ab: mab,
        f_a: ss_a / (af - 1.0) / ms_ca,
        f_b: ss_b / (bf - 1.0) / ms_cb,
        f_ab: ss_ab / ((af - 1.0) * (bf - 1.0)) / ms_res,
        df_a: df_ca,
        df_b: df_cb,
        df_ab: df_res,
        var_c: (ms_c - ms_ca - ms_cb + ms_res) / (af * bf),
        var_ca: (ms_ca - ms_res) / bf,
        var_cb: (ms_cb - ms_res) / af,
    }
}
