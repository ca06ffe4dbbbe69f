//! Monte Carlo helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Test-side generator, deliberately a different algorithm from the library's.
pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Streaming moments up to fourth order.
#[derive(Clone, Debug, Default)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn from_iter(values: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Self::default();
        for v in values {
            m.push(v);
        }
        m
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn var(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }

    pub fn se_mean(&self) -> f64 {
        (self.var() / self.n).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn se_var(&self) -> f64 {
        let mu4 = self.m4 / self.n;
        let s2 = self.m2 / self.n;
        ((mu4 - s2 * s2) / self.n).sqrt()
    }
}

/// Sample covariance and correlation with delta-method standard errors.
pub struct Bivariate {
    pub cov: f64,
    pub se_cov: f64,
    pub corr: f64,
}

pub fn bivariate(x: &[f64], y: &[f64]) -> Bivariate {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let pm = Moments::from_iter(prods.iter().copied());
    let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
    Bivariate { cov: pm.mean(), se_cov: pm.se_mean(), corr: pm.mean() / (vx * vy).sqrt() }
}

/// `|est − target| ≤ k·se`.
pub fn within(est: f64, target: f64, se: f64, k: f64) -> bool {
    (est - target).abs() <= k * se
}

#[track_caller]
pub fn assert_within(label: &str, est: f64, target: f64, se: f64) {
    assert!(
        within(est, target, se, 3.0),
        "{label}: estimate {est} vs {target}, se {se}, z = {:.2}",
        (est - target) / se
    );
}

/// Batch-means standard error for an autocorrelated chain.
pub fn batch_means_se(chain: &[f64], batches: usize) -> f64 {
    let size = chain.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| chain[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    Moments::from_iter(means).se_mean()
}

/// `θ = Xβ + u`, `u ~ N(0, σ²)`.
pub fn draw_theta(rng: &mut impl Rng, x: &DMatrix<f64>, beta: &DVector<f64>, sigma2: f64) -> Vec<f64> {
    let mean = x * beta;
    mean.iter().map(|m| m + sigma2.sqrt() * normal(rng)).collect()
}

/// `y = θ + e`, `e ~ N(0, d)`.
pub fn draw_direct(rng: &mut impl Rng, theta: &[f64], d: &[f64]) -> Vec<f64> {
    theta.iter().zip(d).map(|(t, v)| t + v.sqrt() * normal(rng)).collect()
}

/// Random `m × p` design with an intercept column and standard normal covariates.
pub fn random_design(rng: &mut impl Rng, m: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, p, |_, j| if j == 0 { 1.0 } else { normal(rng) })
}

/// Gaussian elimination with partial pivoting; independent of nalgebra's solvers.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, v)| {
        let mut r = row.clone();
        r.push(*v);
        r
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn brute_rank(a: &DMatrix<f64>, tol: f64) -> usize {
    let mut m: Vec<Vec<f64>> = (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect();
    let (rows, cols) = (a.nrows(), a.ncols());
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let mut rank = 0;
    let mut used = vec![false; cols];
    for _ in 0..rows.min(cols) {
        let mut best = (0.0, 0, 0);
        for (i, row) in m.iter().enumerate().skip(rank) {
            for (j, v) in row.iter().enumerate() {
                if !used[j] && v.abs() > best.0 {
                    best = (v.abs(), i, j);
                }
            }
        }
        if best.0 <= tol * scale {
            break;
        }
        let (_, pi, pj) = best;
        m.swap(rank, pi);
        used[pj] = true;
        for i in rank + 1..rows {
            let f = m[i][pj] / m[rank][pj];
            for j in 0..cols {
                m[i][j] -= f * m[rank][j];
            }
        }
        rank += 1;
    }
    rank
}
