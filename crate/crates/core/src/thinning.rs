//! Randomization schemes that split one set of Gaussian direct estimates:
//! single-fold and multi-fold thinning, data fission and ESIM perturbation.
//!
//! Every area draws from its own substream of the supplied seed (and, for
//! multi-fold thinning, one substream per fold), so results do not depend on
//! evaluation order.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::DirectEstimateSet;
use crate::error::{Error, Result};
use crate::rng::Seed;

/// Training and test components from single-fold thinning.
#[derive(Clone, Debug, PartialEq)]
pub struct ThinnedSplit {
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
    pub epsilon: f64,
    pub source_d: Vec<f64>,
}

impl ThinnedSplit {
    /// Training component as a replicate direct-estimate set (`y⁽¹⁾/ε`, `d/ε`).
    pub fn train_set(&self, source: &DirectEstimateSet) -> Result<DirectEstimateSet> {
        source.rescaled(&self.y_train, self.epsilon)
    }
}

fn unit_normal(seed: Seed) -> f64 {
    seed.rng().sample(StandardNormal)
}

fn check_open_unit(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

/// Gaussian thinning: `y⁽¹⁾ | y ~ N(εy, ε(1−ε)d)`, `y⁽²⁾ = y − y⁽¹⁾`.
pub fn thin(data: &DirectEstimateSet, epsilon: f64, seed: Seed) -> Result<ThinnedSplit> {
    thin_with_variance(data, data.d(), epsilon, seed)
}

/// Thinning that uses `d_used` in place of the data's variances, e.g. to
/// study a misspecified variance.
pub fn thin_with_variance(
    data: &DirectEstimateSet,
    d_used: &[f64],
    epsilon: f64,
    seed: Seed,
) -> Result<ThinnedSplit> {
    check_open_unit(epsilon)?;
    if d_used.len() != data.m() {
        return Err(Error::shape("variance vector length differs from area count"));
    }
    if d_used.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain("thinning variances must be positive"));
    }
    let scale = epsilon * (1.0 - epsilon);
    let mut y_train = Vec::with_capacity(data.m());
    let mut y_test = Vec::with_capacity(data.m());
    for (i, (&y, &d)) in data.y().iter().zip(d_used).enumerate() {
        let a = epsilon * y + (scale * d).sqrt() * unit_normal(seed.child(i as u64));
        y_train.push(a);
        y_test.push(y - a);
    }
    Ok(ThinnedSplit {
        y_train,
        y_test,
        epsilon,
        source_d: d_used.to_vec(),
    })
}

/// Covariance between training and test components when thinning uses
/// `d_used` but the data have variance `d_true`: `ε(1−ε)(d_true − d_used)`.
pub fn misspecified_thin_covariance(d_true: f64, d_used: f64, epsilon: f64) -> Result<f64> {
    check_open_unit(epsilon)?;
    if !(d_true > 0.0 && d_used > 0.0) {
        return Err(Error::domain("variances must be positive"));
    }
    Ok(epsilon * (1.0 - epsilon) * (d_true - d_used))
}

/// `K` folds per area, marginally iid `N(θ/K, d/K)`, summing to `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiFoldSplit {
    /// `folds[k][i]` is fold `k` of area `i`.
    pub folds: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
}

impl MultiFoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }
}

/// Multi-fold thinning by sequential peeling: fold `k` (0-based) is thinned
/// off the running remainder with fraction `1/(K−k)`; the last fold is the
/// remainder itself.
pub fn multifold_thin(data: &DirectEstimateSet, k: usize, seed: Seed) -> Result<MultiFoldSplit> {
    if k < 2 {
        return Err(Error::domain(format!("fold count must be at least 2, got {k}")));
    }
    let m = data.m();
    let mut folds = vec![vec![0.0; m]; k];
    for i in 0..m {
        let area = seed.child(i as u64);
        let mut rest = data.y()[i];
        let mut rest_d = data.d()[i];
        for (f, fold) in folds.iter_mut().enumerate().take(k - 1) {
            let frac = 1.0 / (k - f) as f64;
            let part = frac * rest + (frac * (1.0 - frac) * rest_d).sqrt() * unit_normal(area.child(f as u64));
            fold[i] = part;
            rest -= part;
            rest_d *= 1.0 - frac;
        }
        folds[k - 1][i] = rest;
    }
    Ok(MultiFoldSplit {
        folds,
        y: data.y().to_vec(),
        d: data.d().to_vec(),
    })
}

/// A training/test pair built from folds.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPair {
    pub train: Vec<f64>,
    pub test: Vec<f64>,
    /// Training fraction `(K − held_out)/K`.
    pub epsilon: f64,
}

/// Holds out folds `k, k+1, …, k+test_fold_count−1` (cyclically) for testing
/// and trains on the rest.
pub fn fold_train_test(split: &MultiFoldSplit, k: usize, test_fold_count: usize) -> Result<FoldPair> {
    let kk = split.k();
    if k >= kk {
        return Err(Error::usage(format!("fold index {k} out of range for {kk} folds")));
    }
    if test_fold_count == 0 || test_fold_count >= kk {
        return Err(Error::usage(format!(
            "test fold count must lie in 1..={}, got {test_fold_count}",
            kk - 1
        )));
    }
    let m = split.y.len();
    let mut test = vec![0.0; m];
    for j in 0..test_fold_count {
        let fold = &split.folds[(k + j) % kk];
        for (t, v) in test.iter_mut().zip(fold) {
            *t += v;
        }
    }
    let train = split.y.iter().zip(&test).map(|(y, t)| y - t).collect();
    Ok(FoldPair {
        train,
        test,
        epsilon: (kk - test_fold_count) as f64 / kk as f64,
    })
}

/// Data fission with τ = 1: `y_train = y + e`, `e ~ N(0, d)`, `y_test = y`.
#[derive(Clone, Debug, PartialEq)]
pub struct FissionSplit {
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
    /// Coefficient on `y_train` in `E[y_test | y_train] = c·(y_train + θ)`.
    pub conditional_coefficient: f64,
    /// `Var(y_test | y_train) = d/2`, per area.
    pub conditional_variance: Vec<f64>,
}

pub fn fission(data: &DirectEstimateSet, seed: Seed) -> Result<FissionSplit> {
    let y_train = perturb(data, seed);
    Ok(FissionSplit {
        y_train,
        y_test: data.y().to_vec(),
        conditional_coefficient: 0.5,
        conditional_variance: data.d().iter().map(|d| d / 2.0).collect(),
    })
}

/// One ESIM replicate `z_i = y_i + e_i`, `e_i ~ N(0, d_i)`.
pub fn esim_replicate(data: &DirectEstimateSet, seed: Seed) -> Vec<f64> {
    perturb(data, seed)
}

fn perturb(data: &DirectEstimateSet, seed: Seed) -> Vec<f64> {
    data.y()
        .iter()
        .zip(data.d())
        .enumerate()
        .map(|(i, (y, d))| y + d.sqrt() * unit_normal(seed.child(i as u64)))
        .collect()
}

/// Repeated single-fold thinning at fixed ε; repeat `r` uses `base_seed.child(r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepeatPlan {
    pub repeats: usize,
    pub epsilon: f64,
    pub base_seed: Seed,
}

impl RepeatPlan {
    pub fn new(repeats: usize, epsilon: f64, base_seed: Seed) -> Result<Self> {
        if repeats == 0 {
            return Err(Error::domain("repeat count must be at least 1"));
        }
        check_open_unit(epsilon)?;
        Ok(Self { repeats, epsilon, base_seed })
    }

    pub fn seed_for(&self, repeat: usize) -> Seed {
        self.base_seed.child(repeat as u64)
    }

    pub fn split(&self, data: &DirectEstimateSet, repeat: usize) -> Result<ThinnedSplit> {
        thin(data, self.epsilon, self.seed_for(repeat))
    }
}
