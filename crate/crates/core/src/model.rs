//! Fay–Herriot area-level model: `y_i ~ N(θ_i, d_i)`, `θ_i = x_iᵀβ + u_i`,
//! `u_i ~ N(0, σ²)`.

use nalgebra::DVector;

use crate::data::{DesignMatrix, DirectEstimateSet};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_fit, GibbsConfig, PosteriorDraws};
use crate::linalg::{check_full_rank, spd_factor, weighted_cross, weighted_gram};
use crate::rng::Seed;

/// Weight on the direct estimate: `σ² / (σ² + d/ε)`. With `ε = 1` this is the
/// full-data shrinkage factor.
pub fn shrinkage_factor(sigma2: f64, d: f64, epsilon: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::domain(format!("sampling variance must be positive, got {d}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    Ok(sigma2 / (sigma2 + d / epsilon))
}

/// Weighted least squares with weights `1 / (σ² + d_j)`.
pub fn wls_beta(y: &[f64], d: &[f64], x: &DesignMatrix, sigma2: f64) -> Result<DVector<f64>> {
    let m = y.len();
    if d.len() != m || x.m() != m {
        return Err(Error::shape(format!(
            "{} estimates, {} variances, {} design rows",
            m,
            d.len(),
            x.m()
        )));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("sigma2 must be non-negative, got {sigma2}")));
    }
    check_full_rank(x.matrix())?;
    let w: Vec<f64> = d.iter().map(|dj| 1.0 / (sigma2 + dj)).collect();
    let gram = weighted_gram(x.matrix(), &w);
    let rhs = weighted_cross(x.matrix(), &w, y);
    Ok(spd_factor(gram)?.solve(&rhs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitKind {
    /// BLUP with σ² treated as known.
    BlupKnownSigma2,
    Gibbs,
}

#[derive(Clone, Debug)]
pub struct FayHerriotFit {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    /// Full-data shrinkage factors `σ² / (σ² + d_i)`.
    pub gamma: DVector<f64>,
    /// Per-area point estimates.
    pub theta_hat: DVector<f64>,
    pub draws: Option<PosteriorDraws>,
    pub kind: FitKind,
}

impl FayHerriotFit {
    pub fn m(&self) -> usize {
        self.theta_hat.len()
    }
}

/// Best linear unbiased predictor `γ_i y_i + (1 − γ_i) x_iᵀβ` with σ² known.
///
/// When `beta` is `None` it is estimated by [`wls_beta`].
pub fn blup(
    data: &DirectEstimateSet,
    x: &DesignMatrix,
    sigma2: f64,
    beta: Option<&DVector<f64>>,
) -> Result<FayHerriotFit> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    if x.m() != data.m() {
        return Err(Error::shape("design rows differ from area count"));
    }
    let beta = match beta {
        Some(b) if b.len() != x.p() => {
            return Err(Error::shape(format!("beta has {} entries for {} columns", b.len(), x.p())))
        }
        Some(b) => b.clone(),
        None => wls_beta(data.y(), data.d(), x, sigma2)?,
    };
    let m = data.m();
    let mut gamma = DVector::zeros(m);
    let mut theta = DVector::zeros(m);
    for i in 0..m {
        let g = sigma2 / (sigma2 + data.d()[i]);
        let synth = x.row_dot(i, &beta);
        gamma[i] = g;
        theta[i] = g * data.y()[i] + (1.0 - g) * synth;
    }
    Ok(FayHerriotFit {
        beta,
        sigma2,
        gamma,
        theta_hat: theta,
        draws: None,
        kind: FitKind::BlupKnownSigma2,
    })
}

/// A procedure producing per-area estimates from a set of direct estimates.
///
/// `seed` drives any internal randomness; deterministic fitters ignore it.
pub trait Fitter: Sync {
    fn fit(&self, data: &DirectEstimateSet, x: &DesignMatrix, seed: Seed) -> Result<FayHerriotFit>;
}

/// BLUP with a fixed σ² and, optionally, a fixed β.
#[derive(Clone, Debug)]
pub struct BlupFitter {
    pub sigma2: f64,
    pub beta: Option<DVector<f64>>,
}

impl Fitter for BlupFitter {
    fn fit(&self, data: &DirectEstimateSet, x: &DesignMatrix, _seed: Seed) -> Result<FayHerriotFit> {
        blup(data, x, self.sigma2, self.beta.as_ref())
    }
}

/// Gibbs sampler with the config's seed replaced by the call seed.
#[derive(Clone, Debug)]
pub struct GibbsFitter {
    pub config: GibbsConfig,
}

impl Fitter for GibbsFitter {
    fn fit(&self, data: &DirectEstimateSet, x: &DesignMatrix, seed: Seed) -> Result<FayHerriotFit> {
        let config = GibbsConfig { seed, ..self.config.clone() };
        gibbs_fit(data, x, &config)
    }
}

impl<F> Fitter for F
where
    F: Fn(&DirectEstimateSet, &DesignMatrix, Seed) -> Result<FayHerriotFit> + Sync,
{
    fn fit(&self, data: &DirectEstimateSet, x: &DesignMatrix, seed: Seed) -> Result<FayHerriotFit> {
        self(data, x, seed)
    }
}

/// Wraps fixed per-area estimates as a fit; handy for degenerate fitters.
pub fn point_fit(theta_hat: Vec<f64>) -> FayHerriotFit {
    let m = theta_hat.len();
    FayHerriotFit {
        beta: DVector::zeros(0),
        sigma2: f64::NAN,
        gamma: DVector::from_element(m, f64::NAN),
        theta_hat: DVector::from_vec(theta_hat),
        draws: None,
        kind: FitKind::BlupKnownSigma2,
    }
}
