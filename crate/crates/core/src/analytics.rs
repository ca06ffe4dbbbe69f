//! Closed-form thinning theory for the Fay–Herriot model with known σ²:
//! the thinning gap `MSE_ε − MSE_full`, the variance of the MSE estimator,
//! variance-minimizing training fractions and the gap/variance trade-off.

use std::str::FromStr;

use nalgebra::DMatrix;

use crate::data::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, row_quadratic_forms, spd_factor, weighted_gram};

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

fn check_d(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(Error::shape("need at least one area"));
    }
    if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain("sampling variances must be positive"));
    }
    Ok(())
}

fn check_open(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

fn check_half_open(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `σ² d / (εσ² + d)`: the known-parameter squared error `γ_i(ε) d_i / ε`
/// of the posterior mean trained on ε-thinned data.
fn thinned_error(sigma2: f64, d: f64, epsilon: f64) -> f64 {
    sigma2 * d / (epsilon * sigma2 + d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub epsilon: f64,
    /// `Δ_i(ε)`.
    pub per_area_gap: Vec<f64>,
    /// Known-parameter part `((1−ε)/ε) γ_i(ε) γ_i d_i`.
    pub g1_gap: Vec<f64>,
    /// `g₂ᵢ(ε) − g₂ᵢ`; zero when β is known.
    pub g2_gap: Vec<f64>,
    pub mean_gap: f64,
    /// `((1−ε)/ε) γ_i² d_i`.
    pub upper_bound: Vec<f64>,
}

fn known_parts(sigma2: f64, d: &[f64], epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let ratio = (1.0 - epsilon) / epsilon;
    d.iter()
        .map(|&di| {
            let g = sigma2 / (sigma2 + di);
            let ge = sigma2 / (sigma2 + di / epsilon);
            (ratio * ge * g * di, ratio * g * g * di)
        })
        .unzip()
}

/// Thinning gap for the posterior mean with β and σ² known.
pub fn thinning_gap_known(sigma2: f64, d: &[f64], epsilon: f64) -> Result<GapReport> {
    check_sigma2(sigma2)?;
    check_d(d)?;
    check_half_open(epsilon)?;
    let (g1_gap, upper_bound) = known_parts(sigma2, d, epsilon);
    Ok(GapReport {
        epsilon,
        mean_gap: mean(&g1_gap),
        per_area_gap: g1_gap.clone(),
        g2_gap: vec![0.0; d.len()],
        g1_gap,
        upper_bound,
    })
}

/// Per-area upper bound `((1−ε)/ε) γ_i² d_i` on the known-parameter gap.
pub fn gap_upper_bound(sigma2: f64, d: f64, epsilon: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_d(&[d])?;
    check_half_open(epsilon)?;
    let g = sigma2 / (sigma2 + d);
    Ok((1.0 - epsilon) / epsilon * g * g * d)
}

/// `g₂ᵢ(ε) = (1 − γ_i(ε))² x_iᵀ [Σ_j x_j x_jᵀ / (σ² + d_j/ε)]⁻¹ x_i`.
pub fn g2_terms(sigma2: f64, d: &[f64], x: &DesignMatrix, epsilon: f64) -> Result<Vec<f64>> {
    check_sigma2(sigma2)?;
    check_d(d)?;
    check_half_open(epsilon)?;
    if x.m() != d.len() {
        return Err(Error::shape("design rows differ from area count"));
    }
    if x.p() == 0 {
        return Ok(vec![0.0; d.len()]);
    }
    check_full_rank(x.matrix())?;
    let w: Vec<f64> = d.iter().map(|dj| 1.0 / (sigma2 + dj / epsilon)).collect();
    let factor = spd_factor(weighted_gram(x.matrix(), &w))?;
    let quad = row_quadratic_forms(x.matrix(), &factor);
    Ok(d.iter()
        .zip(quad)
        .map(|(di, q)| {
            let shrink = di / (epsilon * sigma2 + di);
            shrink * shrink * q
        })
        .collect())
}

/// Intercept-only `g₂ᵢ(ε) = (1 − γ_i(ε))² / w(ε)`, `w(ε) = Σ_j (σ² + d_j/ε)⁻¹`.
pub fn g2_intercept_only(sigma2: f64, d: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    check_sigma2(sigma2)?;
    check_d(d)?;
    check_half_open(epsilon)?;
    let w: f64 = d.iter().map(|dj| 1.0 / (sigma2 + dj / epsilon)).sum();
    Ok(d.iter()
        .map(|di| {
            let shrink = di / (epsilon * sigma2 + di);
            shrink * shrink / w
        })
        .collect())
}

/// Thinning gap for the BLUP with σ² known and β estimated by weighted
/// least squares. A zero-column design means β is known.
pub fn thinning_gap_estimated(sigma2: f64, d: &[f64], x: &DesignMatrix, epsilon: f64) -> Result<GapReport> {
    let known = thinning_gap_known(sigma2, d, epsilon)?;
    let thinned = g2_terms(sigma2, d, x, epsilon)?;
    let full = g2_terms(sigma2, d, x, 1.0)?;
    let g2_gap: Vec<f64> = thinned.iter().zip(&full).map(|(a, b)| a - b).collect();
    let per_area_gap: Vec<f64> = known.g1_gap.iter().zip(&g2_gap).map(|(a, b)| a + b).collect();
    Ok(GapReport {
        mean_gap: mean(&per_area_gap),
        per_area_gap,
        g2_gap,
        ..known
    })
}

/// `(1/m) Σ γ_i d_i`.
pub fn mse_full_known(sigma2: f64, d: &[f64]) -> Result<f64> {
    if sigma2 == 0.0 {
        check_d(d)?;
        return Ok(0.0);
    }
    check_sigma2(sigma2)?;
    check_d(d)?;
    Ok(mean(&d.iter().map(|di| sigma2 * di / (sigma2 + di)).collect::<Vec<_>>()))
}

/// `(1/m) Σ γ_i(ε) d_i / ε`.
pub fn mse_thinned_known(sigma2: f64, d: &[f64], epsilon: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_d(d)?;
    check_half_open(epsilon)?;
    Ok(mean(&d.iter().map(|di| thinned_error(sigma2, *di, epsilon)).collect::<Vec<_>>()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub epsilon: f64,
    pub total: f64,
    /// Expected variance over the test component given the training data.
    pub test_component: f64,
    /// Variance over training splits of the thinned-data squared error.
    pub train_component: f64,
    /// `f_i(ε) = d_i/(1−ε) + g_i(ε)` in known-parameter mode.
    pub per_area_f: Option<Vec<f64>>,
}

/// Test-set term `(2/m²) Σ [a_i² + 2 a_i e_i]` with `a_i = d_i/(1−ε)` and
/// `e_i` the expected squared training error of area `i`.
fn test_term(d: &[f64], errors: &[f64], epsilon: f64) -> f64 {
    let m2 = (d.len() * d.len()) as f64;
    2.0 / m2
        * d.iter()
            .zip(errors)
            .map(|(di, e)| {
                let a = di / (1.0 - epsilon);
                a * a + 2.0 * a * e
            })
            .sum::<f64>()
}

/// Variance of the MSE estimator for the direct estimator `y⁽¹⁾/ε`:
/// `(2/m²) Σ d_i² / (ε²(1−ε)²)`.
pub fn variance_direct(d: &[f64], epsilon: f64) -> Result<VarianceReport> {
    check_d(d)?;
    check_open(epsilon)?;
    let m2 = (d.len() * d.len()) as f64;
    let errors: Vec<f64> = d.iter().map(|di| di / epsilon).collect();
    let total = 2.0 / m2 * d.iter().map(|di| di * di).sum::<f64>() / (epsilon * (1.0 - epsilon)).powi(2);
    Ok(VarianceReport {
        epsilon,
        total,
        test_component: test_term(d, &errors, epsilon),
        train_component: 2.0 / m2 * errors.iter().map(|e| e * e).sum::<f64>(),
        per_area_f: None,
    })
}

/// Variance of the MSE estimator for the posterior mean with β, σ² known:
/// `(2/m²) Σ f_i(ε)²`, `f_i = d_i/(1−ε) + σ²d_i/(εσ² + d_i)`.
pub fn variance_fh_known(sigma2: f64, d: &[f64], epsilon: f64) -> Result<VarianceReport> {
    check_d(d)?;
    check_open(epsilon)?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("sigma2 must be non-negative, got {sigma2}")));
    }
    let m2 = (d.len() * d.len()) as f64;
    let errors: Vec<f64> = d.iter().map(|di| thinned_error(sigma2, *di, epsilon)).collect();
    let f: Vec<f64> = d.iter().zip(&errors).map(|(di, g)| di / (1.0 - epsilon) + g).collect();
    Ok(VarianceReport {
        epsilon,
        total: 2.0 / m2 * f.iter().map(|v| v * v).sum::<f64>(),
        test_component: test_term(d, &errors, epsilon),
        train_component: 2.0 / m2 * errors.iter().map(|e| e * e).sum::<f64>(),
        per_area_f: Some(f),
    })
}

/// Covariance of the prediction errors `θ̃⁽¹⁾ − θ` of the BLUP with σ²
/// known and β estimated, trained on ε-thinned data, under the model.
///
/// With `v = u + n` (`n` the rescaled training noise), `Var(v) = diag(σ² + d/ε)`
/// and the error is `A v − u` for `A = Γ + (I − Γ) X (XᵀWX)⁻¹ XᵀW`, giving
/// `A Var(v) Aᵀ − σ²(A + Aᵀ) + σ² I`.
pub fn blup_error_covariance(sigma2: f64, d: &[f64], x: &DesignMatrix, epsilon: f64) -> Result<DMatrix<f64>> {
    check_sigma2(sigma2)?;
    check_d(d)?;
    check_half_open(epsilon)?;
    let m = d.len();
    if x.m() != m {
        return Err(Error::shape("design rows differ from area count"));
    }
    let v: Vec<f64> = d.iter().map(|dj| sigma2 + dj / epsilon).collect();
    let mut a = DMatrix::<f64>::zeros(m, m);
    if x.p() > 0 {
        check_full_rank(x.matrix())?;
        let w: Vec<f64> = v.iter().map(|vj| 1.0 / vj).collect();
        let factor = spd_factor(weighted_gram(x.matrix(), &w))?;
        let mut xtw = x.matrix().transpose();
        for (j, wj) in w.iter().enumerate() {
            xtw.column_mut(j).scale_mut(*wj);
        }
        let hat = x.matrix() * factor.solve(&xtw);
        for i in 0..m {
            let shrink = 1.0 - sigma2 / v[i];
            for j in 0..m {
                a[(i, j)] = shrink * hat[(i, j)];
            }
        }
    }
    for i in 0..m {
        a[(i, i)] += sigma2 / v[i];
    }
    let mut av = a.clone();
    for (j, vj) in v.iter().enumerate() {
        av.column_mut(j).scale_mut(*vj);
    }
    let mut cov = &av * a.transpose() - (&a + a.transpose()) * sigma2;
    for i in 0..m {
        cov[(i, i)] += sigma2;
    }
    Ok(cov)
}

/// Variance of the MSE estimator for the BLUP with σ² known and β
/// estimated. The prediction errors are jointly Gaussian with covariance
/// `Σ`, so the training term is `(2/m²) ‖Σ‖²_F`.
pub fn variance_fh_estimated(sigma2: f64, d: &[f64], x: &DesignMatrix, epsilon: f64) -> Result<VarianceReport> {
    check_open(epsilon)?;
    let cov = blup_error_covariance(sigma2, d, x, epsilon)?;
    let m2 = (d.len() * d.len()) as f64;
    let errors: Vec<f64> = (0..d.len()).map(|i| cov[(i, i)]).collect();
    let test_component = test_term(d, &errors, epsilon);
    let train_component = 2.0 / m2 * cov.iter().map(|c| c * c).sum::<f64>();
    Ok(VarianceReport {
        epsilon,
        total: test_component + train_component,
        test_component,
        train_component,
        per_area_f: None,
    })
}

/// Area-level minimizer of `f_i(ε)²`: `max{0, ½ − d/(2σ²)}`.
pub fn optimal_epsilon_area(sigma2: f64, d: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_d(&[d])?;
    Ok((0.5 - d / (2.0 * sigma2)).max(0.0))
}

/// Grid `step, 2·step, …` strictly inside (0, 1).
fn lower_half_grid(step: f64) -> Vec<f64> {
    let n = (0.5 / step).ceil() as usize;
    (1..=n).map(|k| k as f64 * step).filter(|e| *e < 0.5).collect()
}

/// Grid minimizer of [`variance_fh_known`] over `step, 2·step, … < 1/2`.
/// The minimizer always lies in `(0, 1/2)`, so the upper half is not searched.
pub fn optimal_epsilon_global(sigma2: f64, d: &[f64], grid_step: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_d(d)?;
    if !(grid_step > 0.0 && grid_step <= 0.01) {
        return Err(Error::domain(format!("grid step must lie in (0, 0.01], got {grid_step}")));
    }
    let mut best = (f64::INFINITY, f64::NAN);
    for eps in lower_half_grid(grid_step) {
        let v = variance_fh_known(sigma2, d, eps)?.total;
        if v < best.0 {
            best = (v, eps);
        }
    }
    Ok(best.1)
}

/// Which β assumption the trade-off curve uses.
#[derive(Clone, Copy, Debug)]
pub enum GapMode<'a> {
    KnownBeta,
    EstimatedBeta(&'a DesignMatrix),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub epsilon: f64,
    pub gap: f64,
    pub gap_sq: f64,
    pub variance: f64,
    /// `gap_sq + variance`.
    pub sum: f64,
}

/// Squared thinning gap and estimator variance along `eps_grid`.
pub fn tradeoff_curve(sigma2: f64, d: &[f64], mode: GapMode<'_>, eps_grid: &[f64]) -> Result<Vec<TradeoffPoint>> {
    eps_grid
        .iter()
        .map(|&eps| {
            check_open(eps)?;
            let (gap, variance) = match mode {
                GapMode::KnownBeta => (
                    thinning_gap_known(sigma2, d, eps)?.mean_gap,
                    variance_fh_known(sigma2, d, eps)?.total,
                ),
                GapMode::EstimatedBeta(x) => (
                    thinning_gap_estimated(sigma2, d, x, eps)?.mean_gap,
                    variance_fh_estimated(sigma2, d, x, eps)?.total,
                ),
            };
            let gap_sq = gap * gap;
            Ok(TradeoffPoint { epsilon: eps, gap, gap_sq, variance, sum: gap_sq + variance })
        })
        .collect()
}

/// Largest relative projection residual allowed when checking nesting.
pub const NESTING_TOL: f64 = 1e-8;

fn is_nested(inner: &DMatrix<f64>, outer: &DMatrix<f64>) -> bool {
    let q = outer.clone().qr().q();
    let resid = inner - &q * (q.transpose() * inner);
    resid.norm() <= NESTING_TOL * inner.norm().max(1.0)
}

/// `g₂ᵢ` (full data) for each design of a nested sequence, indexed
/// `[area][design]`. Each design must be full rank, add at least one column,
/// and contain the previous column space.
pub fn g2_monotone_in_p(sigma2: f64, d: &[f64], nested: &[DesignMatrix]) -> Result<Vec<Vec<f64>>> {
    check_sigma2(sigma2)?;
    check_d(d)?;
    for (k, x) in nested.iter().enumerate() {
        if x.m() != d.len() {
            return Err(Error::shape(format!("design {k} has {} rows for {} areas", x.m(), d.len())));
        }
        if check_full_rank(x.matrix()).is_err() {
            return Err(Error::usage(format!("design {k} is not of full column rank")));
        }
        if k > 0 {
            let prev = &nested[k - 1];
            if x.p() <= prev.p() || !is_nested(prev.matrix(), x.matrix()) {
                return Err(Error::usage(format!("design {k} does not strictly extend design {}", k - 1)));
            }
        }
    }
    let per_design = nested
        .iter()
        .map(|x| g2_terms(sigma2, d, x, 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..d.len())
        .map(|i| per_design.iter().map(|g| g[i]).collect())
        .collect())
}

/// An ε grid written `start:stop:step`, clamped to [0.01, 0.99].
#[derive(Clone, Debug, PartialEq)]
pub struct EpsGrid(pub Vec<f64>);

pub const GRID_MIN: f64 = 0.01;
pub const GRID_MAX: f64 = 0.99;

impl EpsGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(Error::usage(format!("bad grid {start}:{stop}:{step}")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        let mut points: Vec<f64> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            // Rounded to kill accumulation error in printed values.
            let e = ((start + k as f64 * step) * 1e12).round() / 1e12;
            let e = e.clamp(GRID_MIN, GRID_MAX);
            if points.last() != Some(&e) {
                points.push(e);
            }
        }
        Ok(EpsGrid(points))
    }
}

impl FromStr for EpsGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::usage(format!("grid must be start:stop:step, got {s:?}")));
        }
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::usage(format!("grid {s:?}: {e}")))?;
        EpsGrid::new(nums[0], nums[1], nums[2])
    }
}
