//! Validation scores for candidate models fitted to one set of direct
//! estimates: thinned-data MSE and predictive NLL, ESIM, DIC and WAIC, plus
//! the selection rule. Every score is oriented so that lower is better.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{DesignMatrix, DirectEstimateSet};
use crate::error::{Error, Result};
use crate::model::{FayHerriotFit, Fitter};
use crate::rng::Seed;
use crate::thinning::{esim_replicate, RepeatPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DtMse,
    DtNll,
    Esim,
    Dic,
    Waic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::DtMse => "dt-mse",
            Method::DtNll => "dt-nll",
            Method::Esim => "esim",
            Method::Dic => "dic",
            Method::Waic => "waic",
        }
    }

    pub fn uses_thinning(self) -> bool {
        matches!(self, Method::DtMse | Method::DtNll)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dt-mse" => Ok(Method::DtMse),
            "dt-nll" => Ok(Method::DtNll),
            "esim" => Ok(Method::Esim),
            "dic" => Ok(Method::Dic),
            "waic" => Ok(Method::Waic),
            other => Err(Error::usage(format!("unknown method {other:?}"))),
        }
    }
}

/// A named candidate design.
#[derive(Clone, Debug)]
pub struct CandidateModel {
    pub id: String,
    pub design: DesignMatrix,
}

impl CandidateModel {
    pub fn new(id: impl Into<String>, design: DesignMatrix) -> Self {
        Self { id: id.into(), design }
    }

    pub fn complexity(&self) -> usize {
        self.design.p()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationScore {
    pub method: Method,
    pub model_id: String,
    /// Column count of the model's design, used to break ties.
    pub complexity: usize,
    pub value: f64,
    pub per_repeat: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    /// R for thinning, L for ESIM.
    pub repeats: Option<usize>,
    /// `(repeat, message)` for every failed fit.
    pub failures: Vec<(usize, String)>,
}

impl ValidationScore {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty() && self.value.is_finite()
    }
}

fn check_lengths(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b || a != c {
        return Err(Error::shape(format!("length mismatch: {a}, {b}, {c}")));
    }
    Ok(())
}

/// Bias-corrected squared error of training estimates against the rescaled
/// test component: `(1/m) Σ [(θ̂_i − y⁽²⁾_i/(1−ε))² − d_i/(1−ε)]`.
///
/// Negative values are possible and are returned as is.
pub fn mse_estimate(theta_train: &[f64], y_test: &[f64], d: &[f64], epsilon: f64) -> Result<f64> {
    check_lengths(theta_train.len(), y_test.len(), d.len())?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let q = 1.0 - epsilon;
    let total: f64 = theta_train
        .iter()
        .zip(y_test)
        .zip(d)
        .map(|((t, y), d)| (t - y / q).powi(2) - d / q)
        .sum();
    Ok(total / theta_train.len() as f64)
}

/// Gaussian log density `log φ(x | mean, var)`.
pub fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// Negative plug-in predictive log-likelihood of the test component,
/// `−Σ log φ(y⁽²⁾_i | (1−ε)θ̂_i, (1−ε)d_i)`.
pub fn nll_score(theta_train: &[f64], y_test: &[f64], d: &[f64], epsilon: f64) -> Result<f64> {
    check_lengths(theta_train.len(), y_test.len(), d.len())?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("sampling variances must be positive"));
    }
    let q = 1.0 - epsilon;
    Ok(-theta_train
        .iter()
        .zip(y_test)
        .zip(d)
        .map(|((t, y), d)| log_normal_density(*y, q * t, q * d))
        .sum::<f64>())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThinScore {
    Mse,
    Nll,
}

impl ThinScore {
    fn method(self) -> Method {
        match self {
            ThinScore::Mse => Method::DtMse,
            ThinScore::Nll => Method::DtNll,
        }
    }

    pub fn evaluate(self, theta_train: &[f64], y_test: &[f64], d: &[f64], epsilon: f64) -> Result<f64> {
        match self {
            ThinScore::Mse => mse_estimate(theta_train, y_test, d, epsilon),
            ThinScore::Nll => nll_score(theta_train, y_test, d, epsilon),
        }
    }
}

fn summarize(
    method: Method,
    model: &CandidateModel,
    outcomes: Vec<Result<f64>>,
    epsilon: Option<f64>,
) -> ValidationScore {
    let mut per_repeat = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(v) => per_repeat.push(v),
            Err(e) => {
                per_repeat.push(f64::NAN);
                failures.push((r, e.to_string()));
            }
        }
    }
    let value = if failures.is_empty() {
        per_repeat.iter().sum::<f64>() / per_repeat.len() as f64
    } else {
        f64::NAN
    };
    ValidationScore {
        method,
        model_id: model.id.clone(),
        complexity: model.complexity(),
        value,
        repeats: Some(per_repeat.len()),
        per_repeat: Some(per_repeat),
        epsilon,
        failures,
    }
}

/// Scores every model on the same `R` thinned splits and averages.
///
/// The fitter seed for repeat `r` depends on `r` only, so identical models
/// receive identical scores.
pub fn repeated_validate<F: Fitter + ?Sized>(
    data: &DirectEstimateSet,
    models: &[CandidateModel],
    plan: &RepeatPlan,
    fitter: &F,
    score: ThinScore,
) -> Result<Vec<ValidationScore>> {
    let splits = (0..plan.repeats)
        .map(|r| {
            let split = plan.split(data, r)?;
            let train = split.train_set(data)?;
            Ok((split, train))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit_root = plan.base_seed.child_str("fit");

    let cells: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|j| (0..plan.repeats).map(move |r| (j, r)))
        .collect();
    let values: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(j, r)| {
            let (split, train) = &splits[r];
            let fit = fitter.fit(train, &models[j].design, fit_root.child(r as u64))?;
            score.evaluate(fit.theta_hat.as_slice(), &split.y_test, data.d(), plan.epsilon)
        })
        .collect();

    let mut values = values.into_iter();
    Ok(models
        .iter()
        .map(|model| {
            let outcomes: Vec<_> = values.by_ref().take(plan.repeats).collect();
            summarize(score.method(), model, outcomes, Some(plan.epsilon))
        })
        .collect())
}

/// ESIM for several models on shared perturbations: the score is the
/// average over `L` replicates of `(1/m) Σ (θ̂_i(z) − y_i)²`.
pub fn esim_validate<F: Fitter + ?Sized>(
    data: &DirectEstimateSet,
    models: &[CandidateModel],
    iterations: usize,
    fitter: &F,
    seed: Seed,
) -> Result<Vec<ValidationScore>> {
    if iterations == 0 {
        return Err(Error::domain("ESIM needs at least one iteration"));
    }
    let replicates = (0..iterations)
        .map(|l| data.with_estimates(esim_replicate(data, seed.child(l as u64))))
        .collect::<Result<Vec<_>>>()?;
    let fit_root = seed.child_str("fit");
    let m = data.m() as f64;

    let cells: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|j| (0..iterations).map(move |l| (j, l)))
        .collect();
    let values: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(j, l)| {
            let fit = fitter.fit(&replicates[l], &models[j].design, fit_root.child(l as u64))?;
            Ok(fit
                .theta_hat
                .iter()
                .zip(data.y())
                .map(|(t, y)| (t - y).powi(2))
                .sum::<f64>()
                / m)
        })
        .collect();

    let mut values = values.into_iter();
    Ok(models
        .iter()
        .map(|model| {
            let outcomes: Vec<_> = values.by_ref().take(iterations).collect();
            summarize(Method::Esim, model, outcomes, None)
        })
        .collect())
}

pub fn esim_score<F: Fitter + ?Sized>(
    data: &DirectEstimateSet,
    model: &CandidateModel,
    iterations: usize,
    fitter: &F,
    seed: Seed,
) -> Result<ValidationScore> {
    let mut scores = esim_validate(data, std::slice::from_ref(model), iterations, fitter, seed)?;
    Ok(scores.remove(0))
}

/// An information criterion with its effective-parameter penalty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Criterion {
    pub value: f64,
    /// `p_D` for DIC, `p_waic` for WAIC.
    pub penalty: f64,
}

fn deviance(y: &[f64], d: &[f64], theta: &[f64]) -> f64 {
    -2.0 * y
        .iter()
        .zip(d)
        .zip(theta)
        .map(|((y, d), t)| log_normal_density(*y, *t, *d))
        .sum::<f64>()
}

fn draws_for<'a>(fit: &'a FayHerriotFit, data: &DirectEstimateSet) -> Result<&'a crate::gibbs::PosteriorDraws> {
    let draws = fit
        .draws
        .as_ref()
        .filter(|d| !d.is_empty())
        .ok_or_else(|| Error::usage("fit carries no posterior draws"))?;
    if draws.m() != data.m() {
        return Err(Error::shape("draws and data disagree on area count"));
    }
    Ok(draws)
}

/// `DIC = D(θ̄) + 2 p_D` with `p_D = mean_s D(θ⁽ˢ⁾) − D(θ̄)`.
pub fn dic(fit: &FayHerriotFit, data: &DirectEstimateSet) -> Result<Criterion> {
    let draws = draws_for(fit, data)?;
    let (m, n) = (data.m(), draws.len());
    let mut mean_theta = vec![0.0; m];
    let mut mean_dev = 0.0;
    for s in 0..n {
        let theta = draws.theta(s);
        mean_dev += deviance(data.y(), data.d(), theta);
        for (acc, t) in mean_theta.iter_mut().zip(theta) {
            *acc += t;
        }
    }
    mean_dev /= n as f64;
    for v in &mut mean_theta {
        *v /= n as f64;
    }
    let at_mean = deviance(data.y(), data.d(), &mean_theta);
    let penalty = mean_dev - at_mean;
    Ok(Criterion {
        value: at_mean + 2.0 * penalty,
        penalty,
    })
}

/// `WAIC = −2 (lppd − p_waic)`; `p_waic` sums per-area sample variances
/// (denominator S−1) of the pointwise log density, and is 0 for one draw.
pub fn waic(fit: &FayHerriotFit, data: &DirectEstimateSet) -> Result<Criterion> {
    let draws = draws_for(fit, data)?;
    let n = draws.len();
    let mut lppd = 0.0;
    let mut penalty = 0.0;
    let mut logs = vec![0.0; n];
    for i in 0..data.m() {
        let (y, d) = (data.y()[i], data.d()[i]);
        for (s, l) in logs.iter_mut().enumerate() {
            *l = log_normal_density(y, draws.theta(s)[i], d);
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        lppd += max + (sum_exp / n as f64).ln();
        if n > 1 {
            let mean = logs.iter().sum::<f64>() / n as f64;
            penalty += logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        }
    }
    Ok(Criterion {
        value: -2.0 * (lppd - penalty),
        penalty,
    })
}

fn by_rank(a: &ValidationScore, b: &ValidationScore) -> Ordering {
    a.value
        .total_cmp(&b.value)
        .then(a.complexity.cmp(&b.complexity))
        .then_with(|| a.model_id.cmp(&b.model_id))
}

/// Index of the best score: minimum value, then fewest columns, then the
/// lexicographically smallest id.
pub fn select_index(scores: &[ValidationScore]) -> Result<usize> {
    let first = scores.first().ok_or_else(|| Error::usage("no scores to select from"))?;
    if scores.iter().any(|s| s.method != first.method) {
        return Err(Error::usage("scores mix validation methods"));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_valid()) {
        return Err(Error::usage(format!("score for model {} is invalid", bad.model_id)));
    }
    Ok((0..scores.len())
        .min_by(|&a, &b| by_rank(&scores[a], &scores[b]))
        .expect("non-empty"))
}

pub fn select_model(scores: &[ValidationScore]) -> Result<String> {
    select_index(scores).map(|i| scores[i].model_id.clone())
}

/// A score row for a directly computed value (DIC, WAIC).
pub fn single_score(method: Method, model: &CandidateModel, value: Result<f64>) -> ValidationScore {
    let mut s = summarize(method, model, vec![value], None);
    s.per_repeat = None;
    s.repeats = None;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::PosteriorDraws;
    use crate::model::point_fit;

    fn score(id: &str, p: usize, value: f64) -> ValidationScore {
        ValidationScore {
            method: Method::DtMse,
            model_id: id.into(),
            complexity: p,
            value,
            per_repeat: None,
            epsilon: Some(0.6),
            repeats: Some(1),
            failures: vec![],
        }
    }

    #[test]
    fn mse_hand_value() {
        assert_eq!(mse_estimate(&[2.0], &[1.0], &[1.0], 0.5).unwrap(), -2.0);
        assert!(mse_estimate(&[1.0, 2.0], &[1.0], &[1.0], 0.5).is_err());
        assert!(mse_estimate(&[1.0], &[1.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn nll_hand_values() {
        let eps: f64 = 0.3;
        let v = nll_score(&[2.0], &[(1.0 - eps) * 2.0], &[1.5], eps).unwrap();
        assert!((v - 0.5 * (2.0 * PI * (1.0 - eps) * 1.5).ln()).abs() < 1e-14);
        let v = nll_score(&[0.0], &[1.0], &[1.0], 0.5).unwrap();
        assert!((v - (0.5 * PI.ln() + 1.0)).abs() < 1e-14);
        assert!(nll_score(&[0.0], &[1.0], &[0.0], 0.5).is_err());
    }

    fn fit_with(theta: Vec<Vec<f64>>) -> FayHerriotFit {
        let mut fit = point_fit(vec![0.0; theta[0].len()]);
        fit.draws = Some(PosteriorDraws::from_theta(theta).unwrap());
        fit
    }

    #[test]
    fn dic_waic_two_draws() {
        let data = DirectEstimateSet::from_values(vec![0.0], vec![1.0]).unwrap();
        let fit = fit_with(vec![vec![-1.0], vec![1.0]]);
        let l2pi = (2.0 * PI).ln();
        let c = dic(&fit, &data).unwrap();
        assert!((c.penalty - 1.0).abs() < 1e-14);
        assert!((c.value - (l2pi + 2.0)).abs() < 1e-14);
        let w = waic(&fit, &data).unwrap();
        assert!(w.penalty.abs() < 1e-14);
        assert!((w.value - (1.0 + l2pi)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_posteriors() {
        let data = DirectEstimateSet::from_values(vec![0.5, 1.0], vec![1.0, 2.0]).unwrap();
        let single = fit_with(vec![vec![0.1, 0.7]]);
        let at = deviance(data.y(), data.d(), &[0.1, 0.7]);
        let c = dic(&single, &data).unwrap();
        assert_eq!(c.penalty, 0.0);
        assert!((c.value - at).abs() < 1e-12);
        assert_eq!(waic(&single, &data).unwrap().penalty, 0.0);
        let same = fit_with(vec![vec![0.1, 0.7]; 4]);
        assert!(dic(&same, &data).unwrap().penalty.abs() < 1e-12);
        let w = waic(&same, &data).unwrap();
        assert!(w.penalty.abs() < 1e-12);
        assert!((w.value - at).abs() < 1e-12);
        assert!(matches!(dic(&point_fit(vec![0.0, 0.0]), &data), Err(Error::Usage(_))));
    }

    #[test]
    fn selection_rule() {
        let s = vec![score("a", 3, 3.0), score("b", 4, 1.0), score("c", 5, 2.0)];
        assert_eq!(select_model(&s).unwrap(), "b");
        let tie = vec![score("p9", 9, 1.0), score("p6", 6, 1.0)];
        assert_eq!(select_model(&tie).unwrap(), "p6");
        let tie_id = vec![score("z", 6, 1.0), score("y", 6, 1.0)];
        assert_eq!(select_model(&tie_id).unwrap(), "y");
        assert_eq!(select_model(&s[..1]).unwrap(), "a");
        assert!(matches!(select_model(&[]), Err(Error::Usage(_))));
        let mut mixed = s.clone();
        mixed[1].method = Method::Dic;
        assert!(select_model(&mixed).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::DtMse, Method::DtNll, Method::Esim, Method::Dic, Method::Waic] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("dt_mse".parse::<Method>().unwrap(), Method::DtMse);
        assert!("loo".parse::<Method>().is_err());
    }
}
