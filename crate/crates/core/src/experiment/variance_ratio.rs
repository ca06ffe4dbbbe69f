use rayon::prelude::*;

use super::{grid_models, sample_data, ExperimentConfig};
use crate::data::DirectEstimateSet;
use crate::error::{Error, Result};
use crate::gibbs::GibbsConfig;
use crate::model::{Fitter, GibbsFitter};
use crate::rng::Seed;
use crate::spatial::AdjacencyMatrix;
use crate::survey::Population;
use crate::thinning::{fold_train_test, multifold_thin, RepeatPlan};
use crate::validation::{mse_estimate, repeated_validate, CandidateModel, ThinScore};

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRatioRecord {
    pub design: String,
    pub p: usize,
    /// Variance over samples of the K-fold averaged MSE estimate.
    pub var_multifold: f64,
    /// Variance over samples of the R-repeat averaged MSE estimate.
    pub var_repeated: f64,
    pub ratio: f64,
    /// Samples where both estimators were available.
    pub n_used: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRatioSummary {
    pub records: Vec<VarianceRatioRecord>,
    /// Mean ratio over the p grid, per design.
    pub design_ratio: Vec<(String, f64)>,
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn multifold_scores<F: Fitter>(
    data: &DirectEstimateSet,
    models: &[CandidateModel],
    folds: usize,
    fitter: &F,
    seed: Seed,
) -> Result<Vec<f64>> {
    let split = multifold_thin(data, folds, seed)?;
    let fit_root = seed.child_str("fit");
    let mut totals = vec![0.0; models.len()];
    for k in 0..folds {
        let pair = fold_train_test(&split, k, 1)?;
        let train = data.rescaled(&pair.train, pair.epsilon)?;
        for (j, model) in models.iter().enumerate() {
            let fit = fitter.fit(&train, &model.design, fit_root.child(k as u64))?;
            totals[j] += mse_estimate(fit.theta_hat.as_slice(), &pair.test, data.d(), pair.epsilon)?;
        }
    }
    Ok(totals.into_iter().map(|t| t / folds as f64).collect())
}

/// Compares the sampling variance of the MSE estimate averaged over `K`
/// multi-fold splits with the one averaged over `R = K` independent
/// single-fold thinnings at the matched fraction `ε = (K−1)/K`. Both
/// estimators see the same direct estimates for every sample.
pub fn variance_ratio_study(
    config: &ExperimentConfig,
    pop: &Population,
    adjacency: &AdjacencyMatrix,
    folds: usize,
    repeats: usize,
) -> Result<VarianceRatioSummary> {
    config.validate()?;
    if folds < 2 {
        return Err(Error::usage("multi-fold thinning needs at least 2 folds"));
    }
    if repeats != folds {
        return Err(Error::usage(format!("repeats ({repeats}) must equal folds ({folds})")));
    }
    if config.samples < 2 {
        return Err(Error::usage("a variance needs at least 2 samples"));
    }
    let epsilon = (folds - 1) as f64 / folds as f64;
    let models = grid_models(adjacency, &config.p_grid)?;
    let fitter = GibbsFitter { config: GibbsConfig { retain_draws: false, ..config.gibbs.clone() } };
    let root = Seed::new(config.seed);

    let cells: Vec<(usize, usize)> = (0..config.designs.len())
        .flat_map(|d| (0..config.samples).map(move |s| (d, s)))
        .collect();
    type Pair = Option<(Vec<f64>, Vec<f64>)>;
    let per_cell: Vec<Pair> = cells
        .par_iter()
        .map(|&(d, s)| {
            let label = config.designs[d].label();
            let outcome = (|| {
                let data = sample_data(config, pop, d, s)?;
                let plan = RepeatPlan::new(repeats, epsilon, root.child_str("vr-repeated").child_str(&label).child(s as u64))?;
                let rep = repeated_validate(&data, &models, &plan, &fitter, ThinScore::Mse)?;
                if rep.iter().any(|r| !r.is_valid()) {
                    return Err(Error::usage("repeated thinning fit failed"));
                }
                let mf = multifold_scores(
                    &data,
                    &models,
                    folds,
                    &fitter,
                    root.child_str("vr-multifold").child_str(&label).child(s as u64),
                )?;
                Ok((mf, rep.iter().map(|r| r.value).collect()))
            })();
            outcome
                .map_err(|e: Error| log::warn!("variance ratio, {label}, sample {s}: {e}"))
                .ok()
        })
        .collect();

    let mut records = Vec::new();
    let mut design_ratio = Vec::new();
    for (d, entry) in config.designs.iter().enumerate() {
        let label = entry.label();
        let block: Vec<&(Vec<f64>, Vec<f64>)> =
            per_cell[d * config.samples..(d + 1) * config.samples].iter().flatten().collect();
        if block.len() < 2 {
            return Err(Error::usage(format!("design {label}: fewer than 2 usable samples")));
        }
        let mut ratios = Vec::new();
        for (j, &p) in config.p_grid.iter().enumerate() {
            let mf: Vec<f64> = block.iter().map(|(m, _)| m[j]).collect();
            let rep: Vec<f64> = block.iter().map(|(_, r)| r[j]).collect();
            let (vm, vr) = (sample_variance(&mf), sample_variance(&rep));
            ratios.push(vm / vr);
            records.push(VarianceRatioRecord {
                design: label.clone(),
                p,
                var_multifold: vm,
                var_repeated: vr,
                ratio: vm / vr,
                n_used: block.len(),
            });
        }
        design_ratio.push((label, ratios.iter().sum::<f64>() / ratios.len() as f64));
    }
    Ok(VarianceRatioSummary { records, design_ratio })
}
