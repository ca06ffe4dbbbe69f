//! End-to-end selection experiments: draw samples from a finite population,
//! score a grid of Moran-basis models with every configured method, select,
//! and compare against the oracle basis size.

mod config;
mod output;
mod variance_ratio;

use rayon::prelude::*;

pub use config::{
    DesignEntry, ExperimentConfig, MethodEntry, PopulationConfig, PopulationKind, VarianceRatioSettings,
};
pub use output::{
    emit_results, emit_variance_ratio, metrics_csv, read_selections, recompute_metrics, scores_csv, selections_csv,
};
pub use variance_ratio::{variance_ratio_study, VarianceRatioRecord, VarianceRatioSummary};

use crate::data::{DesignMatrix, DirectEstimateSet};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_fit, GibbsConfig};
use crate::model::{FayHerriotFit, GibbsFitter};
use crate::rng::Seed;
use crate::spatial::{candidate_designs, moran_operator, moran_spectrum, AdjacencyMatrix};
use crate::survey::{direct_estimates, poisson_sample, Population};
use crate::thinning::RepeatPlan;
use crate::validation::{dic, esim_validate, repeated_validate, select_index, waic, CandidateModel, Method, ThinScore};

/// One score cell; `score` is `None` when the cell failed.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub design: String,
    pub sample: usize,
    pub method: String,
    pub p: usize,
    pub score: Option<f64>,
}

/// The basis size chosen for one (design, sample, method); `None` when any
/// score in the grid failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRecord {
    pub design: String,
    pub sample: usize,
    pub method: String,
    pub p_selected: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub design: String,
    pub method: String,
    pub p_star: Option<usize>,
    pub rmse: Option<f64>,
    pub mean_bias: Option<f64>,
    /// Samples excluded because their selection failed.
    pub n_failed: usize,
}

/// Fingerprint of the direct estimates shared by all methods for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub design: String,
    pub sample: usize,
    pub fingerprint: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResults {
    pub scores: Vec<ScoreRecord>,
    pub selections: Vec<SelectionRecord>,
    pub metrics: Vec<MetricRecord>,
    /// Oracle loss `Σ_s Σ_i (θ̃ − θ)²` per design, aligned with the p grid.
    pub oracle_loss: Vec<(String, Vec<f64>)>,
    pub datasets: Vec<DatasetRecord>,
}

/// FNV-1a over the bit patterns of `y` and `d`.
pub fn fingerprint(data: &DirectEstimateSet) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in data.y().iter().chain(data.d()) {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}

/// Argmin over the grid of `Σ_s Σ_i (θ̃_i^(s)(p) − θ_i)²`; ties go to the
/// smaller `p`. `fits[s][j]` holds the area estimates for sample `s` and
/// grid entry `j`.
pub fn oracle_basis(p_grid: &[usize], fits: &[Vec<Option<Vec<f64>>>], truth: &[f64]) -> Result<usize> {
    let loss = oracle_losses(p_grid, fits, truth)?;
    let best = (0..p_grid.len())
        .min_by(|&a, &b| loss[a].total_cmp(&loss[b]).then(p_grid[a].cmp(&p_grid[b])))
        .ok_or_else(|| Error::usage("empty p grid"))?;
    Ok(p_grid[best])
}

/// Summed squared error against the truth for every grid entry.
pub fn oracle_losses(p_grid: &[usize], fits: &[Vec<Option<Vec<f64>>>], truth: &[f64]) -> Result<Vec<f64>> {
    if p_grid.is_empty() || fits.is_empty() {
        return Err(Error::usage("oracle needs at least one p and one sample"));
    }
    let mut loss = vec![0.0; p_grid.len()];
    for (s, row) in fits.iter().enumerate() {
        if row.len() != p_grid.len() {
            return Err(Error::usage(format!("sample {s} has {} fits for {} grid values", row.len(), p_grid.len())));
        }
        for (j, fit) in row.iter().enumerate() {
            let theta = fit
                .as_ref()
                .ok_or_else(|| Error::usage(format!("missing fit for sample {s}, p = {}", p_grid[j])))?;
            if theta.len() != truth.len() {
                return Err(Error::shape("fit length differs from truth"));
            }
            loss[j] += theta.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    Ok(loss)
}

/// `(rmse, mean_bias)` of selected sizes around `p_star`.
pub fn selection_metrics(selected: &[usize], p_star: usize) -> Result<(f64, f64)> {
    if selected.is_empty() {
        return Err(Error::usage("no selections to summarize"));
    }
    let n = selected.len() as f64;
    let diffs: Vec<f64> = selected.iter().map(|&p| p as f64 - p_star as f64).collect();
    let rmse = (diffs.iter().map(|d| d * d).sum::<f64>() / n).sqrt();
    let bias = diffs.iter().sum::<f64>() / n;
    Ok((rmse, bias))
}

/// Candidate models `p0, p2, …` built from the intercept-only Moran basis.
pub fn grid_models(adjacency: &AdjacencyMatrix, p_grid: &[usize]) -> Result<Vec<CandidateModel>> {
    let designs = candidate_designs(adjacency, p_grid)?;
    Ok(p_grid
        .iter()
        .zip(designs)
        .map(|(p, design)| CandidateModel::new(format!("p{p}"), design))
        .collect())
}

/// Errors unless every grid value is within the positive spectrum.
pub fn check_feasible(adjacency: &AdjacencyMatrix, p_grid: &[usize]) -> Result<usize> {
    let g = moran_operator(adjacency, &DesignMatrix::intercept(adjacency.m()))?;
    let available = moran_spectrum(&g)?.positive_count;
    if let Some(&p) = p_grid.iter().find(|&&p| p > available) {
        return Err(Error::Config(format!(
            "p = {p} exceeds the {available} positive Moran eigenvalues"
        )));
    }
    if p_grid.iter().any(|&p| p + 1 >= adjacency.m()) {
        return Err(Error::Config("every model needs fewer columns than areas".into()));
    }
    Ok(available)
}

/// Direct estimates for sample `s` of the named design.
pub fn sample_data(config: &ExperimentConfig, pop: &Population, design: usize, s: usize) -> Result<DirectEstimateSet> {
    let entry = &config.designs[design];
    let seed = Seed::new(config.seed).child_str("sample").child_str(&entry.label()).child(s as u64);
    let sample = poisson_sample(pop, &entry.design(), seed)?;
    direct_estimates(&sample)
}

fn full_fit_config(config: &ExperimentConfig) -> GibbsConfig {
    GibbsConfig { retain_draws: true, ..config.gibbs.clone() }
}

fn method_gibbs(config: &ExperimentConfig, entry: &MethodEntry) -> GibbsConfig {
    let g = entry.gibbs.clone().unwrap_or_else(|| config.gibbs.clone());
    GibbsConfig { retain_draws: false, ..g }
}

struct CellOutcome {
    scores: Vec<ScoreRecord>,
    selections: Vec<SelectionRecord>,
    oracle: Vec<Option<Vec<f64>>>,
    fingerprint: Option<u64>,
}

fn run_cell(
    config: &ExperimentConfig,
    pop: &Population,
    models: &[CandidateModel],
    design: usize,
    s: usize,
) -> CellOutcome {
    let design_label = config.designs[design].label();
    let root = Seed::new(config.seed);
    let k = models.len();
    let data = sample_data(config, pop, design, s);
    if let Err(e) = &data {
        log::warn!("design {design_label}, sample {s}: {e}");
    }
    let full: Vec<Result<FayHerriotFit>> = match &data {
        Ok(data) => {
            let base = GibbsConfig {
                seed: root.child_str("full-fit").child_str(&design_label).child(s as u64),
                ..full_fit_config(config)
            };
            models.par_iter().map(|m| gibbs_fit(data, &m.design, &base)).collect()
        }
        Err(e) => (0..k).map(|_| Err(Error::usage(e.to_string()))).collect(),
    };

    let mut scores = Vec::new();
    let mut selections = Vec::new();
    for entry in &config.methods {
        let label = entry.label();
        let values: Vec<Option<f64>> = match &data {
            Ok(data) => method_scores(config, entry, data, models, &full, &design_label, s),
            Err(_) => vec![None; k],
        };
        let p_selected = if values.iter().all(Option::is_some) {
            let rows: Vec<_> = models
                .iter()
                .zip(&values)
                .map(|(m, v)| crate::validation::single_score(entry.kind, m, Ok(v.unwrap())))
                .collect();
            select_index(&rows).ok().map(|i| config.p_grid[i])
        } else {
            None
        };
        for (j, v) in values.iter().enumerate() {
            scores.push(ScoreRecord {
                design: design_label.clone(),
                sample: s,
                method: label.clone(),
                p: config.p_grid[j],
                score: *v,
            });
        }
        selections.push(SelectionRecord { design: design_label.clone(), sample: s, method: label, p_selected });
    }
    CellOutcome {
        scores,
        selections,
        oracle: full.iter().map(|f| f.as_ref().ok().map(|f| f.theta_hat.as_slice().to_vec())).collect(),
        fingerprint: data.as_ref().ok().map(fingerprint),
    }
}

fn method_scores(
    config: &ExperimentConfig,
    entry: &MethodEntry,
    data: &DirectEstimateSet,
    models: &[CandidateModel],
    full: &[Result<FayHerriotFit>],
    design_label: &str,
    s: usize,
) -> Vec<Option<f64>> {
    let label = entry.label();
    let seed = Seed::new(config.seed).child_str(&label).child_str(design_label).child(s as u64);
    let fitter = GibbsFitter { config: method_gibbs(config, entry) };
    let report = |e: &Error| log::warn!("{design_label}, sample {s}, {label}: {e}");
    let from_scores = |res: Result<Vec<crate::validation::ValidationScore>>| match res {
        Ok(rows) => rows.iter().map(|r| r.is_valid().then_some(r.value)).collect(),
        Err(e) => {
            report(&e);
            vec![None; models.len()]
        }
    };
    match entry.kind {
        Method::DtMse | Method::DtNll => {
            let score = if entry.kind == Method::DtMse { ThinScore::Mse } else { ThinScore::Nll };
            let plan = RepeatPlan::new(entry.repeats.unwrap_or(1), entry.epsilon.unwrap_or(0.5), seed);
            from_scores(plan.and_then(|plan| repeated_validate(data, models, &plan, &fitter, score)))
        }
        Method::Esim => from_scores(esim_validate(data, models, entry.iterations.unwrap_or(1), &fitter, seed)),
        Method::Dic | Method::Waic => full
            .iter()
            .map(|fit| {
                let fit = fit.as_ref().ok()?;
                let c = if entry.kind == Method::Dic { dic(fit, data) } else { waic(fit, data) };
                c.map_err(|e| report(&e)).ok().map(|c| c.value)
            })
            .collect(),
    }
}

/// Runs every (design, sample) cell and reduces into ordered tables.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let (pop, adjacency) = config.build_population()?;
    run_with_population(config, &pop, &adjacency)
}

/// [`run_experiment`] with an already built population.
pub fn run_with_population(
    config: &ExperimentConfig,
    pop: &Population,
    adjacency: &AdjacencyMatrix,
) -> Result<ExperimentResults> {
    config.validate()?;
    if adjacency.area_ids() != pop.area_ids() {
        return Err(Error::Config("adjacency areas differ from population areas".into()));
    }
    check_feasible(adjacency, &config.p_grid)?;
    let models = grid_models(adjacency, &config.p_grid)?;

    let cells: Vec<(usize, usize)> = (0..config.designs.len())
        .flat_map(|d| (0..config.samples).map(move |s| (d, s)))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(d, s)| run_cell(config, pop, &models, d, s))
        .collect();

    let mut results = ExperimentResults {
        scores: Vec::new(),
        selections: Vec::new(),
        metrics: Vec::new(),
        oracle_loss: Vec::new(),
        datasets: Vec::new(),
    };
    let truth = pop.true_means();
    for (d, entry) in config.designs.iter().enumerate() {
        let label = entry.label();
        let block = &outcomes[d * config.samples..(d + 1) * config.samples];
        let complete: Vec<Vec<Option<Vec<f64>>>> = block
            .iter()
            .filter(|c| c.oracle.iter().all(Option::is_some))
            .map(|c| c.oracle.clone())
            .collect();
        if complete.len() < block.len() {
            log::warn!("design {label}: {} samples excluded from the oracle", block.len() - complete.len());
        }
        let p_star = if complete.is_empty() {
            None
        } else {
            results.oracle_loss.push((label.clone(), oracle_losses(&config.p_grid, &complete, truth)?));
            Some(oracle_basis(&config.p_grid, &complete, truth)?)
        };
        for cell in block {
            results.scores.extend(cell.scores.iter().cloned());
            results.selections.extend(cell.selections.iter().cloned());
        }
        for (s, cell) in block.iter().enumerate() {
            results.datasets.push(DatasetRecord { design: label.clone(), sample: s, fingerprint: cell.fingerprint });
        }
        for method in config.method_labels() {
            let picks: Vec<Option<usize>> = block
                .iter()
                .flat_map(|c| c.selections.iter())
                .filter(|r| r.method == method)
                .map(|r| r.p_selected)
                .collect();
            results.metrics.push(metric_row(&label, &method, p_star, &picks));
        }
    }
    Ok(results)
}

pub(crate) fn metric_row(design: &str, method: &str, p_star: Option<usize>, picks: &[Option<usize>]) -> MetricRecord {
    let ok: Vec<usize> = picks.iter().flatten().copied().collect();
    let n_failed = picks.len() - ok.len();
    let (rmse, mean_bias) = match p_star.map(|p| selection_metrics(&ok, p)) {
        Some(Ok((r, b))) => (Some(r), Some(b)),
        _ => (None, None),
    };
    MetricRecord { design: design.into(), method: method.into(), p_star, rmse, mean_bias, n_failed }
}
