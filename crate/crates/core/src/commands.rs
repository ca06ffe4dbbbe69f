//! Command-line front end. Each subcommand maps onto library calls; the
//! binary only parses arguments and dispatches here.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytics::{tradeoff_curve, EpsGrid, GapMode};
use crate::data::{DesignMatrix, DirectEstimateSet};
use crate::error::{Error, Result};
use crate::experiment::{emit_results, emit_variance_ratio, run_with_population, variance_ratio_study, ExperimentConfig};
use crate::gibbs::GibbsConfig;
use crate::model::GibbsFitter;
use crate::rng::Seed;
use crate::spatial::{
    augment_design, load_adjacency, load_adjacency_ids, moran_operator, moran_spectrum, AdjacencyMatrix,
};
use crate::survey::{direct_estimates, generate_population, poisson_sample, DesignKind, Population, PopulationSpec, SamplingDesign};
use crate::thinning::{multifold_thin, RepeatPlan};
use crate::validation::{
    dic, esim_validate, repeated_validate, select_index, single_score, waic, CandidateModel, Method, ThinScore,
    ValidationScore,
};

#[derive(Debug, Parser)]
#[command(name = "sae-thin", version, about = "Data-thinning validation for Fay-Herriot models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split direct estimates into training/test components or folds.
    Thin(ThinArgs),
    /// Score candidate models on one set of direct estimates.
    Validate(ValidateArgs),
    /// Closed-form thinning gap and MSE-estimator variance over an ε grid.
    Analytics(AnalyticsArgs),
    /// Build an intercept plus Moran eigenvector design.
    Basis(BasisArgs),
    /// Draw Poisson samples and write direct estimates (and the edge list of a generated grid).
    Simulate(SimulateArgs),
    /// Run a full selection experiment from a TOML config.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct ThinArgs {
    /// Direct estimates CSV (`area_id,y,d`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Multi-fold thinning into K folds instead of a train/test split.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct GibbsArgs {
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin_interval: usize,
    #[arg(long, default_value_t = 0.001)]
    pub prior_a: f64,
    #[arg(long, default_value_t = 0.001)]
    pub prior_b: f64,
}

impl GibbsArgs {
    pub fn config(&self) -> GibbsConfig {
        GibbsConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin_interval: self.thin_interval,
            prior_a: self.prior_a,
            prior_b: self.prior_b,
            ..GibbsConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Edge-list adjacency; candidate models are `[1 | G_p]` for each `--p-grid` value.
    #[arg(long, requires = "p_grid")]
    pub adjacency: Option<PathBuf>,
    /// Comma-separated basis sizes, e.g. `0,3,6`.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Vec<usize>,
    /// Candidate design CSVs (`area_id,<columns>`); the file stem is the model id.
    #[arg(long = "design", conflicts_with = "adjacency")]
    pub designs: Vec<PathBuf>,
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value_t = 0.6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 100)]
    pub esim_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub gibbs: GibbsArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalyticsMode {
    Known,
    Estimated,
}

#[derive(Debug, Args)]
pub struct AnalyticsArgs {
    #[arg(long)]
    pub sigma2: f64,
    /// CSV with a `d` column and optionally `area_id` (a direct estimates file works).
    #[arg(long)]
    pub d_file: PathBuf,
    /// Design CSV used by `--mode estimated`.
    #[arg(long)]
    pub design_file: Option<PathBuf>,
    #[arg(long, default_value = "0.05:0.95:0.05")]
    pub eps_grid: EpsGrid,
    #[arg(long, value_enum, default_value_t = AnalyticsMode::Known)]
    pub mode: AnalyticsMode,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long)]
    pub adjacency: PathBuf,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Direct estimates CSV fixing the area set and row order; otherwise
    /// areas are taken from the edge list in order of appearance.
    #[arg(long)]
    pub areas: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub design: DesignKind,
    /// Expected per-area size (equal) or sampling rate (prop).
    #[arg(long)]
    pub target: f64,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Microdata CSV (`area_id,value,weight`); a synthetic population is generated otherwise.
    #[arg(long)]
    pub microdata: Option<PathBuf>,
    /// Edge-list adjacency for the synthetic generator.
    #[arg(long, conflicts_with = "microdata")]
    pub adjacency: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub grid_rows: usize,
    #[arg(long, default_value_t = 10)]
    pub grid_cols: usize,
    /// TOML file with generator settings (the `[population.generator]` keys).
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Overrides the generator's spatial signal rank.
    #[arg(long)]
    pub signal_rank: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Thin(a) => thin_cmd(&a),
        Command::Validate(a) => validate_cmd(&a),
        Command::Analytics(a) => analytics_cmd(&a),
        Command::Basis(a) => basis_cmd(&a),
        Command::Simulate(a) => simulate_cmd(&a),
        Command::Run(a) => run_cmd(&a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn thin_cmd(a: &ThinArgs) -> Result<()> {
    let data = DirectEstimateSet::read_csv(&a.data)?;
    if a.repeats == 0 {
        return Err(Error::usage("--repeats must be at least 1"));
    }
    let seed = Seed::new(a.seed);
    let ids = data.area_ids();
    let mut out = String::from("area_id,repeat,component,value\n");
    for r in 0..a.repeats {
        if let Some(k) = a.folds {
            let split = multifold_thin(&data, k, seed.child(r as u64))?;
            for (i, id) in ids.iter().enumerate() {
                for (f, fold) in split.folds.iter().enumerate() {
                    let _ = writeln!(out, "{id},{r},fold_{},{}", f + 1, fold[i]);
                }
            }
        } else {
            let plan = RepeatPlan::new(a.repeats, a.epsilon, seed)?;
            let split = plan.split(&data, r)?;
            for (i, id) in ids.iter().enumerate() {
                let _ = writeln!(out, "{id},{r},train,{}", split.y_train[i]);
                let _ = writeln!(out, "{id},{r},test,{}", split.y_test[i]);
            }
        }
    }
    write_text(&a.out, &out)
}

fn candidate_models(a: &ValidateArgs, data: &DirectEstimateSet) -> Result<Vec<CandidateModel>> {
    if let Some(path) = &a.adjacency {
        let adjacency = load_adjacency(path, data.area_ids())?;
        let base = DesignMatrix::intercept(data.m());
        let spectrum = moran_spectrum(&moran_operator(&adjacency, &base)?)?;
        return a
            .p_grid
            .iter()
            .map(|&p| Ok(CandidateModel::new(format!("p{p}"), augment_design(&base, &spectrum.truncate(p)?)?)))
            .collect();
    }
    if a.designs.is_empty() {
        return Err(Error::usage("give --adjacency with --p-grid, or one or more --design files"));
    }
    a.designs
        .iter()
        .map(|path| {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            Ok(CandidateModel::new(id, DesignMatrix::read_csv(path, data.area_ids())?))
        })
        .collect()
}

/// Scores every candidate with one method.
pub fn score_models(
    data: &DirectEstimateSet,
    models: &[CandidateModel],
    method: Method,
    epsilon: f64,
    repeats: usize,
    esim_iters: usize,
    gibbs: &GibbsConfig,
    seed: Seed,
) -> Result<Vec<ValidationScore>> {
    let fitter = GibbsFitter { config: GibbsConfig { retain_draws: false, ..gibbs.clone() } };
    match method {
        Method::DtMse | Method::DtNll => {
            let plan = RepeatPlan::new(repeats, epsilon, seed)?;
            let score = if method == Method::DtMse { ThinScore::Mse } else { ThinScore::Nll };
            repeated_validate(data, models, &plan, &fitter, score)
        }
        Method::Esim => esim_validate(data, models, esim_iters, &fitter, seed),
        Method::Dic | Method::Waic => Ok(models
            .iter()
            .map(|model| {
                let config = GibbsConfig { retain_draws: true, seed, ..gibbs.clone() };
                let value = crate::gibbs::gibbs_fit(data, &model.design, &config).and_then(|fit| {
                    if method == Method::Dic {
                        dic(&fit, data)
                    } else {
                        waic(&fit, data)
                    }
                    .map(|c| c.value)
                });
                single_score(method, model, value)
            })
            .collect()),
    }
}

pub fn validate_cmd(a: &ValidateArgs) -> Result<()> {
    let data = DirectEstimateSet::read_csv(&a.data)?;
    let models = candidate_models(a, &data)?;
    let gibbs = a.gibbs.config();
    gibbs.validate()?;
    let scores = score_models(&data, &models, a.method, a.epsilon, a.repeats, a.esim_iters, &gibbs, Seed::new(a.seed))?;
    let selected = select_index(&scores).ok();
    let mut per_repeat = String::from("model_id,method,repeat,value\n");
    let mut summary = String::from("model_id,method,score,selected\n");
    for (j, s) in scores.iter().enumerate() {
        match &s.per_repeat {
            Some(values) => {
                for (r, v) in values.iter().enumerate() {
                    let _ = writeln!(per_repeat, "{},{},{r},{v}", s.model_id, s.method);
                }
            }
            None => {
                let _ = writeln!(per_repeat, "{},{},0,{}", s.model_id, s.method, s.value);
            }
        }
        let _ = writeln!(summary, "{},{},{},{}", s.model_id, s.method, s.value, selected == Some(j));
    }
    write_text(&a.out_dir.join("scores.csv"), &per_repeat)?;
    write_text(&a.out_dir.join("summary.csv"), &summary)?;
    if selected.is_none() {
        log::warn!("no model selected: at least one score failed");
    }
    Ok(())
}

fn read_variances(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let d_col = headers
        .iter()
        .position(|h| h == "d")
        .ok_or_else(|| Error::shape(format!("{} has no d column", path.display())))?;
    let id_col = headers.iter().position(|h| h == "area_id");
    let (mut ids, mut d) = (Vec::new(), Vec::new());
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec[d_col].trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: n + 2,
            message: format!("bad variance {:?}", &rec[d_col]),
        })?;
        ids.push(id_col.map(|c| rec[c].to_string()).unwrap_or_else(|| (n + 1).to_string()));
        d.push(v);
    }
    Ok((ids, d))
}

pub fn analytics_cmd(a: &AnalyticsArgs) -> Result<()> {
    let (ids, d) = read_variances(&a.d_file)?;
    let design;
    let mode = match a.mode {
        AnalyticsMode::Known => GapMode::KnownBeta,
        AnalyticsMode::Estimated => {
            let path = a
                .design_file
                .as_ref()
                .ok_or_else(|| Error::usage("--mode estimated needs --design-file"))?;
            design = DesignMatrix::read_csv(path, &ids)?;
            GapMode::EstimatedBeta(&design)
        }
    };
    let curve = tradeoff_curve(a.sigma2, &d, mode, &a.eps_grid.0)?;
    let mut out = String::from("epsilon,gap,gap_sq,variance,sum\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{},{},{}", p.epsilon, p.gap, p.gap_sq, p.variance, p.sum);
    }
    match &a.out {
        Some(path) => write_text(path, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

pub fn basis_cmd(a: &BasisArgs) -> Result<()> {
    let adjacency = match &a.areas {
        Some(path) => load_adjacency(&a.adjacency, DirectEstimateSet::read_csv(path)?.area_ids())?,
        None => load_adjacency_ids(&a.adjacency)?,
    };
    let base = DesignMatrix::intercept(adjacency.m());
    let g = moran_operator(&adjacency, &base)?;
    let design = if a.p == 0 { base } else { augment_design(&base, &crate::spatial::moran_basis(&g, a.p)?)? };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    design.write_csv(&a.out, adjacency.area_ids())
}

/// The population and, for synthetic ones, the adjacency it was generated on.
fn simulate_population(a: &SimulateArgs, seed: Seed) -> Result<(Population, Option<AdjacencyMatrix>)> {
    if let Some(path) = &a.microdata {
        return Ok((Population::read_csv(path)?, None));
    }
    let mut spec = match &a.generator {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<PopulationSpec>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => PopulationSpec::default(),
    };
    if let Some(q) = a.signal_rank {
        spec.signal_rank = q;
    }
    let adjacency = match &a.adjacency {
        Some(path) => load_adjacency_ids(path)?,
        None => AdjacencyMatrix::grid(a.grid_rows, a.grid_cols),
    };
    let pop = generate_population(&adjacency, &spec, seed.child_str("population"))?;
    Ok((pop, Some(adjacency)))
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let design = SamplingDesign { kind: a.design, target: a.target };
    design.validate()?;
    let seed = Seed::new(a.seed);
    let (pop, adjacency) = simulate_population(a, seed)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    if let Some(adj) = adjacency {
        adj.write_edges(a.out_dir.join("adjacency.txt"))?;
    }
    pop.write_csv(a.out_dir.join("population.csv"))?;
    pop.write_truth(a.out_dir.join("truth.csv"))?;
    let width = a.samples.max(1).to_string().len().max(3);
    for s in 0..a.samples {
        let sample = poisson_sample(&pop, &design, seed.child_str("sample").child(s as u64))?;
        if !sample.empty_areas.is_empty() {
            log::warn!("sample {s}: no units drawn in areas {}", sample.empty_areas.join(" "));
        }
        let est = direct_estimates(&sample)?;
        est.write_csv(a.out_dir.join(format!("sample_{:0width$}.csv", s + 1)))?;
    }
    Ok(())
}

pub fn run_cmd(a: &RunArgs) -> Result<()> {
    let config = ExperimentConfig::load(&a.config)?;
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::usage("no output directory: set output_dir or pass --out-dir"))?;
    config.validate()?;
    let (pop, adjacency) = config.build_population()?;
    let results = run_with_population(&config, &pop, &adjacency)?;
    emit_results(&results, &config, &out_dir)?;
    if let Some(v) = config.variance_ratio {
        let summary = variance_ratio_study(&config, &pop, &adjacency, v.folds, v.repeats)?;
        emit_variance_ratio(&summary, &out_dir)?;
    }
    Ok(())
}
