use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsConfig;
use crate::spatial::{load_adjacency, load_adjacency_ids, AdjacencyMatrix};
use crate::survey::{generate_population, DesignKind, Population, PopulationSpec, SamplingDesign};
use crate::rng::Seed;
use crate::validation::Method;

/// Full description of a selection experiment, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Where `run` writes its CSVs; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Samples `S` drawn per design.
    pub samples: usize,
    /// Moran basis counts `p` (the intercept is always included).
    pub p_grid: Vec<usize>,
    pub population: PopulationConfig,
    pub designs: Vec<DesignEntry>,
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<VarianceRatioSettings>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationKind {
    Synthetic,
    Microdata,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub kind: PopulationKind,
    /// Rook lattice dimensions for a synthetic population without an adjacency file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_cols: Option<usize>,
    /// Edge-list adjacency; required for microdata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<PathBuf>,
    /// `area_id,value,weight` CSV for microdata populations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microdata: Option<PathBuf>,
    #[serde(default)]
    pub generator: PopulationSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: DesignKind,
    /// Expected per-area sample size (equal) or sampling rate (prop).
    pub target: f64,
}

impl DesignEntry {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| match self.kind {
            DesignKind::EqualAllocation => format!("equal-n{}", self.target),
            DesignKind::ProportionalAllocation => format!("prop-r{}", self.target),
        })
    }

    pub fn design(&self) -> SamplingDesign {
        SamplingDesign { kind: self.kind, target: self.target }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub kind: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Training fraction for thinning methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Thinning repeats `R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    /// ESIM replicates `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    /// Overrides the experiment-wide sampler settings for this method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsConfig>,
}

impl MethodEntry {
    pub fn new(kind: Method) -> Self {
        Self { kind, name: None, epsilon: None, repeats: None, iterations: None, gibbs: None }
    }

    pub fn thinning(kind: Method, epsilon: f64, repeats: usize) -> Self {
        Self { epsilon: Some(epsilon), repeats: Some(repeats), ..Self::new(kind) }
    }

    pub fn esim(iterations: usize) -> Self {
        Self { iterations: Some(iterations), ..Self::new(Method::Esim) }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match self.kind {
            Method::DtMse | Method::DtNll => format!(
                "{}-e{:.2}-r{}",
                self.kind,
                self.epsilon.unwrap_or(f64::NAN),
                self.repeats.unwrap_or(0)
            ),
            Method::Esim => format!("esim-l{}", self.iterations.unwrap_or(0)),
            Method::Dic | Method::Waic => self.kind.to_string(),
        }
    }

    fn validate(&self) -> Result<()> {
        let label = self.label();
        match self.kind {
            Method::DtMse | Method::DtNll => {
                let eps = self.epsilon.ok_or_else(|| Error::Config(format!("{label}: epsilon required")))?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::Config(format!("{label}: epsilon must lie in (0, 1)")));
                }
                if self.repeats.unwrap_or(0) == 0 {
                    return Err(Error::Config(format!("{label}: repeats must be at least 1")));
                }
            }
            Method::Esim => {
                if self.iterations.unwrap_or(0) == 0 {
                    return Err(Error::Config(format!("{label}: iterations must be at least 1")));
                }
            }
            Method::Dic | Method::Waic => {}
        }
        if let Some(g) = &self.gibbs {
            g.validate()?;
        }
        Ok(())
    }
}

/// Multi-fold versus repeated thinning comparison run alongside `run`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceRatioSettings {
    pub folds: usize,
    pub repeats: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut cfg.output_dir);
        resolve(&mut cfg.population.adjacency);
        resolve(&mut cfg.population.microdata);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn design_labels(&self) -> Vec<String> {
        self.designs.iter().map(DesignEntry::label).collect()
    }

    pub fn method_labels(&self) -> Vec<String> {
        self.methods.iter().map(MethodEntry::label).collect()
    }

    /// Checks everything that does not need the population.
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.p_grid.is_empty() {
            return Err(Error::Config("p_grid must not be empty".into()));
        }
        if self.p_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("p_grid must be strictly increasing".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::Config("at least one design is required".into()));
        }
        for d in &self.designs {
            d.design().validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        unique(&self.design_labels(), "design")?;
        unique(&self.method_labels(), "method")?;
        for m in &self.methods {
            m.validate()?;
        }
        self.gibbs.validate()?;
        self.population.generator.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(v) = &self.variance_ratio {
            if v.folds < 2 || v.repeats == 0 {
                return Err(Error::Config("variance_ratio needs folds >= 2 and repeats >= 1".into()));
            }
        }
        Ok(())
    }

    /// Loads or generates the population and its adjacency.
    pub fn build_population(&self) -> Result<(Population, AdjacencyMatrix)> {
        let pc = &self.population;
        match pc.kind {
            PopulationKind::Synthetic => {
                let adjacency = match (&pc.adjacency, pc.grid_rows, pc.grid_cols) {
                    (Some(path), None, None) => load_adjacency_ids(path)?,
                    (None, Some(r), Some(c)) => AdjacencyMatrix::grid(r, c),
                    _ => {
                        return Err(Error::Config(
                            "synthetic population needs either adjacency or grid_rows and grid_cols".into(),
                        ))
                    }
                };
                let pop = generate_population(&adjacency, &pc.generator, Seed::new(self.seed).child_str("population"))?;
                Ok((pop, adjacency))
            }
            PopulationKind::Microdata => {
                let (Some(micro), Some(adj)) = (&pc.microdata, &pc.adjacency) else {
                    return Err(Error::Config("microdata population needs microdata and adjacency paths".into()));
                };
                let pop = Population::read_csv(micro)?;
                let adjacency = load_adjacency(adj, pop.area_ids())?;
                Ok((pop, adjacency))
            }
        }
    }
}

fn unique(labels: &[String], what: &str) -> Result<()> {
    let mut sorted = labels.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate {what} label {}", w[0])));
    }
    Ok(())
}
