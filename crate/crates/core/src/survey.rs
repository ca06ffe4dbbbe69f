//! Finite populations, stratified Poisson sampling, and design-based direct
//! estimates (Hájek mean with a Taylor-linearized variance).

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, DirectEstimateSet};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::spatial::{moran_operator, moran_spectrum, AdjacencyMatrix};

/// Variances below this are raised to it so thinning stays well defined.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Unit values and positive base weights grouped by area.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    area_ids: Vec<String>,
    values: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct UnitRow {
    area_id: String,
    value: f64,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    area_id: String,
    theta: f64,
    #[serde(rename = "N")]
    n: usize,
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

impl Population {
    pub fn new(area_ids: Vec<String>, values: Vec<Vec<f64>>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if area_ids.len() != values.len() || values.len() != weights.len() {
            return Err(Error::shape("population areas, values and weights differ in length"));
        }
        for (i, (v, w)) in values.iter().zip(&weights).enumerate() {
            if v.is_empty() || v.len() != w.len() {
                return Err(Error::shape(format!("area {} has no units or mismatched weights", area_ids[i])));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain(format!("area {} has a non-finite value", area_ids[i])));
            }
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::domain(format!("area {} has a non-positive weight", area_ids[i])));
            }
        }
        let theta = values.iter().zip(&weights).map(|(v, w)| weighted_mean(v, w)).collect();
        Ok(Self { area_ids, values, weights, theta })
    }

    pub fn m(&self) -> usize {
        self.area_ids.len()
    }

    pub fn area_ids(&self) -> &[String] {
        &self.area_ids
    }

    pub fn values(&self, area: usize) -> &[f64] {
        &self.values[area]
    }

    pub fn weights(&self, area: usize) -> &[f64] {
        &self.weights[area]
    }

    /// Unit counts `N_i`.
    pub fn sizes(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    /// Weighted area means `θ_i = Σ w v / Σ w`.
    pub fn true_means(&self) -> &[f64] {
        &self.theta
    }

    /// Reads microdata `area_id,value,weight`; areas keep first-appearance order.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["area_id", "value", "weight"] {
            return Err(Error::shape(format!(
                "expected header area_id,value,weight, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        let (mut ids, mut values, mut weights) = (Vec::new(), Vec::<Vec<f64>>::new(), Vec::<Vec<f64>>::new());
        for row in rdr.deserialize() {
            let row: UnitRow = row?;
            let k = *index.entry(row.area_id.clone()).or_insert_with(|| {
                ids.push(row.area_id.clone());
                values.push(Vec::new());
                weights.push(Vec::new());
                ids.len() - 1
            });
            values[k].push(row.value);
            weights[k].push(row.weight);
        }
        Self::new(ids, values, weights)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(file);
        for (i, id) in self.area_ids.iter().enumerate() {
            for (v, w) in self.values[i].iter().zip(&self.weights[i]) {
                wtr.serialize(UnitRow { area_id: id.clone(), value: *v, weight: *w })?;
            }
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `area_id,theta,N`.
    pub fn write_truth(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(file);
        for (i, id) in self.area_ids.iter().enumerate() {
            wtr.serialize(TruthRow { area_id: id.clone(), theta: self.theta[i], n: self.values[i].len() })?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

/// Settings for the synthetic population generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub units_min: usize,
    pub units_max: usize,
    pub intercept: f64,
    /// Number of leading Moran basis columns carrying the signal.
    pub signal_rank: usize,
    /// Standard deviation of the spatial signal across areas.
    pub signal_amplitude: f64,
    /// Standard deviation of iid area effects added to the signal.
    pub area_noise_sd: f64,
    pub unit_noise_sd: f64,
    /// Log-scale standard deviation of the lognormal base weights.
    pub weight_log_sd: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            units_min: 400,
            units_max: 800,
            intercept: 10.0,
            signal_rank: 12,
            signal_amplitude: 1.0,
            area_noise_sd: 0.3,
            unit_noise_sd: 4.0,
            weight_log_sd: 0.3,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.units_min < 2 || self.units_max < self.units_min {
            return Err(Error::usage("units per area must satisfy 2 <= units_min <= units_max"));
        }
        for (name, v) in [
            ("signal_amplitude", self.signal_amplitude),
            ("area_noise_sd", self.area_noise_sd),
            ("unit_noise_sd", self.unit_noise_sd),
            ("weight_log_sd", self.weight_log_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::usage(format!("{name} must be finite and non-negative")));
            }
        }
        if !self.intercept.is_finite() {
            return Err(Error::usage("intercept must be finite"));
        }
        Ok(())
    }
}

/// Area-level mean surface used by [`generate_population`]: the intercept,
/// a spatial signal in the leading `signal_rank` Moran basis columns, and iid
/// area noise.
pub fn area_mean_surface(adjacency: &AdjacencyMatrix, spec: &PopulationSpec, seed: Seed) -> Result<Vec<f64>> {
    let m = adjacency.m();
    let mut mu = vec![spec.intercept; m];
    if spec.signal_rank > 0 && spec.signal_amplitude > 0.0 {
        let g = moran_operator(adjacency, &DesignMatrix::intercept(m))?;
        let basis = moran_spectrum(&g)?.truncate(spec.signal_rank)?;
        let scale = spec.signal_amplitude * (m as f64 / spec.signal_rank as f64).sqrt();
        let mut rng = seed.child_str("signal").rng();
        for k in 0..spec.signal_rank {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let coef = sign * scale;
            for (i, v) in mu.iter_mut().enumerate() {
                *v += coef * basis.eigenvectors[(i, k)];
            }
        }
    }
    if spec.area_noise_sd > 0.0 {
        let noise = Normal::new(0.0, spec.area_noise_sd).map_err(|e| Error::usage(e.to_string()))?;
        for (i, v) in mu.iter_mut().enumerate() {
            *v += noise.sample(&mut seed.child_str("area-noise").child(i as u64).rng());
        }
    }
    Ok(mu)
}

/// Synthetic population over the areas of `adjacency`. Unit values are the
/// area mean plus Gaussian unit noise; weights are lognormal.
pub fn generate_population(adjacency: &AdjacencyMatrix, spec: &PopulationSpec, seed: Seed) -> Result<Population> {
    spec.validate()?;
    let m = adjacency.m();
    if m < 2 {
        return Err(Error::usage("population needs at least two areas"));
    }
    let mu = area_mean_surface(adjacency, spec, seed)?;
    let mut values = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (i, &mean) in mu.iter().enumerate() {
        let mut rng = seed.child_str("units").child(i as u64).rng();
        let n = rng.gen_range(spec.units_min..=spec.units_max);
        let mut v = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let lw: f64 = rng.sample(StandardNormal);
            v.push(mean + spec.unit_noise_sd * z);
            w.push((spec.weight_log_sd * lw).exp());
        }
        values.push(v);
        weights.push(w);
    }
    Population::new(adjacency.area_ids().to_vec(), values, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    /// Expected sample size `target` in every area.
    #[serde(rename = "equal")]
    EqualAllocation,
    /// Expected sample size `target · N_i` (target is an overall rate).
    #[serde(rename = "prop", alias = "proportional")]
    ProportionalAllocation,
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(DesignKind::EqualAllocation),
            "prop" | "proportional" => Ok(DesignKind::ProportionalAllocation),
            other => Err(Error::usage(format!("unknown design kind {other}; expected equal or prop"))),
        }
    }
}

/// Stratified Poisson design with inclusion probabilities proportional to
/// the base weights within each area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDesign {
    pub kind: DesignKind,
    pub target: f64,
}

impl SamplingDesign {
    pub fn equal(n: f64) -> Self {
        Self { kind: DesignKind::EqualAllocation, target: n }
    }

    pub fn proportional(rate: f64) -> Self {
        Self { kind: DesignKind::ProportionalAllocation, target: rate }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            DesignKind::EqualAllocation => self.target > 0.0 && self.target.is_finite(),
            DesignKind::ProportionalAllocation => self.target > 0.0 && self.target <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::usage(format!("invalid target {} for {:?}", self.target, self.kind)))
        }
    }

    /// Inclusion probabilities for one area and the count clamped at 1.
    pub fn inclusion_probabilities(&self, weights: &[f64]) -> (Vec<f64>, usize) {
        let total: f64 = weights.iter().sum();
        let expected = match self.kind {
            DesignKind::EqualAllocation => self.target,
            DesignKind::ProportionalAllocation => self.target * weights.len() as f64,
        };
        let mut clamped = 0;
        let pi = weights
            .iter()
            .map(|w| {
                let p = expected * w / total;
                if p >= 1.0 {
                    clamped += 1;
                    1.0
                } else {
                    p
                }
            })
            .collect();
        (pi, clamped)
    }
}

/// One sampled unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledUnit {
    pub value: f64,
    pub weight: f64,
    pub pi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub area_ids: Vec<String>,
    pub units: Vec<Vec<SampledUnit>>,
    /// Units whose inclusion probability was clamped at 1.
    pub clamped: usize,
    /// Areas with no sampled unit.
    pub empty_areas: Vec<String>,
}

impl Sample {
    /// Realized per-area sample sizes `n_i`.
    pub fn sizes(&self) -> Vec<usize> {
        self.units.iter().map(Vec::len).collect()
    }
}

/// Independent Bernoulli inclusion of every unit; area `i` draws from
/// `seed.child(i)`.
pub fn poisson_sample(pop: &Population, design: &SamplingDesign, seed: Seed) -> Result<Sample> {
    design.validate()?;
    let mut units = Vec::with_capacity(pop.m());
    let mut clamped = 0;
    let mut empty_areas = Vec::new();
    for i in 0..pop.m() {
        let (pi, c) = design.inclusion_probabilities(pop.weights(i));
        clamped += c;
        let mut rng = seed.child(i as u64).rng();
        let picked: Vec<SampledUnit> = pop
            .values(i)
            .iter()
            .zip(pop.weights(i))
            .zip(&pi)
            .filter_map(|((&value, &weight), &p)| {
                let u: f64 = rng.gen();
                (u < p).then_some(SampledUnit { value, weight, pi: p })
            })
            .collect();
        if picked.is_empty() {
            empty_areas.push(pop.area_ids()[i].clone());
        }
        units.push(picked);
    }
    if clamped > 0 {
        log::warn!("{clamped} inclusion probabilities clamped at 1");
    }
    Ok(Sample { area_ids: pop.area_ids().to_vec(), units, clamped, empty_areas })
}

/// Hájek estimate and linearized variance for one area.
///
/// With `a = w/π`: `ŷ = Σ a v / Σ a` and `d = Σ (1−π) a² (v − ŷ)² / (Σ a)²`.
/// Unit base weights reduce this to the usual inverse-probability form.
pub fn hajek(units: &[SampledUnit]) -> (f64, f64) {
    let n_hat: f64 = units.iter().map(|u| u.weight / u.pi).sum();
    let mean = units.iter().map(|u| u.weight / u.pi * u.value).sum::<f64>() / n_hat;
    let var = units
        .iter()
        .map(|u| {
            let a = u.weight / u.pi;
            (1.0 - u.pi) * a * a * (u.value - mean).powi(2)
        })
        .sum::<f64>()
        / (n_hat * n_hat);
    (mean, var)
}

/// Direct estimates for every area; variances below [`VARIANCE_FLOOR`] are
/// raised to it with a warning.
pub fn direct_estimates(sample: &Sample) -> Result<DirectEstimateSet> {
    let short: Vec<String> = sample
        .units
        .iter()
        .zip(&sample.area_ids)
        .filter(|(u, _)| u.len() < 2)
        .map(|(_, id)| id.clone())
        .collect();
    if !short.is_empty() {
        return Err(Error::InsufficientSample { areas: short });
    }
    let mut y = Vec::with_capacity(sample.units.len());
    let mut d = Vec::with_capacity(sample.units.len());
    for (units, id) in sample.units.iter().zip(&sample.area_ids) {
        let (mean, var) = hajek(units);
        if var < VARIANCE_FLOOR {
            log::warn!("area {id}: variance {var:e} floored at {VARIANCE_FLOOR:e}");
        }
        y.push(mean);
        d.push(var.max(VARIANCE_FLOOR));
    }
    DirectEstimateSet::new(sample.area_ids.clone(), y, d)
}

/// Finite-population truth.
pub fn true_means(pop: &Population) -> &[f64] {
    pop.true_means()
}
