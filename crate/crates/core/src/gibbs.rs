//! Gibbs sampler for the Fay–Herriot model with a flat prior on β and an
//! inverse-gamma prior on σ².
//!
//! Full conditionals:
//!
//! * `θ_i | · ~ N(γ_i y_i + (1 − γ_i) x_iᵀβ, γ_i d_i)`
//! * `β | · ~ N((XᵀX)⁻¹Xᵀθ, σ²(XᵀX)⁻¹)`
//! * `σ² | · ~ IG(a + m/2, b + ½ Σ (θ_i − x_iᵀβ)²)`

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::data::{DesignMatrix, DirectEstimateSet};
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, spd_factor};
use crate::model::{wls_beta, FayHerriotFit, FitKind};
use crate::rng::Seed;

/// Lower bound applied to every σ² draw.
pub const SIGMA2_FLOOR: f64 = 1e-12;

const MIN_RETAINED: usize = 100;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin_interval: usize,
    /// Inverse-gamma shape.
    pub prior_a: f64,
    /// Inverse-gamma scale.
    pub prior_b: f64,
    #[serde(skip)]
    pub seed: Seed,
    /// Keep the per-draw chain; needed for DIC/WAIC and draw export.
    pub retain_draws: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 1000,
            thin_interval: 1,
            prior_a: 0.001,
            prior_b: 0.001,
            seed: Seed::new(0),
            retain_draws: true,
        }
    }
}

impl Default for Seed {
    fn default() -> Self {
        Seed::new(0)
    }
}

impl GibbsConfig {
    pub fn retained_count(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin_interval.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin_interval == 0 {
            return Err(Error::Config("iterations and thin_interval must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if !(self.prior_a > 0.0 && self.prior_b > 0.0) {
            return Err(Error::Config("inverse-gamma prior parameters must be positive".into()));
        }
        if self.retained_count() < MIN_RETAINED {
            return Err(Error::Config(format!(
                "only {} retained draws; at least {MIN_RETAINED} required",
                self.retained_count()
            )));
        }
        Ok(())
    }
}

/// Retained posterior draws, stored draw-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    m: usize,
    p: usize,
    theta: Vec<f64>,
    beta: Vec<f64>,
    sigma2: Vec<f64>,
}

impl PosteriorDraws {
    fn with_capacity(m: usize, p: usize, n: usize) -> Self {
        Self {
            m,
            p,
            theta: Vec::with_capacity(n * m),
            beta: Vec::with_capacity(n * p),
            sigma2: Vec::with_capacity(n),
        }
    }

    /// Builds a draw set from θ draws only (β empty, σ² NaN).
    pub fn from_theta(theta: Vec<Vec<f64>>) -> Result<Self> {
        let m = theta.first().map_or(0, Vec::len);
        if theta.is_empty() || theta.iter().any(|t| t.len() != m) || m == 0 {
            return Err(Error::shape("theta draws must be non-empty and of equal length"));
        }
        let n = theta.len();
        Ok(Self {
            m,
            p: 0,
            theta: theta.into_iter().flatten().collect(),
            beta: Vec::new(),
            sigma2: vec![f64::NAN; n],
        })
    }

    fn push(&mut self, theta: &[f64], beta: &DVector<f64>, sigma2: f64) {
        self.theta.extend_from_slice(theta);
        self.beta.extend(beta.iter());
        self.sigma2.push(sigma2);
    }

    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn theta(&self, s: usize) -> &[f64] {
        &self.theta[s * self.m..(s + 1) * self.m]
    }

    pub fn beta(&self, s: usize) -> &[f64] {
        &self.beta[s * self.p..(s + 1) * self.p]
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    /// Writes `draw,param,index,value` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(file)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["draw", "param", "index", "value"])?;
        for s in 0..self.len() {
            let draw = s.to_string();
            for (j, v) in self.beta(s).iter().enumerate() {
                wtr.write_record([draw.as_str(), "beta", &j.to_string(), &v.to_string()])?;
            }
            wtr.write_record([draw.as_str(), "sigma2", "0", &self.sigma2[s].to_string()])?;
            for (i, v) in self.theta(s).iter().enumerate() {
                wtr.write_record([draw.as_str(), "theta", &i.to_string(), &v.to_string()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn initial_sigma2(data: &DirectEstimateSet) -> f64 {
    let m = data.m() as f64;
    let mean_y = data.y().iter().sum::<f64>() / m;
    let var_y = if data.m() > 1 {
        data.y().iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let mean_d = data.d().iter().sum::<f64>() / m;
    (var_y - mean_d).max(0.01 * mean_d)
}

pub fn gibbs_fit(data: &DirectEstimateSet, x: &DesignMatrix, config: &GibbsConfig) -> Result<FayHerriotFit> {
    config.validate()?;
    let (m, p) = (data.m(), x.p());
    if x.m() != m {
        return Err(Error::shape("design rows differ from area count"));
    }
    if m <= p {
        return Err(Error::Underdetermined { areas: m, columns: p });
    }
    check_full_rank(x.matrix())?;

    let xm = x.matrix();
    let xtx = xm.transpose() * xm;
    let chol = spd_factor(xtx)?;
    // (XᵀX)⁻¹Xᵀ, so the β conditional mean is a single product.
    let hat = chol.solve(&xm.transpose());
    let l_upper = chol.l().transpose();

    let y = data.y();
    let d = data.d();
    let mut sigma2 = initial_sigma2(data);
    let mut beta = wls_beta(y, d, x, sigma2)?;
    let mut theta = DVector::<f64>::zeros(m);
    let mut fitted = xm * &beta;

    let shape = config.prior_a + m as f64 / 2.0;
    let mut rng = config.seed.rng();
    let n_keep = config.retained_count();
    let mut draws = config
        .retain_draws
        .then(|| PosteriorDraws::with_capacity(m, p, n_keep));
    let mut theta_sum = DVector::<f64>::zeros(m);
    let mut beta_sum = DVector::<f64>::zeros(p);
    let mut sigma2_sum = 0.0;
    let mut kept = 0usize;
    let mut z = DVector::<f64>::zeros(p);

    for t in 0..config.iterations {
        for i in 0..m {
            let g = sigma2 / (sigma2 + d[i]);
            let mean = g * y[i] + (1.0 - g) * fitted[i];
            let e: f64 = rng.sample(StandardNormal);
            theta[i] = mean + (g * d[i]).sqrt() * e;
        }

        let mean_beta = &hat * &theta;
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        // Lᵀ w = z gives w ~ N(0, (XᵀX)⁻¹).
        let w = l_upper
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::NumericalFailure { iteration: t, what: "triangular solve".into() })?;
        beta = mean_beta + w * sigma2.sqrt();
        fitted = xm * &beta;

        let ss: f64 = theta.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        let rate = config.prior_b + 0.5 * ss;
        let gamma = Gamma::new(shape, 1.0 / rate)
            .map_err(|e| Error::NumericalFailure { iteration: t, what: e.to_string() })?;
        sigma2 = (1.0 / gamma.sample(&mut rng)).max(SIGMA2_FLOOR);

        if !sigma2.is_finite() || beta.iter().any(|v| !v.is_finite()) || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure { iteration: t, what: "non-finite draw".into() });
        }

        if t >= config.burn_in && (t - config.burn_in + 1) % config.thin_interval == 0 {
            theta_sum += &theta;
            beta_sum += &beta;
            sigma2_sum += sigma2;
            kept += 1;
            if let Some(dr) = draws.as_mut() {
                dr.push(theta.as_slice(), &beta, sigma2);
            }
        }
    }
    debug_assert_eq!(kept, n_keep);

    let k = kept as f64;
    let sigma2_mean = sigma2_sum / k;
    let gamma = DVector::from_iterator(m, d.iter().map(|di| sigma2_mean / (sigma2_mean + di)));
    Ok(FayHerriotFit {
        beta: beta_sum / k,
        sigma2: sigma2_mean,
        gamma,
        theta_hat: theta_sum / k,
        draws,
        kind: FitKind::Gibbs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (DirectEstimateSet, DesignMatrix) {
        let y = vec![1.0, 2.0, 0.5, 1.5, 3.0, 2.2];
        let d = vec![0.3; 6];
        (DirectEstimateSet::from_values(y, d).unwrap(), DesignMatrix::intercept(6))
    }

    fn short() -> GibbsConfig {
        GibbsConfig { iterations: 600, burn_in: 100, ..GibbsConfig::default() }
    }

    #[test]
    fn config_checks() {
        assert!(GibbsConfig::default().validate().is_ok());
        assert_eq!(GibbsConfig::default().retained_count(), 4000);
        let bad = GibbsConfig { burn_in: 5000, ..GibbsConfig::default() };
        assert!(bad.validate().is_err());
        let few = GibbsConfig { iterations: 150, burn_in: 100, ..GibbsConfig::default() };
        assert!(few.validate().is_err());
        let thinned = GibbsConfig { iterations: 1250, burn_in: 250, thin_interval: 3, ..GibbsConfig::default() };
        assert_eq!(thinned.retained_count(), 333);
    }

    #[test]
    fn reproducible_and_positive() {
        let (data, x) = toy();
        let a = gibbs_fit(&data, &x, &short()).unwrap();
        let b = gibbs_fit(&data, &x, &short()).unwrap();
        assert_eq!(a.draws, b.draws);
        let draws = a.draws.unwrap();
        assert_eq!(draws.len(), 500);
        assert!(draws.sigma2().iter().all(|s| *s > 0.0));
        assert!((0..draws.len()).all(|s| draws.beta(s).iter().all(|v| v.is_finite())));
    }

    #[test]
    fn underdetermined() {
        let data = DirectEstimateSet::from_values(vec![1.0], vec![1.0]).unwrap();
        assert!(matches!(
            gibbs_fit(&data, &DesignMatrix::intercept(1), &short()),
            Err(Error::Underdetermined { areas: 1, columns: 1 })
        ));
    }

    #[test]
    fn draws_csv_layout() {
        let (data, x) = toy();
        let fit = gibbs_fit(&data, &x, &short()).unwrap();
        let mut buf = Vec::new();
        fit.draws.unwrap().to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("draw,param,index,value"));
        assert!(lines.next().unwrap().starts_with("0,beta,0,"));
        // 1 beta + 1 sigma2 + 6 theta rows per draw
        assert_eq!(text.lines().count(), 1 + 500 * 8);
    }
}
