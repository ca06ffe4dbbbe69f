//! Compares nested Fay-Herriot models with repeated data thinning, scoring
//! each model by the unbiased MSE estimate and by test-set log likelihood.
//!
//! cargo run --release --example mse_validation

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sae_thin::thinning::RepeatPlan;
use sae_thin::validation::{repeated_validate, select_model, CandidateModel, ThinScore};
use sae_thin::{DesignMatrix, DirectEstimateSet, GibbsConfig, GibbsFitter, Seed};

fn main() -> sae_thin::Result<()> {
    let m = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let std = Normal::new(0.0, 1.0).unwrap();

    // Truth depends on the first two of four covariates.
    let x = DMatrix::from_fn(m, 5, |_, j| if j == 0 { 1.0 } else { std.sample(&mut rng) });
    let d: Vec<f64> = (0..m).map(|i| 0.4 + 0.05 * (i % 10) as f64).collect();
    let y: Vec<f64> = (0..m)
        .map(|i| {
            let theta = 5.0 + 1.5 * x[(i, 1)] - 1.0 * x[(i, 2)] + 0.7 * std.sample(&mut rng);
            theta + d[i].sqrt() * std.sample(&mut rng)
        })
        .collect();
    let data = DirectEstimateSet::from_values(y, d)?;

    let models: Vec<CandidateModel> = (1..=5)
        .map(|p| CandidateModel::new(format!("p{}", p - 1), DesignMatrix::from_matrix(x.columns(0, p).into_owned())))
        .collect();
    let fitter = GibbsFitter { config: GibbsConfig { iterations: 2000, burn_in: 500, retain_draws: false, ..Default::default() } };
    let plan = RepeatPlan::new(5, 0.6, Seed::new(11))?;

    for score in [ThinScore::Mse, ThinScore::Nll] {
        let scores = repeated_validate(&data, &models, &plan, &fitter, score)?;
        println!("{score:?} scores (epsilon 0.6, R = 5)");
        for s in &scores {
            println!("  {:<3} {:>10.4}", s.model_id, s.value);
        }
        println!("  selected: {}\n", select_model(&scores)?);
    }
    Ok(())
}
