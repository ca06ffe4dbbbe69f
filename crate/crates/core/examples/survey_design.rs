//! Generates a synthetic finite population, draws Poisson samples under equal
//! and proportional allocation, and forms Hajek direct estimates.
//!
//! cargo run --example survey_design

use sae_thin::spatial::AdjacencyMatrix;
use sae_thin::survey::{direct_estimates, generate_population, poisson_sample, PopulationSpec, SamplingDesign};
use sae_thin::Seed;

fn main() -> sae_thin::Result<()> {
    let adj = AdjacencyMatrix::grid(5, 5);
    let spec = PopulationSpec { signal_rank: 4, ..Default::default() };
    let pop = generate_population(&adj, &spec, Seed::new(3))?;
    let truth = pop.true_means();

    for (name, design) in [("equal n = 40", SamplingDesign::equal(40.0)), ("proportional 8%", SamplingDesign::proportional(0.08))] {
        let sample = poisson_sample(&pop, &design, Seed::new(4).child_str(name))?;
        let est = direct_estimates(&sample)?;
        println!("{name}: {} units sampled, {} inclusion probabilities clamped at 1", sample.sizes().iter().sum::<usize>(), sample.clamped);
        println!("{:>5} {:>6} {:>5} {:>8} {:>8} {:>7}", "area", "N", "n", "theta", "y", "d");
        for i in 0..5 {
            println!(
                "{:>5} {:>6} {:>5} {:>8.3} {:>8.3} {:>7.3}",
                est.area_ids()[i],
                pop.sizes()[i],
                sample.sizes()[i],
                truth[i],
                est.y()[i],
                est.d()[i]
            );
        }
        println!();
    }
    Ok(())
}
