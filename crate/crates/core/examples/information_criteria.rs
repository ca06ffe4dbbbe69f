//! Fits candidate models by Gibbs sampling and compares them with DIC and WAIC.
//!
//! cargo run --release --example information_criteria

use sae_thin::spatial::{candidate_designs, AdjacencyMatrix};
use sae_thin::survey::{direct_estimates, generate_population, poisson_sample, PopulationSpec, SamplingDesign};
use sae_thin::validation::{dic, waic};
use sae_thin::{gibbs_fit, GibbsConfig, Seed};

fn main() -> sae_thin::Result<()> {
    let adj = AdjacencyMatrix::grid(8, 8);
    let pop = generate_population(&adj, &PopulationSpec { signal_rank: 6, ..Default::default() }, Seed::new(5))?;
    let data = direct_estimates(&poisson_sample(&pop, &SamplingDesign::equal(40.0), Seed::new(6))?)?;

    let p_grid = [0, 3, 6, 9, 12];
    let config = GibbsConfig { iterations: 3000, burn_in: 500, seed: Seed::new(7), ..Default::default() };
    println!("{:>3} {:>10} {:>7} {:>10} {:>7} {:>8}", "p", "DIC", "p_D", "WAIC", "p_waic", "sigma2");
    for (p, x) in p_grid.iter().zip(candidate_designs(&adj, &p_grid)?) {
        let fit = gibbs_fit(&data, &x, &config)?;
        let (d, w) = (dic(&fit, &data)?, waic(&fit, &data)?);
        println!("{p:>3} {:>10.3} {:>7.2} {:>10.3} {:>7.2} {:>8.3}", d.value, d.penalty, w.value, w.penalty, fit.sigma2);
    }
    Ok(())
}
