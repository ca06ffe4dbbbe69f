//! Compares the sampling variance of K-fold and R-repeat averaged MSE
//! estimates across simulated survey samples.
//!
//! cargo run --release --example variance_ratio

use sae_thin::experiment::{variance_ratio_study, DesignEntry, ExperimentConfig, PopulationConfig, PopulationKind};
use sae_thin::survey::{DesignKind, PopulationSpec};
use sae_thin::GibbsConfig;

fn main() -> sae_thin::Result<()> {
    let config = ExperimentConfig {
        seed: 12,
        output_dir: None,
        samples: 10,
        p_grid: vec![2, 6],
        population: PopulationConfig {
            kind: PopulationKind::Synthetic,
            grid_rows: Some(6),
            grid_cols: Some(6),
            adjacency: None,
            microdata: None,
            generator: PopulationSpec { signal_rank: 6, ..Default::default() },
        },
        designs: vec![
            DesignEntry { name: None, kind: DesignKind::EqualAllocation, target: 40.0 },
            DesignEntry { name: None, kind: DesignKind::EqualAllocation, target: 80.0 },
        ],
        methods: Vec::new(),
        gibbs: GibbsConfig { iterations: 1000, burn_in: 250, ..Default::default() },
        variance_ratio: None,
    };
    let (pop, adj) = config.build_population()?;
    let summary = variance_ratio_study(&config, &pop, &adj, 5, 5)?;

    println!("{:<10} {:>3} {:>12} {:>12} {:>7}", "design", "p", "var K-fold", "var repeat", "ratio");
    for r in &summary.records {
        println!("{:<10} {:>3} {:>12.5} {:>12.5} {:>7.3}", r.design, r.p, r.var_multifold, r.var_repeated, r.ratio);
    }
    for (design, ratio) in &summary.design_ratio {
        println!("{design}: mean ratio {ratio:.3}");
    }
    Ok(())
}
