//! Runs a full design-based selection experiment from a TOML config and
//! prints selection accuracy per design and method.
//!
//! cargo run --release --example model_selection [-- path/to/config.toml]

use std::path::PathBuf;

use sae_thin::experiment::{emit_results, run_experiment, ExperimentConfig};

fn main() -> sae_thin::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/quick.toml"));
    let mut config = ExperimentConfig::load(&path)?;
    config.variance_ratio = None;
    let results = run_experiment(&config)?;

    println!("{:<12} {:<18} {:>6} {:>7} {:>9}", "design", "method", "p*", "rmse", "mean bias");
    for m in &results.metrics {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let p_star = m.p_star.map_or("-".to_string(), |p| p.to_string());
        println!("{:<12} {:<18} {:>6} {:>7} {:>9}", m.design, m.method, p_star, fmt(m.rmse), fmt(m.mean_bias));
    }
    if let Some(dir) = &config.output_dir {
        emit_results(&results, &config, dir)?;
        println!("\nCSV output written to {}", dir.display());
    }
    Ok(())
}
