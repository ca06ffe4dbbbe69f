//! Closed-form bias/variance tradeoff of the thinned MSE estimate across
//! training fractions, with the per-area and global optimal fractions.
//!
//! cargo run --example thinning_tradeoff

use sae_thin::analytics::{optimal_epsilon_area, optimal_epsilon_global, tradeoff_curve, EpsGrid, GapMode};
use sae_thin::spatial::{candidate_designs, AdjacencyMatrix};

fn main() -> sae_thin::Result<()> {
    let sigma2 = 2.0;
    let adj = AdjacencyMatrix::grid(6, 6);
    let d: Vec<f64> = (0..adj.m()).map(|i| 0.3 + 0.1 * (i % 7) as f64).collect();
    let grid = EpsGrid::new(0.1, 0.9, 0.1)?.0;

    println!("known beta");
    print_curve(&tradeoff_curve(sigma2, &d, GapMode::KnownBeta, &grid)?);

    let x = candidate_designs(&adj, &[6])?.remove(0);
    println!("\nestimated beta, intercept plus 6 spatial basis vectors");
    print_curve(&tradeoff_curve(sigma2, &d, GapMode::EstimatedBeta(&x), &grid)?);

    println!("\nper-area optimum for d = 0.3: {:.3}", optimal_epsilon_area(sigma2, 0.3)?);
    println!("per-area optimum for d = 2.5: {:.3}", optimal_epsilon_area(sigma2, 2.5)?);
    println!("global variance-minimizing fraction: {:.3}", optimal_epsilon_global(sigma2, &d, 0.001)?);
    Ok(())
}

fn print_curve(curve: &[sae_thin::analytics::TradeoffPoint]) {
    println!("{:>5} {:>10} {:>10} {:>10}", "eps", "gap", "variance", "gap^2+var");
    for p in curve {
        println!("{:>5.2} {:>10.4} {:>10.4} {:>10.4}", p.epsilon, p.gap, p.variance, p.sum);
    }
}
