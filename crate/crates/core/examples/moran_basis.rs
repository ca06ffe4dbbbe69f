//! Moran eigenvector basis on a grid of areas: the spectrum of the Moran
//! operator and the candidate design sequence built from its leading vectors.
//!
//! cargo run --example moran_basis

use sae_thin::spatial::{augment_design, candidate_designs, moran_operator, moran_spectrum, AdjacencyMatrix};
use sae_thin::DesignMatrix;

fn main() -> sae_thin::Result<()> {
    let adj = AdjacencyMatrix::grid(8, 8);
    println!("{} areas, {} rook-contiguity edges", adj.m(), adj.edges().len());

    let x = DesignMatrix::intercept(adj.m());
    let g = moran_operator(&adj, &x)?;
    let spectrum = moran_spectrum(&g)?;
    println!("positive eigenvalues: {}", spectrum.positive_count);
    let lead: Vec<String> = spectrum.eigenvalues.iter().take(8).map(|v| format!("{v:.3}")).collect();
    println!("leading eigenvalues: {}", lead.join(" "));

    let basis = spectrum.truncate(3)?;
    println!("\nfirst basis vector on the grid:");
    for r in 0..8 {
        let row: Vec<String> = (0..8).map(|c| format!("{:6.2}", basis.eigenvectors[(r * 8 + c, 0)])).collect();
        println!("{}", row.join(""));
    }
    let design = augment_design(&x, &basis)?;
    println!("\naugmented columns: {:?}", design.columns());

    for (p, des) in [0, 4, 16].iter().zip(candidate_designs(&adj, &[0, 4, 16])?) {
        println!("p = {p:>2}: design is {} x {}", des.m(), des.p());
    }
    Ok(())
}
