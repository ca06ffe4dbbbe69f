//! Splits one set of direct estimates four ways: single thinning, multi-fold
//! thinning, fission and an ESIM replicate.
//!
//! cargo run --example thinning_walkthrough

use sae_thin::thinning::{esim_replicate, fission, fold_train_test, multifold_thin, thin};
use sae_thin::{DirectEstimateSet, Seed};

fn main() -> sae_thin::Result<()> {
    let data = DirectEstimateSet::new(
        vec!["north".into(), "south".into(), "east".into(), "west".into()],
        vec![12.4, 9.8, 15.1, 11.0],
        vec![1.2, 0.6, 2.5, 0.9],
    )?;
    let seed = Seed::new(2024);

    let split = thin(&data, 0.6, seed.child_str("thin"))?;
    println!("single thinning at epsilon = {}", split.epsilon);
    println!("{:>6} {:>8} {:>8} {:>8} {:>10}", "area", "y", "train", "test", "train/eps");
    for i in 0..data.m() {
        println!(
            "{:>6} {:>8.3} {:>8.3} {:>8.3} {:>10.3}",
            data.area_ids()[i],
            data.y()[i],
            split.y_train[i],
            split.y_test[i],
            split.y_train[i] / split.epsilon
        );
    }
    let train = split.train_set(&data)?;
    println!("training variances d/eps: {:?}\n", train.d());

    let folds = multifold_thin(&data, 5, seed.child_str("folds"))?;
    println!("five folds, each with variance d/5");
    for i in 0..data.m() {
        let parts: Vec<String> = folds.folds.iter().map(|f| format!("{:7.3}", f[i])).collect();
        let sum: f64 = folds.folds.iter().map(|f| f[i]).sum();
        println!("{:>6} [{}] sum {:.3}", data.area_ids()[i], parts.join(" "), sum);
    }
    let pair = fold_train_test(&folds, 0, 1)?;
    println!("holding out fold 1 trains on epsilon = {}\n", pair.epsilon);

    let f = fission(&data, seed.child_str("fission"))?;
    println!("fission: train = y + N(0, d), test = y, conditional test variance {:?}", f.conditional_variance);
    println!("esim replicate z = y + N(0, d): {:?}", esim_replicate(&data, seed.child_str("esim")));
    Ok(())
}
