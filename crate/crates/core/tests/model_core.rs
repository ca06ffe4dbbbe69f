mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sae_thin::{
    blup, gibbs_fit, shrinkage_factor, wls_beta, DesignMatrix, DirectEstimateSet, Error, FitKind, GibbsConfig, Seed,
};

#[test]
fn shrinkage_examples() {
    assert_eq!(shrinkage_factor(1.0, 1.0, 1.0).unwrap(), 0.5);
    assert!((shrinkage_factor(1.0, 1.0, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(shrinkage_factor(1.0, 1.0, 1e-12).unwrap() < 1e-11);
    assert!(shrinkage_factor(1.0, 1.0, 0.0).is_err());
    assert!(shrinkage_factor(1.0, 1.0, 1.5).is_err());
    assert!(shrinkage_factor(0.0, 1.0, 0.5).is_err());
    assert!(shrinkage_factor(1.0, -1.0, 0.5).is_err());
}

#[test]
fn wls_examples() {
    let x = DesignMatrix::intercept(2);
    let b = wls_beta(&[0.0, 2.0], &[1.0, 1.0], &x, 1.0).unwrap();
    assert!((b[0] - 1.0).abs() < 1e-14);
    let b = wls_beta(&[3.7], &[0.4], &DesignMatrix::intercept(1), 1.0).unwrap();
    assert!((b[0] - 3.7).abs() < 1e-14);
}

#[test]
fn wls_matches_normal_equations() {
    let mut r = rng(21);
    let x = random_design(&mut r, 6, 2);
    let y: Vec<f64> = (0..6).map(|_| normal(&mut r)).collect();
    let d: Vec<f64> = (0..6).map(|_| 0.2 + r.gen_range_f64()).collect();
    let sigma2 = 0.7;
    let mut a = vec![vec![0.0; 2]; 2];
    let mut rhs = vec![0.0; 2];
    for i in 0..6 {
        let w = 1.0 / (sigma2 + d[i]);
        for j in 0..2 {
            rhs[j] += w * x[(i, j)] * y[i];
            for k in 0..2 {
                a[j][k] += w * x[(i, j)] * x[(i, k)];
            }
        }
    }
    let expect = gauss_solve(&a, &rhs);
    let got = wls_beta(&y, &d, &DesignMatrix::from_matrix(x), sigma2).unwrap();
    for j in 0..2 {
        assert!((got[j] - expect[j]).abs() <= 1e-10 * expect[j].abs().max(1.0));
    }
}

trait UnitF64 {
    fn gen_range_f64(&mut self) -> f64;
}

impl<R: rand::Rng> UnitF64 for R {
    fn gen_range_f64(&mut self) -> f64 {
        self.gen::<f64>()
    }
}

#[test]
fn wls_errors() {
    let x = DesignMatrix::from_matrix(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]));
    assert!(matches!(wls_beta(&[1.0, 2.0, 3.0], &[1.0; 3], &x, 1.0), Err(Error::SingularDesign { .. })));
    assert!(matches!(
        wls_beta(&[1.0, 2.0], &[1.0; 3], &DesignMatrix::intercept(3), 1.0),
        Err(Error::Shape(_))
    ));
}

#[test]
fn blup_limits() {
    let x = DesignMatrix::intercept(2);
    let beta = DVector::from_element(1, 0.0);
    let tiny = DirectEstimateSet::from_values(vec![2.0, -1.0], vec![1e-12, 1e-12]).unwrap();
    let fit = blup(&tiny, &x, 1.0, Some(&beta)).unwrap();
    assert!((fit.theta_hat[0] - 2.0).abs() < 1e-6);
    let huge = DirectEstimateSet::from_values(vec![2.0, -1.0], vec![1e12, 1e12]).unwrap();
    let fit = blup(&huge, &x, 1.0, Some(&beta)).unwrap();
    assert!(fit.theta_hat[0].abs() < 1e-6);
    let mid = DirectEstimateSet::from_values(vec![2.0], vec![1.0]).unwrap();
    let fit = blup(&mid, &DesignMatrix::intercept(1), 1.0, Some(&beta)).unwrap();
    assert_eq!(fit.theta_hat[0], 1.0);
    assert_eq!(fit.kind, FitKind::BlupKnownSigma2);
}

#[test]
fn gibbs_precise_data() {
    let data = DirectEstimateSet::from_values(vec![1.0, 3.0, -2.0, 0.5, 4.0], vec![1e-10; 5]).unwrap();
    let config = GibbsConfig { iterations: 2000, burn_in: 500, seed: Seed::new(1), ..Default::default() };
    let fit = gibbs_fit(&data, &DesignMatrix::intercept(5), &config).unwrap();
    for i in 0..5 {
        assert!((fit.theta_hat[i] - data.y()[i]).abs() < 1e-3);
    }
    assert_eq!(fit.kind, FitKind::Gibbs);
}

#[test]
fn gibbs_underdetermined() {
    let data = DirectEstimateSet::from_values(vec![1.0, 2.0], vec![1.0; 2]).unwrap();
    let x = DesignMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
    assert!(matches!(
        gibbs_fit(&data, &x, &GibbsConfig::default()),
        Err(Error::Underdetermined { areas: 2, columns: 2 })
    ));
}

fn test_problem() -> (DirectEstimateSet, DesignMatrix) {
    let mut r = rng(33);
    let x = random_design(&mut r, 10, 2);
    let beta = DVector::from_row_slice(&[1.0, 0.5]);
    let theta = draw_theta(&mut r, &x, &beta, 1.0);
    let d: Vec<f64> = (0..10).map(|i| 0.3 + 0.2 * i as f64).collect();
    let y = draw_direct(&mut r, &theta, &d);
    (DirectEstimateSet::from_values(y, d).unwrap(), DesignMatrix::from_matrix(x))
}

#[test]
fn pinned_variance_posterior_mean_is_blup() {
    let (data, x) = test_problem();
    let sigma2 = 1.3;
    let config = GibbsConfig {
        iterations: 40_000,
        burn_in: 1_000,
        prior_a: 1e9,
        prior_b: 1e9 * sigma2,
        seed: Seed::new(5),
        ..Default::default()
    };
    let fit = gibbs_fit(&data, &x, &config).unwrap();
    let draws = fit.draws.as_ref().unwrap();
    assert!(draws.sigma2().iter().all(|s| (s - sigma2).abs() < 1e-3));
    let oracle = blup(&data, &x, sigma2, None).unwrap();
    for i in 0..data.m() {
        let chain: Vec<f64> = (0..draws.len()).map(|s| draws.theta(s)[i]).collect();
        assert_within(&format!("area {i}"), fit.theta_hat[i], oracle.theta_hat[i], batch_means_se(&chain, 50));
    }
}

#[test]
fn independent_chains_agree() {
    let (data, x) = test_problem();
    let run = |seed| {
        let config = GibbsConfig { iterations: 20_000, burn_in: 1_000, seed: Seed::new(seed), ..Default::default() };
        gibbs_fit(&data, &x, &config).unwrap()
    };
    let (a, b) = (run(101), run(202));
    let (da, db) = (a.draws.as_ref().unwrap(), b.draws.as_ref().unwrap());
    for i in 0..data.m() {
        let ca: Vec<f64> = (0..da.len()).map(|s| da.theta(s)[i]).collect();
        let cb: Vec<f64> = (0..db.len()).map(|s| db.theta(s)[i]).collect();
        let se = (batch_means_se(&ca, 50).powi(2) + batch_means_se(&cb, 50).powi(2)).sqrt();
        assert_within(&format!("area {i}"), a.theta_hat[i] - b.theta_hat[i], 0.0, se);
    }
}

#[test]
fn gibbs_reproducible_and_positive() {
    let (data, x) = test_problem();
    let config = GibbsConfig { iterations: 600, burn_in: 100, seed: Seed::new(9), ..Default::default() };
    let a = gibbs_fit(&data, &x, &config).unwrap();
    let b = gibbs_fit(&data, &x, &config).unwrap();
    assert_eq!(a.draws, b.draws);
    let draws = a.draws.unwrap();
    assert!(draws.sigma2().iter().all(|s| *s > 0.0));
    assert!((0..draws.len()).all(|s| draws.beta(s).iter().all(|v| v.is_finite())));
}

#[test]
fn gibbs_config_rules() {
    let bad = GibbsConfig { iterations: 150, burn_in: 100, ..Default::default() };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
    let ok = GibbsConfig { iterations: 300, burn_in: 100, thin_interval: 2, ..Default::default() };
    assert_eq!(ok.retained_count(), 100);
    ok.validate().unwrap();
}

#[test]
fn draws_export_format() {
    let (data, x) = test_problem();
    let config = GibbsConfig { iterations: 200, burn_in: 100, seed: Seed::new(2), ..Default::default() };
    let fit = gibbs_fit(&data, &x, &config).unwrap();
    let mut buf = Vec::new();
    fit.draws.unwrap().to_writer(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("draw,param,index,value"));
    // Per draw: 10 θ, 2 β, 1 σ².
    assert_eq!(lines.count(), 100 * 13);
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("est.csv");
    let data = DirectEstimateSet::new(vec!["a".into(), "b".into()], vec![1.25, -0.5], vec![0.1, 2.0]).unwrap();
    data.write_csv(&path).unwrap();
    assert_eq!(DirectEstimateSet::read_csv(&path).unwrap(), data);
    std::fs::write(&path, "area,y,d\na,1,1\n").unwrap();
    assert!(DirectEstimateSet::read_csv(&path).is_err());
    std::fs::write(&path, "area_id,y,d\na,1,0\n").unwrap();
    assert!(DirectEstimateSet::read_csv(&path).is_err());
}

proptest! {
    #[test]
    fn shrinkage_bounds_and_order(s in 1e-6f64..1e6, d in 1e-6f64..1e6, eps in 0.001f64..0.999) {
        let full = shrinkage_factor(s, d, 1.0).unwrap();
        let thin = shrinkage_factor(s, d, eps).unwrap();
        prop_assert!(thin > 0.0 && thin < 1.0);
        prop_assert!(full > 0.0 && full < 1.0);
        prop_assert!(thin < full);
        prop_assert!(shrinkage_factor(s * 2.0, d, eps).unwrap() >= thin);
        prop_assert!(shrinkage_factor(s, d * 2.0, eps).unwrap() <= thin);
    }

    #[test]
    fn blup_shift_equivariance(
        y in prop::collection::vec(-100f64..100.0, 3..12),
        c in -50f64..50.0,
        sigma2 in 0.1f64..10.0,
    ) {
        let m = y.len();
        let d: Vec<f64> = (0..m).map(|i| 0.5 + i as f64 * 0.1).collect();
        let x = DesignMatrix::from_matrix(DMatrix::from_fn(m, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sin() }));
        let base = blup(&DirectEstimateSet::from_values(y.clone(), d.clone()).unwrap(), &x, sigma2, None).unwrap();
        let shifted_y: Vec<f64> = y.iter().map(|v| v + c).collect();
        let shifted = blup(&DirectEstimateSet::from_values(shifted_y, d).unwrap(), &x, sigma2, None).unwrap();
        for i in 0..m {
            prop_assert!((shifted.theta_hat[i] - base.theta_hat[i] - c).abs() <= 1e-9 * (1.0 + c.abs() + base.theta_hat[i].abs()));
        }
    }

    #[test]
    fn blup_between_direct_and_synthetic(
        y in prop::collection::vec(-100f64..100.0, 2..10),
        b in -10f64..10.0,
        sigma2 in 0.01f64..10.0,
    ) {
        let m = y.len();
        let d: Vec<f64> = (0..m).map(|i| 0.1 + i as f64).collect();
        let data = DirectEstimateSet::from_values(y.clone(), d.clone()).unwrap();
        let beta = DVector::from_element(1, b);
        let fit = blup(&data, &DesignMatrix::intercept(m), sigma2, Some(&beta)).unwrap();
        for i in 0..m {
            let (lo, hi) = (y[i].min(b), y[i].max(b));
            prop_assert!(fit.theta_hat[i] >= lo - 1e-12 && fit.theta_hat[i] <= hi + 1e-12);
            prop_assert!((fit.gamma[i] - sigma2 / (sigma2 + d[i])).abs() < 1e-15);
        }
    }
}
