use sae_thin::experiment::*;
use sae_thin::survey::{DesignKind, PopulationSpec};
use sae_thin::validation::{select_model, single_score, CandidateModel, Method};
use sae_thin::{DesignMatrix, GibbsConfig};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 17,
        output_dir: None,
        samples: 2,
        p_grid: vec![0, 2, 4],
        population: PopulationConfig {
            kind: PopulationKind::Synthetic,
            grid_rows: Some(5),
            grid_cols: Some(5),
            adjacency: None,
            microdata: None,
            generator: PopulationSpec {
                units_min: 150,
                units_max: 200,
                signal_rank: 3,
                unit_noise_sd: 3.0,
                ..Default::default()
            },
        },
        designs: vec![
            DesignEntry { name: None, kind: DesignKind::EqualAllocation, target: 25.0 },
            DesignEntry { name: None, kind: DesignKind::ProportionalAllocation, target: 0.15 },
        ],
        methods: vec![MethodEntry::thinning(Method::DtMse, 0.6, 2), MethodEntry::new(Method::Dic)],
        gibbs: GibbsConfig { iterations: 300, burn_in: 100, ..Default::default() },
        variance_ratio: None,
    }
}

#[test]
fn row_counts() {
    let cfg = small_config();
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.scores.len(), 2 * 2 * 2 * 3);
    assert_eq!(res.selections.len(), 2 * 2 * 2);
    assert_eq!(res.metrics.len(), 2 * 2);
    let mut keys: Vec<_> = res.selections.iter().map(|r| (r.design.clone(), r.sample, r.method.clone())).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 8);
    assert!(res.scores.iter().all(|r| r.score.is_some()));
    assert_eq!(cfg.design_labels(), vec!["equal-n25", "prop-r0.15"]);
    assert_eq!(cfg.method_labels(), vec!["dt-mse-e0.60-r2", "dic"]);
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = small_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        emit_results(&run_experiment(&cfg).unwrap(), &cfg, dir.path()).unwrap();
    }
    for file in ["scores.csv", "selections.csv", "metrics.csv", "oracle.csv", "config.toml"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn adding_methods_leaves_others_untouched() {
    let mut dic_only = small_config();
    dic_only.methods = vec![MethodEntry::new(Method::Dic)];
    let mut with_more = small_config();
    with_more.methods = vec![
        MethodEntry::thinning(Method::DtMse, 0.3, 3),
        MethodEntry::esim(3),
        MethodEntry::new(Method::Dic),
    ];
    let a = run_experiment(&dic_only).unwrap();
    let b = run_experiment(&with_more).unwrap();
    let dic_rows = |r: &ExperimentResults| r.scores.iter().filter(|s| s.method == "dic").cloned().collect::<Vec<_>>();
    assert_eq!(dic_rows(&a), dic_rows(&b));
    assert_eq!(a.datasets, b.datasets);
    let mut other_eps = small_config();
    other_eps.methods = vec![MethodEntry::thinning(Method::DtMse, 0.8, 3), MethodEntry::new(Method::Dic)];
    assert_eq!(dic_rows(&run_experiment(&other_eps).unwrap()), dic_rows(&a));
}

#[test]
fn every_method_sees_the_same_data() {
    let cfg = small_config();
    let (pop, _) = cfg.build_population().unwrap();
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.datasets.len(), 4);
    for rec in &res.datasets {
        let d = cfg.design_labels().iter().position(|l| *l == rec.design).unwrap();
        let data = sample_data(&cfg, &pop, d, rec.sample).unwrap();
        assert_eq!(rec.fingerprint, Some(fingerprint(&data)));
    }
    let prints: Vec<_> = res.datasets.iter().map(|r| r.fingerprint).collect();
    let mut unique = prints.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), prints.len());
}

#[test]
fn selections_follow_scores_and_metrics_recompute() {
    let cfg = small_config();
    let res = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&res, &cfg, dir.path()).unwrap();

    // Re-select from the emitted score table.
    let text = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    for sel in &res.selections {
        let cell: Vec<_> = rows
            .iter()
            .filter(|r| r[0] == sel.design && r[1] == sel.sample.to_string() && r[2] == sel.method)
            .collect();
        assert_eq!(cell.len(), cfg.p_grid.len());
        let scored: Vec<_> = cell
            .iter()
            .map(|r| {
                let p: usize = r[3].parse().unwrap();
                let x = DesignMatrix::from_matrix(nalgebra::DMatrix::from_element(30, p + 1, 1.0));
                single_score(Method::Dic, &CandidateModel::new(format!("p{p}"), x), Ok(r[4].parse().unwrap()))
            })
            .collect();
        let chosen = select_model(&scored).unwrap();
        assert_eq!(Some(chosen), sel.p_selected.map(|p| format!("p{p}")));
    }

    let selections = read_selections(dir.path().join("selections.csv")).unwrap();
    assert_eq!(selections, res.selections);
    let p_star: Vec<(String, Option<usize>)> = res.metrics.iter().map(|m| (m.design.clone(), m.p_star)).collect();
    let again = recompute_metrics(&selections, &p_star);
    assert_eq!(metrics_csv(&again), std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap());
}

#[test]
fn empty_method_list() {
    let mut cfg = small_config();
    cfg.methods.clear();
    let res = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&res, &cfg, dir.path()).unwrap();
    assert_eq!(
        std::fs::read_to_string(dir.path().join("scores.csv")).unwrap(),
        "design,sample,method,p,score,failed\n"
    );
    assert_eq!(res.metrics.len(), 0);
    assert_eq!(res.oracle_loss.len(), 2);
}

#[test]
fn config_echo_round_trips() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    emit_results(&run_experiment(&cfg).unwrap(), &cfg, dir.path()).unwrap();
    let echo = ExperimentConfig::load(dir.path().join("config.toml")).unwrap();
    assert_eq!(echo, cfg);
}

#[test]
fn infeasible_grid_fails_before_work() {
    let mut cfg = small_config();
    cfg.p_grid = vec![2, 40];
    assert!(matches!(run_experiment(&cfg), Err(sae_thin::Error::Config(_))));
    cfg.p_grid = vec![4, 2];
    assert!(matches!(run_experiment(&cfg), Err(sae_thin::Error::Config(_))));
}

#[test]
fn failed_samples_are_recorded_not_fatal() {
    let mut cfg = small_config();
    // Two expected units per area leaves some areas with fewer than two.
    cfg.designs.push(DesignEntry { name: Some("sparse".into()), kind: DesignKind::EqualAllocation, target: 2.0 });
    let res = run_experiment(&cfg).unwrap();
    let sparse: Vec<_> = res.selections.iter().filter(|r| r.design == "sparse").collect();
    assert_eq!(sparse.len(), 4);
    assert!(sparse.iter().all(|r| r.p_selected.is_none()));
    assert!(res.scores.iter().filter(|r| r.design == "sparse").all(|r| r.score.is_none()));
    for m in res.metrics.iter().filter(|m| m.design == "sparse") {
        assert_eq!(m.n_failed, 2);
        assert_eq!(m.p_star, None);
        assert_eq!(m.rmse, None);
    }
    let text = scores_csv(&res);
    assert!(text.lines().any(|l| l.starts_with("sparse,0,dic,0,,true")));
    assert!(res.metrics.iter().filter(|m| m.design != "sparse").all(|m| m.n_failed == 0));
}

#[test]
fn oracle_recovers_constructed_signal_rank() {
    // Signal lies exactly in the first four basis columns; no iid area noise.
    let mut cfg = small_config();
    cfg.population.grid_rows = Some(7);
    cfg.population.grid_cols = Some(7);
    cfg.population.generator = PopulationSpec {
        units_min: 3000,
        units_max: 3000,
        signal_rank: 4,
        signal_amplitude: 1.5,
        area_noise_sd: 0.0,
        unit_noise_sd: 1.0,
        ..Default::default()
    };
    cfg.designs = vec![DesignEntry { name: None, kind: DesignKind::EqualAllocation, target: 40.0 }];
    cfg.p_grid = vec![1, 3, 5, 7, 9];
    cfg.samples = 6;
    cfg.methods = vec![MethodEntry::new(Method::Dic)];
    cfg.gibbs = GibbsConfig { iterations: 1500, burn_in: 300, ..Default::default() };
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.metrics[0].p_star, Some(5), "losses {:?}", res.oracle_loss);
}
