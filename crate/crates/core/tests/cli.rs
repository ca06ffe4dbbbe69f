use std::path::Path;
use std::process::{Command, Output};

use sae_thin::spatial::{load_adjacency, AdjacencyMatrix};
use sae_thin::DirectEstimateSet;

fn sae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sae-thin")).args(args).output().unwrap()
}

#[track_caller]
fn ok(args: &[&str]) -> String {
    let out = sae(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn pipeline_through_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let adj = root.join("adj.txt");
    AdjacencyMatrix::grid(5, 5).write_edges(&adj).unwrap();

    let sim = root.join("sim");
    ok(&[
        "simulate", "--design", "equal", "--target", "30", "--samples", "2", "--seed", "3",
        "--adjacency", p(&adj), "--signal-rank", "3", "--out-dir", p(&sim),
    ]);
    assert_eq!(header(&sim.join("population.csv")), "area_id,value,weight");
    assert_eq!(header(&sim.join("truth.csv")), "area_id,theta,N");
    let data_path = sim.join("sample_001.csv");
    let data = DirectEstimateSet::read_csv(&data_path).unwrap();
    assert_eq!(data.m(), 25);
    assert!(sim.join("sample_002.csv").exists());
    let written = load_adjacency(sim.join("adjacency.txt"), data.area_ids()).unwrap();
    assert_eq!(written, load_adjacency(&adj, data.area_ids()).unwrap());

    let thinned = root.join("thin.csv");
    ok(&["thin", "--data", p(&data_path), "--epsilon", "0.4", "--repeats", "2", "--seed", "1", "--out", p(&thinned)]);
    let text = std::fs::read_to_string(&thinned).unwrap();
    assert_eq!(text.lines().next(), Some("area_id,repeat,component,value"));
    assert_eq!(text.lines().count(), 1 + 25 * 2 * 2);
    let folds = root.join("folds.csv");
    ok(&["thin", "--data", p(&data_path), "--folds", "3", "--out", p(&folds)]);
    assert!(std::fs::read_to_string(&folds).unwrap().contains(",fold_3,"));

    let basis = root.join("basis.csv");
    ok(&["basis", "--adjacency", p(&adj), "--p", "3", "--areas", p(&data_path), "--out", p(&basis)]);
    assert_eq!(header(&basis), "area_id,intercept,mb_1,mb_2,mb_3");

    let val = root.join("val");
    ok(&[
        "validate", "--data", p(&data_path), "--adjacency", p(&adj), "--p-grid", "0,2,4",
        "--method", "dt-mse", "--epsilon", "0.6", "--repeats", "2", "--seed", "4",
        "--iterations", "300", "--burn-in", "100", "--out-dir", p(&val),
    ]);
    assert_eq!(header(&val.join("scores.csv")), "model_id,method,repeat,value");
    let summary = std::fs::read_to_string(val.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("model_id,method,score,selected"));
    assert_eq!(summary.lines().filter(|l| l.ends_with(",true")).count(), 1);
    assert_eq!(summary.lines().count(), 4);

    let ic = root.join("ic");
    ok(&[
        "validate", "--data", p(&data_path), "--design", p(&basis), "--method", "waic",
        "--iterations", "300", "--burn-in", "100", "--out-dir", p(&ic),
    ]);
    assert!(std::fs::read_to_string(ic.join("summary.csv")).unwrap().contains("basis,waic,"));

    let curve = ok(&["analytics", "--sigma2", "1", "--d-file", p(&data_path), "--eps-grid", "0.1:0.9:0.2"]);
    assert_eq!(curve.lines().next(), Some("epsilon,gap,gap_sq,variance,sum"));
    assert_eq!(curve.lines().count(), 6);
    let est = root.join("est.csv");
    ok(&[
        "analytics", "--sigma2", "1", "--d-file", p(&data_path), "--design-file", p(&basis),
        "--mode", "estimated", "--out", p(&est),
    ]);
    assert_eq!(std::fs::read_to_string(&est).unwrap().lines().count(), 20);
}

#[test]
fn run_is_deterministic() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/quick.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        ok(&["run", "--config", p(&config), "--out-dir", p(d.path())]);
    }
    for file in ["scores.csv", "selections.csv", "metrics.csv", "oracle.csv", "variance_ratio.csv", "variance_ratio_summary.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file}");
    }
    assert_eq!(header(&dirs[0].path().join("scores.csv")), "design,sample,method,p,score,failed");
    assert_eq!(header(&dirs[0].path().join("selections.csv")), "design,sample,method,p_selected");
    assert_eq!(header(&dirs[0].path().join("metrics.csv")), "design,method,p_star,rmse,mean_bias,n_failed");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("adj.txt");
    std::fs::write(&bad, "a b\na a\n").unwrap();
    let out = sae(&["basis", "--adjacency", p(&bad), "--p", "1", "--out", p(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = sae(&["thin", "--data", "/nonexistent.csv", "--out", p(&dir.path().join("t.csv"))]);
    assert!(!out.status.success());
    let out = sae(&["validate", "--method", "bogus"]);
    assert!(!out.status.success());
}
