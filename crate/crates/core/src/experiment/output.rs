use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{metric_row, ExperimentConfig, ExperimentResults, MetricRecord, SelectionRecord, VarianceRatioSummary};
use crate::error::{Error, Result};

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn scores_csv(results: &ExperimentResults) -> String {
    let mut out = String::from("design,sample,method,p,score,failed\n");
    for r in &results.scores {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.design, r.sample, r.method, r.p, opt(&r.score), r.score.is_none());
    }
    out
}

pub fn selections_csv(selections: &[SelectionRecord]) -> String {
    let mut out = String::from("design,sample,method,p_selected\n");
    for r in selections {
        let _ = writeln!(out, "{},{},{},{}", r.design, r.sample, r.method, opt(&r.p_selected));
    }
    out
}

pub fn metrics_csv(metrics: &[MetricRecord]) -> String {
    let mut out = String::from("design,method,p_star,rmse,mean_bias,n_failed\n");
    for r in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.design,
            r.method,
            opt(&r.p_star),
            opt(&r.rmse),
            opt(&r.mean_bias),
            r.n_failed
        );
    }
    out
}

/// Writes `scores.csv`, `selections.csv`, `metrics.csv`, `oracle.csv` and
/// the `config.toml` echo. Output is byte-identical for identical results.
pub fn emit_results(results: &ExperimentResults, config: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("scores.csv"), &scores_csv(results))?;
    write(&dir.join("selections.csv"), &selections_csv(&results.selections))?;
    write(&dir.join("metrics.csv"), &metrics_csv(&results.metrics))?;
    let mut oracle = String::from("design,p,loss\n");
    for (design, losses) in &results.oracle_loss {
        for (p, loss) in config.p_grid.iter().zip(losses) {
            let _ = writeln!(oracle, "{design},{p},{loss}");
        }
    }
    write(&dir.join("oracle.csv"), &oracle)?;
    write(&dir.join("config.toml"), &config.to_toml()?)
}

/// Writes `variance_ratio.csv` (per design and p) and
/// `variance_ratio_summary.csv` (per design).
pub fn emit_variance_ratio(summary: &VarianceRatioSummary, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = String::from("design,p,var_multifold,var_repeated,ratio,n_used\n");
    for r in &summary.records {
        let _ = writeln!(
            rows,
            "{},{},{},{},{},{}",
            r.design, r.p, r.var_multifold, r.var_repeated, r.ratio, r.n_used
        );
    }
    write(&dir.join("variance_ratio.csv"), &rows)?;
    let mut designs = String::from("design,mean_ratio\n");
    for (d, ratio) in &summary.design_ratio {
        let _ = writeln!(designs, "{d},{ratio}");
    }
    write(&dir.join("variance_ratio_summary.csv"), &designs)
}

/// Parses a `selections.csv` written by [`emit_results`].
pub fn read_selections(path: impl AsRef<Path>) -> Result<Vec<SelectionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = |message: &str| Error::Parse { path: path.to_path_buf(), line: n + 1, message: message.into() };
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        out.push(SelectionRecord {
            design: f[0].into(),
            sample: f[1].parse().map_err(|_| bad("bad sample index"))?,
            method: f[2].into(),
            p_selected: if f[3].is_empty() { None } else { Some(f[3].parse().map_err(|_| bad("bad p"))?) },
        });
    }
    Ok(out)
}

/// Metrics from selection rows and per-design oracle sizes, in first-seen
/// (design, method) order.
pub fn recompute_metrics(selections: &[SelectionRecord], p_star: &[(String, Option<usize>)]) -> Vec<MetricRecord> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in selections {
        let key = (r.design.clone(), r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|(design, method)| {
            let picks: Vec<Option<usize>> = selections
                .iter()
                .filter(|r| &r.design == design && &r.method == method)
                .map(|r| r.p_selected)
                .collect();
            let star = p_star.iter().find(|(d, _)| d == design).and_then(|(_, p)| *p);
            metric_row(design, method, star, &picks)
        })
        .collect()
}
