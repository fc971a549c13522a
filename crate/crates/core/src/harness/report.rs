use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{curves_csv, RunReport};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub method: String,
    pub dataset: String,
    pub arch: String,
    pub noise: String,
    pub repeats: usize,
    pub roc_auc_mean: f64,
    pub roc_auc_std: f64,
    pub pr_auc_mean: f64,
    pub pr_auc_std: f64,
    pub evaluations: usize,
}

/// Reads a run directory; `None` (with a warning) if anything is missing or
/// unparseable.
pub fn load_run(dir: &Path) -> Option<RunReport> {
    let report: RunReport = match fs::read_to_string(dir.join("report.json")).map(|t| serde_json::from_str(&t)) {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => {
            log::warn!("skipping {}: corrupt report.json ({e})", dir.display());
            return None;
        }
        Err(e) => {
            log::warn!("skipping {}: {e}", dir.display());
            return None;
        }
    };
    let trace = match fs::File::open(dir.join("trace.jsonl")) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("skipping {}: trace.jsonl: {e}", dir.display());
            return None;
        }
    };
    let mut lines = 0;
    for (i, line) in std::io::BufReader::new(trace).lines().enumerate() {
        let ok = line.ok().and_then(|l| serde_json::from_str::<serde_json::Value>(&l).ok()).is_some_and(|v| v.is_object());
        if !ok {
            log::warn!("skipping {}: corrupt trace line {}", dir.display(), i + 1);
            return None;
        }
        lines += 1;
    }
    let expected = report.budget * report.repeats.len();
    if lines != expected {
        log::warn!("skipping {}: trace has {lines} lines, expected {expected}", dir.display());
        return None;
    }
    Some(report)
}

/// Expands each argument into run directories: the directory itself if it
/// holds a `report.json`, otherwise its immediate subdirectories that do.
fn expand(dirs: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for d in dirs {
        if d.join("report.json").exists() {
            out.push(d.clone());
            continue;
        }
        let mut subs: Vec<PathBuf> = match fs::read_dir(d) {
            Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join("report.json").exists()).collect(),
            Err(e) => {
                log::warn!("skipping {}: {e}", d.display());
                continue;
            }
        };
        if subs.is_empty() {
            log::warn!("skipping {}: no report.json found", d.display());
        }
        subs.sort();
        out.extend(subs);
    }
    out
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

pub fn markdown(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "| run | method | dataset | arch | noise | repeats | ROC-AUC | PR-AUC | evaluations |\n|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} ± {} | {} ± {} | {} |\n",
            r.run,
            r.method,
            r.dataset,
            r.arch,
            r.noise,
            r.repeats,
            fmt(r.roc_auc_mean),
            fmt(r.roc_auc_std),
            fmt(r.pr_auc_mean),
            fmt(r.pr_auc_std),
            r.evaluations
        ));
    }
    s
}

/// Merges run directories into `summary.md`, `summary.csv` and one
/// `<run>_curves.csv` per run under `out`. Returns the rows written.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let runs: Vec<(PathBuf, RunReport)> = expand(dirs).into_iter().filter_map(|d| load_run(&d).map(|r| (d, r))).collect();
    if runs.is_empty() {
        return Err(HarnessError::Config("no completed run directories found".into()));
    }
    fs::create_dir_all(out).map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))?;
    let mut rows = Vec::new();
    for (dir, r) in &runs {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| r.run_name());
        rows.push(SummaryRow {
            run: name.clone(),
            method: r.method.name().into(),
            dataset: r.dataset.clone(),
            arch: r.arch.clone(),
            noise: r.noise.clone(),
            repeats: r.summary.n,
            roc_auc_mean: r.summary.roc_auc_mean,
            roc_auc_std: r.summary.roc_auc_std,
            pr_auc_mean: r.summary.pr_auc_mean,
            pr_auc_std: r.summary.pr_auc_std,
            evaluations: r.budget,
        });
        let path = out.join(format!("{name}_curves.csv"));
        fs::write(&path, curves_csv(r)).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    let csv_bytes = w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))?;
    fs::write(out.join("summary.csv"), csv_bytes).map_err(|e| HarnessError::Io(e.to_string()))?;
    fs::write(out.join("summary.md"), markdown(&rows)).map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(rows)
}
