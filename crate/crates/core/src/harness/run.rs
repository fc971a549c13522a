use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::HarnessError;
use crate::data::{self, Dataset, SplitSpec};
use crate::encoding::HyperparamVector;
use crate::nn::{final_fit, NnObjective};
use crate::optimizer::{self, OptimizerConfig};
use crate::qsim::NoiseSpec;
use crate::trace::{EpochLoss, EvalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Qibonn,
    RandomSearch,
    Vnn,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Qibonn => "qibonn",
            Method::RandomSearch => "random_search",
            Method::Vnn => "vnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub best_h: HyperparamVector,
    /// Best validation objective found during tuning (absent for VNN).
    pub best_fitness: Option<f64>,
    pub evaluations: usize,
    pub test_roc_auc: f64,
    pub test_pr_auc: f64,
    #[serde(with = "crate::trace::nullable_f64")]
    pub test_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Final-fit curve: training loss and held-out loss per epoch.
    pub curve: Vec<EpochLoss>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub roc_auc_mean: f64,
    pub roc_auc_std: f64,
    pub pr_auc_mean: f64,
    pub pr_auc_std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Summary {
    pub fn from_repeats(repeats: &[RepeatResult]) -> Self {
        let roc: Vec<f64> = repeats.iter().map(|r| r.test_roc_auc).collect();
        let pr: Vec<f64> = repeats.iter().map(|r| r.test_pr_auc).collect();
        let (roc_auc_mean, roc_auc_std) = mean_std(&roc);
        let (pr_auc_mean, pr_auc_std) = mean_std(&pr);
        Self { n: repeats.len(), roc_auc_mean, roc_auc_std, pr_auc_mean, pr_auc_std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub dataset: String,
    pub arch: String,
    pub noise: String,
    pub config: RunConfig,
    pub repeats: Vec<RepeatResult>,
    pub summary: Summary,
    /// Objective evaluations per repeat.
    pub budget: usize,
    /// Evaluation trace of every repeat, written to `trace.jsonl`.
    #[serde(skip)]
    pub trace: Vec<(usize, EvalRecord)>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn run_name(&self) -> String {
        let mut name = format!("{}_{}_{}_s{}", self.method.name(), self.dataset, self.arch, self.config.optimizer.seed);
        if self.method != Method::Vnn && self.noise != "noiseless" {
            name.push('_');
            name.push_str(&self.noise);
        }
        name
    }
}

/// Runs `cfg.repeats` independent repeats of `method`. Repeat `r` uses seed
/// `seed + r` for the optimizer, the split and the network, so methods run
/// with the same config see identical splits.
pub fn run_method(cfg: &RunConfig, method: Method) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let ds = cfg.dataset.load()?;
    run_method_on(cfg, method, &ds)
}

pub fn run_method_on(cfg: &RunConfig, method: Method, ds: &Dataset) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let started = Instant::now();
    let space = cfg.space(ds)?;
    let mut repeats = Vec::with_capacity(cfg.repeats);
    let mut trace = Vec::new();
    for r in 0..cfg.repeats {
        let seed = cfg.optimizer.seed.wrapping_add(r as u64);
        let split_spec = SplitSpec { seed: cfg.split.seed.wrapping_add(r as u64), ..cfg.split.clone() };
        let splits = data::split(ds, &split_spec).map_err(HarnessError::Dataset)?;
        let ocfg = OptimizerConfig { seed, ..cfg.optimizer.clone() };
        let (best_h, best_fitness, evaluations) = match method {
            Method::Vnn => (HyperparamVector::midpoint(ds.n_features()), None, 0),
            Method::Qibonn | Method::RandomSearch => {
                let obj = NnObjective::<f64>::new(&splits.tuning, space.clone(), cfg.arch, cfg.inner_epochs, seed);
                let out = if method == Method::Qibonn {
                    optimizer::run::<f64, _>(&space, &obj, &ocfg)
                } else {
                    optimizer::random_search(&space, &obj, &ocfg)
                }
                .map_err(|e| HarnessError::Config(e.to_string()))?;
                let h = HyperparamVector::from_point(&out.best_point, &space).map_err(|e| HarnessError::Config(e.to_string()))?;
                trace.extend(out.trace.into_iter().map(|rec| (r, rec)));
                (h, Some(out.best_fitness), out.evaluations)
            }
        };
        debug_assert_eq!(splits.test.reads(), 0);
        let result = match final_fit::<f64>(&best_h, &splits, cfg.arch, cfg.final_epochs, seed) {
            Ok(f) => RepeatResult {
                repeat: r,
                seed,
                best_h,
                best_fitness,
                evaluations,
                test_roc_auc: f.test.roc_auc,
                test_pr_auc: f.test.pr_auc,
                test_loss: f.test.loss,
                error: None,
                curve: f.curve,
            },
            Err(e) => {
                // Reported at chance level so the run still yields a report.
                log::warn!("repeat {r}: final fit failed: {e}");
                let test = splits.test.read();
                let pos_rate = test.labels.iter().filter(|&&l| l == 1).count() as f64 / test.len() as f64;
                RepeatResult {
                    repeat: r,
                    seed,
                    best_h,
                    best_fitness,
                    evaluations,
                    test_roc_auc: 0.5,
                    test_pr_auc: pos_rate,
                    test_loss: f64::NAN,
                    error: Some(e.to_string()),
                    curve: Vec::new(),
                }
            }
        };
        log::info!(
            "{} {} repeat {r}: test ROC-AUC {:.4}, PR-AUC {:.4}",
            method.name(),
            cfg.dataset.label(),
            result.test_roc_auc,
            result.test_pr_auc
        );
        repeats.push(result);
    }
    let budget = match method {
        Method::Vnn => 0,
        _ => cfg.optimizer.budget(),
    };
    Ok(RunReport {
        method,
        dataset: cfg.dataset.label(),
        arch: cfg.arch.name().to_string(),
        noise: cfg.optimizer.noise.label(),
        config: cfg.clone(),
        summary: Summary::from_repeats(&repeats),
        repeats,
        budget,
        trace,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

#[derive(Serialize)]
struct TraceLine<'a> {
    repeat: usize,
    #[serde(flatten)]
    record: &'a EvalRecord,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn curves_csv(report: &RunReport) -> String {
    let mut s = String::from("repeat,epoch,train_loss,holdout_loss\n");
    for r in &report.repeats {
        for e in &r.curve {
            s.push_str(&format!("{},{},{},{}\n", r.repeat, e.epoch, e.train_loss, fmt_opt(e.val_loss)));
        }
    }
    s
}

/// Writes the run directory `root/<run name>` and returns its path.
pub fn write_run(root: &Path, report: &RunReport) -> Result<PathBuf, HarnessError> {
    let dir = root.join(report.run_name());
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join("config.json"), report.config.to_json().as_bytes())?;
    let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Io(e.to_string()))? + "\n";
    write_file(&dir.join("report.json"), json.as_bytes())?;

    let trace_path = dir.join("trace.jsonl");
    let file = fs::File::create(&trace_path).map_err(io_err(&trace_path))?;
    let mut w = std::io::BufWriter::new(file);
    for (repeat, record) in &report.trace {
        serde_json::to_writer(&mut w, &TraceLine { repeat: *repeat, record }).map_err(|e| HarnessError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err(&trace_path))?;
    }
    w.flush().map_err(io_err(&trace_path))?;

    write_file(&dir.join("curves.csv"), curves_csv(report).as_bytes())?;
    let finished = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "wall_clock_secs": report.wall_clock_secs,
        "finished_unix": finished,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_file(&dir.join("metadata.json"), (serde_json::to_string_pretty(&meta).unwrap() + "\n").as_bytes())?;
    Ok(dir)
}

/// One row of the long-format sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub condition: String,
    pub repeat: usize,
    pub roc_auc: f64,
    pub pr_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDelta {
    pub condition: String,
    pub noise_kind: String,
    pub strength: f64,
    pub roc_auc_mean: f64,
    pub pr_auc_mean: f64,
    pub delta_roc_auc: f64,
    pub delta_pr_auc: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: Vec<RunReport>,
    pub rows: Vec<SweepRow>,
    pub deltas: Vec<SweepDelta>,
}

/// Tunes once per noise condition; the noiseless condition is always run
/// and serves as the reference for the deltas.
pub fn noise_sweep(cfg: &RunConfig) -> Result<SweepReport, HarnessError> {
    cfg.validate()?;
    let ds = cfg.dataset.load()?;
    let mut grid: Vec<NoiseSpec> = vec![NoiseSpec::none()];
    grid.extend(cfg.noise_grid.iter().filter(|n| !n.is_noiseless()).copied());
    let mut runs = Vec::with_capacity(grid.len());
    for noise in grid {
        let mut c = cfg.clone();
        c.optimizer.noise = noise;
        runs.push(run_method_on(&c, Method::Qibonn, &ds)?);
    }
    let rows = runs
        .iter()
        .flat_map(|run| {
            run.repeats.iter().map(|r| SweepRow {
                condition: run.noise.clone(),
                repeat: r.repeat,
                roc_auc: r.test_roc_auc,
                pr_auc: r.test_pr_auc,
            })
        })
        .collect();
    let base = runs[0].summary;
    let deltas = runs
        .iter()
        .map(|run| SweepDelta {
            condition: run.noise.clone(),
            noise_kind: run.config.optimizer.noise.kind().label().to_string(),
            strength: run.config.optimizer.noise.strength(),
            roc_auc_mean: run.summary.roc_auc_mean,
            pr_auc_mean: run.summary.pr_auc_mean,
            delta_roc_auc: run.summary.roc_auc_mean - base.roc_auc_mean,
            delta_pr_auc: run.summary.pr_auc_mean - base.pr_auc_mean,
        })
        .collect();
    Ok(SweepReport { runs, rows, deltas })
}

fn to_csv<S: Serialize>(rows: &[S]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))
}

/// Writes each condition's run directory plus `sweep.csv` and `deltas.csv`
/// under `root/sweep_<dataset>_<arch>_s<seed>`.
pub fn write_sweep(root: &Path, sweep: &SweepReport) -> Result<PathBuf, HarnessError> {
    let first = &sweep.runs[0];
    let dir = root.join(format!("sweep_{}_{}_s{}", first.dataset, first.arch, first.config.optimizer.seed));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for run in &sweep.runs {
        write_run(&dir, run)?;
    }
    write_file(&dir.join("sweep.csv"), &to_csv(&sweep.rows)?)?;
    write_file(&dir.join("deltas.csv"), &to_csv(&sweep.deltas)?)?;
    Ok(dir)
}
