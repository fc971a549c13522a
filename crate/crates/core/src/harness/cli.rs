use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{noise_sweep, report, run_method, write_run, write_sweep, DatasetRef, HarnessError, Method, RunConfig};
use crate::nn::ArchKind;

#[derive(Debug, Parser)]
#[command(name = "qibonn", version, about = "Quantum-inspired bilevel tuning of MLPs on tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tune with the qubit swarm, then fit and score the final model.
    Tune(Common),
    /// Run a baseline with the same config.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
        #[command(flatten)]
        common: Common,
    },
    /// Tune once per noise condition and tabulate deltas against noiseless.
    NoiseSweep(Common),
    /// Merge run directories into summary tables.
    Report {
        /// Run directories, or directories containing them.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, env = "QIBONN_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Vnn,
    #[value(name = "random_search", alias = "random-search")]
    RandomSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Shallow,
    Deep,
    Res,
}

impl From<ArchArg> for ArchKind {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Shallow => ArchKind::Shallow,
            ArchArg::Deep => ArchKind::DeepMlp,
            ArchArg::Res => ArchKind::ResMlp,
        }
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// JSON run config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bundled name (pima, cleveland), `synthetic`, or a CSV path.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchArg>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Output root.
    #[arg(long, env = "QIBONN_OUT")]
    pub out: Option<PathBuf>,
    /// Dotted-path override, e.g. `optimizer.pop_size=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    /// Config file (or defaults), then flags, then `--set` overrides.
    pub fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.optimizer.seed = s;
        }
        if let Some(d) = &self.dataset {
            cfg.dataset = DatasetRef::parse(d);
        }
        if let Some(a) = self.arch {
            cfg.arch = a.into();
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        let cfg = cfg.with_overrides(&self.set)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(name: &str, r: &super::RunReport) {
    println!(
        "{name}: ROC-AUC {:.4} ± {:.4}, PR-AUC {:.4} ± {:.4} over {} repeat(s), {} evaluations each",
        r.summary.roc_auc_mean, r.summary.roc_auc_std, r.summary.pr_auc_mean, r.summary.pr_auc_std, r.summary.n, r.budget
    );
}

pub fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Tune(c) => {
            let cfg = c.resolve()?;
            let r = run_method(&cfg, Method::Qibonn)?;
            let dir = write_run(&cfg.output_dir, &r)?;
            print_summary(&dir.display().to_string(), &r);
        }
        Command::Baseline { kind, common } => {
            let cfg = common.resolve()?;
            let method = match kind {
                BaselineKind::Vnn => Method::Vnn,
                BaselineKind::RandomSearch => Method::RandomSearch,
            };
            let r = run_method(&cfg, method)?;
            let dir = write_run(&cfg.output_dir, &r)?;
            print_summary(&dir.display().to_string(), &r);
        }
        Command::NoiseSweep(c) => {
            let cfg = c.resolve()?;
            let sweep = noise_sweep(&cfg)?;
            let dir = write_sweep(&cfg.output_dir, &sweep)?;
            println!("{}", dir.display());
            for d in &sweep.deltas {
                println!("{:<24} ROC-AUC {:.4} (Δ {:+.4})", d.condition, d.roc_auc_mean, d.delta_roc_auc);
            }
        }
        Command::Report { dirs, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from("runs"));
            let rows = report(&dirs, &out)?;
            print!("{}", super::markdown(&rows));
        }
    }
    Ok(())
}
