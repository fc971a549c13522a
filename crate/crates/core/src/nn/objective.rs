use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::model::{build, ArchKind, Architecture, MlpModel};
use super::train::{eval_loss, train, TrainConfig};
use super::NnError;
use crate::data::{Partition, Splits, TuningSplit};
use crate::encoding::{DecodedPoint, HyperparamVector, SpaceSpec};
use crate::metrics::{self, MetricError};
use crate::optimizer::Objective;
use crate::qsim::stream_rng;
use crate::scalar::Scalar;
use crate::trace::{EpochLoss, Evaluation};

const MOMENTUM: f64 = 0.9;

fn to_scalar<T: Scalar>(x: &Array2<f64>) -> Array2<T> {
    x.mapv(T::lit)
}

fn mask_cols(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub loss: f64,
    /// True when a metric was undefined (single class present) and chance
    /// level was substituted.
    pub degenerate: bool,
}

/// ROC-AUC and average precision of `model` on `(x, y)`; macro one-vs-rest
/// for multiclass heads.
pub fn score<T: Scalar>(model: &MlpModel<T>, x: &Array2<T>, y: &[usize], k: usize) -> Result<ScoreSet, NnError> {
    let proba = model.predict_proba(x)?;
    let loss = eval_loss(model, x, y)?;
    let (roc, pr) = if model.arch.is_binary() {
        let s: Vec<T> = proba.column(0).to_vec();
        let truth: Vec<bool> = y.iter().map(|&l| l == 1).collect();
        (metrics::roc_auc(&s, &truth), metrics::average_precision(&s, &truth))
    } else {
        let rows: Vec<Vec<T>> = proba.rows().into_iter().map(|r| r.to_vec()).collect();
        (metrics::macro_roc_auc(&rows, y, k), metrics::macro_average_precision(&rows, y, k))
    };
    let mut degenerate = false;
    let mut chance = |r: Result<f64, MetricError>, fallback: f64| match r {
        Ok(v) => v,
        Err(MetricError::NonFinite(_)) => f64::NAN,
        Err(e) => {
            log::warn!("{e}; substituting chance level");
            degenerate = true;
            fallback
        }
    };
    let roc_auc = chance(roc, 0.5);
    let pos_rate = y.iter().filter(|&&l| l == 1).count() as f64 / y.len().max(1) as f64;
    let pr_auc = chance(pr, pos_rate);
    if !roc_auc.is_finite() || !pr_auc.is_finite() {
        return Err(NnError::Diverged);
    }
    Ok(ScoreSet { roc_auc, pr_auc, loss, degenerate })
}

/// Converts decoded hyperparameters into the network and optimizer settings.
pub fn configure(h: &HyperparamVector, kind: ArchKind, k: usize, epochs: usize, seed: u64) -> (Architecture, TrainConfig) {
    let arch = Architecture::new(kind, h.feature_mask.iter().filter(|&&b| b).count(), h.hidden_width, h.n_hidden_layers, k, h.dropout);
    let cfg = TrainConfig {
        learning_rate: h.learning_rate,
        batch_size: h.batch_size,
        weight_decay: h.weight_decay,
        epochs,
        seed,
        momentum: MOMENTUM,
    };
    (arch, cfg)
}

/// Builds and trains a fresh network. Initialization and training draw from
/// separate streams of `cfg.seed`.
pub fn fit<T: Scalar>(
    arch: &Architecture,
    cfg: &TrainConfig,
    x: &Array2<T>,
    y: &[usize],
    val: Option<(&Array2<T>, &[usize])>,
) -> Result<(MlpModel<T>, Vec<EpochLoss>), NnError> {
    let mut model = build::<T, _>(arch, &mut stream_rng(cfg.seed, 0))?;
    let curve = train(&mut model, x, y, val, cfg, &mut stream_rng(cfg.seed, 1))?;
    Ok((model, curve))
}

/// Upper-level objective: `J(h) = −ROC-AUC` on the validation partition
/// after a short training run on the train partition.
#[derive(Debug, Clone)]
pub struct NnObjective<T> {
    space: SpaceSpec,
    kind: ArchKind,
    k: usize,
    inner_epochs: usize,
    seed: u64,
    train_x: Array2<T>,
    train_y: Vec<usize>,
    val_x: Array2<T>,
    val_y: Vec<usize>,
}

impl<T: Scalar> NnObjective<T> {
    pub fn new(split: &TuningSplit, space: SpaceSpec, kind: ArchKind, inner_epochs: usize, seed: u64) -> Self {
        Self {
            space,
            kind,
            k: split.k,
            inner_epochs,
            seed,
            train_x: to_scalar(&split.train.features),
            train_y: split.train.labels.clone(),
            val_x: to_scalar(&split.val.features),
            val_y: split.val.labels.clone(),
        }
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn evaluate_hyperparams(&self, h: &HyperparamVector) -> Evaluation {
        match self.try_evaluate(h) {
            Ok(e) => e,
            Err(e) => Evaluation::failed(e.to_string()),
        }
    }

    fn try_evaluate(&self, h: &HyperparamVector) -> Result<Evaluation, NnError> {
        let cols = mask_cols(&h.feature_mask);
        if cols.is_empty() {
            return Err(NnError::Domain("feature mask selects no features".into()));
        }
        if h.feature_mask.len() != self.train_x.ncols() {
            return Err(NnError::Shape(format!("mask length {} vs {} features", h.feature_mask.len(), self.train_x.ncols())));
        }
        let tx = self.train_x.select(Axis(1), &cols);
        let vx = self.val_x.select(Axis(1), &cols);
        let (arch, cfg) = configure(h, self.kind, self.k, self.inner_epochs, self.seed);
        let (model, curve) = fit(&arch, &cfg, &tx, &self.train_y, Some((&vx, &self.val_y)))?;
        let s = score(&model, &vx, &self.val_y, self.k)?;
        let mut e = Evaluation::ok(-s.roc_auc)
            .with_metric("roc_auc", s.roc_auc)
            .with_metric("pr_auc", s.pr_auc)
            .with_metric("val_loss", s.loss);
        if s.degenerate {
            e = e.with_metric("undefined_metric", 1.0);
        }
        e.curve = curve;
        Ok(e)
    }
}

impl<T: Scalar> Objective for NnObjective<T> {
    fn evaluate(&self, point: &DecodedPoint) -> Evaluation {
        match HyperparamVector::from_point(point, &self.space) {
            Ok(h) => self.evaluate_hyperparams(&h),
            Err(e) => Evaluation::failed(e.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinalFit<T> {
    pub model: MlpModel<T>,
    pub test: ScoreSet,
    /// Per-epoch training loss with the held-out loss in `val_loss`.
    pub curve: Vec<EpochLoss>,
}

/// Retrains on train+validation with `h` and scores the held-out partition.
pub fn final_fit<T: Scalar>(
    h: &HyperparamVector,
    splits: &Splits,
    kind: ArchKind,
    final_epochs: usize,
    seed: u64,
) -> Result<FinalFit<T>, NnError> {
    let cols = mask_cols(&h.feature_mask);
    if cols.is_empty() {
        return Err(NnError::Domain("feature mask selects no features".into()));
    }
    let full: Partition = splits.tuning.train.concat(&splits.tuning.val);
    let test = splits.test.read();
    let x = to_scalar::<T>(&full.features.select(Axis(1), &cols));
    let tx = to_scalar::<T>(&test.features.select(Axis(1), &cols));
    let (arch, cfg) = configure(h, kind, splits.tuning.k, final_epochs, seed);
    let (model, curve) = fit(&arch, &cfg, &x, &full.labels, Some((&tx, &test.labels)))?;
    let test = score(&model, &tx, &test.labels, splits.tuning.k)?;
    Ok(FinalFit { model, test, curve })
}
