use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{softmax_rows, Dense, MlpModel};
use super::NnError;
use crate::scalar::Scalar;
use crate::trace::EpochLoss;

const LOGIT_CLAMP: f64 = 30.0;

/// Mean cross-entropy and its gradient with respect to the logits.
///
/// A single logit column means sigmoid BCE, several columns mean softmax CE.
/// Logits are clamped to ±30 first; the gradient is exact for the clamped
/// loss.
pub fn cross_entropy<T: Scalar>(logits: &Array2<T>, labels: &[usize]) -> (T, Array2<T>) {
    let n = T::lit(labels.len() as f64);
    let c = T::lit(LOGIT_CLAMP);
    let clamped = logits.mapv(|v| v.max(-c).min(c));
    let inside = logits.mapv(|v| if v.abs() <= c { T::one() } else { T::zero() });
    let mut grad;
    let mut loss = T::zero();
    if logits.ncols() == 1 {
        grad = Array2::zeros(logits.dim());
        for (i, &y) in labels.iter().enumerate() {
            let l = clamped[[i, 0]];
            let y = if y == 1 { T::one() } else { T::zero() };
            // softplus(l) - y·l, computed stably
            loss = loss + l.max(T::zero()) + (-l.abs()).exp().ln_1p() - y * l;
            grad[[i, 0]] = (super::model::sigmoid(l) - y) / n;
        }
    } else {
        let p = softmax_rows(&clamped);
        grad = p.clone();
        for (i, &y) in labels.iter().enumerate() {
            let row = clamped.row(i);
            let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
            let lse = m + row.mapv(|v| (v - m).exp()).sum().ln();
            loss = loss + lse - row[y];
            grad[[i, y]] -= T::one();
        }
        grad.mapv_inplace(|g| g / n);
    }
    grad *= &inside;
    (loss / n, grad)
}

/// `(weight_decay/2)·Σ‖W‖²` over weight matrices only.
pub fn l2_penalty<T: Scalar>(model: &MlpModel<T>, weight_decay: f64) -> T {
    let s: T = model.layers.iter().map(|l| l.w.iter().map(|&w| w * w).sum::<T>()).sum();
    T::lit(weight_decay / 2.0) * s
}

/// Regularized loss on a batch and its parameter gradients.
pub fn loss_and_grad<T: Scalar, R: Rng + ?Sized>(
    model: &MlpModel<T>,
    x: &Array2<T>,
    labels: &[usize],
    weight_decay: f64,
    train_rng: Option<&mut R>,
) -> Result<(T, Vec<Dense<T>>), NnError> {
    let (logits, cache) = model.forward(x, train_rng)?;
    let (ce, dlogits) = cross_entropy(&logits, labels);
    let loss = ce + l2_penalty(model, weight_decay);
    if !loss.is_finite() {
        return Err(NnError::Diverged);
    }
    let mut grads = model.backward(&cache, dlogits);
    if weight_decay != 0.0 {
        let wd = T::lit(weight_decay);
        for (g, l) in grads.iter_mut().zip(&model.layers) {
            g.w.scaled_add(wd, &l.w);
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.weight_decay < 0.0 {
            return Err(NnError::Domain("learning rate and batch size must be positive, weight decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::Domain("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Mean unregularized cross-entropy in eval mode.
pub fn eval_loss<T: Scalar>(model: &MlpModel<T>, x: &Array2<T>, labels: &[usize]) -> Result<f64, NnError> {
    let logits = model.predict_logits(x)?;
    let loss = cross_entropy(&logits, labels).0.to_f64_lossy();
    if !loss.is_finite() {
        return Err(NnError::Diverged);
    }
    Ok(loss)
}

/// Mini-batch SGD with momentum. Each epoch shuffles the training rows,
/// walks them in batches (the last one may be short) and records the mean
/// training loss plus, when given, the validation loss.
pub fn train<T: Scalar, R: Rng + ?Sized>(
    model: &mut MlpModel<T>,
    x: &Array2<T>,
    y: &[usize],
    val: Option<(&Array2<T>, &[usize])>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<EpochLoss>, NnError> {
    cfg.validate()?;
    if y.is_empty() || x.nrows() != y.len() {
        return Err(NnError::Shape(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let mut velocity: Vec<Dense<T>> =
        model.layers.iter().map(|l| Dense { w: Array2::zeros(l.w.dim()), b: ndarray::Array1::zeros(l.b.len()) }).collect();
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (loss, grads) = loss_and_grad(model, &xb, &yb, cfg.weight_decay, Some(&mut *rng))?;
            total += loss.to_f64_lossy() * batch.len() as f64;
            for ((layer, v), g) in model.layers.iter_mut().zip(&mut velocity).zip(&grads) {
                v.w.mapv_inplace(|e| e * mu);
                v.w += &g.w;
                v.b.mapv_inplace(|e| e * mu);
                v.b += &g.b;
                layer.w.scaled_add(-lr, &v.w);
                layer.b.scaled_add(-lr, &v.b);
            }
        }
        let train_loss = total / y.len() as f64;
        let val_loss = match val {
            Some((vx, vy)) => Some(eval_loss(model, vx, vy)?),
            None => None,
        };
        if !model.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite())) {
            return Err(NnError::Diverged);
        }
        curve.push(EpochLoss { epoch: epoch + 1, train_loss, val_loss });
    }
    Ok(curve)
}
