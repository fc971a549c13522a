use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchKind {
    #[serde(rename = "shallow")]
    Shallow,
    #[serde(rename = "deep", alias = "deep_mlp")]
    DeepMlp,
    #[serde(rename = "res", alias = "res_mlp")]
    ResMlp,
}

impl ArchKind {
    pub const ALL: [ArchKind; 3] = [ArchKind::Shallow, ArchKind::DeepMlp, ArchKind::ResMlp];

    pub fn name(&self) -> &'static str {
        match self {
            ArchKind::Shallow => "shallow",
            ArchKind::DeepMlp => "deep",
            ArchKind::ResMlp => "res",
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shallow" => Ok(ArchKind::Shallow),
            "deep" | "deep_mlp" => Ok(ArchKind::DeepMlp),
            "res" | "res_mlp" => Ok(ArchKind::ResMlp),
            other => Err(format!("unknown architecture `{other}` (expected shallow, deep or res)")),
        }
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Hidden layers for `DeepMlp`, residual blocks for `ResMlp`; ignored
    /// by `Shallow`, which always has one.
    pub n_hidden_layers: usize,
    /// 1 for a binary head, K for a softmax head.
    pub output_dim: usize,
    pub dropout_p: f64,
}

impl Architecture {
    /// `n_classes == 2` selects the single-logit binary head.
    pub fn new(kind: ArchKind, input_dim: usize, hidden_width: usize, n_hidden_layers: usize, n_classes: usize, dropout_p: f64) -> Self {
        let n_hidden_layers = if kind == ArchKind::Shallow { 1 } else { n_hidden_layers };
        let output_dim = if n_classes == 2 { 1 } else { n_classes };
        Self { kind, input_dim, hidden_width, n_hidden_layers, output_dim, dropout_p }
    }

    pub fn is_binary(&self) -> bool {
        self.output_dim == 1
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::Domain("input_dim must be positive".into()));
        }
        if self.hidden_width == 0 || self.n_hidden_layers == 0 {
            return Err(NnError::Domain("hidden width and depth must be positive".into()));
        }
        if self.output_dim == 0 || self.output_dim == 2 {
            return Err(NnError::Domain(format!("invalid output_dim {}", self.output_dim)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(NnError::Domain(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, input to head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let (i, w, o) = (self.input_dim, self.hidden_width, self.output_dim);
        let mut s = vec![(i, w)];
        match self.kind {
            ArchKind::Shallow => {}
            ArchKind::DeepMlp => s.extend(std::iter::repeat_n((w, w), self.n_hidden_layers - 1)),
            ArchKind::ResMlp => s.extend(std::iter::repeat_n((w, w), 2 * self.n_hidden_layers)),
        }
        s.push((w, o));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `fan_in × fan_out`; forward is `x·W + b`.
    pub w: Array2<T>,
    pub b: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    pub layers: Vec<Dense<T>>,
    pub arch: Architecture,
}

/// He-uniform weights (bound `√(6/fan_in)`), zero biases.
pub fn build<T: Scalar, R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<MlpModel<T>, NnError> {
    arch.validate()?;
    let layers = arch
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            Dense {
                w: Array2::from_shape_simple_fn((fan_in, fan_out), || T::lit(dist.sample(rng))),
                b: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpModel { layers, arch: arch.clone() })
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    /// Input fed to each dense layer.
    pub(super) inputs: Vec<Array2<T>>,
    /// Pre-activation outputs of the layers followed by ReLU.
    pub(super) pre: Vec<Option<Array2<T>>>,
    /// Scaled dropout masks applied after those activations.
    pub(super) masks: Vec<Option<Array2<T>>>,
}

fn affine<T: Scalar>(x: &Array2<T>, l: &Dense<T>) -> Array2<T> {
    x.dot(&l.w) + &l.b
}

fn relu<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    z.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

fn dropout_mask<T: Scalar, R: Rng + ?Sized>(shape: (usize, usize), p: f64, rng: &mut R) -> Array2<T> {
    let keep = Bernoulli::new(1.0 - p).expect("valid dropout");
    let scale = T::lit(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(shape, || if keep.sample(rng) { scale } else { T::zero() })
}

impl<T: Scalar> MlpModel<T> {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Raw logits. Dropout is active only when `train_rng` is given and the
    /// dropout probability is nonzero.
    pub fn forward<R: Rng + ?Sized>(&self, x: &Array2<T>, mut train_rng: Option<&mut R>) -> Result<(Array2<T>, Cache<T>), NnError> {
        if x.ncols() != self.arch.input_dim {
            return Err(NnError::Shape(format!("batch has {} columns, model expects {}", x.ncols(), self.arch.input_dim)));
        }
        let p = self.arch.dropout_p;
        let n_layers = self.layers.len();
        let mut cache = Cache { inputs: Vec::with_capacity(n_layers), pre: Vec::new(), masks: Vec::new() };
        let mut act = |z: Array2<T>, cache: &mut Cache<T>| -> Array2<T> {
            let mut h = relu(&z);
            let mask = match train_rng.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    let m = dropout_mask::<T, R>(h.dim(), p, rng);
                    h *= &m;
                    Some(m)
                }
                _ => None,
            };
            cache.pre.push(Some(z));
            cache.masks.push(mask);
            h
        };
        let mut h = x.clone();
        match self.arch.kind {
            ArchKind::Shallow | ArchKind::DeepMlp => {
                for l in &self.layers[..n_layers - 1] {
                    cache.inputs.push(h);
                    let z = affine(cache.inputs.last().unwrap(), l);
                    h = act(z, &mut cache);
                }
            }
            ArchKind::ResMlp => {
                cache.inputs.push(h);
                let z = affine(cache.inputs.last().unwrap(), &self.layers[0]);
                h = act(z, &mut cache);
                for blk in self.layers[1..n_layers - 1].chunks(2) {
                    cache.inputs.push(h.clone());
                    let z = affine(&h, &blk[0]);
                    let u = act(z, &mut cache);
                    let out = affine(&u, &blk[1]);
                    cache.inputs.push(u);
                    cache.pre.push(None);
                    cache.masks.push(None);
                    h = h + out;
                }
            }
        }
        cache.inputs.push(h);
        let logits = affine(cache.inputs.last().unwrap(), &self.layers[n_layers - 1]);
        cache.pre.push(None);
        cache.masks.push(None);
        Ok((logits, cache))
    }

    pub fn predict_logits(&self, x: &Array2<T>) -> Result<Array2<T>, NnError> {
        Ok(self.forward::<rand_chacha::ChaCha8Rng>(x, None)?.0)
    }

    /// Class-probability rows: `[p(1)]` for a binary head, softmax otherwise.
    pub fn predict_proba(&self, x: &Array2<T>) -> Result<Array2<T>, NnError> {
        let logits = self.predict_logits(x)?;
        Ok(if self.arch.is_binary() { logits.mapv(sigmoid) } else { softmax_rows(&logits) })
    }

    /// Parameter gradients given `dlogits = ∂loss/∂logits`.
    pub fn backward(&self, cache: &Cache<T>, dlogits: Array2<T>) -> Vec<Dense<T>> {
        let n = self.layers.len();
        let mut grads: Vec<Option<Dense<T>>> = vec![None; n];
        let grad_of = |input: &Array2<T>, d: &Array2<T>| Dense { w: input.t().dot(d), b: d.sum_axis(Axis(0)) };
        let through_act = |d: Array2<T>, i: usize| -> Array2<T> {
            let mut d = d;
            if let Some(m) = &cache.masks[i] {
                d *= m;
            }
            let z = cache.pre[i].as_ref().expect("activated layer");
            Zip::from(&mut d).and(z).for_each(|g, &z| {
                if z <= T::zero() {
                    *g = T::zero();
                }
            });
            d
        };
        grads[n - 1] = Some(grad_of(&cache.inputs[n - 1], &dlogits));
        let mut dh = dlogits.dot(&self.layers[n - 1].w.t());
        match self.arch.kind {
            ArchKind::Shallow | ArchKind::DeepMlp => {
                for i in (0..n - 1).rev() {
                    let dz = through_act(dh, i);
                    grads[i] = Some(grad_of(&cache.inputs[i], &dz));
                    dh = dz.dot(&self.layers[i].w.t());
                }
            }
            ArchKind::ResMlp => {
                let mut i = n - 2;
                while i >= 2 {
                    // Block (i-1, i): h_out = h_in + W2·u + b2, u = drop(relu(W1·h_in + b1)).
                    grads[i] = Some(grad_of(&cache.inputs[i], &dh));
                    let du = dh.dot(&self.layers[i].w.t());
                    let dz = through_act(du, i - 1);
                    grads[i - 1] = Some(grad_of(&cache.inputs[i - 1], &dz));
                    dh = dh + dz.dot(&self.layers[i - 1].w.t());
                    i -= 2;
                }
                let dz = through_act(dh, 0);
                grads[0] = Some(grad_of(&cache.inputs[0], &dz));
            }
        }
        grads.into_iter().map(|g| g.expect("every layer visited")).collect()
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}
