//! Records produced by objective evaluations and persisted by the harness.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::encoding::DecodedPoint;

/// Training/validation loss after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

/// Outcome of one objective call. Lower fitness is better; failed
/// evaluations carry `+∞` and an error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(serialize_with = "ser_fitness", deserialize_with = "de_fitness")]
    pub fitness: f64,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<EpochLoss>,
}

impl Evaluation {
    pub fn ok(fitness: f64) -> Self {
        if fitness.is_nan() {
            return Self::failed("objective returned NaN");
        }
        Self { fitness, metrics: BTreeMap::new(), error: None, curve: Vec::new() }
    }

    pub fn failed(msg: impl Into<String>) -> Self {
        Self { fitness: f64::INFINITY, metrics: BTreeMap::new(), error: Some(msg.into()), curve: Vec::new() }
    }

    pub fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn is_failure(&self) -> bool {
        self.error.is_some()
    }
}

/// Non-finite fitness is written as `null` so every line stays valid JSON.
fn ser_fitness<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_fitness<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Serde adapter writing non-finite floats as `null` and reading `null`
/// back as NaN.
pub mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One line of `trace.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub particle: usize,
    #[serde(serialize_with = "ser_bits", deserialize_with = "de_bits")]
    pub bits: Vec<bool>,
    pub point: DecodedPoint,
    #[serde(flatten)]
    pub eval: Evaluation,
}

fn ser_bits<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&bits_to_string(bits))
}

fn de_bits<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
    let s = String::deserialize(d)?;
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(serde::de::Error::custom(format!("invalid bit `{other}`"))),
        })
        .collect()
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}
