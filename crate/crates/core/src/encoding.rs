//! Search-space layout and the bitstring decoder.
//!
//! A candidate is a flat bitstring. The first `n_feat` bits are the feature
//! mask, one bit per input column; every following dimension owns a
//! contiguous segment of `bpp` bits read most-significant bit first. A segment
//! value `v` is mapped linearly onto the dimension's range as
//! `lo + v / (2^bpp − 1) · (hi − lo)` (in log10 space for log dimensions).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("bitstring has {got} bits, space expects {expected}")]
    Length { expected: usize, got: usize },
    #[error("dimension `{name}`: {reason}")]
    InvalidDimension { name: String, reason: String },
    #[error("value {value} for `{name}` is outside its range")]
    OutOfRange { name: String, value: f64 },
    #[error("feature mask has {got} entries, space expects {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("space has no dimension named `{0}`")]
    MissingDimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimKind {
    Continuous,
    LogContinuous,
    IntegerRange,
    CategoricalSet,
    BinaryFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub name: String,
    pub kind: DimKind,
    #[serde(default)]
    pub lo: f64,
    #[serde(default)]
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<f64>>,
    pub bpp: u32,
}

impl DimensionSpec {
    pub fn continuous(name: &str, lo: f64, hi: f64, bpp: u32) -> Self {
        Self { name: name.into(), kind: DimKind::Continuous, lo, hi, choices: None, bpp }
    }

    pub fn log_continuous(name: &str, lo: f64, hi: f64, bpp: u32) -> Self {
        Self { name: name.into(), kind: DimKind::LogContinuous, lo, hi, choices: None, bpp }
    }

    pub fn integer_range(name: &str, lo: i64, hi: i64, bpp: u32) -> Self {
        Self { name: name.into(), kind: DimKind::IntegerRange, lo: lo as f64, hi: hi as f64, choices: None, bpp }
    }

    pub fn categorical(name: &str, choices: Vec<f64>, bpp: u32) -> Self {
        let lo = choices.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = choices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { name: name.into(), kind: DimKind::CategoricalSet, lo, hi, choices: Some(choices), bpp }
    }

    pub fn binary_flag(name: &str) -> Self {
        Self { name: name.into(), kind: DimKind::BinaryFlag, lo: 0.0, hi: 1.0, choices: None, bpp: 1 }
    }

    pub fn validate(&self) -> Result<(), EncodingError> {
        let bad = |reason: &str| Err(EncodingError::InvalidDimension { name: self.name.clone(), reason: reason.into() });
        if self.bpp == 0 || self.bpp > 32 {
            return bad("bpp must be in 1..=32");
        }
        match self.kind {
            DimKind::BinaryFlag => {
                if self.bpp != 1 {
                    return bad("binary flags use exactly one bit");
                }
            }
            DimKind::CategoricalSet => match &self.choices {
                Some(c) if !c.is_empty() && c.iter().all(|x| x.is_finite()) => {}
                _ => return bad("categorical dimensions need a non-empty list of finite choices"),
            },
            DimKind::Continuous | DimKind::LogContinuous | DimKind::IntegerRange => {
                if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
                    return bad("range requires finite lo < hi");
                }
                if self.kind == DimKind::LogContinuous && self.lo <= 0.0 {
                    return bad("log scale requires lo > 0");
                }
                if self.kind == DimKind::IntegerRange && (self.lo.fract() != 0.0 || self.hi.fract() != 0.0) {
                    return bad("integer range bounds must be integers");
                }
            }
        }
        Ok(())
    }

    fn max_code(&self) -> u64 {
        (1u64 << self.bpp) - 1
    }

    /// Maps a segment value onto the dimension's range.
    pub fn decode_code(&self, v: u64) -> f64 {
        let max = self.max_code();
        debug_assert!(v <= max);
        let t = v as f64 / max as f64;
        match self.kind {
            DimKind::BinaryFlag => (v & 1) as f64,
            DimKind::Continuous => {
                if v == max {
                    self.hi
                } else {
                    self.lo + t * (self.hi - self.lo)
                }
            }
            DimKind::LogContinuous => {
                if v == 0 {
                    self.lo
                } else if v == max {
                    self.hi
                } else {
                    let (l, h) = (self.lo.log10(), self.hi.log10());
                    10f64.powf(l + t * (h - l))
                }
            }
            DimKind::IntegerRange => round_half_up(self.lo + t * (self.hi - self.lo)),
            DimKind::CategoricalSet => {
                let choices = self.choices.as_deref().unwrap_or(&[]);
                let idx = round_half_up(t * (choices.len() - 1) as f64) as usize;
                choices[idx.min(choices.len() - 1)]
            }
        }
    }

    /// True when `value` lies within the declared domain.
    pub fn contains(&self, value: f64) -> bool {
        match self.kind {
            DimKind::BinaryFlag => value == 0.0 || value == 1.0,
            DimKind::Continuous | DimKind::LogContinuous => value >= self.lo && value <= self.hi,
            DimKind::IntegerRange => value.fract() == 0.0 && value >= self.lo && value <= self.hi,
            DimKind::CategoricalSet => self.choices.as_deref().unwrap_or(&[]).contains(&value),
        }
    }

    /// Nearest code to `value`.
    pub fn encode_value(&self, value: f64) -> Result<u64, EncodingError> {
        let in_range = match self.kind {
            DimKind::CategoricalSet | DimKind::BinaryFlag => self.contains(value),
            _ => value.is_finite() && value >= self.lo && value <= self.hi,
        };
        if !in_range {
            return Err(EncodingError::OutOfRange { name: self.name.clone(), value });
        }
        let max = self.max_code();
        let guess = match self.kind {
            DimKind::BinaryFlag => return Ok(value as u64),
            DimKind::Continuous | DimKind::IntegerRange => (value - self.lo) / (self.hi - self.lo) * max as f64,
            DimKind::LogContinuous => {
                let (l, h) = (self.lo.log10(), self.hi.log10());
                (value.log10() - l) / (h - l) * max as f64
            }
            DimKind::CategoricalSet => {
                let choices = self.choices.as_deref().unwrap_or(&[]);
                if choices.len() == 1 {
                    return Ok(0);
                }
                let idx = choices.iter().position(|&c| c == value).unwrap_or(0);
                idx as f64 / (choices.len() - 1) as f64 * max as f64
            }
        };
        // The closed-form guess can be off by one after rounding; pick the
        // neighbour whose decoded value is closest.
        let center = guess.round().clamp(0.0, max as f64) as u64;
        let lo = center.saturating_sub(1);
        let hi = (center + 1).min(max);
        let best = (lo..=hi)
            .min_by(|&x, &y| {
                let dx = (self.decode_code(x) - value).abs();
                let dy = (self.decode_code(y) - value).abs();
                dx.partial_cmp(&dy).unwrap().then_with(|| (x.abs_diff(center)).cmp(&y.abs_diff(center)))
            })
            .unwrap_or(center);
        Ok(best)
    }
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// The full search space: `n_feat` mask bits followed by the
/// architecture/training dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct SpaceSpec {
    n_feat: usize,
    dims: Vec<DimensionSpec>,
    offsets: Vec<usize>,
    total_bits: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    n_feat: usize,
    dims: Vec<DimensionSpec>,
}

impl TryFrom<RawSpace> for SpaceSpec {
    type Error = EncodingError;
    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        if raw.dims.len() < raw.n_feat {
            return Err(EncodingError::MaskLength { expected: raw.n_feat, got: raw.dims.len() });
        }
        let (mask, arch) = raw.dims.split_at(raw.n_feat);
        if let Some(d) = mask.iter().find(|d| d.kind != DimKind::BinaryFlag) {
            return Err(EncodingError::InvalidDimension {
                name: d.name.clone(),
                reason: "feature-mask dimensions must be binary flags".into(),
            });
        }
        let names: Vec<&str> = mask.iter().map(|d| d.name.as_str()).collect();
        Ok(SpaceSpec::new(raw.n_feat, arch.to_vec())?.with_feature_names(&names))
    }
}

impl From<SpaceSpec> for RawSpace {
    fn from(s: SpaceSpec) -> Self {
        RawSpace { n_feat: s.n_feat, dims: s.dims }
    }
}

pub const DROPOUT: &str = "dropout";
pub const HIDDEN_WIDTH: &str = "hidden_width";
pub const LEARNING_RATE: &str = "learning_rate";
pub const BATCH_SIZE: &str = "batch_size";
pub const WEIGHT_DECAY: &str = "weight_decay";
pub const N_HIDDEN_LAYERS: &str = "n_hidden_layers";

pub const BATCH_SIZES: [f64; 8] = [32.0, 48.0, 64.0, 96.0, 128.0, 192.0, 256.0, 384.0];

/// The six architecture/training dimensions, with `bpp` bits for the
/// real-valued ones.
pub fn default_arch_dims(bpp: u32) -> Vec<DimensionSpec> {
    vec![
        DimensionSpec::continuous(DROPOUT, 0.0, 0.5, bpp),
        DimensionSpec::integer_range(HIDDEN_WIDTH, 8, 64, 6),
        DimensionSpec::log_continuous(LEARNING_RATE, 1e-4, 1e-1, bpp),
        DimensionSpec::categorical(BATCH_SIZE, BATCH_SIZES.to_vec(), 3),
        DimensionSpec::log_continuous(WEIGHT_DECAY, 1e-6, 1e-2, bpp),
        DimensionSpec::integer_range(N_HIDDEN_LAYERS, 1, 4, 2),
    ]
}

pub fn default_space(n_feat: usize) -> SpaceSpec {
    SpaceSpec::new(n_feat, default_arch_dims(8)).expect("default dimensions are valid")
}

impl SpaceSpec {
    /// Builds a space with `n_feat` mask flags named `f0, f1, ...` followed by
    /// `arch_dims`.
    pub fn new(n_feat: usize, arch_dims: Vec<DimensionSpec>) -> Result<Self, EncodingError> {
        let mut dims: Vec<DimensionSpec> =
            (0..n_feat).map(|i| DimensionSpec::binary_flag(&format!("f{i}"))).collect();
        dims.extend(arch_dims);
        for d in &dims {
            d.validate()?;
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0usize;
        for d in &dims {
            offsets.push(total);
            total += d.bpp as usize;
        }
        Ok(Self { n_feat, dims, offsets, total_bits: total })
    }

    /// Renames the mask flags, e.g. after the dataset's column names.
    pub fn with_feature_names<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        for (d, n) in self.dims.iter_mut().zip(names) {
            if d.kind == DimKind::BinaryFlag {
                d.name = n.as_ref().to_string();
            }
        }
        self
    }

    pub fn n_feat(&self) -> usize {
        self.n_feat
    }

    pub fn dims(&self) -> &[DimensionSpec] {
        &self.dims
    }

    pub fn arch_dims(&self) -> &[DimensionSpec] {
        &self.dims[self.n_feat..]
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    /// Bit range of dimension `i`.
    pub fn segment(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i].bpp as usize
    }

    fn check_len(&self, bits: &[bool]) -> Result<(), EncodingError> {
        if bits.len() != self.total_bits {
            return Err(EncodingError::Length { expected: self.total_bits, got: bits.len() });
        }
        Ok(())
    }

    /// Sets one mask bit if the mask is empty, preferring the feature whose
    /// probability in `priority` is highest (lowest index on ties). Returns
    /// whether a repair happened.
    pub fn repair_mask(&self, bits: &mut [bool], priority: Option<&[f64]>) -> bool {
        if self.n_feat == 0 || bits[..self.n_feat].iter().any(|&b| b) {
            return false;
        }
        let mut pick = 0usize;
        if let Some(p) = priority {
            for i in 1..self.n_feat {
                if p[i] > p[pick] {
                    pick = i;
                }
            }
        }
        bits[pick] = true;
        true
    }

    /// Decodes a bitstring. An empty feature mask is repaired by enabling the
    /// first feature; callers with qubit probabilities should call
    /// [`SpaceSpec::repair_mask`] first.
    pub fn decode(&self, bits: &[bool]) -> Result<DecodedPoint, EncodingError> {
        self.check_len(bits)?;
        let mut mask: Vec<bool> = bits[..self.n_feat].to_vec();
        if self.n_feat > 0 && !mask.iter().any(|&b| b) {
            mask[0] = true;
        }
        let values = (self.n_feat..self.dims.len())
            .map(|i| self.dims[i].decode_code(segment_value(&bits[self.segment(i)])))
            .collect();
        Ok(DecodedPoint { feature_mask: mask, values })
    }

    pub fn decode_hyperparams(&self, bits: &[bool]) -> Result<HyperparamVector, EncodingError> {
        HyperparamVector::from_point(&self.decode(bits)?, self)
    }

    /// Nearest-code inverse of [`SpaceSpec::decode`].
    pub fn encode_point(&self, point: &DecodedPoint) -> Result<Vec<bool>, EncodingError> {
        if point.feature_mask.len() != self.n_feat {
            return Err(EncodingError::MaskLength { expected: self.n_feat, got: point.feature_mask.len() });
        }
        let arch = self.arch_dims();
        if point.values.len() != arch.len() {
            return Err(EncodingError::Length { expected: arch.len(), got: point.values.len() });
        }
        let mut bits = vec![false; self.total_bits];
        bits[..self.n_feat].copy_from_slice(&point.feature_mask);
        for (j, (dim, &value)) in arch.iter().zip(&point.values).enumerate() {
            let code = dim.encode_value(value)?;
            write_segment(&mut bits[self.segment(self.n_feat + j)], code);
        }
        Ok(bits)
    }

    pub fn encode_hyperparams(&self, h: &HyperparamVector) -> Result<Vec<bool>, EncodingError> {
        self.encode_point(&h.to_point(self)?)
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.arch_dims().iter().position(|d| d.name == name)
    }
}

/// Unsigned integer value of a segment, most-significant bit first.
pub fn segment_value(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

fn write_segment(bits: &mut [bool], mut v: u64) {
    for b in bits.iter_mut().rev() {
        *b = v & 1 == 1;
        v >>= 1;
    }
}

/// A decoded candidate: the feature mask plus one value per architecture
/// dimension, in space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedPoint {
    pub feature_mask: Vec<bool>,
    pub values: Vec<f64>,
}

impl DecodedPoint {
    pub fn selected_features(&self) -> usize {
        self.feature_mask.iter().filter(|&&b| b).count()
    }
}

/// Concrete network configuration plus feature mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamVector {
    pub feature_mask: Vec<bool>,
    pub dropout: f64,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub n_hidden_layers: usize,
}

impl HyperparamVector {
    /// Mid-range configuration with every feature enabled.
    pub fn midpoint(n_feat: usize) -> Self {
        Self {
            feature_mask: vec![true; n_feat],
            dropout: 0.25,
            hidden_width: 36,
            learning_rate: 10f64.powf(-2.5),
            batch_size: 128,
            weight_decay: 1e-4,
            n_hidden_layers: 2,
        }
    }

    pub fn from_point(point: &DecodedPoint, space: &SpaceSpec) -> Result<Self, EncodingError> {
        let get = |name: &str| {
            space.dim_index(name).map(|i| point.values[i]).ok_or_else(|| EncodingError::MissingDimension(name.into()))
        };
        Ok(Self {
            feature_mask: point.feature_mask.clone(),
            dropout: get(DROPOUT)?,
            hidden_width: get(HIDDEN_WIDTH)? as usize,
            learning_rate: get(LEARNING_RATE)?,
            batch_size: get(BATCH_SIZE)? as usize,
            weight_decay: get(WEIGHT_DECAY)?,
            n_hidden_layers: get(N_HIDDEN_LAYERS)? as usize,
        })
    }

    pub fn to_point(&self, space: &SpaceSpec) -> Result<DecodedPoint, EncodingError> {
        let values = space
            .arch_dims()
            .iter()
            .map(|d| match d.name.as_str() {
                DROPOUT => Ok(self.dropout),
                HIDDEN_WIDTH => Ok(self.hidden_width as f64),
                LEARNING_RATE => Ok(self.learning_rate),
                BATCH_SIZE => Ok(self.batch_size as f64),
                WEIGHT_DECAY => Ok(self.weight_decay),
                N_HIDDEN_LAYERS => Ok(self.n_hidden_layers as f64),
                other => Err(EncodingError::MissingDimension(other.into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DecodedPoint { feature_mask: self.feature_mask.clone(), values })
    }
}
