//! Classical simulation of single real-amplitude qubits.
//!
//! A qubit is stored as a normalized pair `(a, b)` with `P(1) = b²`. The only
//! unitary needed is the `Ry`-style rotation; Pauli `Y` and `Z` act on the real
//! representation up to an unobservable global phase. Noise channels are
//! unravelled into stochastic trajectories so that a single state is always a
//! pure state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsimError {
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("noise strength {0} is outside [0, 1]")]
    Strength(f64),
}

/// Deterministic generator for stream `index` of a run seeded with `seed`.
///
/// Streams with distinct indices are independent, so a particle's randomness
/// does not depend on the order in which particles are processed.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on `(0, 1]`, safe to pass to `ln`.
#[inline]
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState<T> {
    /// Amplitude of `|0⟩`.
    pub a: T,
    /// Amplitude of `|1⟩`.
    pub b: T,
}

impl<T: Scalar> QubitState<T> {
    pub fn zero() -> Self {
        Self { a: T::one(), b: T::zero() }
    }

    pub fn one() -> Self {
        Self { a: T::zero(), b: T::one() }
    }

    /// Builds a state from arbitrary amplitudes, normalizing them. A zero
    /// vector maps to `|0⟩`.
    pub fn from_amplitudes(a: T, b: T) -> Self {
        Self { a, b }.normalized()
    }

    pub fn norm(&self) -> T {
        self.a.hypot(self.b)
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == T::zero() || !n.is_finite() {
            return Self::zero();
        }
        Self { a: self.a / n, b: self.b / n }
    }

    /// Born probability of measuring `1`.
    #[inline]
    pub fn p1(&self) -> T {
        self.b * self.b
    }

    #[inline]
    pub fn p0(&self) -> T {
        self.a * self.a
    }
}

/// State with `P(1) = p1`, both amplitudes non-negative.
pub fn prepare_qubit<T: Scalar>(p1: f64) -> Result<QubitState<T>, QsimError> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(QsimError::Probability(p1));
    }
    Ok(QubitState { a: T::lit((1.0 - p1).sqrt()), b: T::lit(p1.sqrt()) })
}

pub fn rotate<T: Scalar>(q: QubitState<T>, dtheta: T) -> QubitState<T> {
    let (s, c) = dtheta.sin_cos();
    QubitState { a: q.a * c - q.b * s, b: q.a * s + q.b * c }
}

/// Samples the mutation angle: `Some(θ)` with `θ ~ U(−θ_max, θ_max)` with
/// probability `p_mut`, otherwise `None`.
pub fn sample_mutation_angle<R: Rng + ?Sized>(theta_max: f64, p_mut: f64, rng: &mut R) -> Option<f64> {
    if p_mut <= 0.0 || rng.random::<f64>() >= p_mut {
        return None;
    }
    Some((2.0 * rng.random::<f64>() - 1.0) * theta_max)
}

pub fn mutate<T: Scalar, R: Rng + ?Sized>(
    q: QubitState<T>,
    theta_max: f64,
    p_mut: f64,
    rng: &mut R,
) -> QubitState<T> {
    match sample_mutation_angle(theta_max, p_mut, rng) {
        Some(theta) => rotate(q, T::lit(theta)),
        None => q,
    }
}

/// Samples a bit from the Born distribution. The state itself is untouched;
/// callers re-measure the stored register each iteration.
pub fn measure<T: Scalar, R: Rng + ?Sized>(q: &QubitState<T>, rng: &mut R) -> bool {
    rng.random::<f64>() < q.p1().to_f64_lossy()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    BitFlip,
    Depolarizing,
    AmplitudeDamping,
}

impl NoiseKind {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::None => "noiseless",
            NoiseKind::BitFlip => "bit_flip",
            NoiseKind::Depolarizing => "depolarizing",
            NoiseKind::AmplitudeDamping => "amplitude_damping",
        }
    }
}

/// A single-qubit noise channel and its strength (`p` or `γ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "RawNoiseSpec")]
pub struct NoiseSpec {
    kind: NoiseKind,
    strength: f64,
}

#[derive(Deserialize)]
struct RawNoiseSpec {
    kind: NoiseKind,
    #[serde(default)]
    strength: f64,
}

impl TryFrom<RawNoiseSpec> for NoiseSpec {
    type Error = QsimError;
    fn try_from(raw: RawNoiseSpec) -> Result<Self, Self::Error> {
        NoiseSpec::new(raw.kind, raw.strength)
    }
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, strength: f64) -> Result<Self, QsimError> {
        if kind != NoiseKind::None && !(0.0..=1.0).contains(&strength) {
            return Err(QsimError::Strength(strength));
        }
        Ok(Self { kind, strength: if kind == NoiseKind::None { 0.0 } else { strength } })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn bit_flip(p: f64) -> Result<Self, QsimError> {
        Self::new(NoiseKind::BitFlip, p)
    }

    pub fn depolarizing(p: f64) -> Result<Self, QsimError> {
        Self::new(NoiseKind::Depolarizing, p)
    }

    pub fn amplitude_damping(gamma: f64) -> Result<Self, QsimError> {
        Self::new(NoiseKind::AmplitudeDamping, gamma)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn is_noiseless(&self) -> bool {
        self.kind == NoiseKind::None || self.strength == 0.0
    }

    /// Short stable identifier, e.g. `bit_flip_0.005`.
    pub fn label(&self) -> String {
        match self.kind {
            NoiseKind::None => "noiseless".to_string(),
            k => format!("{}_{}", k.label(), self.strength),
        }
    }
}

#[inline]
fn pauli_x<T: Scalar>(q: QubitState<T>) -> QubitState<T> {
    QubitState { a: q.b, b: q.a }
}

#[inline]
fn pauli_y<T: Scalar>(q: QubitState<T>) -> QubitState<T> {
    QubitState { a: q.b, b: -q.a }
}

#[inline]
fn pauli_z<T: Scalar>(q: QubitState<T>) -> QubitState<T> {
    QubitState { a: q.a, b: -q.b }
}

/// Applies one stochastic trajectory of the channel to `q`.
pub fn apply_noise<T: Scalar, R: Rng + ?Sized>(q: QubitState<T>, spec: &NoiseSpec, rng: &mut R) -> QubitState<T> {
    if spec.is_noiseless() {
        return q;
    }
    let s = spec.strength;
    let out = match spec.kind {
        NoiseKind::None => q,
        NoiseKind::BitFlip => {
            if rng.random::<f64>() < s {
                pauli_x(q)
            } else {
                q
            }
        }
        NoiseKind::Depolarizing => {
            if rng.random::<f64>() < s {
                match rng.random_range(0..3u8) {
                    0 => pauli_x(q),
                    1 => pauli_y(q),
                    _ => pauli_z(q),
                }
            } else {
                q
            }
        }
        NoiseKind::AmplitudeDamping => {
            let jump = s * q.p1().to_f64_lossy();
            if rng.random::<f64>() < jump {
                QubitState::zero()
            } else {
                QubitState { a: q.a, b: q.b * T::lit((1.0 - s).sqrt()) }
            }
        }
    };
    out.normalized()
}

/// One qubit per search dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitRegister<T> {
    pub qubits: Vec<QubitState<T>>,
}

impl<T: Scalar> QubitRegister<T> {
    pub fn uniform(len: usize) -> Self {
        let q = prepare_qubit::<T>(0.5).expect("0.5 is a probability");
        Self { qubits: vec![q; len] }
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.qubits.iter().map(|q| q.p1().to_f64_lossy()).collect()
    }

    /// Applies the channel to a transient copy of every qubit and measures it.
    pub fn sample<R: Rng + ?Sized>(&self, noise: &NoiseSpec, rng: &mut R) -> Vec<bool> {
        self.qubits
            .iter()
            .map(|q| {
                let noisy = apply_noise(*q, noise, rng);
                measure(&noisy, rng)
            })
            .collect()
    }
}
