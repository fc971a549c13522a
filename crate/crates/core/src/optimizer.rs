//! The upper-level search loop.
//!
//! Each particle owns a qubit register with one qubit per bit of the search
//! space. An iteration samples every register (noise channel, then Born
//! measurement), evaluates the decoded candidates, updates personal and global
//! bests, computes the attractor (the per-bit mean of the personal bests) and
//! finally rotates each qubit toward the global best by an angle whose
//! magnitude follows the exponential QPSO displacement law, followed by a
//! random mutation rotation.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{DecodedPoint, SpaceSpec};
use crate::qsim::{self, open_unit, NoiseSpec, QubitRegister, QubitState};
use crate::scalar::Scalar;
use crate::trace::{EvalRecord, Evaluation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
}

/// Candidate scorer. Lower fitness is better and evaluation must be
/// deterministic for a given point.
pub trait Objective: Sync {
    fn evaluate(&self, point: &DecodedPoint) -> Evaluation;
}

impl<F> Objective for F
where
    F: Fn(&DecodedPoint) -> Evaluation + Sync,
{
    fn evaluate(&self, point: &DecodedPoint) -> Evaluation {
        self(point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub pop_size: usize,
    pub max_iter: usize,
    /// Contraction–expansion coefficient of the displacement law.
    pub alpha_step: f64,
    pub p_mut: f64,
    pub theta_max: f64,
    pub theta_clip: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            pop_size: 10,
            max_iter: 50,
            alpha_step: 0.75,
            p_mut: 0.05,
            theta_max: PI / 10.0,
            theta_clip: PI / 8.0,
            noise: NoiseSpec::none(),
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let fail = |m: &str| Err(OptimizerError::Config(m.to_string()));
        if self.pop_size < 1 {
            return fail("pop_size must be at least 1");
        }
        if self.max_iter < 1 {
            return fail("max_iter must be at least 1");
        }
        if !(self.alpha_step > 0.0 && self.alpha_step.is_finite()) {
            return fail("alpha_step must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_mut) {
            return fail("p_mut must lie in [0, 1]");
        }
        if !(self.theta_max >= 0.0 && self.theta_max.is_finite()) {
            return fail("theta_max must be non-negative");
        }
        if !(self.theta_clip > 0.0 && self.theta_clip <= FRAC_PI_2) {
            return fail("theta_clip must lie in (0, π/2]");
        }
        Ok(())
    }

    /// Objective evaluations performed by a full run.
    pub fn budget(&self) -> usize {
        self.pop_size * (self.max_iter + 1)
    }
}

#[derive(Debug, Clone)]
pub struct Particle<T> {
    pub register: QubitRegister<T>,
    pub last_bits: Vec<bool>,
    pub p_best_bits: Vec<bool>,
    pub p_best_fitness: f64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct SwarmState<T> {
    pub particles: Vec<Particle<T>>,
    pub g_best_bits: Vec<bool>,
    pub g_best_point: DecodedPoint,
    pub g_best_fitness: f64,
    /// Completed update rounds; `0` right after initialization.
    pub iteration: usize,
    pub evaluations: usize,
}

/// Per-bit mean of the personal-best bitstrings.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorPoint(pub Vec<f64>);

/// `α·|pb − g|·ln(1/u)` with `u ~ U(0, 1]`. Exponentially distributed with
/// mean `α|pb − g|`.
pub fn qpso_displacement<R: Rng + ?Sized>(pb: f64, g: f64, alpha_step: f64, rng: &mut R) -> f64 {
    let u = open_unit(rng);
    let sep = (pb - g).abs();
    if sep == 0.0 {
        return 0.0;
    }
    alpha_step * sep * (1.0 / u).ln()
}

/// Signed rotation angle for one qubit.
///
/// The magnitude combines the qubit's distance to the attractor and the
/// personal/global disagreement, both scaled by exponential draws, and is
/// clipped to `theta_clip`. The sign points the rotation toward the global
/// best's bit, accounting for the quadrant of the current amplitudes.
pub fn rotation_angle<T: Scalar, R: Rng + ?Sized>(
    q: &QubitState<T>,
    m_d: f64,
    g_d: bool,
    pb_d: bool,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> T {
    let p1 = q.p1().to_f64_lossy();
    let pull = cfg.alpha_step * (p1 - m_d).abs() * (1.0 / open_unit(rng)).ln();
    let base = cfg.alpha_step * cfg.theta_clip * qpso_displacement(pb_d as u8 as f64, g_d as u8 as f64, 1.0, rng);
    let magnitude = (pull + base).min(cfg.theta_clip);
    if magnitude == 0.0 {
        return T::zero();
    }
    // d P(1)/dθ = 2ab, so a positive rotation raises P(1) only when ab ≥ 0.
    let mut sign = if g_d { 1.0 } else { -1.0 };
    if (q.a * q.b).to_f64_lossy() < 0.0 {
        sign = -sign;
    }
    T::lit(sign * magnitude)
}

pub fn compute_attractor<T>(swarm: &SwarmState<T>) -> AttractorPoint {
    let n = swarm.particles.len() as f64;
    let dims = swarm.g_best_bits.len();
    let mut m = vec![0.0; dims];
    for p in &swarm.particles {
        for (acc, &b) in m.iter_mut().zip(&p.p_best_bits) {
            if b {
                *acc += 1.0;
            }
        }
    }
    for v in &mut m {
        *v /= n;
    }
    AttractorPoint(m)
}

fn sample_bits<T: Scalar>(p: &mut Particle<T>, space: &SpaceSpec, noise: &NoiseSpec) -> Vec<bool> {
    let mut bits = p.register.sample(noise, &mut p.rng);
    let n_feat = space.n_feat();
    if n_feat > 0 {
        let probs: Vec<f64> = p.register.qubits[..n_feat].iter().map(|q| q.p1().to_f64_lossy()).collect();
        space.repair_mask(&mut bits, Some(&probs));
    }
    bits
}

fn evaluate_bits<O: Objective + ?Sized>(space: &SpaceSpec, obj: &O, bits: &[bool]) -> (DecodedPoint, Evaluation) {
    match space.decode(bits) {
        Ok(point) => {
            let mut eval = obj.evaluate(&point);
            if eval.fitness.is_nan() {
                eval = Evaluation::failed("objective returned NaN");
            }
            (point, eval)
        }
        Err(e) => (DecodedPoint { feature_mask: Vec::new(), values: Vec::new() }, Evaluation::failed(e.to_string())),
    }
}

/// Samples and evaluates every particle. Evaluations run in parallel; each
/// particle only touches its own random stream.
fn sample_and_evaluate<T: Scalar, O: Objective + ?Sized>(
    particles: &mut [Particle<T>],
    space: &SpaceSpec,
    obj: &O,
    noise: &NoiseSpec,
) -> Vec<(Vec<bool>, DecodedPoint, Evaluation)> {
    particles
        .par_iter_mut()
        .map(|p| {
            let bits = sample_bits(p, space, noise);
            let (point, eval) = evaluate_bits(space, obj, &bits);
            p.last_bits = bits.clone();
            (bits, point, eval)
        })
        .collect()
}

pub fn init_swarm<T: Scalar, O: Objective + ?Sized>(
    space: &SpaceSpec,
    cfg: &OptimizerConfig,
    obj: &O,
    trace: &mut Vec<EvalRecord>,
) -> Result<SwarmState<T>, OptimizerError> {
    cfg.validate()?;
    let dims = space.total_bits();
    let mut particles: Vec<Particle<T>> = (0..cfg.pop_size)
        .map(|i| Particle {
            register: QubitRegister::uniform(dims),
            last_bits: Vec::new(),
            p_best_bits: Vec::new(),
            p_best_fitness: f64::INFINITY,
            rng: qsim::stream_rng(cfg.seed, i as u64),
        })
        .collect();
    let results = sample_and_evaluate(&mut particles, space, obj, &cfg.noise);
    let mut best: Option<(usize, f64)> = None;
    let mut best_point = None;
    for (i, (bits, point, eval)) in results.into_iter().enumerate() {
        let p = &mut particles[i];
        p.p_best_bits = bits.clone();
        p.p_best_fitness = eval.fitness;
        if best.is_none_or(|(_, f)| eval.fitness < f) {
            best = Some((i, eval.fitness));
            best_point = Some(point.clone());
        }
        trace.push(EvalRecord { iteration: 0, particle: i, bits, point, eval });
    }
    let (bi, bf) = best.expect("pop_size >= 1");
    Ok(SwarmState {
        g_best_bits: particles[bi].p_best_bits.clone(),
        g_best_point: best_point.expect("set with best"),
        g_best_fitness: bf,
        particles,
        iteration: 0,
        evaluations: cfg.pop_size,
    })
}

/// One update round: sample, evaluate, update bests, then rotate and mutate
/// every qubit around the new attractor.
pub fn step<T: Scalar, O: Objective + ?Sized>(
    swarm: &mut SwarmState<T>,
    space: &SpaceSpec,
    obj: &O,
    cfg: &OptimizerConfig,
    trace: &mut Vec<EvalRecord>,
) {
    let iteration = swarm.iteration + 1;
    let results = sample_and_evaluate(&mut swarm.particles, space, obj, &cfg.noise);
    swarm.evaluations += results.len();
    for (i, (bits, point, eval)) in results.into_iter().enumerate() {
        let p = &mut swarm.particles[i];
        if eval.fitness < p.p_best_fitness {
            p.p_best_fitness = eval.fitness;
            p.p_best_bits = bits.clone();
        }
        if eval.fitness < swarm.g_best_fitness {
            swarm.g_best_fitness = eval.fitness;
            swarm.g_best_bits = bits.clone();
            swarm.g_best_point = point.clone();
        }
        trace.push(EvalRecord { iteration, particle: i, bits, point, eval });
    }

    let attractor = compute_attractor(swarm);
    let g_best = &swarm.g_best_bits;
    swarm.particles.par_iter_mut().for_each(|p| {
        for d in 0..p.register.qubits.len() {
            let q = p.register.qubits[d];
            let theta = rotation_angle(&q, attractor.0[d], g_best[d], p.p_best_bits[d], cfg, &mut p.rng);
            let q = qsim::rotate(q, theta);
            p.register.qubits[d] = qsim::mutate(q, cfg.theta_max, cfg.p_mut, &mut p.rng);
        }
    });
    swarm.iteration = iteration;
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub best_bits: Vec<bool>,
    pub best_point: DecodedPoint,
    pub best_fitness: f64,
    pub trace: Vec<EvalRecord>,
    pub evaluations: usize,
}

/// Initialization followed by `max_iter` update rounds.
pub fn run<T: Scalar, O: Objective + ?Sized>(
    space: &SpaceSpec,
    obj: &O,
    cfg: &OptimizerConfig,
) -> Result<RunOutcome, OptimizerError> {
    let mut trace = Vec::with_capacity(cfg.budget());
    let mut swarm = init_swarm::<T, O>(space, cfg, obj, &mut trace)?;
    for _ in 0..cfg.max_iter {
        step(&mut swarm, space, obj, cfg, &mut trace);
    }
    Ok(RunOutcome {
        best_bits: swarm.g_best_bits,
        best_point: swarm.g_best_point,
        best_fitness: swarm.g_best_fitness,
        evaluations: swarm.evaluations,
        trace,
    })
}

/// Uniform random bitstrings through the same decode/objective path, with the
/// same evaluation budget as [`run`].
pub fn random_search<O: Objective + ?Sized>(
    space: &SpaceSpec,
    obj: &O,
    cfg: &OptimizerConfig,
) -> Result<RunOutcome, OptimizerError> {
    cfg.validate()?;
    let rounds = cfg.max_iter + 1;
    let mut rngs: Vec<ChaCha8Rng> = (0..cfg.pop_size).map(|i| qsim::stream_rng(cfg.seed, i as u64)).collect();
    let mut trace = Vec::with_capacity(cfg.budget());
    let mut best: Option<(Vec<bool>, DecodedPoint, f64)> = None;
    for iteration in 0..rounds {
        let results: Vec<_> = rngs
            .par_iter_mut()
            .map(|rng| {
                let mut bits: Vec<bool> = (0..space.total_bits()).map(|_| rng.random::<bool>()).collect();
                space.repair_mask(&mut bits, None);
                let (point, eval) = evaluate_bits(space, obj, &bits);
                (bits, point, eval)
            })
            .collect();
        for (particle, (bits, point, eval)) in results.into_iter().enumerate() {
            if best.as_ref().is_none_or(|(_, _, f)| eval.fitness < *f) {
                best = Some((bits.clone(), point.clone(), eval.fitness));
            }
            trace.push(EvalRecord { iteration, particle, bits, point, eval });
        }
    }
    let (best_bits, best_point, best_fitness) = best.expect("at least one round");
    Ok(RunOutcome { best_bits, best_point, best_fitness, evaluations: trace.len(), trace })
}
