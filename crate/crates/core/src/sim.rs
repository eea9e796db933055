//! Time-stepping simulation of the interacting particle system and of its
//! mean-field limit under common noise.
//!
//! The N-particle system applies every jump to all particles at once with
//! amplitude u·h/√N, so the cloud stores raw per-particle positions plus a
//! single global offset: a common jump is an O(1) update. The limit process
//! has no jumps; its common Brownian term is likewise a global offset over
//! an M-particle cloud approximating the conditional law.
//!
//! Randomness is drawn from counter-based streams keyed by
//! (seed, replication, role, particle id), so replications are reproducible
//! under any parallel schedule, initial conditions are shared across particle
//! counts, and permuting initial particles permutes trajectories exactly.

use crate::functional::PolynomialFunctional;
use crate::jump::JumpLaw;
use crate::measure::{DiscreteMeasure, MeasureError};
use crate::model::{diffusive_common_vol, MeasureStats, Model};
use crate::rng::{uniform_unit, CounterRng, StreamRole};
use rand_core::RngCore;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance when snapping observation times to the step grid.
const GRID_TOL: f64 = 1e-9;

/// Errors from simulation setup and stepping.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("time step must be positive and finite, got {dt}")]
    BadTimeStep { dt: f64 },
    #[error("horizon must be zero or at least one time step, got T={horizon} with dt={dt}")]
    BadHorizon { horizon: f64, dt: f64 },
    #[error("time {t} is not on the step grid with dt={dt}")]
    OffGrid { t: f64, dt: f64 },
    #[error("cloud needs at least one particle")]
    EmptyCloud,
    #[error("limit cloud size {limit} must be at least the particle count {particles}")]
    LimitCloudTooSmall { limit: usize, particles: usize },
    #[error("initial particle ids must form a permutation of 0..{len}")]
    BadParticleIds { len: usize },
    #[error("initial state expects {expected} positions, got {got}")]
    InitialLength { expected: usize, got: usize },
    #[error("non-finite initial position for particle {particle}")]
    BadInitialPosition { particle: usize },
    #[error("numerical blowup: non-finite position for particle {particle} after step {step}")]
    Blowup { particle: usize, step: usize },
    #[error("non-finite total jump intensity at step {step}")]
    BadIntensity { step: usize },
    #[error("need at least 2 replications, got {got}")]
    TooFewReplications { got: usize },
    #[error("weak-value estimation needs at least one observable")]
    NoObservables,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Static description of one simulation run.
///
/// `limit_cloud` sizes the cloud approximating the conditional limit law;
/// when absent it defaults to 16× the particle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub particles: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub limit_cloud: Option<usize>,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    /// Validates parameter ranges and the time grid.
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::BadTimeStep { dt: self.dt });
        }
        if !self.horizon.is_finite()
            || self.horizon < 0.0
            || (self.horizon > 0.0 && self.horizon < self.dt * (1.0 - GRID_TOL))
        {
            return Err(SimError::BadHorizon {
                horizon: self.horizon,
                dt: self.dt,
            });
        }
        if self.particles == 0 {
            return Err(SimError::EmptyCloud);
        }
        let limit = self.limit_cloud_size();
        if limit < self.particles {
            return Err(SimError::LimitCloudTooSmall {
                limit,
                particles: self.particles,
            });
        }
        steps_for(self.horizon, self.dt)?;
        Ok(())
    }

    /// Number of Euler steps covering the horizon.
    pub fn n_steps(&self) -> Result<usize, SimError> {
        steps_for(self.horizon, self.dt)
    }

    /// Limit-cloud size, defaulting to 16× the particle count.
    pub fn limit_cloud_size(&self) -> usize {
        self.limit_cloud.unwrap_or(16 * self.particles)
    }
}

/// Snaps a time to the step grid, erroring when it does not land on it.
pub fn steps_for(t: f64, dt: f64) -> Result<usize, SimError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::BadTimeStep { dt });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(SimError::OffGrid { t, dt });
    }
    let steps = (t / dt).round();
    if (steps * dt - t).abs() > GRID_TOL * t.abs().max(1.0) {
        return Err(SimError::OffGrid { t, dt });
    }
    Ok(steps as usize)
}

/// The simulated cloud: particle k's effective position is
/// `raw_positions[k] + global_offset`. Common shifts (jumps of the particle
/// system, the common Brownian term of the limit) touch only the offset.
///
/// Particle ids coincide with storage indices: construction from (id,
/// position) pairs normalizes the order, so all internal iteration is in id
/// order and permuting the input permutes nothing internally. This is what
/// makes trajectories exchangeable bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    raw: Vec<f64>,
    offset: f64,
}

impl ParticleCloud {
    /// Cloud with effective positions `positions` and zero offset; particle
    /// ids are assigned in order.
    pub fn new(positions: Vec<f64>) -> Result<Self, SimError> {
        if positions.is_empty() {
            return Err(SimError::EmptyCloud);
        }
        if let Some(particle) = positions.iter().position(|x| !x.is_finite()) {
            return Err(SimError::BadInitialPosition { particle });
        }
        Ok(Self {
            raw: positions,
            offset: 0.0,
        })
    }

    /// Cloud from (id, position) pairs; the ids must form a permutation of
    /// `0..len` and determine each particle's noise streams.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self, SimError> {
        let n = pairs.len();
        let mut raw = vec![f64::NAN; n];
        let mut seen = vec![false; n];
        for &(id, position) in pairs {
            if id >= n || seen[id] {
                return Err(SimError::BadParticleIds { len: n });
            }
            seen[id] = true;
            raw[id] = position;
        }
        Self::new(raw)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Per-particle raw positions (offset not applied).
    pub fn raw_positions(&self) -> &[f64] {
        &self.raw
    }

    /// The accumulated common shift.
    pub fn global_offset(&self) -> f64 {
        self.offset
    }

    /// Effective position of particle `id`.
    pub fn position(&self, id: usize) -> f64 {
        self.raw[id] + self.offset
    }

    /// Effective positions in id order.
    pub fn positions(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| r + self.offset).collect()
    }

    /// Applies a common shift to the whole cloud.
    pub fn apply_common_shift(&mut self, delta: f64) {
        self.offset += delta;
    }

    /// The uniform empirical measure of the effective positions.
    pub fn empirical_measure(&self) -> Result<DiscreteMeasure, MeasureError> {
        DiscreteMeasure::from_points(&self.positions())
    }

    /// Mean of the effective positions.
    pub fn mean(&self) -> f64 {
        let raw_mean: f64 = self.raw.iter().sum::<f64>() / self.raw.len() as f64;
        raw_mean + self.offset
    }

    fn check_finite(&self, step: usize) -> Result<(), SimError> {
        if !self.offset.is_finite() {
            return Err(SimError::Blowup { particle: 0, step });
        }
        for (particle, &r) in self.raw.iter().enumerate() {
            if !r.is_finite() {
                return Err(SimError::Blowup { particle, step });
            }
        }
        Ok(())
    }
}

/// Noise streams of one particle-system replication. Per-particle streams
/// are indexed by particle id; the jump streams are keyed additionally by
/// the particle count so different rungs of an N-ladder draw independent
/// jump noise (their event processes are structurally different), while
/// initial conditions and per-particle Brownian draws coincide across N.
pub struct SystemRng {
    brownian: Vec<CounterRng>,
    jump_count: CounterRng,
    jump_attribution: CounterRng,
    jump_size: CounterRng,
}

impl SystemRng {
    pub fn new(seed: u64, replication: u64, particles: usize) -> Self {
        let n = particles as u64;
        Self {
            brownian: (0..particles)
                .map(|id| CounterRng::for_role(seed, replication, StreamRole::Brownian, id as u64))
                .collect(),
            jump_count: CounterRng::for_role(seed, replication, StreamRole::JumpCount, n),
            jump_attribution: CounterRng::for_role(
                seed,
                replication,
                StreamRole::JumpAttribution,
                n,
            ),
            jump_size: CounterRng::for_role(seed, replication, StreamRole::JumpSize, n),
        }
    }
}

/// Noise streams of one limit-cloud replication: independent per-particle
/// Brownian streams plus the single common path.
pub struct LimitRng {
    brownian: Vec<CounterRng>,
    common: CounterRng,
}

impl LimitRng {
    pub fn new(seed: u64, replication: u64, cloud_size: usize) -> Self {
        Self {
            brownian: (0..cloud_size)
                .map(|id| {
                    CounterRng::for_role(seed, replication, StreamRole::LimitBrownian, id as u64)
                })
                .collect(),
            common: CounterRng::for_role(seed, replication, StreamRole::CommonNoise, 0),
        }
    }
}

/// Initial condition of a cloud.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// I.i.d. standard normal draws, one per particle id.
    StandardNormal,
    /// All particles start at the given point.
    Dirac(f64),
    /// I.i.d. draws from an atomic law.
    Sampled(DiscreteMeasure),
    /// Exact positions, id k starting at `positions[k]`; no randomness.
    Exact(Vec<f64>),
}

impl InitialCondition {
    /// Positions for ids `0..n`. Random variants draw from per-id streams,
    /// so the first n draws agree across different cloud sizes.
    pub fn positions(&self, n: usize, seed: u64, replication: u64) -> Result<Vec<f64>, SimError> {
        if n == 0 {
            return Err(SimError::EmptyCloud);
        }
        let stream =
            |id: usize| CounterRng::for_role(seed, replication, StreamRole::Init, id as u64);
        match self {
            Self::StandardNormal => Ok((0..n)
                .map(|id| StandardNormal.sample(&mut stream(id)))
                .collect()),
            Self::Dirac(x) => {
                if !x.is_finite() {
                    return Err(SimError::BadInitialPosition { particle: 0 });
                }
                Ok(vec![*x; n])
            }
            Self::Sampled(law) => {
                let atoms = law.atoms();
                let cumulative: Vec<f64> = atoms
                    .iter()
                    .scan(0.0, |acc, a| {
                        *acc += a.weight;
                        Some(*acc)
                    })
                    .collect();
                Ok((0..n)
                    .map(|id| {
                        let u = uniform_unit(stream(id).next_u64());
                        let k = cumulative
                            .partition_point(|&c| c < u)
                            .min(atoms.len() - 1);
                        atoms[k].position
                    })
                    .collect())
            }
            Self::Exact(positions) => {
                if positions.len() != n {
                    return Err(SimError::InitialLength {
                        expected: n,
                        got: positions.len(),
                    });
                }
                Ok(positions.clone())
            }
        }
    }
}

/// Reusable per-step buffers.
#[derive(Debug, Default)]
pub struct StepScratch {
    /// Pre-step effective positions.
    positions: Vec<f64>,
    /// Cumulative jump intensities in id order.
    cumulative: Vec<f64>,
}

/// Moment statistics of the pre-step cloud, jump flux not populated (the
/// coefficient functions must not read it — it exists for the limit-side
/// volatility only).
fn pre_step_stats(positions: &[f64]) -> MeasureStats {
    let n = positions.len() as f64;
    let mut mean = 0.0;
    let mut second = 0.0;
    for &x in positions {
        mean += x;
        second += x * x;
    }
    MeasureStats {
        mean: mean / n,
        second_moment: second / n,
        jump_flux: 0.0,
    }
}

/// One Euler step of the N-particle system. Drift and diffusion act on raw
/// positions; the jump count is Poisson with the pre-step total intensity,
/// each event is attributed proportionally to per-particle intensity, and
/// its common shift u·h(μ, X_source)/√N lands on the global offset.
///
/// Returns the number of jump events.
pub fn step_particle_system<M: Model>(
    model: &M,
    law: &JumpLaw,
    cloud: &mut ParticleCloud,
    dt: f64,
    step: usize,
    rng: &mut SystemRng,
    scratch: &mut StepScratch,
) -> Result<u32, SimError> {
    let n = cloud.raw.len();
    let sqrt_dt = dt.sqrt();
    let sqrt_n = (n as f64).sqrt();

    scratch.positions.clear();
    scratch
        .positions
        .extend(cloud.raw.iter().map(|&r| r + cloud.offset));
    let stats = pre_step_stats(&scratch.positions);

    scratch.cumulative.clear();
    let mut total_intensity = 0.0;
    for &x in &scratch.positions {
        total_intensity += model.intensity(&stats, x).max(0.0);
        scratch.cumulative.push(total_intensity);
    }

    for (id, raw) in cloud.raw.iter_mut().enumerate() {
        let x = scratch.positions[id];
        let noise: f64 = StandardNormal.sample(&mut rng.brownian[id]);
        *raw += model.drift(&stats, x) * dt + model.sigma(&stats, x) * sqrt_dt * noise;
    }

    let rate = total_intensity * dt;
    if !rate.is_finite() {
        return Err(SimError::BadIntensity { step });
    }
    let mut events = 0u32;
    if rate > 0.0 {
        let count: f64 = Poisson::new(rate)
            .map_err(|_| SimError::BadIntensity { step })?
            .sample(&mut rng.jump_count);
        events = count as u32;
        for _ in 0..events {
            let target = uniform_unit(rng.jump_attribution.next_u64()) * total_intensity;
            let source = scratch
                .cumulative
                .partition_point(|&c| c <= target)
                .min(n - 1);
            let mark = law.sample(&mut rng.jump_size);
            let shift = mark * model.amplitude(&stats, scratch.positions[source]) / sqrt_n;
            cloud.offset += shift;
        }
    }

    cloud.check_finite(step)?;
    Ok(events)
}

/// Reference step that stores a jump accumulator per particle and adds each
/// common shift to every particle individually, instead of using the global
/// offset. Effective position of particle k is `flow[k] + jump[k]`. Noise
/// consumption matches [`step_particle_system`] draw for draw, so the two
/// representations can be compared bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn step_with_per_particle_jumps<M: Model>(
    model: &M,
    law: &JumpLaw,
    flow: &mut [f64],
    jump: &mut [f64],
    dt: f64,
    step: usize,
    rng: &mut SystemRng,
    scratch: &mut StepScratch,
) -> Result<u32, SimError> {
    let n = flow.len();
    let sqrt_dt = dt.sqrt();
    let sqrt_n = (n as f64).sqrt();

    scratch.positions.clear();
    scratch
        .positions
        .extend(flow.iter().zip(jump.iter()).map(|(&f, &j)| f + j));
    let stats = pre_step_stats(&scratch.positions);

    scratch.cumulative.clear();
    let mut total_intensity = 0.0;
    for &x in &scratch.positions {
        total_intensity += model.intensity(&stats, x).max(0.0);
        scratch.cumulative.push(total_intensity);
    }

    for (id, f) in flow.iter_mut().enumerate() {
        let x = scratch.positions[id];
        let noise: f64 = StandardNormal.sample(&mut rng.brownian[id]);
        *f += model.drift(&stats, x) * dt + model.sigma(&stats, x) * sqrt_dt * noise;
    }

    let rate = total_intensity * dt;
    if !rate.is_finite() {
        return Err(SimError::BadIntensity { step });
    }
    let mut events = 0u32;
    if rate > 0.0 {
        let count: f64 = Poisson::new(rate)
            .map_err(|_| SimError::BadIntensity { step })?
            .sample(&mut rng.jump_count);
        events = count as u32;
        for _ in 0..events {
            let target = uniform_unit(rng.jump_attribution.next_u64()) * total_intensity;
            let source = scratch
                .cumulative
                .partition_point(|&c| c <= target)
                .min(n - 1);
            let mark = law.sample(&mut rng.jump_size);
            let shift = mark * model.amplitude(&stats, scratch.positions[source]) / sqrt_n;
            for j in jump.iter_mut() {
                *j += shift;
            }
        }
    }

    for (particle, (&f, &j)) in flow.iter().zip(jump.iter()).enumerate() {
        if !(f + j).is_finite() {
            return Err(SimError::Blowup { particle, step });
        }
    }
    Ok(events)
}

/// One Euler step of the limit cloud: no jumps; the common volatility
/// ς = ζ(∫h²f dμ̄)^{1/2} multiplies a shared Brownian increment applied to
/// the global offset, while each particle keeps its own diffusion.
pub fn step_limit_cloud<M: Model>(
    model: &M,
    zeta: f64,
    cloud: &mut ParticleCloud,
    dt: f64,
    step: usize,
    rng: &mut LimitRng,
) -> Result<(), SimError> {
    let sqrt_dt = dt.sqrt();
    let stats = MeasureStats::from_positions(model, &cloud.raw, cloud.offset);
    let vol = diffusive_common_vol(zeta, &stats);
    let common: f64 = StandardNormal.sample(&mut rng.common);

    for (id, raw) in cloud.raw.iter_mut().enumerate() {
        let x = *raw + cloud.offset;
        let noise: f64 = StandardNormal.sample(&mut rng.brownian[id]);
        *raw += model.drift(&stats, x) * dt + model.sigma(&stats, x) * sqrt_dt * noise;
    }
    cloud.offset += vol * sqrt_dt * common;

    cloud.check_finite(step)?;
    Ok(())
}

/// Runs the particle system for `n_steps` steps, invoking `observe` with the
/// step index at step 0 (initial state) and after every step. Returns the
/// final cloud.
pub fn simulate_particle_system<M: Model>(
    model: &M,
    law: &JumpLaw,
    initial: Vec<f64>,
    dt: f64,
    n_steps: usize,
    rng: &mut SystemRng,
    mut observe: impl FnMut(usize, &ParticleCloud),
) -> Result<ParticleCloud, SimError> {
    let mut cloud = ParticleCloud::new(initial)?;
    let mut scratch = StepScratch::default();
    observe(0, &cloud);
    for step in 1..=n_steps {
        step_particle_system(model, law, &mut cloud, dt, step, rng, &mut scratch)?;
        observe(step, &cloud);
    }
    Ok(cloud)
}

/// Runs the limit cloud for `n_steps` steps with the same observation
/// contract as [`simulate_particle_system`].
pub fn simulate_limit_process<M: Model>(
    model: &M,
    zeta: f64,
    initial: Vec<f64>,
    dt: f64,
    n_steps: usize,
    rng: &mut LimitRng,
    mut observe: impl FnMut(usize, &ParticleCloud),
) -> Result<ParticleCloud, SimError> {
    let mut cloud = ParticleCloud::new(initial)?;
    observe(0, &cloud);
    for step in 1..=n_steps {
        step_limit_cloud(model, zeta, &mut cloud, dt, step, rng)?;
        observe(step, &cloud);
    }
    Ok(cloud)
}

/// Sums in a fixed pairwise order, independent of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Monte Carlo mean and standard error of per-replication samples, reduced
/// in a fixed order.
pub fn mean_and_std_error(samples: &[f64]) -> Result<(f64, f64), SimError> {
    if samples.len() < 2 {
        return Err(SimError::TooFewReplications {
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let deviations: Vec<f64> = samples.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let variance = pairwise_sum(&deviations) / (n - 1.0);
    Ok((mean, (variance / n).sqrt()))
}

/// The source of trajectories for weak-value estimation.
pub enum TrajectoryKind {
    /// The N-particle jump system.
    ParticleSystem,
    /// The limit cloud; jumps enter only through the derived common
    /// volatility.
    LimitProcess,
}

/// Estimates E[Π_j G_j(μ_{t_j})] over independent replications, one product
/// sample per replication. Observation times must lie on the step grid.
/// Returns (estimate, standard error).
#[allow(clippy::too_many_arguments)]
pub fn estimate_weak_value<M: Model + Sync>(
    kind: TrajectoryKind,
    model: &M,
    law: &JumpLaw,
    initial: &InitialCondition,
    cloud_size: usize,
    dt: f64,
    observables: &[(f64, PolynomialFunctional)],
    seed: u64,
    replications: usize,
) -> Result<(f64, f64), SimError> {
    if replications < 2 {
        return Err(SimError::TooFewReplications { got: replications });
    }
    if observables.is_empty() {
        return Err(SimError::NoObservables);
    }
    let schedule: Vec<usize> = observables
        .iter()
        .map(|(t, _)| steps_for(*t, dt))
        .collect::<Result<_, _>>()?;
    let n_steps = schedule.iter().copied().max().unwrap_or(0);
    let zeta = law.zeta();

    let samples: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|replication| -> Result<f64, SimError> {
            let positions = initial.positions(cloud_size, seed, replication)?;
            let mut product = 1.0;
            let mut fault: Option<MeasureError> = None;
            {
                let observe = |step: usize, cloud: &ParticleCloud| {
                    if fault.is_some() {
                        return;
                    }
                    for (slot, &at) in schedule.iter().enumerate() {
                        if at == step {
                            match cloud.empirical_measure() {
                                Ok(measure) => product *= observables[slot].1.eval(&measure),
                                Err(e) => fault = Some(e),
                            }
                        }
                    }
                };
                match kind {
                    TrajectoryKind::ParticleSystem => {
                        let mut rng = SystemRng::new(seed, replication, cloud_size);
                        simulate_particle_system(
                            model, law, positions, dt, n_steps, &mut rng, observe,
                        )?;
                    }
                    TrajectoryKind::LimitProcess => {
                        let mut rng = LimitRng::new(seed, replication, cloud_size);
                        simulate_limit_process(
                            model, zeta, positions, dt, n_steps, &mut rng, observe,
                        )?;
                    }
                }
            }
            if let Some(e) = fault {
                return Err(e.into());
            }
            Ok(product)
        })
        .collect::<Result<_, _>>()?;

    mean_and_std_error(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelBounds, OuTanh};

    /// Test model with constant coefficients selected per field.
    struct Constants {
        drift_rate: f64, // drift = drift_rate · x
        sigma: f64,
        intensity: f64,
        amplitude: f64,
    }

    impl Model for Constants {
        fn id(&self) -> &'static str {
            "constants"
        }
        fn drift(&self, _stats: &MeasureStats, x: f64) -> f64 {
            self.drift_rate * x
        }
        fn sigma(&self, _stats: &MeasureStats, _x: f64) -> f64 {
            self.sigma
        }
        fn intensity(&self, _stats: &MeasureStats, _x: f64) -> f64 {
            self.intensity
        }
        fn amplitude(&self, _stats: &MeasureStats, _x: f64) -> f64 {
            self.amplitude
        }
        fn bounds(&self) -> ModelBounds {
            ModelBounds {
                intensity_min: 0.0,
                intensity_max: self.intensity,
                amplitude_max: self.amplitude.abs(),
                lip_drift: self.drift_rate.abs(),
                lip_sigma: 0.0,
                lip_intensity_amplitude: 0.0,
                lip_common_vol: 0.0,
            }
        }
    }

    const STILL: Constants = Constants {
        drift_rate: 0.0,
        sigma: 0.0,
        intensity: 0.0,
        amplitude: 1.0,
    };

    #[test]
    fn frozen_dynamics_leave_cloud_unchanged() {
        let law = JumpLaw::rademacher();
        let mut rng = SystemRng::new(1, 0, 3);
        let mut scratch = StepScratch::default();
        let mut cloud = ParticleCloud::new(vec![0.5, -1.0, 2.0]).unwrap();
        let before = cloud.clone();
        for step in 1..=10 {
            step_particle_system(&STILL, &law, &mut cloud, 0.1, step, &mut rng, &mut scratch)
                .unwrap();
        }
        assert_eq!(cloud, before);
    }

    #[test]
    fn explicit_euler_drift_step() {
        let model = Constants {
            drift_rate: -1.0,
            sigma: 0.0,
            intensity: 0.0,
            amplitude: 1.0,
        };
        let law = JumpLaw::rademacher();
        let mut rng = SystemRng::new(1, 0, 1);
        let mut scratch = StepScratch::default();
        let mut cloud = ParticleCloud::new(vec![1.0]).unwrap();
        step_particle_system(&model, &law, &mut cloud, 0.1, 1, &mut rng, &mut scratch).unwrap();
        assert_eq!(cloud.position(0), 0.9);
    }

    #[test]
    fn single_jump_shifts_offset_by_mark_over_sqrt_n() {
        // Marks are ±2, amplitude 1, N = 4, so each event shifts the offset
        // by exactly ±1.0 in floating point.
        let model = Constants {
            drift_rate: 0.0,
            sigma: 0.0,
            intensity: 1.0,
            amplitude: 1.0,
        };
        let law = JumpLaw::finite(vec![(2.0, 0.5), (-2.0, 0.5)]).unwrap();
        let mut single_event_seen = 0;
        for replication in 0..40 {
            let mut rng = SystemRng::new(7, replication, 4);
            let mut scratch = StepScratch::default();
            let mut cloud = ParticleCloud::new(vec![0.0, 0.1, -0.1, 0.2]).unwrap();
            let raw_before = cloud.raw_positions().to_vec();
            let events =
                step_particle_system(&model, &law, &mut cloud, 0.25, 1, &mut rng, &mut scratch)
                    .unwrap();
            // Jumps never touch raw positions (σ = 0, b = 0 here).
            assert_eq!(cloud.raw_positions(), raw_before.as_slice());
            if events == 1 {
                single_event_seen += 1;
                assert_eq!(cloud.global_offset().abs(), 1.0);
            }
            if events == 0 {
                assert_eq!(cloud.global_offset(), 0.0);
            }
        }
        assert!(single_event_seen > 5, "seen {single_event_seen}");
    }

    #[test]
    fn pure_drift_mean_decays_like_the_ode() {
        let model = Constants {
            drift_rate: -1.0,
            sigma: 0.0,
            intensity: 0.0,
            amplitude: 1.0,
        };
        let law = JumpLaw::rademacher();
        let dt = 1e-3;
        let mut rng = SystemRng::new(3, 0, 16);
        let cloud = simulate_particle_system(
            &model,
            &law,
            vec![1.0; 16],
            dt,
            1000,
            &mut rng,
            |_, _| {},
        )
        .unwrap();
        let expected = (-1.0f64).exp();
        assert!(
            (cloud.mean() - expected).abs() < dt,
            "mean={}, expected≈{expected}",
            cloud.mean()
        );
    }

    #[test]
    fn zero_steps_return_initial_state() {
        let law = JumpLaw::asymmetric_two_point();
        let mut rng = SystemRng::new(9, 0, 4);
        let cloud = simulate_particle_system(
            &OuTanh,
            &law,
            vec![1.0, 2.0, 3.0, 4.0],
            0.01,
            0,
            &mut rng,
            |_, _| {},
        )
        .unwrap();
        assert_eq!(cloud.positions(), vec![1.0, 2.0, 3.0, 4.0]);
        let config = SimConfig {
            particles: 4,
            dt: 0.01,
            horizon: 0.0,
            limit_cloud: None,
            seed: 9,
            replications: 1,
        };
        config.validate().unwrap();
        assert_eq!(config.n_steps().unwrap(), 0);
    }

    #[test]
    fn trajectories_are_deterministic_and_replications_differ() {
        let law = JumpLaw::asymmetric_two_point();
        let run = |replication: u64| {
            let init = InitialCondition::StandardNormal
                .positions(8, 42, replication)
                .unwrap();
            let mut rng = SystemRng::new(42, replication, 8);
            simulate_particle_system(&OuTanh, &law, init, 0.01, 200, &mut rng, |_, _| {})
                .unwrap()
        };
        let a = run(0);
        let b = run(0);
        assert_eq!(a, b);
        let c = run(1);
        assert_ne!(a, c);
    }

    #[test]
    fn permuted_initial_pairs_leave_per_id_trajectories_unchanged() {
        let law = JumpLaw::asymmetric_two_point();
        let base = [0.3, -0.7, 1.1, 0.0, 2.2, -1.5];
        let ordered: Vec<(usize, f64)> = base.iter().copied().enumerate().collect();
        let mut permuted = ordered.clone();
        permuted.rotate_left(2);
        permuted.swap(0, 3);

        let run = |pairs: &[(usize, f64)]| {
            let cloud = ParticleCloud::from_pairs(pairs).unwrap();
            let mut rng = SystemRng::new(11, 0, 6);
            let mut scratch = StepScratch::default();
            let mut cloud = cloud;
            for step in 1..=100 {
                step_particle_system(
                    &OuTanh, &law, &mut cloud, 0.02, step, &mut rng, &mut scratch,
                )
                .unwrap();
            }
            cloud
        };
        let a = run(&ordered);
        let b = run(&permuted);
        for id in 0..6 {
            assert_eq!(a.position(id).to_bits(), b.position(id).to_bits());
        }
    }

    #[test]
    fn from_pairs_rejects_non_permutations() {
        assert!(matches!(
            ParticleCloud::from_pairs(&[(0, 1.0), (0, 2.0)]),
            Err(SimError::BadParticleIds { .. })
        ));
        assert!(matches!(
            ParticleCloud::from_pairs(&[(1, 1.0), (2, 2.0)]),
            Err(SimError::BadParticleIds { .. })
        ));
    }

    #[test]
    fn offset_representation_matches_per_particle_reference_bitwise() {
        let law = JumpLaw::asymmetric_two_point();
        let n = 8;
        let init: Vec<f64> = (0..n).map(|i| (i as f64) * 0.3 - 1.0).collect();

        let mut rng_a = SystemRng::new(17, 0, n);
        let mut scratch_a = StepScratch::default();
        let mut cloud = ParticleCloud::new(init.clone()).unwrap();

        let mut rng_b = SystemRng::new(17, 0, n);
        let mut scratch_b = StepScratch::default();
        let mut flow = init;
        let mut jump = vec![0.0; n];

        for step in 1..=300 {
            step_particle_system(
                &OuTanh, &law, &mut cloud, 0.02, step, &mut rng_a, &mut scratch_a,
            )
            .unwrap();
            step_with_per_particle_jumps(
                &OuTanh,
                &law,
                &mut flow,
                &mut jump,
                0.02,
                step,
                &mut rng_b,
                &mut scratch_b,
            )
            .unwrap();
        }
        for k in 0..n {
            assert_eq!(cloud.global_offset().to_bits(), jump[k].to_bits());
            assert_eq!(cloud.raw_positions()[k].to_bits(), flow[k].to_bits());
            assert_eq!(
                cloud.position(k).to_bits(),
                (flow[k] + jump[k]).to_bits()
            );
        }
        assert_ne!(cloud.global_offset(), 0.0);
    }

    #[test]
    fn fourth_moment_stays_bounded_on_the_jump_model() {
        let law = JumpLaw::asymmetric_two_point();
        let init = InitialCondition::StandardNormal.positions(128, 5, 0).unwrap();
        let mut rng = SystemRng::new(5, 0, 128);
        let mut worst = 0.0f64;
        simulate_particle_system(
            &OuTanh,
            &law,
            init,
            1.0 / 128.0,
            128,
            &mut rng,
            |_, cloud| {
                let m4 = cloud
                    .positions()
                    .iter()
                    .map(|x| x.powi(4))
                    .sum::<f64>()
                    / cloud.len() as f64;
                worst = worst.max(m4);
            },
        )
        .unwrap();
        assert!(worst < 10.0, "max fourth moment {worst}");
    }

    #[test]
    fn limit_cloud_variance_grows_linearly_under_pure_common_noise() {
        // b = 0, σ = 0, f ≡ 1, h ≡ 1, ζ = 1: every particle follows
        // x_0 + W_t, so pooled variance ≈ Var(x_0) + T.
        let model = Constants {
            drift_rate: 0.0,
            sigma: 0.0,
            intensity: 1.0,
            amplitude: 1.0,
        };
        let t = 0.5;
        let mut all = Vec::new();
        for replication in 0..200 {
            let init = InitialCondition::StandardNormal
                .positions(64, 23, replication)
                .unwrap();
            let mut rng = LimitRng::new(23, replication, 64);
            let cloud =
                simulate_limit_process(&model, 1.0, init, t / 64.0, 64, &mut rng, |_, _| {})
                    .unwrap();
            all.extend(cloud.positions());
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        assert!((var - 1.5).abs() < 0.15, "pooled variance {var}");
    }

    #[test]
    fn decoupled_limit_matches_independent_diffusion_moments() {
        // ς ≡ 0 via a zero jump law: M independent linear SDEs whose second
        // moment has the closed form e^{-2T}·m2(0) + σ²(1 − e^{-2T})/2.
        let model = Constants {
            drift_rate: -1.0,
            sigma: 0.3,
            intensity: 1.0,
            amplitude: 1.0,
        };
        let zero_law = JumpLaw::finite(vec![(0.0, 1.0)]).unwrap();
        assert_eq!(zero_law.zeta(), 0.0);
        let t = 1.0;
        let steps = 1000;
        let mut second_moments = Vec::new();
        for replication in 0..40 {
            let init = InitialCondition::StandardNormal
                .positions(256, 31, replication)
                .unwrap();
            let mut rng = LimitRng::new(31, replication, 256);
            let cloud = simulate_limit_process(
                &model,
                zero_law.zeta(),
                init,
                t / steps as f64,
                steps,
                &mut rng,
                |_, _| {},
            )
            .unwrap();
            let m2 = cloud.positions().iter().map(|x| x * x).sum::<f64>() / 256.0;
            second_moments.push(m2);
        }
        let (mean, se) = mean_and_std_error(&second_moments).unwrap();
        let exact = (-2.0f64).exp() + 0.09 * (1.0 - (-2.0f64).exp()) / 2.0;
        assert!(
            (mean - exact).abs() < 3.0 * se + 0.01,
            "mean={mean}, exact={exact}, se={se}"
        );
    }

    #[test]
    fn weak_value_of_constant_functional_has_zero_error() {
        let law = JumpLaw::rademacher();
        let (value, se) = estimate_weak_value(
            TrajectoryKind::ParticleSystem,
            &STILL,
            &law,
            &InitialCondition::Dirac(0.3),
            4,
            0.1,
            &[(0.2, PolynomialFunctional::constant(2.5))],
            1,
            8,
        )
        .unwrap();
        assert_eq!(value, 2.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn weak_value_recovers_ode_mean_on_pure_drift() {
        let model = Constants {
            drift_rate: -1.0,
            sigma: 0.4,
            intensity: 0.0,
            amplitude: 1.0,
        };
        let law = JumpLaw::rademacher();
        let g = PolynomialFunctional::builtin("mean").unwrap();
        let (value, se) = estimate_weak_value(
            TrajectoryKind::ParticleSystem,
            &model,
            &law,
            &InitialCondition::Dirac(1.0),
            32,
            1e-3,
            &[(0.5, g)],
            77,
            64,
        )
        .unwrap();
        let expected = (-0.5f64).exp();
        assert!(
            (value - expected).abs() < 3.0 * se + 1e-3,
            "value={value}, expected={expected}, se={se}"
        );
    }

    #[test]
    fn multi_time_product_of_constants_multiplies() {
        let law = JumpLaw::rademacher();
        let (value, _) = estimate_weak_value(
            TrajectoryKind::ParticleSystem,
            &STILL,
            &law,
            &InitialCondition::Dirac(0.0),
            4,
            0.1,
            &[
                (0.1, PolynomialFunctional::constant(2.0)),
                (0.3, PolynomialFunctional::constant(-1.5)),
            ],
            1,
            4,
        )
        .unwrap();
        assert_eq!(value, -3.0);
    }

    #[test]
    fn config_validation_rejects_bad_grids() {
        let base = SimConfig {
            particles: 8,
            dt: 0.1,
            horizon: 1.0,
            limit_cloud: None,
            seed: 0,
            replications: 2,
        };
        base.validate().unwrap();
        assert_eq!(base.limit_cloud_size(), 128);

        let bad_dt = SimConfig { dt: 0.0, ..base.clone() };
        assert!(matches!(bad_dt.validate(), Err(SimError::BadTimeStep { .. })));
        let bad_t = SimConfig { horizon: 0.05, ..base.clone() };
        assert!(matches!(bad_t.validate(), Err(SimError::BadHorizon { .. })));
        let off_grid = SimConfig { horizon: 0.35, ..base.clone() };
        assert!(matches!(off_grid.validate(), Err(SimError::OffGrid { .. })));
        let small_m = SimConfig { limit_cloud: Some(4), ..base };
        assert!(matches!(
            small_m.validate(),
            Err(SimError::LimitCloudTooSmall { .. })
        ));
    }

    #[test]
    fn blowup_reports_step_index() {
        // Explosive drift with a large step diverges quickly to ±inf.
        let model = Constants {
            drift_rate: 1e9,
            sigma: 0.0,
            intensity: 0.0,
            amplitude: 1.0,
        };
        let law = JumpLaw::rademacher();
        let mut rng = SystemRng::new(1, 0, 2);
        let err = simulate_particle_system(
            &model,
            &law,
            vec![1.0, 2.0],
            1e6,
            50,
            &mut rng,
            |_, _| {},
        )
        .unwrap_err();
        match err {
            SimError::Blowup { step, .. } => assert!(step >= 1),
            other => panic!("expected blowup, got {other}"),
        }
    }

    #[test]
    fn initial_conditions_share_draws_across_cloud_sizes() {
        let small = InitialCondition::StandardNormal.positions(8, 4, 2).unwrap();
        let large = InitialCondition::StandardNormal.positions(64, 4, 2).unwrap();
        assert_eq!(&large[..8], &small[..]);

        let sampled = InitialCondition::Sampled(
            DiscreteMeasure::from_points(&[-1.0, 0.0, 1.0]).unwrap(),
        );
        let a = sampled.positions(16, 4, 2).unwrap();
        let b = sampled.positions(32, 4, 2).unwrap();
        assert_eq!(&b[..16], &a[..]);
    }
}
