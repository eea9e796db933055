//! Monte Carlo experiment drivers measuring the weak convergence rate of
//! the particle system toward its common-noise limit.
//!
//! The central estimator compares `E[Π_j G_j(μ^N_{t_j})]` across an
//! increasing particle ladder against one limit-cloud reference, with three
//! variance controls:
//!
//! - common random numbers: initial positions and per-particle Brownian
//!   streams are keyed by particle id, so ladder rungs share them;
//! - a pair of control variates built from the common-translation
//!   martingale increments (jump translations for the particle system,
//!   common Brownian translation for the limit): one with deterministic
//!   decay weights toward the observation horizon, one additionally
//!   weighted by the observable's translation sensitivity at the
//!   pre-increment state — both weights are predictable and the increments
//!   exactly centered, so the expectations are exactly zero for every model
//!   and the estimator stays unbiased with fitted coefficients;
//! - pilot phases that fit those coefficients on disjoint replication ids
//!   and abort loudly when the requested budget cannot resolve the smallest
//!   expected error.
//!
//! The reference runs on the same time grid as the rungs, so the shared
//! drift/volatility discretization bias cancels in the difference instead
//! of polluting the small top-rung errors.

use crate::functional::PolynomialFunctional;
use crate::jump::JumpLaw;
use crate::measure::{DiscreteMeasure, MeasureError};
use crate::model::Model;
use crate::sim::{
    mean_and_std_error, simulate_limit_process, simulate_particle_system, steps_for,
    InitialCondition, LimitRng, ParticleCloud, SimError, SystemRng,
};
use rayon::prelude::*;
use thiserror::Error;

/// Default limit-cloud size multiplier over the largest ladder rung.
pub const DEFAULT_CLOUD_MULTIPLIER: usize = 16;
/// Replication-id offset of the coefficient-fitting pilot phase.
const PILOT_REPLICATION_BASE: u64 = 1 << 33;
/// A row is signal-dominated when its error exceeds this many standard
/// errors.
const SIGNAL_FACTOR: f64 = 3.0;

/// Errors from experiment drivers.
#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("particle ladder must be nonempty and strictly increasing")]
    BadLadder,
    #[error("at least one observable is required")]
    NoObservables,
    #[error("product observables support at most {max} factors, got {got}")]
    TooManyObservables { max: usize, got: usize },
    #[error("observation times must satisfy 0 < t_1 < … < t_n")]
    BadObservationTimes,
    #[error("{what} must be ≥ {min}, got {got}")]
    BudgetTooSmall {
        what: &'static str,
        min: usize,
        got: usize,
    },
    #[error(
        "experiment underpowered: smallest expected error {weak_error:.3e} is below \
         {SIGNAL_FACTOR}× its projected standard error {projected_std_error:.3e}; \
         an estimated {required_replications} replications would be needed"
    )]
    Underpowered {
        weak_error: f64,
        projected_std_error: f64,
        required_replications: usize,
    },
}

/// Monte Carlo resources of a ladder experiment.
#[derive(Debug, Clone)]
pub struct LadderConfig {
    pub dt: f64,
    /// Main-phase replications per ladder rung.
    pub replications: usize,
    /// Replications fitting each control-variate coefficient.
    pub pilot_replications: usize,
    /// Replications of the limit-cloud reference.
    pub reference_replications: usize,
    /// Limit-cloud size; default 16× the largest rung.
    pub cloud_size: Option<usize>,
    pub initial: InitialCondition,
    pub seed: u64,
}

/// One ladder rung of measured weak error.
#[derive(Debug, Clone, Copy)]
pub struct RateRow {
    pub particles: usize,
    pub weak_error: f64,
    pub std_error: f64,
    /// weak_error · √N.
    pub scaled_error: f64,
}

impl RateRow {
    /// Whether the measured error stands clear of its own noise.
    pub fn signal_dominated(&self) -> bool {
        self.weak_error > SIGNAL_FACTOR * self.std_error
    }
}

/// Ordinary least squares of ln(weak_error) on ln(N).
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    /// Rows entering the fit (signal-dominated with positive error).
    pub rows_used: usize,
}

/// Weak-error ladder with its scaled-error band and log-log fit.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Rows in increasing-N order.
    pub rows: Vec<RateRow>,
    /// Present when at least two signal-dominated rows exist.
    pub fit: Option<SlopeFit>,
    pub band_max: f64,
    pub band_min: f64,
    /// The limit-cloud reference value and its standard error.
    pub reference: f64,
    pub reference_std_error: f64,
}

/// Which process a weak sample runs on.
#[derive(Clone, Copy)]
enum Side {
    Particle { particles: usize },
    Limit { cloud_size: usize },
}

/// Sensitivity of the product observable to a common translation of the
/// state: d/dε Π_j G_j(m ⊕ ε) at ε = 0, with every factor evaluated at the
/// same measure. Used only as a predictable control-variate weight, so the
/// control stays exactly centered whatever this computes.
fn translation_sensitivity(
    observables: &[(usize, PolynomialFunctional)],
    measure: &DiscreteMeasure,
) -> f64 {
    let prepared: Vec<_> = observables.iter().map(|(_, g)| g.prepare(measure)).collect();
    let mut total = 0.0;
    for (j, pj) in prepared.iter().enumerate() {
        let mut term = measure.integrate(|x| pj.lions(x));
        for (k, pk) in prepared.iter().enumerate() {
            if k != j {
                term *= pk.value();
            }
        }
        total += term;
    }
    total
}

/// One replication of the product observable together with its two
/// common-translation controls (both exactly centered): the plain
/// decay-weighted increment sum and the sensitivity-weighted one.
#[allow(clippy::too_many_arguments)]
fn weak_sample<M: Model>(
    model: &M,
    law: &JumpLaw,
    side: Side,
    observables: &[(usize, PolynomialFunctional)],
    n_steps: usize,
    dt: f64,
    initial: &InitialCondition,
    seed: u64,
    replication: u64,
) -> Result<(f64, f64, f64), ExpError> {
    let size = match side {
        Side::Particle { particles } => particles,
        Side::Limit { cloud_size } => cloud_size,
    };
    let positions = initial.positions(size, seed, replication)?;
    let decay = 1.0 - dt;
    let mut product = 1.0;
    let mut control = 0.0;
    let mut weighted_control = 0.0;
    let mut previous_offset = 0.0;
    // Sensitivity at the pre-increment state, refreshed after each step so
    // the weight applied to increment s was computed from state s − 1.
    let mut pending_weight = 0.0;
    let mut fault: Option<ExpError> = None;
    {
        let observe = |step: usize, cloud: &ParticleCloud| {
            if fault.is_some() {
                return;
            }
            let measure = match cloud.empirical_measure() {
                Ok(measure) => measure,
                Err(e) => {
                    fault = Some(e.into());
                    return;
                }
            };
            if step >= 1 {
                let offset = cloud.global_offset();
                let increment = offset - previous_offset;
                let horizon_weight = decay.powi((n_steps - step) as i32);
                control += horizon_weight * increment;
                weighted_control += horizon_weight * pending_weight * increment;
                previous_offset = offset;
            }
            pending_weight = translation_sensitivity(observables, &measure);
            for (observation_step, g) in observables {
                if *observation_step == step {
                    product *= g.eval(&measure);
                }
            }
        };
        match side {
            Side::Particle { .. } => {
                let mut rng = SystemRng::new(seed, replication, size);
                simulate_particle_system(model, law, positions, dt, n_steps, &mut rng, observe)?;
            }
            Side::Limit { .. } => {
                let mut rng = LimitRng::new(seed, replication, size);
                simulate_limit_process(
                    model,
                    law.zeta(),
                    positions,
                    dt,
                    n_steps,
                    &mut rng,
                    observe,
                )?;
            }
        }
    }
    if let Some(e) = fault {
        return Err(e);
    }
    Ok((product, control, weighted_control))
}

/// Samples a replication range in parallel (ordered by replication id).
#[allow(clippy::too_many_arguments)]
fn sample_range<M: Model + Sync>(
    model: &M,
    law: &JumpLaw,
    side: Side,
    observables: &[(usize, PolynomialFunctional)],
    n_steps: usize,
    dt: f64,
    initial: &InitialCondition,
    seed: u64,
    first_replication: u64,
    count: usize,
) -> Result<Vec<(f64, f64)>, ExpError> {
    (first_replication..first_replication + count as u64)
        .into_par_iter()
        .map(|replication| {
            weak_sample(
                model,
                law,
                side,
                observables,
                n_steps,
                dt,
                initial,
                seed,
                replication,
            )
        })
        .collect()
}

/// Control-variate coefficient from pilot samples: Cov(V, C)/Var(C), zero
/// when the control carries no variance.
fn control_coefficient(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let mean_value: f64 = samples.iter().map(|&(v, _)| v).sum::<f64>() / n;
    let mean_control: f64 = samples.iter().map(|&(_, c)| c).sum::<f64>() / n;
    let mut covariance = 0.0;
    let mut variance = 0.0;
    for &(value, control) in samples {
        covariance += (value - mean_value) * (control - mean_control);
        variance += (control - mean_control) * (control - mean_control);
    }
    if variance <= f64::MIN_POSITIVE * n {
        0.0
    } else {
        covariance / variance
    }
}

/// Mean and standard error of the control-adjusted values `v − β·c` (the
/// control is exactly centered, so the adjustment is unbiased).
fn adjusted_estimate(samples: &[(f64, f64)], beta: f64) -> Result<(f64, f64), ExpError> {
    let adjusted: Vec<f64> = samples.iter().map(|&(v, c)| v - beta * c).collect();
    Ok(mean_and_std_error(&adjusted)?)
}

/// Standard deviation of the adjusted pilot samples (for power projection).
fn adjusted_pilot_sd(samples: &[(f64, f64)], beta: f64) -> f64 {
    let n = samples.len() as f64;
    let mean: f64 = samples.iter().map(|&(v, c)| v - beta * c).sum::<f64>() / n;
    let ss: f64 = samples
        .iter()
        .map(|&(v, c)| {
            let d = v - beta * c - mean;
            d * d
        })
        .sum();
    (ss / (n - 1.0)).sqrt()
}

/// Least squares of ln(weak_error) on ln(N) over the given rows; `None`
/// with fewer than two rows.
pub fn fit_log_slope(rows: &[(usize, f64)]) -> Option<SlopeFit> {
    if rows.len() < 2 {
        return None;
    }
    let k = rows.len() as f64;
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|&(n, e)| ((n as f64).ln(), e.ln()))
        .collect();
    let mean_x: f64 = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / k;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let slope_std_error = if rows.len() > 2 {
        let residual_ss: f64 = points
            .iter()
            .map(|&(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (residual_ss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(SlopeFit {
        slope,
        intercept,
        slope_std_error,
        rows_used: rows.len(),
    })
}

/// Validated observation steps on the `dt` grid.
fn observation_steps(
    observables: &[(f64, PolynomialFunctional)],
    dt: f64,
) -> Result<(Vec<(usize, PolynomialFunctional)>, usize), ExpError> {
    if observables.is_empty() {
        return Err(ExpError::NoObservables);
    }
    let mut steps = Vec::with_capacity(observables.len());
    let mut horizon = 0usize;
    for (t, g) in observables {
        let step = steps_for(*t, dt)?;
        horizon = horizon.max(step);
        steps.push((step, g.clone()));
    }
    Ok((steps, horizon))
}

/// Measures the weak error `|E[Π_j G_j(μ^N_{t_j})] − E[Π_j G_j(μ̄_{t_j})]|`
/// over an increasing particle ladder, with one limit-cloud reference
/// (computed at half the time step) shared by every rung.
pub fn weak_error_ladder<M: Model + Sync>(
    model: &M,
    law: &JumpLaw,
    observables: &[(f64, PolynomialFunctional)],
    ladder: &[usize],
    config: &LadderConfig,
) -> Result<RateReport, ExpError> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[0] >= w[1]) || ladder[0] == 0 {
        return Err(ExpError::BadLadder);
    }
    for (what, min, got) in [
        ("replications", 2usize, config.replications),
        ("pilot_replications", 2, config.pilot_replications),
        ("reference_replications", 2, config.reference_replications),
    ] {
        if got < min {
            return Err(ExpError::BudgetTooSmall { what, min, got });
        }
    }
    let max_rung = *ladder.last().expect("nonempty ladder");
    let cloud_size = config
        .cloud_size
        .unwrap_or(DEFAULT_CLOUD_MULTIPLIER * max_rung);
    if cloud_size == 0 {
        return Err(ExpError::BudgetTooSmall {
            what: "cloud_size",
            min: 1,
            got: 0,
        });
    }
    let (steps, horizon) = observation_steps(observables, config.dt)?;
    let reference_dt = config.dt / 2.0;
    let reference_steps: Vec<(usize, PolynomialFunctional)> = steps
        .iter()
        .map(|(step, g)| (step * 2, g.clone()))
        .collect();
    let seed = config.seed;
    let reference_side = Side::Limit { cloud_size };

    // Pilot phase: coefficients for the reference and every rung, plus the
    // power check on the top rung (the smallest expected error).
    let reference_pilot = sample_range(
        model,
        law,
        reference_side,
        &reference_steps,
        horizon * 2,
        reference_dt,
        &config.initial,
        seed,
        PILOT_REPLICATION_BASE,
        config.pilot_replications,
    )?;
    let reference_beta = control_coefficient(&reference_pilot);
    let mut rung_betas = Vec::with_capacity(ladder.len());
    let mut top_pilot_mean = 0.0;
    let mut top_pilot_sd = 0.0;
    for &particles in ladder {
        let pilot = sample_range(
            model,
            law,
            Side::Particle { particles },
            &steps,
            horizon,
            config.dt,
            &config.initial,
            seed,
            PILOT_REPLICATION_BASE,
            config.pilot_replications,
        )?;
        let beta = control_coefficient(&pilot);
        if particles == max_rung {
            let n = pilot.len() as f64;
            top_pilot_mean = pilot.iter().map(|&(v, c)| v - beta * c).sum::<f64>() / n;
            top_pilot_sd = adjusted_pilot_sd(&pilot, beta);
        }
        rung_betas.push(beta);
    }
    let reference_pilot_mean = {
        let n = reference_pilot.len() as f64;
        reference_pilot
            .iter()
            .map(|&(v, c)| v - reference_beta * c)
            .sum::<f64>()
            / n
    };
    let reference_pilot_sd = adjusted_pilot_sd(&reference_pilot, reference_beta);
    let projected = (top_pilot_sd * top_pilot_sd / config.replications as f64
        + reference_pilot_sd * reference_pilot_sd / config.reference_replications as f64)
        .sqrt();
    let pilot_count = config.pilot_replications as f64;
    let pilot_std_error = (top_pilot_sd * top_pilot_sd / pilot_count
        + reference_pilot_sd * reference_pilot_sd / pilot_count)
        .sqrt();
    let expected_error = (top_pilot_mean - reference_pilot_mean).abs();
    // One-sided check: abort only when even an optimistic reading of the
    // pilot signal (its estimate plus twice its own noise) stays below the
    // main phase's resolution; borderline cases proceed and the
    // signal-dominated row filter handles residual noise.
    if projected > 0.0 && expected_error + 2.0 * pilot_std_error < SIGNAL_FACTOR * projected {
        let resolvable = expected_error.max(pilot_std_error);
        let scale = (SIGNAL_FACTOR * projected / resolvable).powi(2) * 1.25;
        return Err(ExpError::Underpowered {
            weak_error: expected_error,
            projected_std_error: projected,
            required_replications: (config.replications as f64 * scale).ceil() as usize,
        });
    }

    // Main phase.
    let reference_samples = sample_range(
        model,
        law,
        reference_side,
        &reference_steps,
        horizon * 2,
        reference_dt,
        &config.initial,
        seed,
        0,
        config.reference_replications,
    )?;
    let (reference, reference_std_error) = adjusted_estimate(&reference_samples, reference_beta)?;

    let mut rows = Vec::with_capacity(ladder.len());
    for (&particles, &beta) in ladder.iter().zip(&rung_betas) {
        let samples = sample_range(
            model,
            law,
            Side::Particle { particles },
            &steps,
            horizon,
            config.dt,
            &config.initial,
            seed,
            0,
            config.replications,
        )?;
        let (value, std_error) = adjusted_estimate(&samples, beta)?;
        let weak_error = (value - reference).abs();
        let combined = (std_error * std_error + reference_std_error * reference_std_error).sqrt();
        rows.push(RateRow {
            particles,
            weak_error,
            std_error: combined,
            scaled_error: weak_error * (particles as f64).sqrt(),
        });
    }

    let fit_rows: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.signal_dominated() && r.weak_error > 0.0)
        .map(|r| (r.particles, r.weak_error))
        .collect();
    let fit = fit_log_slope(&fit_rows);
    let band_max = rows.iter().map(|r| r.scaled_error).fold(f64::MIN, f64::max);
    let band_min = rows.iter().map(|r| r.scaled_error).fold(f64::MAX, f64::min);
    Ok(RateReport {
        rows,
        fit,
        band_max,
        band_min,
        reference,
        reference_std_error,
    })
}

/// Weak convergence rate of a single test statistic `G(μ_T)` (for a test
/// function φ, pass its mean functional G(m) = ∫φ dm: by exchangeability
/// E[φ(X^1_T)] = E[∫φ dμ^N_T]).
pub fn rate_experiment<M: Model + Sync>(
    model: &M,
    law: &JumpLaw,
    statistic: &PolynomialFunctional,
    t: f64,
    ladder: &[usize],
    config: &LadderConfig,
) -> Result<RateReport, ExpError> {
    weak_error_ladder(model, law, &[(t, statistic.clone())], ladder, config)
}

/// Maximum number of factors of a product observable.
pub const MAX_PRODUCT_OBSERVABLES: usize = 3;

/// Weak convergence rate of a product observable
/// `Π_j G_j(μ_{t_j})` at strictly increasing positive times (at most
/// [`MAX_PRODUCT_OBSERVABLES`] factors).
pub fn multi_time_polynomial_experiment<M: Model + Sync>(
    model: &M,
    law: &JumpLaw,
    observables: &[(f64, PolynomialFunctional)],
    ladder: &[usize],
    config: &LadderConfig,
) -> Result<RateReport, ExpError> {
    if observables.is_empty() {
        return Err(ExpError::NoObservables);
    }
    if observables.len() > MAX_PRODUCT_OBSERVABLES {
        return Err(ExpError::TooManyObservables {
            max: MAX_PRODUCT_OBSERVABLES,
            got: observables.len(),
        });
    }
    if observables[0].0 <= 0.0
        || observables.windows(2).any(|w| w[0].0 >= w[1].0)
    {
        return Err(ExpError::BadObservationTimes);
    }
    weak_error_ladder(model, law, observables, ladder, config)
}
