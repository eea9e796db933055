//! Exact evaluation of the infinitesimal generators of the measure-valued
//! processes on polynomial functionals over discrete measures, and the
//! martingale / semigroup-gap diagnostics built on them.
//!
//! On an atomic measure every integral in the generator formulas is a finite
//! sum, so `gen_limit` and `gen_particle` are exact up to floating point.
//! The N-particle jump term evaluates the functional on the shifted measure
//! directly (via the cancellation-free
//! [`crate::functional::Prepared::shifted_difference`]), keeping it
//! independent of the flat-derivative machinery it is later compared
//! against.

use crate::functional::{FunctionalError, PolynomialFunctional};
use crate::jump::JumpLaw;
use crate::measure::{DiscreteMeasure, MeasureError};
use crate::model::{diffusive_common_vol, MeasureStats, Model};
use crate::sim::{
    mean_and_std_error, simulate_limit_process, simulate_particle_system, steps_for, LimitRng,
    ParticleCloud, SimError, SystemRng,
};
use rayon::prelude::*;
use thiserror::Error;

/// Tolerance for recognizing a uniform empirical measure.
const EMPIRICAL_WEIGHT_TOL: f64 = 1e-12;

/// Errors from generator evaluation and diagnostics.
#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("particle count must be ≥ 1")]
    BadParticleCount,
    #[error("measure has {got} atoms, diagnostic requires exactly {expected}")]
    AtomCount { expected: usize, got: usize },
    #[error("diagnostic requires a uniform empirical measure (weights 1/N)")]
    NotEmpirical,
    #[error("diagnostic requires the diffusive regime (simulable limit)")]
    DiffusiveOnly,
    #[error("knot count {knots} does not divide the {steps} simulation steps")]
    KnotGrid { knots: usize, steps: usize },
    #[error("{what} must be ≥ {min}, got {got}")]
    BudgetTooSmall {
        what: &'static str,
        min: usize,
        got: usize,
    },
}

/// Common volatility of the particle system and the limit in the general
/// (non-specialized) setting.
pub type CommonVolFn = Box<dyn Fn(&MeasureStats, f64) -> f64 + Send + Sync>;
/// Cloud shift caused by one jump event: (stats, source position, mark) ↦ λ.
pub type ParticleShiftFn = Box<dyn Fn(&MeasureStats, f64, f64) -> f64 + Send + Sync>;

/// Which generator pair is being evaluated.
pub enum Regime {
    /// The CLT scaling: jump shifts are u·h(m,x)/√N, the particle system has
    /// no common Brownian term, and the limit's common volatility is derived
    /// as ς(m)² = ζ²∫h²f dm — enforced by construction, never supplied.
    Diffusive,
    /// The general forms: both processes share a supplied common volatility
    /// ς(m,x), the limit keeps its jump term with amplitude h(m,x), and the
    /// per-event cloud shift is a supplied λ(m,x,u).
    General {
        common_vol: CommonVolFn,
        particle_shift: ParticleShiftFn,
    },
}

/// Everything needed to evaluate the generators for one model.
pub struct GeneratorContext<'a, M: Model> {
    pub model: &'a M,
    pub law: &'a JumpLaw,
    pub regime: Regime,
}

impl<'a, M: Model> GeneratorContext<'a, M> {
    pub fn diffusive(model: &'a M, law: &'a JumpLaw) -> Self {
        Self {
            model,
            law,
            regime: Regime::Diffusive,
        }
    }

    pub fn general(
        model: &'a M,
        law: &'a JumpLaw,
        common_vol: CommonVolFn,
        particle_shift: ParticleShiftFn,
    ) -> Self {
        Self {
            model,
            law,
            regime: Regime::General {
                common_vol,
                particle_shift,
            },
        }
    }

    fn is_diffusive(&self) -> bool {
        matches!(self.regime, Regime::Diffusive)
    }

    /// Common volatility entering the limit generator at (m, x).
    fn limit_vol(&self, stats: &MeasureStats, x: f64) -> f64 {
        match &self.regime {
            Regime::Diffusive => diffusive_common_vol(self.law.zeta(), stats),
            Regime::General { common_vol, .. } => common_vol(stats, x),
        }
    }

    /// Common volatility of the particle system itself (zero in the
    /// diffusive scaling: the jumps are the common noise).
    fn particle_vol(&self, stats: &MeasureStats, x: f64) -> f64 {
        match &self.regime {
            Regime::Diffusive => 0.0,
            Regime::General { common_vol, .. } => common_vol(stats, x),
        }
    }
}

/// Limit generator: ∫ L̄(δG(m,·))(m,x) dm(x) + ½∫∫ ∂²ₓᵧδ²G · ς ς dm⊗²,
/// where L̄g = b·g′ + ½(σ² + ς²)·g″ plus, in the general regime only, the
/// jump increment f·[g(x + h) − g(x)] (the diffusive limit is continuous).
pub fn gen_limit<M: Model>(
    g: &PolynomialFunctional,
    m: &DiscreteMeasure,
    ctx: &GeneratorContext<M>,
) -> Result<f64, GenError> {
    g.require_smoothness(2)?;
    let stats = MeasureStats::from_measure(ctx.model, m);
    let prepared = g.prepare(m);

    let mut one_particle = 0.0;
    for atom in m.atoms() {
        let x = atom.position;
        let vol = ctx.limit_vol(&stats, x);
        let sigma = ctx.model.sigma(&stats, x);
        let mut lbar = ctx.model.drift(&stats, x) * prepared.lions(x)
            + 0.5 * (sigma * sigma + vol * vol) * prepared.lions_second(x);
        if !ctx.is_diffusive() {
            let h = ctx.model.amplitude(&stats, x);
            lbar += ctx.model.intensity(&stats, x) * (prepared.delta(x + h) - prepared.delta(x));
        }
        one_particle += atom.weight * lbar;
    }

    let cross = match &ctx.regime {
        Regime::Diffusive => {
            let vol = diffusive_common_vol(ctx.law.zeta(), &stats);
            0.5 * vol * vol * prepared.delta2_mixed_quadrature()
        }
        Regime::General { common_vol, .. } => {
            let mut acc = 0.0;
            for a1 in m.atoms() {
                let v1 = common_vol(&stats, a1.position);
                for a2 in m.atoms() {
                    let v2 = common_vol(&stats, a2.position);
                    acc += a1.weight
                        * a2.weight
                        * v1
                        * v2
                        * prepared.delta2_mixed(a1.position, a2.position);
                }
            }
            0.5 * acc
        }
    };

    Ok(one_particle + cross)
}

/// N-particle generator: the one-particle drift/diffusion part, the jump
/// term N∫∫f·[G(Sh(m,λ)) − G(m)]dν dm evaluated on shifted measures, the
/// common-volatility cross term (zero in the diffusive scaling), and the
/// 1/(2N) idiosyncratic-diffusion correction on the diagonal of δ²G.
pub fn gen_particle<M: Model>(
    g: &PolynomialFunctional,
    m: &DiscreteMeasure,
    n: usize,
    ctx: &GeneratorContext<M>,
) -> Result<f64, GenError> {
    g.require_smoothness(2)?;
    if n == 0 {
        return Err(GenError::BadParticleCount);
    }
    let n_f = n as f64;
    let sqrt_n = n_f.sqrt();
    let stats = MeasureStats::from_measure(ctx.model, m);
    let prepared = g.prepare(m);

    let mut one_particle = 0.0;
    let mut diag_correction = 0.0;
    for atom in m.atoms() {
        let x = atom.position;
        let vol = ctx.particle_vol(&stats, x);
        let sigma = ctx.model.sigma(&stats, x);
        one_particle += atom.weight
            * (ctx.model.drift(&stats, x) * prepared.lions(x)
                + 0.5 * (sigma * sigma + vol * vol) * prepared.lions_second(x));
        diag_correction += atom.weight * sigma * sigma * prepared.delta2_mixed(x, x);
    }
    diag_correction /= 2.0 * n_f;

    let mut jump = 0.0;
    for atom in m.atoms() {
        let x = atom.position;
        let intensity = ctx.model.intensity(&stats, x).max(0.0);
        if intensity == 0.0 {
            continue;
        }
        let mut mark_sum = 0.0;
        for &(u, weight) in ctx.law.integration_points() {
            let shift = match &ctx.regime {
                Regime::Diffusive => u * ctx.model.amplitude(&stats, x) / sqrt_n,
                Regime::General { particle_shift, .. } => particle_shift(&stats, x, u),
            };
            mark_sum += weight * prepared.shifted_difference(m, shift);
        }
        jump += atom.weight * intensity * mark_sum;
    }
    jump *= n_f;

    let cross = match &ctx.regime {
        Regime::Diffusive => 0.0,
        Regime::General { common_vol, .. } => {
            let mut acc = 0.0;
            for a1 in m.atoms() {
                let v1 = common_vol(&stats, a1.position);
                for a2 in m.atoms() {
                    let v2 = common_vol(&stats, a2.position);
                    acc += a1.weight
                        * a2.weight
                        * v1
                        * v2
                        * prepared.delta2_mixed(a1.position, a2.position);
                }
            }
            0.5 * acc
        }
    };

    Ok(one_particle + jump + cross + diag_correction)
}

/// gen_particle − gen_limit: the quantity whose N^{-1/2} decay drives the
/// convergence rate.
pub fn gen_diff<M: Model>(
    g: &PolynomialFunctional,
    m: &DiscreteMeasure,
    n: usize,
    ctx: &GeneratorContext<M>,
) -> Result<f64, GenError> {
    Ok(gen_particle(g, m, n, ctx)? - gen_limit(g, m, ctx)?)
}

/// Requires m to be a uniform empirical measure with the given atom count
/// and returns its positions.
fn empirical_positions(m: &DiscreteMeasure, expected: usize) -> Result<Vec<f64>, GenError> {
    if m.atom_count() != expected {
        return Err(GenError::AtomCount {
            expected,
            got: m.atom_count(),
        });
    }
    let uniform = 1.0 / expected as f64;
    for atom in m.atoms() {
        if (atom.weight - uniform).abs() > EMPIRICAL_WEIGHT_TOL {
            return Err(GenError::NotEmpirical);
        }
    }
    Ok(m.atoms().iter().map(|a| a.position).collect())
}

/// Expands a probability measure into `size` cloud positions by largest-
/// remainder apportionment of the atom weights (deterministic).
pub fn cloud_positions_from_measure(m: &DiscreteMeasure, size: usize) -> Vec<f64> {
    let atoms = m.atoms();
    let mut counts: Vec<usize> = Vec::with_capacity(atoms.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(atoms.len());
    let mut assigned = 0usize;
    for (index, atom) in atoms.iter().enumerate() {
        let exact = atom.weight * size as f64;
        let floor = exact.floor() as usize;
        counts.push(floor);
        assigned += floor;
        remainders.push((exact - floor as f64, index));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, index) in remainders.iter().take(size.saturating_sub(assigned)) {
        counts[index] += 1;
    }
    let mut positions = Vec::with_capacity(size);
    for (index, atom) in atoms.iter().enumerate() {
        positions.extend(std::iter::repeat(atom.position).take(counts[index]));
    }
    positions
}

/// Which process the martingale diagnostic runs on.
#[derive(Debug, Clone, Copy)]
pub enum DynkinTarget {
    /// The N-particle system; the start measure must have exactly N uniform
    /// atoms.
    Particle { particles: usize },
    /// The limit cloud of the given size, seeded from the start measure by
    /// deterministic replication.
    Limit { cloud_size: usize },
}

/// Monte Carlo resources of the martingale diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct DynkinOptions {
    pub replications: usize,
    pub dt: f64,
    /// Number of trapezoid knots over [0, t], endpoints included.
    pub knots: usize,
    pub seed: u64,
    /// Also run at dt/2 to extrapolate a discretization-bias budget.
    pub with_bias_budget: bool,
}

/// Result of the martingale diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct DynkinReport {
    /// E[G(μ_t)] − G(m) − ∫₀ᵗ E[𝒜G(μ_s)] ds, estimated pathwise.
    pub residual: f64,
    pub std_error: f64,
    /// Slope-extrapolated dt-halving budget: 2·|residual(dt) −
    /// residual(dt/2)|; zero when not requested.
    pub bias_budget: f64,
}

/// Checks the defining martingale identity of the generator: along the
/// simulated process, E[G(μ_t)] − G(m) − ∫₀ᵗ E[𝒜G(μ_s)]ds must vanish up
/// to Monte Carlo noise and O(dt) discretization bias. Each replication
/// contributes one pathwise residual (the Dynkin martingale at t), so the
/// standard error reflects the martingale's variance, not the much larger
/// variance of the individual terms.
pub fn dynkin_residual<M: Model + Sync>(
    g: &PolynomialFunctional,
    m: &DiscreteMeasure,
    t: f64,
    target: DynkinTarget,
    ctx: &GeneratorContext<M>,
    options: &DynkinOptions,
) -> Result<DynkinReport, GenError> {
    g.require_smoothness(2)?;
    if !ctx.is_diffusive() {
        return Err(GenError::DiffusiveOnly);
    }
    if options.replications < 2 {
        return Err(GenError::BudgetTooSmall {
            what: "replications",
            min: 2,
            got: options.replications,
        });
    }
    if options.knots < 2 {
        return Err(GenError::BudgetTooSmall {
            what: "knots",
            min: 2,
            got: options.knots,
        });
    }
    if t == 0.0 {
        return Ok(DynkinReport {
            residual: 0.0,
            std_error: 0.0,
            bias_budget: 0.0,
        });
    }

    let residual_at = |dt: f64| -> Result<(f64, f64), GenError> {
        let values = dynkin_samples(g, m, t, target, ctx, options, dt)?;
        Ok(mean_and_std_error(&values)?)
    };

    let (residual, std_error) = residual_at(options.dt)?;
    let bias_budget = if options.with_bias_budget {
        let (half_residual, _) = residual_at(options.dt / 2.0)?;
        2.0 * (residual - half_residual).abs()
    } else {
        0.0
    };
    Ok(DynkinReport {
        residual,
        std_error,
        bias_budget,
    })
}

/// Per-replication pathwise Dynkin residuals at the given dt.
fn dynkin_samples<M: Model + Sync>(
    g: &PolynomialFunctional,
    m: &DiscreteMeasure,
    t: f64,
    target: DynkinTarget,
    ctx: &GeneratorContext<M>,
    options: &DynkinOptions,
    dt: f64,
) -> Result<Vec<f64>, GenError> {
    let n_steps = steps_for(t, dt)?;
    let segments = options.knots - 1;
    if n_steps == 0 || n_steps % segments != 0 {
        return Err(GenError::KnotGrid {
            knots: options.knots,
            steps: n_steps,
        });
    }
    let stride = n_steps / segments;
    let knot_dt = t / segments as f64;

    let initial = match target {
        DynkinTarget::Particle { particles } => empirical_positions(m, particles)?,
        DynkinTarget::Limit { cloud_size } => cloud_positions_from_measure(m, cloud_size),
    };
    let g_start = g.eval(m);

    (0..options.replications as u64)
        .into_par_iter()
        .map(|replication| -> Result<f64, GenError> {
            let mut knot_values: Vec<f64> = Vec::with_capacity(options.knots);
            let mut fault: Option<GenError> = None;
            let mut final_value = g_start;
            {
                let mut observe = |step: usize, cloud: &ParticleCloud| {
                    if fault.is_some() {
                        return;
                    }
                    let at_knot = step % stride == 0;
                    if !at_knot && step != n_steps {
                        return;
                    }
                    let result = (|| -> Result<(), GenError> {
                        let measure = cloud.empirical_measure()?;
                        if at_knot {
                            let a_value = match target {
                                DynkinTarget::Particle { particles } => {
                                    gen_particle(g, &measure, particles, ctx)?
                                }
                                DynkinTarget::Limit { .. } => gen_limit(g, &measure, ctx)?,
                            };
                            knot_values.push(a_value);
                        }
                        if step == n_steps {
                            final_value = g.eval(&measure);
                        }
                        Ok(())
                    })();
                    if let Err(e) = result {
                        fault = Some(e);
                    }
                };
                match target {
                    DynkinTarget::Particle { .. } => {
                        let mut rng = SystemRng::new(options.seed, replication, initial.len());
                        simulate_particle_system(
                            ctx.model,
                            ctx.law,
                            initial.clone(),
                            dt,
                            n_steps,
                            &mut rng,
                            &mut observe,
                        )?;
                    }
                    DynkinTarget::Limit { .. } => {
                        let mut rng = LimitRng::new(options.seed, replication, initial.len());
                        simulate_limit_process(
                            ctx.model,
                            ctx.law.zeta(),
                            initial.clone(),
                            dt,
                            n_steps,
                            &mut rng,
                            &mut observe,
                        )?;
                    }
                }
            }
            if let Some(e) = fault {
                return Err(e);
            }
            let mut integral = 0.5 * (knot_values[0] + knot_values[options.knots - 1]);
            for value in &knot_values[1..options.knots - 1] {
                integral += value;
            }
            integral *= knot_dt;
            Ok(final_value - g_start - integral)
        })
        .collect()
}

/// Monte Carlo resources of the semigroup-gap diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct TrotterOptions {
    pub dt: f64,
    /// Trapezoid knots over the s-integral, endpoints included.
    pub knots: usize,
    /// Paired replications used to fit the control-variate coefficients.
    pub pilot_replications: usize,
    /// Paired replications of the direct semigroup difference.
    pub lhs_replications: usize,
    /// Independent particle paths supplying evaluation measures for the
    /// integrand.
    pub outer_paths: usize,
    /// Measures (subsampled from the outer snapshots) used to fit the
    /// regression proxy of the limit semigroup.
    pub training_measures: usize,
    /// Limit trajectories per training measure labelling the proxy.
    pub inner_replications: usize,
    /// Relative ridge strength of the proxy fit.
    pub ridge: f64,
    pub seed: u64,
}

impl TrotterOptions {
    /// Doubles every Monte Carlo budget (documented retry path of this
    /// high-variance diagnostic).
    pub fn doubled(&self) -> Self {
        Self {
            pilot_replications: self.pilot_replications * 2,
            lhs_replications: self.lhs_replications * 2,
            outer_paths: self.outer_paths * 2,
            training_measures: self.training_measures * 2,
            inner_replications: self.inner_replications * 2,
            ..*self
        }
    }
}

/// Both sides of the semigroup-difference identity
/// (P̄_t − P^N_t)G(m) = ∫₀ᵗ P^N_{t−s}(Ā − A^N)P̄_sG(m) ds,
/// each with its own standard error.
#[derive(Debug, Clone, Copy)]
pub struct TrotterReport {
    pub lhs: f64,
    pub lhs_std_error: f64,
    pub rhs: f64,
    pub rhs_std_error: f64,
}

impl TrotterReport {
    /// Whether the two sides agree within `z` combined standard errors.
    pub fn agrees(&self, z: f64) -> bool {
        let combined = (self.lhs_std_error * self.lhs_std_error
            + self.rhs_std_error * self.rhs_std_error)
            .sqrt();
        (self.lhs - self.rhs).abs() <= z * combined
    }
}

/// Replication-id offsets keeping the diagnostic's stream families disjoint
/// within one seed.
const OUTER_REPLICATION_BASE: u64 = 1 << 32;
const INNER_REPLICATION_BASE: u64 = 2 << 32;

/// Measure-statistics features of the regression proxy: 1, m̄, ∫x²dm, m̄²,
/// ∫x³dm, m̄·∫x²dm, m̄³.
fn proxy_features(m: &DiscreteMeasure) -> [f64; 7] {
    let mean = m.mean();
    let m2 = m.integrate(|x| x * x);
    let m3 = m.integrate(|x| x * x * x);
    [1.0, mean, m2, mean * mean, m3, mean * m2, mean * mean * mean]
}

/// The non-constant proxy features as functionals, index-aligned with
/// `proxy_features[1..]`.
fn proxy_dictionary() -> Vec<PolynomialFunctional> {
    use crate::kernel::{Factor, Kernel, Term};
    let mean_times_m2 = PolynomialFunctional::new(
        "mean_times_second_moment",
        Kernel::new(
            2,
            vec![Term {
                coeff: 1.0,
                factors: vec![Factor::Power(1), Factor::Power(2)],
            }],
        )
        .expect("static kernel"),
        4,
    );
    vec![
        PolynomialFunctional::builtin("mean").expect("builtin"),
        PolynomialFunctional::builtin("second_moment").expect("builtin"),
        PolynomialFunctional::builtin("mean_squared").expect("builtin"),
        PolynomialFunctional::builtin("third_moment").expect("builtin"),
        mean_times_m2,
        PolynomialFunctional::builtin("mean_cubed").expect("builtin"),
    ]
}

/// Least squares of `labels` on `features` rows with a relative ridge
/// penalty; all-zero columns are dropped (coefficient 0).
fn ridge_fit(features: &[Vec<f64>], labels: &[f64], relative_ridge: f64) -> Vec<f64> {
    let rows = features.len();
    let cols = features[0].len();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(cols, cols);
    let mut moment = nalgebra::DVector::<f64>::zeros(cols);
    for (row, &label) in features.iter().zip(labels) {
        for i in 0..cols {
            moment[i] += row[i] * label;
            for j in 0..cols {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    let scale = gram.diagonal().max().max(f64::MIN_POSITIVE) / rows as f64;
    for i in 0..cols {
        let diag = gram[(i, i)];
        gram[(i, i)] = diag + relative_ridge * diag.max(scale * 1e-9) + scale * 1e-12;
    }
    gram.cholesky()
        .map(|ch| ch.solve(&moment).iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; cols])
}

/// One paired lhs replication: (limit G − particle G, limit common offset,
/// particle common offset). Both offsets are zero-mean exactly, so they
/// serve as control variates without biasing the difference.
fn trotter_lhs_sample<M: Model>(
    g: &PolynomialFunctional,
    initial: &[f64],
    t_steps: usize,
    dt: f64,
    ctx: &GeneratorContext<M>,
    seed: u64,
    replication: u64,
) -> Result<(f64, f64, f64), GenError> {
    let mut system_rng = SystemRng::new(seed, replication, initial.len());
    let particle_cloud = simulate_particle_system(
        ctx.model,
        ctx.law,
        initial.to_vec(),
        dt,
        t_steps,
        &mut system_rng,
        |_, _| {},
    )?;
    let mut limit_rng = LimitRng::new(seed, replication, initial.len());
    let limit_cloud = simulate_limit_process(
        ctx.model,
        ctx.law.zeta(),
        initial.to_vec(),
        dt,
        t_steps,
        &mut limit_rng,
        |_, _| {},
    )?;
    let difference =
        g.eval(&limit_cloud.empirical_measure()?) - g.eval(&particle_cloud.empirical_measure()?);
    Ok((
        difference,
        limit_cloud.global_offset(),
        particle_cloud.global_offset(),
    ))
}

/// Estimates both sides of the semigroup-difference identity at a uniform
/// empirical start measure. High-variance diagnostic: the two sides are
/// independent nested Monte Carlo constructions and only agreement within
/// the reported errors is claimed, not tightness.
///
/// The left side pairs particle and limit runs and removes the exactly
/// centered common-translation martingales of both processes as control
/// variates (coefficients fitted on a pilot phase, applied to a disjoint
/// main phase, so the estimator stays unbiased). The right side snapshots
/// outer particle paths on the knot grid, fits per-knot polynomial proxies
/// of the limit semigroup on inner limit trajectories, and applies the
/// generator difference to the proxy term by term (the proxy's regression
/// uncertainty enters the error as a split-half refit).
pub fn trotter_gap<M: Model + Sync>(
    g: &PolynomialFunctional,
    m: &DiscreteMeasure,
    t: f64,
    particles: usize,
    ctx: &GeneratorContext<M>,
    options: &TrotterOptions,
) -> Result<TrotterReport, GenError> {
    g.require_smoothness(2)?;
    if !ctx.is_diffusive() {
        return Err(GenError::DiffusiveOnly);
    }
    for (what, min, got) in [
        ("knots", 2usize, options.knots),
        ("pilot_replications", 2, options.pilot_replications),
        ("lhs_replications", 2, options.lhs_replications),
        ("outer_paths", 2, options.outer_paths),
        ("training_measures", 8, options.training_measures),
        ("inner_replications", 2, options.inner_replications),
    ] {
        if got < min {
            return Err(GenError::BudgetTooSmall { what, min, got });
        }
    }
    let initial = empirical_positions(m, particles)?;
    if t == 0.0 {
        return Ok(TrotterReport {
            lhs: 0.0,
            lhs_std_error: 0.0,
            rhs: 0.0,
            rhs_std_error: 0.0,
        });
    }
    let n_steps = steps_for(t, options.dt)?;
    let segments = options.knots - 1;
    if n_steps == 0 || n_steps % segments != 0 {
        return Err(GenError::KnotGrid {
            knots: options.knots,
            steps: n_steps,
        });
    }
    let stride = n_steps / segments;
    let knot_dt = t / segments as f64;
    let seed = options.seed;

    // ---- Left side: direct paired semigroup difference with offset
    // control variates.
    let pilot: Vec<(f64, f64, f64)> = (0..options.pilot_replications as u64)
        .into_par_iter()
        .map(|r| trotter_lhs_sample(g, &initial, n_steps, options.dt, ctx, seed, r))
        .collect::<Result<_, _>>()?;
    let pilot_features: Vec<Vec<f64>> =
        pilot.iter().map(|&(_, u, v)| vec![1.0, u, v]).collect();
    let pilot_labels: Vec<f64> = pilot.iter().map(|&(d, _, _)| d).collect();
    let mut beta = ridge_fit(&pilot_features, &pilot_labels, 1e-9);
    for (column, coefficient) in beta.iter_mut().enumerate().skip(1) {
        let energy: f64 = pilot_features.iter().map(|row| row[column] * row[column]).sum();
        if energy <= f64::MIN_POSITIVE * pilot_features.len() as f64 {
            *coefficient = 0.0;
        }
    }
    let main_start = options.pilot_replications as u64;
    let adjusted: Vec<f64> = (main_start..main_start + options.lhs_replications as u64)
        .into_par_iter()
        .map(|r| {
            trotter_lhs_sample(g, &initial, n_steps, options.dt, ctx, seed, r)
                .map(|(d, u, v)| d - beta[1] * u - beta[2] * v)
        })
        .collect::<Result<_, _>>()?;
    let (lhs, lhs_std_error) = mean_and_std_error(&adjusted)?;

    // ---- Right side: outer particle snapshots on the knot grid.
    struct Snapshot {
        positions: Vec<f64>,
        /// gen_diff of every dictionary functional at this measure.
        dictionary_diffs: Vec<f64>,
        /// gen_diff of G itself (used at the s=0 knot where the limit
        /// semigroup is the identity).
        g_diff: f64,
        features: [f64; 7],
    }
    let dictionary = proxy_dictionary();
    let outer: Vec<Vec<Snapshot>> = (0..options.outer_paths as u64)
        .into_par_iter()
        .map(|path| -> Result<Vec<Snapshot>, GenError> {
            let mut snapshots: Vec<Snapshot> = Vec::with_capacity(options.knots);
            let mut fault: Option<GenError> = None;
            {
                let observe = |step: usize, cloud: &ParticleCloud| {
                    if fault.is_some() || step % stride != 0 {
                        return;
                    }
                    let result = (|| -> Result<(), GenError> {
                        let measure = cloud.empirical_measure()?;
                        let dictionary_diffs = dictionary
                            .iter()
                            .map(|d| gen_diff(d, &measure, particles, ctx))
                            .collect::<Result<Vec<f64>, _>>()?;
                        snapshots.push(Snapshot {
                            positions: cloud.positions(),
                            dictionary_diffs,
                            g_diff: gen_diff(g, &measure, particles, ctx)?,
                            features: proxy_features(&measure),
                        });
                        Ok(())
                    })();
                    if let Err(e) = result {
                        fault = Some(e);
                    }
                };
                let mut rng =
                    SystemRng::new(seed, OUTER_REPLICATION_BASE + path, initial.len());
                simulate_particle_system(
                    ctx.model,
                    ctx.law,
                    initial.clone(),
                    options.dt,
                    n_steps,
                    &mut rng,
                    observe,
                )?;
            }
            if let Some(e) = fault {
                return Err(e);
            }
            Ok(snapshots)
        })
        .collect::<Result<_, _>>()?;

    // ---- Training set: subsample the snapshot pool (skipping the
    // deterministic time-0 copies of m, re-added once), then label each
    // training measure with inner limit trajectories recorded on the same
    // knot grid.
    let mut pool: Vec<&Snapshot> = Vec::with_capacity(options.outer_paths * segments + 1);
    pool.push(&outer[0][0]);
    for path in &outer {
        for snapshot in &path[1..] {
            pool.push(snapshot);
        }
    }
    let take = options.training_measures.min(pool.len());
    let training: Vec<&Snapshot> = (0..take)
        .map(|i| pool[i * pool.len() / take])
        .collect();

    let inner = options.inner_replications;
    let half = inner / 2;
    // labels[t][j] per half: inner MC estimate of the limit semigroup value
    // at knot time s_j started from training measure t.
    let labels: Vec<(Vec<f64>, Vec<f64>)> = training
        .par_iter()
        .enumerate()
        .map(|(train_index, snapshot)| -> Result<(Vec<f64>, Vec<f64>), GenError> {
            let mut first = vec![0.0; options.knots];
            let mut second = vec![0.0; options.knots];
            for rep in 0..inner {
                let replication =
                    INNER_REPLICATION_BASE + (train_index * inner + rep) as u64;
                let mut knot_values = Vec::with_capacity(options.knots);
                let mut fault: Option<GenError> = None;
                {
                    let observe = |step: usize, cloud: &ParticleCloud| {
                        if fault.is_some() || step % stride != 0 {
                            return;
                        }
                        match cloud.empirical_measure() {
                            Ok(measure) => knot_values.push(g.eval(&measure)),
                            Err(e) => fault = Some(e.into()),
                        }
                    };
                    let mut rng =
                        LimitRng::new(seed, replication, snapshot.positions.len());
                    simulate_limit_process(
                        ctx.model,
                        ctx.law.zeta(),
                        snapshot.positions.clone(),
                        options.dt,
                        n_steps,
                        &mut rng,
                        observe,
                    )?;
                }
                if let Some(e) = fault {
                    return Err(e);
                }
                let target = if rep < half { &mut first } else { &mut second };
                for (j, value) in knot_values.iter().enumerate() {
                    target[j] += value;
                }
            }
            for value in &mut first {
                *value /= half as f64;
            }
            for value in &mut second {
                *value /= (inner - half) as f64;
            }
            Ok((first, second))
        })
        .collect::<Result<_, _>>()?;

    // ---- Per-knot proxy fits and the integrand at every outer snapshot.
    // Knot j uses evaluation measures from outer time t − s_j (snapshot
    // index segments − j); s_0 = 0 needs no proxy (the limit semigroup is
    // the identity there).
    let features_matrix: Vec<Vec<f64>> =
        training.iter().map(|s| s.features.to_vec()).collect();
    let w = inner as f64;
    let w_first = half as f64 / w;
    let w_second = (inner - half) as f64 / w;
    let mut integrand_pooled = vec![vec![0.0; options.knots]; options.outer_paths];
    let mut rhs_first = 0.0;
    let mut rhs_second = 0.0;
    for j in 0..options.knots {
        let snapshot_index = segments - j;
        let trapezoid = if j == 0 || j == segments { 0.5 } else { 1.0 } * knot_dt;
        if j == 0 {
            for (path, row) in outer.iter().enumerate() {
                let value = -row[snapshot_index].g_diff;
                integrand_pooled[path][j] = value;
                rhs_first += trapezoid * value / options.outer_paths as f64;
                rhs_second += trapezoid * value / options.outer_paths as f64;
            }
            continue;
        }
        let labels_first: Vec<f64> = labels.iter().map(|(a, _)| a[j]).collect();
        let labels_second: Vec<f64> = labels.iter().map(|(_, b)| b[j]).collect();
        let beta_first = ridge_fit(&features_matrix, &labels_first, options.ridge);
        let beta_second = ridge_fit(&features_matrix, &labels_second, options.ridge);
        for (path, row) in outer.iter().enumerate() {
            let snapshot = &row[snapshot_index];
            let mut value_first = 0.0;
            let mut value_second = 0.0;
            for (k, diff) in snapshot.dictionary_diffs.iter().enumerate() {
                value_first -= beta_first[k + 1] * diff;
                value_second -= beta_second[k + 1] * diff;
            }
            integrand_pooled[path][j] = w_first * value_first + w_second * value_second;
            rhs_first += trapezoid * value_first / options.outer_paths as f64;
            rhs_second += trapezoid * value_second / options.outer_paths as f64;
        }
    }
    let path_integrals: Vec<f64> = integrand_pooled
        .iter()
        .map(|values| {
            let mut acc = 0.5 * (values[0] + values[segments]);
            for value in &values[1..segments] {
                acc += value;
            }
            acc * knot_dt
        })
        .collect();
    let (rhs, rhs_outer_se) = mean_and_std_error(&path_integrals)?;
    let rhs_fit_se = 0.5 * (rhs_first - rhs_second).abs();
    let rhs_std_error = (rhs_outer_se * rhs_outer_se + rhs_fit_se * rhs_fit_se).sqrt();

    Ok(TrotterReport {
        lhs,
        lhs_std_error,
        rhs,
        rhs_std_error,
    })
}
