//! JSON run configurations: schema types, strict parsing, and semantic
//! validation shared by `validate-config` and the executing subcommands.

use crate::CliError;
use meanfield_core::functional::BUILTIN_FUNCTIONALS;
use meanfield_core::jump::JumpLaw;
use meanfield_core::measure::DiscreteMeasure;
use meanfield_core::model::BUILTIN_MODELS;
use meanfield_core::sim::{steps_for, InitialCondition};
use meanfield_core::suite::SUITE_NAMES;
use meanfield_core::PolynomialFunctional;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A full run description. The `command` tag must match the subcommand the
/// document is passed to; unknown keys anywhere are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Simulate(SimulateConfig),
    SimulateLimit(SimulateLimitConfig),
    Rate(RateConfig),
    Multitime(MultitimeConfig),
    GenEval(GenEvalConfig),
    GenDiff(GenDiffConfig),
    Dynkin(DynkinConfig),
    Trotter(TrotterConfig),
    Suite(SuiteRunConfig),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: Self = serde_json::from_str(&text).map_err(|e| {
            CliError::Usage(format!("invalid config {}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn command_name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::SimulateLimit(_) => "simulate-limit",
            Self::Rate(_) => "rate",
            Self::Multitime(_) => "multitime",
            Self::GenEval(_) => "gen-eval",
            Self::GenDiff(_) => "gen-diff",
            Self::Dynkin(_) => "dynkin",
            Self::Trotter(_) => "trotter",
            Self::Suite(_) => "suite",
        }
    }

    /// Cheap structural checks: names resolvable, ranges sane, times on the
    /// step grid. Heavy preconditions remain with the executing code.
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            Self::Simulate(c) => c.validate(),
            Self::SimulateLimit(c) => c.validate(),
            Self::Rate(c) => c.validate(),
            Self::Multitime(c) => c.validate(),
            Self::GenEval(c) => c.validate(),
            Self::GenDiff(c) => c.validate(),
            Self::Dynkin(c) => c.validate(),
            Self::Trotter(c) => c.validate(),
            Self::Suite(c) => c.validate(),
        }
    }

    /// Effective seed used by the run: the CLI flag wins over the document.
    pub fn apply_seed_override(&mut self, flag: Option<u64>) {
        let Some(seed) = flag else { return };
        match self {
            Self::Simulate(c) => c.seed = seed,
            Self::SimulateLimit(c) => c.seed = seed,
            Self::Rate(c) => c.seed = seed,
            Self::Multitime(c) => c.seed = seed,
            Self::GenEval(_) | Self::GenDiff(_) => {}
            Self::Dynkin(c) => c.seed = seed,
            Self::Trotter(c) => c.seed = seed,
            Self::Suite(c) => c.seed = Some(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Simulate(c) => c.seed,
            Self::SimulateLimit(c) => c.seed,
            Self::Rate(c) => c.seed,
            Self::Multitime(c) => c.seed,
            Self::GenEval(_) | Self::GenDiff(_) => 0,
            Self::Dynkin(c) => c.seed,
            Self::Trotter(c) => c.seed,
            Self::Suite(c) => c.seed.unwrap_or(0),
        }
    }
}

/// Built-in model selector; commands dispatch to the concrete type through
/// [`crate::dispatch_model`].
#[derive(Debug, Clone, Copy)]
pub enum ModelChoice {
    OuTanh,
    CoupledTanh,
}

impl ModelChoice {
    pub fn parse(name: &str) -> Result<Self, CliError> {
        match name {
            "ou_tanh" => Ok(Self::OuTanh),
            "coupled_tanh" => Ok(Self::CoupledTanh),
            other => Err(CliError::Usage(format!(
                "unknown model `{other}`; available: {}",
                BUILTIN_MODELS.join(", ")
            ))),
        }
    }
}

/// Runs `$body` with `$model` bound to the concrete model value selected by
/// a [`ModelChoice`], keeping generic call sites monomorphic.
#[macro_export]
macro_rules! dispatch_model {
    ($choice:expr, $model:ident => $body:expr) => {
        match $choice {
            $crate::config::ModelChoice::OuTanh => {
                let $model = meanfield_core::model::OuTanh;
                $body
            }
            $crate::config::ModelChoice::CoupledTanh => {
                let $model = meanfield_core::model::CoupledTanh;
                $body
            }
        }
    };
}

pub fn lookup_law(name: &str) -> Result<JumpLaw, CliError> {
    JumpLaw::by_name(name).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn lookup_statistic(id: &str) -> Result<PolynomialFunctional, CliError> {
    PolynomialFunctional::builtin(id).map_err(|_| {
        CliError::Usage(format!(
            "unknown statistic `{id}`; available: {}",
            BUILTIN_FUNCTIONALS.join(", ")
        ))
    })
}

/// Initial particle positions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// I.i.d. standard normal draws.
    #[default]
    StandardNormal,
    /// Every particle starts at `at`.
    Dirac { at: f64 },
    /// I.i.d. draws from an atomic law given as (position, weight) pairs.
    Sampled { atoms: Vec<(f64, f64)> },
    /// Explicit positions, one per particle id.
    Exact { positions: Vec<f64> },
}

impl InitialSpec {
    pub fn to_core(&self) -> Result<InitialCondition, CliError> {
        Ok(match self {
            Self::StandardNormal => InitialCondition::StandardNormal,
            Self::Dirac { at } => InitialCondition::Dirac(*at),
            Self::Sampled { atoms } => InitialCondition::Sampled(
                DiscreteMeasure::new(atoms.iter().copied())
                    .map_err(|e| CliError::Usage(format!("initial law: {e}")))?,
            ),
            Self::Exact { positions } => InitialCondition::Exact(positions.clone()),
        })
    }
}

fn check_time_grid(label: &str, t: f64, dt: f64) -> Result<(), CliError> {
    steps_for(t, dt)
        .map(|_| ())
        .map_err(|e| CliError::Usage(format!("{label}: {e}")))
}

fn check_positive_step(dt: f64) -> Result<(), CliError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CliError::Usage(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn check_names(model: &str, law: &str) -> Result<(), CliError> {
    ModelChoice::parse(model)?;
    lookup_law(law)?;
    Ok(())
}

fn check_measure(pairs: &[(f64, f64)]) -> Result<DiscreteMeasure, CliError> {
    DiscreteMeasure::new(pairs.iter().copied())
        .map_err(|e| CliError::Usage(format!("measure: {e}")))
}

fn default_statistics() -> Vec<String> {
    vec!["mean".to_string(), "second_moment".to_string()]
}

fn default_snapshot_every() -> usize {
    1
}

fn default_knots() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_band_limit() -> f64 {
    3.0
}

fn default_agreement_z() -> f64 {
    3.0
}

/// N-particle trajectory snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: String,
    pub law: String,
    #[serde(rename = "N")]
    pub particles: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Statistic ids evaluated on the empirical measure at each snapshot.
    #[serde(default = "default_statistics")]
    pub statistics: Vec<String>,
    /// Snapshot stride in steps (the initial and final states are always
    /// recorded).
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

impl SimulateConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        check_positive_step(self.dt)?;
        check_time_grid("T", self.horizon, self.dt)?;
        if self.particles == 0 {
            return Err(CliError::Usage("N must be positive".to_string()));
        }
        if self.replications == 0 {
            return Err(CliError::Usage("replications must be positive".to_string()));
        }
        if self.snapshot_every == 0 {
            return Err(CliError::Usage(
                "snapshot_every must be positive".to_string(),
            ));
        }
        if self.statistics.is_empty() {
            return Err(CliError::Usage("statistics must be nonempty".to_string()));
        }
        for id in &self.statistics {
            lookup_statistic(id)?;
        }
        self.initial.to_core()?;
        Ok(())
    }
}

/// Limit-cloud trajectory snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateLimitConfig {
    pub model: String,
    pub law: String,
    /// Cloud size approximating the conditional limit law.
    #[serde(rename = "M")]
    pub cloud_size: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<String>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

impl SimulateLimitConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        check_positive_step(self.dt)?;
        check_time_grid("T", self.horizon, self.dt)?;
        if self.cloud_size == 0 {
            return Err(CliError::Usage("M must be positive".to_string()));
        }
        if self.replications == 0 {
            return Err(CliError::Usage("replications must be positive".to_string()));
        }
        if self.snapshot_every == 0 {
            return Err(CliError::Usage(
                "snapshot_every must be positive".to_string(),
            ));
        }
        if self.statistics.is_empty() {
            return Err(CliError::Usage("statistics must be nonempty".to_string()));
        }
        for id in &self.statistics {
            lookup_statistic(id)?;
        }
        self.initial.to_core()?;
        Ok(())
    }
}

/// Monte Carlo budget fields shared by the weak-error experiments
/// (duplicated in both configs: strict schemas rule out field flattening).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub model: String,
    pub law: String,
    pub statistic: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    #[serde(rename = "N")]
    pub ladder: Vec<usize>,
    pub replications: usize,
    /// Control-variate fitting replications; defaults to replications/20,
    /// at least 128.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_replications: Option<usize>,
    /// Limit-reference replications; defaults to replications/16, at least
    /// 256.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_replications: Option<usize>,
    /// Reference cloud size; defaults to 16× the largest rung.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub cloud_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Pass criterion: max/min ratio of weak_error·√N across rungs.
    #[serde(default = "default_band_limit")]
    pub band_limit: f64,
    /// Pass criterion on the fitted log-log slope, when a fit exists.
    #[serde(default = "RateConfig::default_slope_range")]
    pub slope_range: (f64, f64),
}

impl RateConfig {
    fn default_slope_range() -> (f64, f64) {
        (-1.1, -0.35)
    }

    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        lookup_statistic(&self.statistic)?;
        check_positive_step(self.dt)?;
        check_time_grid("T", self.horizon, self.dt)?;
        check_ladder(&self.ladder)?;
        self.initial.to_core()?;
        if self.slope_range.0 > self.slope_range.1 {
            return Err(CliError::Usage(format!(
                "slope_range is empty: [{}, {}]",
                self.slope_range.0, self.slope_range.1
            )));
        }
        Ok(())
    }
}

/// One observable of the product statistic: statistic id at a time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub t: f64,
    pub statistic: String,
}

/// Multi-time product-observable weak-error ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultitimeConfig {
    pub model: String,
    pub law: String,
    /// Up to three (time, statistic) factors, times strictly increasing.
    pub observables: Vec<ObservableSpec>,
    pub dt: f64,
    #[serde(rename = "N")]
    pub ladder: Vec<usize>,
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_replications: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub cloud_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "default_band_limit")]
    pub band_limit: f64,
}

impl MultitimeConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        check_positive_step(self.dt)?;
        check_ladder(&self.ladder)?;
        if self.observables.is_empty() || self.observables.len() > 3 {
            return Err(CliError::Usage(format!(
                "observables must hold 1 to 3 entries, got {}",
                self.observables.len()
            )));
        }
        for pair in self.observables.windows(2) {
            if pair[0].t >= pair[1].t {
                return Err(CliError::Usage(
                    "observation times must be strictly increasing".to_string(),
                ));
            }
        }
        for spec in &self.observables {
            if spec.t <= 0.0 {
                return Err(CliError::Usage(
                    "observation times must be positive".to_string(),
                ));
            }
            check_time_grid("t", spec.t, self.dt)?;
            lookup_statistic(&spec.statistic)?;
        }
        self.initial.to_core()?;
        Ok(())
    }
}

/// Default control-variate pilot budget for a main-phase budget.
pub fn default_pilot(replications: usize) -> usize {
    (replications / 20).max(128)
}

/// Default limit-reference budget for a main-phase budget.
pub fn default_reference(replications: usize) -> usize {
    (replications / 16).max(256)
}

fn check_ladder(ladder: &[usize]) -> Result<(), CliError> {
    if ladder.is_empty() || ladder[0] == 0 || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(
            "N must be a strictly increasing list of positive counts".to_string(),
        ));
    }
    Ok(())
}

/// Pointwise generator evaluation at one measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenEvalConfig {
    pub model: String,
    pub law: String,
    pub statistic: String,
    /// (position, weight) atoms of the evaluation measure.
    pub measure: Vec<(f64, f64)>,
    /// When present, also evaluate the N-particle generator and the gap.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
}

impl GenEvalConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        lookup_statistic(&self.statistic)?;
        check_measure(&self.measure)?;
        if self.particles == Some(0) {
            return Err(CliError::Usage("N must be positive".to_string()));
        }
        Ok(())
    }
}

/// Generator-gap sweep over particle counts at one measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDiffConfig {
    pub model: String,
    pub law: String,
    pub statistic: String,
    pub measure: Vec<(f64, f64)>,
    #[serde(rename = "N")]
    pub ladder: Vec<usize>,
}

impl GenDiffConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        lookup_statistic(&self.statistic)?;
        check_measure(&self.measure)?;
        check_ladder(&self.ladder)?;
        Ok(())
    }
}

/// Martingale-identity diagnostic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynkinConfig {
    pub model: String,
    pub law: String,
    pub statistic: String,
    #[serde(rename = "N")]
    pub particles: usize,
    pub t: f64,
    pub dt: f64,
    pub replications: usize,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default)]
    pub seed: u64,
    /// Check the limit process instead of the particle system.
    #[serde(default)]
    pub limit_target: bool,
    /// Cloud size of the limit target; defaults to 16·N.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub cloud_size: Option<usize>,
    /// Start positions; defaults to N points evenly spaced over [−1, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
    /// Also run at dt/2 to budget the discretization bias.
    #[serde(default = "default_true")]
    pub with_bias_budget: bool,
}

impl DynkinConfig {
    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        lookup_statistic(&self.statistic)?;
        check_positive_step(self.dt)?;
        check_time_grid("t", self.t, self.dt)?;
        if self.particles < 2 {
            return Err(CliError::Usage("N must be at least 2".to_string()));
        }
        if self.replications < 2 {
            return Err(CliError::Usage(
                "replications must be at least 2".to_string(),
            ));
        }
        if self.knots < 2 {
            return Err(CliError::Usage("knots must be at least 2".to_string()));
        }
        if let Some(positions) = &self.positions {
            if positions.len() != self.particles {
                return Err(CliError::Usage(format!(
                    "positions holds {} entries but N = {}",
                    positions.len(),
                    self.particles
                )));
            }
        }
        Ok(())
    }

    pub fn start_positions(&self) -> Vec<f64> {
        self.positions
            .clone()
            .unwrap_or_else(|| even_positions(self.particles))
    }
}

/// N evenly spaced points over [−1, 1].
pub fn even_positions(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect()
}

/// Semigroup-splitting diagnostic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterConfig {
    pub model: String,
    pub law: String,
    pub statistic: String,
    #[serde(rename = "N")]
    pub particles: usize,
    pub t: f64,
    pub dt: f64,
    #[serde(default = "default_knots")]
    pub knots: usize,
    pub pilot_replications: usize,
    pub lhs_replications: usize,
    pub outer_paths: usize,
    pub training_measures: usize,
    pub inner_replications: usize,
    #[serde(default = "TrotterConfig::default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
    /// Agreement threshold in combined standard errors.
    #[serde(default = "default_agreement_z")]
    pub agreement_z: f64,
    /// Rerun once with doubled budgets before reporting disagreement.
    #[serde(default = "default_true")]
    pub retry_doubled: bool,
}

impl TrotterConfig {
    fn default_ridge() -> f64 {
        1e-6
    }

    fn validate(&self) -> Result<(), CliError> {
        check_names(&self.model, &self.law)?;
        lookup_statistic(&self.statistic)?;
        check_positive_step(self.dt)?;
        check_time_grid("t", self.t, self.dt)?;
        if self.particles < 2 {
            return Err(CliError::Usage("N must be at least 2".to_string()));
        }
        if self.knots < 2 {
            return Err(CliError::Usage("knots must be at least 2".to_string()));
        }
        if !(self.agreement_z.is_finite() && self.agreement_z > 0.0) {
            return Err(CliError::Usage(format!(
                "agreement_z must be positive, got {}",
                self.agreement_z
            )));
        }
        if let Some(positions) = &self.positions {
            if positions.len() != self.particles {
                return Err(CliError::Usage(format!(
                    "positions holds {} entries but N = {}",
                    positions.len(),
                    self.particles
                )));
            }
        }
        Ok(())
    }

    pub fn start_positions(&self) -> Vec<f64> {
        self.positions
            .clone()
            .unwrap_or_else(|| even_positions(self.particles))
    }
}

/// Batch property-check suite run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteRunConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Randomized instances per check family; suite defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
}

impl SuiteRunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if !SUITE_NAMES.contains(&self.name.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown suite `{}`; available: {}",
                self.name,
                SUITE_NAMES.join(", ")
            )));
        }
        Ok(())
    }
}
