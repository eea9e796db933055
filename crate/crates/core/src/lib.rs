//! Laboratory for diffusively scaled mean-field jump-diffusion particle
//! systems.
//!
//! The crate provides, bottom-up:
//!
//! - [`measure`]: finitely supported probability measures on the real line
//!   with the Kantorovich-Rubinstein (Wasserstein-1) metric, both a fast
//!   CDF-based routine and an independent linear-programming oracle
//!   ([`transport`]).
//! - [`kernel`] / [`functional`]: measure-variable polynomials
//!   `G(m) = ∫ φ dm^⊗n` with analytic flat (linear) and Lions derivatives,
//!   plus Taylor-expansion and Lipschitz verification machinery.
//! - [`rng`]: a counter-based, splittable random number generator so that
//!   parallel replications are reproducible in any execution order.
//! - [`jump`] / [`model`]: jump-size laws and model coefficient sets
//!   (drift, diffusion, jump intensity and amplitude, common volatility).
//! - [`sim`]: Euler-Maruyama time stepping for the N-particle system with
//!   diffusively scaled common jumps, and for its common-noise diffusion
//!   limit approximated by an M-particle conditional-law cloud.
//! - [`generator`]: exact evaluation of the limit and N-particle generators
//!   on polynomial functionals, and the Dynkin / semigroup-difference
//!   diagnostics built on them.
//! - [`experiment`]: Monte Carlo experiment drivers measuring the weak
//!   convergence rate of the particle system toward its limit.
//! - [`suite`]: batch property-check runners producing diagnostics reports.
//! - [`report`]: CSV/JSON emission with bit-stable aggregation.

pub mod experiment;
pub mod functional;
pub mod generator;
pub mod jump;
pub mod kernel;
pub mod measure;
pub mod model;
pub mod report;
pub mod rng;
pub mod sim;
pub mod suite;
pub mod transport;

pub use functional::PolynomialFunctional;
pub use generator::{GeneratorContext, Regime};
pub use jump::JumpLaw;
pub use kernel::Kernel;
pub use measure::DiscreteMeasure;
pub use model::{MeasureStats, Model, ModelBounds};
pub use rng::CounterRng;
pub use sim::ParticleCloud;
pub use suite::{run_suite, SuiteReport};
