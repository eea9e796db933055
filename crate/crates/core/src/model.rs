//! Interaction models: the coefficient functions (drift, diffusion, jump
//! intensity, jump amplitude) that drive both the N-particle system and its
//! mean-field limit, together with declared regularity bounds.
//!
//! Coefficients depend on the current state through summary statistics of
//! the empirical measure, so one pass over the cloud per step suffices. In
//! the diffusive regime the limit's common volatility is derived, not
//! declared: ς(m)² = ζ² ∫h(m,x)² f(m,x) dm(x) with ζ² the jump-law second
//! moment.

use crate::jump::{JumpLaw, JumpLawError};
use crate::measure::DiscreteMeasure;
use crate::rng::CounterRng;
use rand_core::RngCore;
use thiserror::Error;

/// Errors from model lookup and validation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model \"{name}\" (known: ou_tanh, coupled_tanh)")]
    UnknownName { name: String },
    #[error(transparent)]
    JumpLaw(#[from] JumpLawError),
    #[error(
        "{quantity} violates its declared bound at probe {index}: \
         observed {observed}, declared {declared}"
    )]
    BoundViolated {
        quantity: &'static str,
        index: usize,
        observed: f64,
        declared: f64,
    },
}

/// Summary statistics of a measure, computed once per step and passed to
/// every coefficient evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureStats {
    /// ∫x dm.
    pub mean: f64,
    /// ∫x² dm.
    pub second_moment: f64,
    /// ∫h(m,x)² f(m,x) dm(x): the flux that feeds the limit volatility.
    pub jump_flux: f64,
}

impl MeasureStats {
    /// Stats of a weighted atomic measure. The moment pass runs first so the
    /// flux pass can hand coefficients a complete moment view.
    pub fn from_measure<M: Model + ?Sized>(model: &M, measure: &DiscreteMeasure) -> Self {
        let mut mean = 0.0;
        let mut second = 0.0;
        for atom in measure.atoms() {
            mean += atom.weight * atom.position;
            second += atom.weight * atom.position * atom.position;
        }
        let mut stats = Self {
            mean,
            second_moment: second,
            jump_flux: 0.0,
        };
        let mut flux = 0.0;
        for atom in measure.atoms() {
            let h = model.amplitude(&stats, atom.position);
            flux += atom.weight * h * h * model.intensity(&stats, atom.position);
        }
        stats.jump_flux = flux;
        stats
    }

    /// Stats of the uniform empirical measure of `positions`, each shifted
    /// by `offset`. Mirrors [`Self::from_measure`] without building atoms.
    pub fn from_positions<M: Model + ?Sized>(model: &M, positions: &[f64], offset: f64) -> Self {
        let n = positions.len().max(1) as f64;
        let mut mean = 0.0;
        let mut second = 0.0;
        for &raw in positions {
            let x = raw + offset;
            mean += x;
            second += x * x;
        }
        mean /= n;
        second /= n;
        let mut stats = Self {
            mean,
            second_moment: second,
            jump_flux: 0.0,
        };
        let mut flux = 0.0;
        for &raw in positions {
            let x = raw + offset;
            let h = model.amplitude(&stats, x);
            flux += h * h * model.intensity(&stats, x);
        }
        stats.jump_flux = flux / n;
        stats
    }
}

/// Declared regularity constants, validated by sampled probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBounds {
    /// Lower bound on the jump intensity f.
    pub intensity_min: f64,
    /// Upper bound on the jump intensity f.
    pub intensity_max: f64,
    /// Upper bound on |h|.
    pub amplitude_max: f64,
    /// Lipschitz constant of the drift in (x, m) with the metric
    /// |Δx| + d_KR(Δm).
    pub lip_drift: f64,
    /// Lipschitz constant of the diffusion coefficient.
    pub lip_sigma: f64,
    /// Lipschitz constant of the product f·h.
    pub lip_intensity_amplitude: f64,
    /// Lipschitz constant of the derived common volatility ς (for unit ζ).
    pub lip_common_vol: f64,
}

/// Coefficient functions of a mean-field model.
///
/// All evaluations receive the pre-computed [`MeasureStats`] of the current
/// measure; implementations must stay finite on finite inputs.
pub trait Model: Send + Sync {
    /// Registry identifier.
    fn id(&self) -> &'static str;

    /// Drift b(m, x).
    fn drift(&self, stats: &MeasureStats, x: f64) -> f64;

    /// Idiosyncratic diffusion coefficient σ(m, x).
    fn sigma(&self, stats: &MeasureStats, x: f64) -> f64;

    /// Jump intensity f(m, x) ≥ 0.
    fn intensity(&self, stats: &MeasureStats, x: f64) -> f64;

    /// Jump amplitude h(m, x): a mark u moves every particle by
    /// u·h(m, x)/√N where x is the jumping particle's position.
    fn amplitude(&self, stats: &MeasureStats, x: f64) -> f64;

    /// Declared regularity constants.
    fn bounds(&self) -> ModelBounds;
}

/// Common volatility of the limit process in the diffusive regime:
/// ς(m) = ζ · (∫h² f dm)^{1/2}. It does not depend on x.
pub fn diffusive_common_vol(zeta: f64, stats: &MeasureStats) -> f64 {
    zeta * stats.jump_flux.max(0.0).sqrt()
}

/// Mean-reverting model with state-dependent jump intensity:
/// b(x) = −x, σ = 0.5, f(x) = 1 + tanh(x)/2, h ≡ 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct OuTanh;

impl Model for OuTanh {
    fn id(&self) -> &'static str {
        "ou_tanh"
    }

    fn drift(&self, _stats: &MeasureStats, x: f64) -> f64 {
        -x
    }

    fn sigma(&self, _stats: &MeasureStats, _x: f64) -> f64 {
        0.5
    }

    fn intensity(&self, _stats: &MeasureStats, x: f64) -> f64 {
        1.0 + 0.5 * x.tanh()
    }

    fn amplitude(&self, _stats: &MeasureStats, _x: f64) -> f64 {
        1.0
    }

    fn bounds(&self) -> ModelBounds {
        ModelBounds {
            intensity_min: 0.5,
            intensity_max: 1.5,
            amplitude_max: 1.0,
            lip_drift: 1.0,
            lip_sigma: 0.0,
            lip_intensity_amplitude: 0.5,
            // |ς(m₁)−ς(m₂)| ≤ ζ·L_f·d_KR/(2·√f_min) = 0.5/(2√0.5) ≈ 0.354.
            lip_common_vol: 0.36,
        }
    }
}

/// Measure-coupled variant: the drift reverts toward the running mean and
/// both the intensity and the amplitude depend on state and mean.
/// b(m,x) = −x + m̄/2, σ(x) = 0.4 + tanh(x)/5,
/// f(m,x) = 1 + tanh(x)/4 + tanh(m̄)/4, h(x) = 1 + sin(x)/5.
#[derive(Debug, Clone, Copy, Default)]
pub struct CoupledTanh;

impl Model for CoupledTanh {
    fn id(&self) -> &'static str {
        "coupled_tanh"
    }

    fn drift(&self, stats: &MeasureStats, x: f64) -> f64 {
        -x + 0.5 * stats.mean
    }

    fn sigma(&self, _stats: &MeasureStats, x: f64) -> f64 {
        0.4 + 0.2 * x.tanh()
    }

    fn intensity(&self, stats: &MeasureStats, x: f64) -> f64 {
        1.0 + 0.25 * x.tanh() + 0.25 * stats.mean.tanh()
    }

    fn amplitude(&self, _stats: &MeasureStats, x: f64) -> f64 {
        1.0 + 0.2 * x.sin()
    }

    fn bounds(&self) -> ModelBounds {
        ModelBounds {
            intensity_min: 0.5,
            intensity_max: 1.5,
            amplitude_max: 1.2,
            lip_drift: 1.0,
            lip_sigma: 0.2,
            // |Δ(fh)| ≤ f_max·L_h + h_max·L_f = 1.5·0.2 + 1.2·0.5 = 0.9.
            lip_intensity_amplitude: 0.9,
            // L_{h²f} ≤ 2·h_max·L_h·f_max + h_max²·L_f = 0.72 + 0.72 = 1.44;
            // |Δς| ≤ ζ·L_{h²f}·d/(2√(f_min·h_min²)) = 1.44/(2·√0.32) ≈ 1.28.
            lip_common_vol: 1.3,
        }
    }
}

/// A registered model paired with its jump law.
pub struct ModelSpec<M: Model> {
    pub model: M,
    pub law: JumpLaw,
}

/// Names of the built-in models, for config validation and dispatch.
pub const BUILTIN_MODELS: [&str; 2] = ["ou_tanh", "coupled_tanh"];

/// Looks up a built-in model by name, pairing it with the named jump law.
/// Monomorphized callers should dispatch on the name and construct the
/// concrete type directly; this helper serves validation paths.
pub fn check_builtin_model(name: &str, law_name: &str) -> Result<JumpLaw, ModelError> {
    if !BUILTIN_MODELS.contains(&name) {
        return Err(ModelError::UnknownName {
            name: name.to_string(),
        });
    }
    Ok(JumpLaw::by_name(law_name)?)
}

/// Validates a model's declared bounds on `probes` random (measure, point)
/// pairs: range bounds must hold exactly, Lipschitz ratios within a factor
/// 1 + 1e-6 (probing cannot certify a supremum, only refute the constant).
pub fn validate_model_bounds<M: Model>(
    model: &M,
    zeta: f64,
    rng: &mut CounterRng,
    probes: usize,
) -> Result<(), ModelError> {
    let bounds = model.bounds();
    let slack = 1.0 + 1e-6;
    let draw_probe = |rng: &mut CounterRng| {
        let m = crate::measure::random_measure(rng, 6, 3.0);
        let x = 6.0 * crate::rng::uniform_unit(rng.next_u64()) - 3.0;
        let stats = MeasureStats::from_measure(model, &m);
        (m, stats, x)
    };
    for index in 0..probes {
        let (m1, s1, x1) = draw_probe(rng);
        let (m2, s2, x2) = draw_probe(rng);
        let f1 = model.intensity(&s1, x1);
        if f1 < bounds.intensity_min {
            return Err(ModelError::BoundViolated {
                quantity: "intensity lower bound",
                index,
                observed: f1,
                declared: bounds.intensity_min,
            });
        }
        if f1 > bounds.intensity_max {
            return Err(ModelError::BoundViolated {
                quantity: "intensity upper bound",
                index,
                observed: f1,
                declared: bounds.intensity_max,
            });
        }
        let h1 = model.amplitude(&s1, x1);
        if h1.abs() > bounds.amplitude_max {
            return Err(ModelError::BoundViolated {
                quantity: "amplitude bound",
                index,
                observed: h1.abs(),
                declared: bounds.amplitude_max,
            });
        }
        let dist = (x1 - x2).abs() + m1.kr_distance(&m2);
        if dist < 1e-9 {
            continue;
        }
        let checks: [(&'static str, f64, f64); 4] = [
            (
                "drift Lipschitz constant",
                (model.drift(&s1, x1) - model.drift(&s2, x2)).abs(),
                bounds.lip_drift,
            ),
            (
                "diffusion Lipschitz constant",
                (model.sigma(&s1, x1) - model.sigma(&s2, x2)).abs(),
                bounds.lip_sigma,
            ),
            (
                "intensity-amplitude Lipschitz constant",
                (model.intensity(&s1, x1) * model.amplitude(&s1, x1)
                    - model.intensity(&s2, x2) * model.amplitude(&s2, x2))
                .abs(),
                bounds.lip_intensity_amplitude,
            ),
            (
                "common-volatility Lipschitz constant",
                (diffusive_common_vol(zeta, &s1) - diffusive_common_vol(zeta, &s2)).abs(),
                bounds.lip_common_vol * zeta.max(1e-300),
            ),
        ];
        for (quantity, diff, constant) in checks {
            if diff > constant * dist * slack {
                return Err(ModelError::BoundViolated {
                    quantity,
                    index,
                    observed: diff / dist,
                    declared: constant,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRole;

    #[test]
    fn ou_tanh_coefficients_match_definitions() {
        let model = OuTanh;
        let stats = MeasureStats {
            mean: 0.3,
            second_moment: 1.0,
            jump_flux: 1.0,
        };
        assert_eq!(model.drift(&stats, 1.25), -1.25);
        assert_eq!(model.sigma(&stats, -4.0), 0.5);
        assert!((model.intensity(&stats, 0.0) - 1.0).abs() < 1e-15);
        let expected = 1.0 + 0.5 * 2.0f64.tanh();
        assert!((model.intensity(&stats, 2.0) - expected).abs() < 1e-15);
        assert_eq!(model.amplitude(&stats, 7.0), 1.0);
    }

    #[test]
    fn stats_from_measure_and_positions_agree() {
        let model = CoupledTanh;
        let positions = [0.4, -1.1, 2.2, 0.0];
        let measure = DiscreteMeasure::from_points(&positions).unwrap();
        let a = MeasureStats::from_measure(&model, &measure);
        let b = MeasureStats::from_positions(&model, &positions, 0.0);
        assert!((a.mean - b.mean).abs() < 1e-14);
        assert!((a.second_moment - b.second_moment).abs() < 1e-14);
        assert!((a.jump_flux - b.jump_flux).abs() < 1e-14);
        // Offsetting raw positions equals shifting the measure.
        let shifted = measure.translate(0.7).unwrap();
        let c = MeasureStats::from_measure(&model, &shifted);
        let d = MeasureStats::from_positions(&model, &positions, 0.7);
        assert!((c.mean - d.mean).abs() < 1e-14);
        assert!((c.jump_flux - d.jump_flux).abs() < 1e-14);
    }

    #[test]
    fn ou_tanh_flux_is_mean_intensity() {
        // With h ≡ 1 the flux reduces to ∫f dm.
        let model = OuTanh;
        let measure = DiscreteMeasure::from_points(&[0.0, 1.0, -1.0, 0.5]).unwrap();
        let stats = MeasureStats::from_measure(&model, &measure);
        let expected = measure.integrate(|x| 1.0 + 0.5 * x.tanh());
        assert!((stats.jump_flux - expected).abs() < 1e-15);
        // f ∈ [0.5, 1.5] keeps the flux inside the same band.
        assert!(stats.jump_flux > 0.5 && stats.jump_flux < 1.5);
    }

    #[test]
    fn common_vol_square_matches_zeta_squared_times_flux() {
        let stats = MeasureStats {
            mean: 0.0,
            second_moment: 1.0,
            jump_flux: 0.9,
        };
        let vol = diffusive_common_vol(1.5, &stats);
        assert!((vol * vol - 1.5 * 1.5 * 0.9).abs() < 1e-12);
    }

    #[test]
    fn declared_bounds_survive_probing_ou_tanh() {
        let mut rng = CounterRng::for_role(99, 0, StreamRole::Scratch, 0);
        validate_model_bounds(&OuTanh, 1.0, &mut rng, 10_000).unwrap();
    }

    #[test]
    fn declared_bounds_survive_probing_coupled_tanh() {
        let mut rng = CounterRng::for_role(101, 0, StreamRole::Scratch, 1);
        validate_model_bounds(&CoupledTanh, 1.0, &mut rng, 10_000).unwrap();
    }

    #[test]
    fn probing_refutes_an_understated_constant() {
        struct Understated;
        impl Model for Understated {
            fn id(&self) -> &'static str {
                "understated"
            }
            fn drift(&self, _stats: &MeasureStats, x: f64) -> f64 {
                -3.0 * x
            }
            fn sigma(&self, _stats: &MeasureStats, _x: f64) -> f64 {
                0.1
            }
            fn intensity(&self, _stats: &MeasureStats, _x: f64) -> f64 {
                1.0
            }
            fn amplitude(&self, _stats: &MeasureStats, _x: f64) -> f64 {
                1.0
            }
            fn bounds(&self) -> ModelBounds {
                ModelBounds {
                    intensity_min: 0.5,
                    intensity_max: 1.5,
                    amplitude_max: 1.0,
                    lip_drift: 1.0, // true constant is 3
                    lip_sigma: 0.0,
                    lip_intensity_amplitude: 0.0,
                    lip_common_vol: 0.1,
                }
            }
        }
        let mut rng = CounterRng::for_role(7, 0, StreamRole::Scratch, 2);
        let err = validate_model_bounds(&Understated, 1.0, &mut rng, 10_000).unwrap_err();
        assert!(matches!(
            err,
            ModelError::BoundViolated {
                quantity: "drift Lipschitz constant",
                ..
            }
        ));
    }

    #[test]
    fn builtin_lookup_rejects_unknown_names() {
        assert!(check_builtin_model("ou_tanh", "asymmetric").is_ok());
        assert!(check_builtin_model("ou_tanh", "rademacher").is_ok());
        assert!(matches!(
            check_builtin_model("levy_flight", "asymmetric"),
            Err(ModelError::UnknownName { .. })
        ));
        assert!(matches!(
            check_builtin_model("ou_tanh", "cauchy"),
            Err(ModelError::JumpLaw(_))
        ));
    }
}
