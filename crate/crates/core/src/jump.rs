//! Jump-size laws ν: centered distributions of the multiplicative jump
//! marks, with exact moments, sampling, and integration support for
//! generator evaluation.
//!
//! Every law must satisfy ∫u dν = 0 (the diffusive scaling needs centered
//! marks) and have a finite third absolute moment. Finite-support laws
//! integrate exactly; the Gaussian family integrates through Gauss-Hermite
//! quadrature nodes while sampling remains exact.

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Tolerance for the centering and probability-sum validations.
const LAW_TOL: f64 = 1e-12;

/// Errors from jump-law construction.
#[derive(Debug, Error)]
pub enum JumpLawError {
    #[error("jump law needs at least one support point")]
    Empty,
    #[error("support point {index} has non-finite value {value}")]
    NonFiniteValue { index: usize, value: f64 },
    #[error("support point {index} has invalid probability {probability}")]
    BadProbability { index: usize, probability: f64 },
    #[error("probabilities sum to {sum}, not 1 (tolerance {tol})")]
    ProbabilitySum { sum: f64, tol: f64 },
    #[error("law has mean {mean}, must be centered within {tol}")]
    NotCentered { mean: f64, tol: f64 },
    #[error("gaussian standard deviation {std} must be positive and finite")]
    BadStd { std: f64 },
    #[error("unknown jump law \"{name}\" (known: asymmetric, rademacher, gaussian)")]
    UnknownName { name: String },
}

#[derive(Debug, Clone, PartialEq)]
enum LawKind {
    /// Finite support; integration over the support is exact.
    Finite,
    /// Centered Gaussian; integration uses quadrature nodes, sampling is
    /// exact.
    Gaussian { std: f64 },
}

/// A centered jump-size law.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    kind: LawKind,
    /// Integration points (value, weight): the exact support for finite
    /// laws, Gauss-Hermite nodes for the Gaussian family.
    points: Vec<(f64, f64)>,
    /// Cumulative probabilities for finite-law sampling.
    cumulative: Vec<f64>,
    m2: f64,
    m3_signed: f64,
    m3_abs: f64,
}

impl JumpLaw {
    /// Builds a finite-support law from (value, probability) pairs.
    pub fn finite(support: Vec<(f64, f64)>) -> Result<Self, JumpLawError> {
        if support.is_empty() {
            return Err(JumpLawError::Empty);
        }
        let mut sum_p = 0.0;
        let mut mean = 0.0;
        for (index, &(value, probability)) in support.iter().enumerate() {
            if !value.is_finite() {
                return Err(JumpLawError::NonFiniteValue { index, value });
            }
            if !probability.is_finite() || probability <= 0.0 {
                return Err(JumpLawError::BadProbability {
                    index,
                    probability,
                });
            }
            sum_p += probability;
            mean += probability * value;
        }
        if (sum_p - 1.0).abs() > LAW_TOL {
            return Err(JumpLawError::ProbabilitySum {
                sum: sum_p,
                tol: LAW_TOL,
            });
        }
        if mean.abs() > LAW_TOL {
            return Err(JumpLawError::NotCentered {
                mean,
                tol: LAW_TOL,
            });
        }
        let m2: f64 = support.iter().map(|&(u, p)| p * u * u).sum();
        let m3_signed: f64 = support.iter().map(|&(u, p)| p * u * u * u).sum();
        let m3_abs: f64 = support.iter().map(|&(u, p)| p * (u * u * u).abs()).sum();
        let cumulative: Vec<f64> = support
            .iter()
            .scan(0.0, |acc, &(_, p)| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            kind: LawKind::Finite,
            points: support,
            cumulative,
            m2,
            m3_signed,
            m3_abs,
        })
    }

    /// Centered Gaussian law with the given standard deviation; generator
    /// integration uses `nodes` Gauss-Hermite points.
    pub fn gaussian(std: f64, nodes: usize) -> Result<Self, JumpLawError> {
        if !std.is_finite() || std <= 0.0 {
            return Err(JumpLawError::BadStd { std });
        }
        let nodes = nodes.max(3);
        let gh = gauss_hermite(nodes);
        // Physicists' Gauss-Hermite: ∫ f(u) dN(0,σ²)(u)
        //   = (1/√π) Σ w_i f(√2 σ x_i).
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let points: Vec<(f64, f64)> = gh
            .iter()
            .map(|&(x, w)| (std * std::f64::consts::SQRT_2 * x, w * inv_sqrt_pi))
            .collect();
        let m3_abs = 2.0 * std.powi(3) * std::f64::consts::SQRT_2 / std::f64::consts::PI.sqrt();
        Ok(Self {
            kind: LawKind::Gaussian { std },
            points,
            cumulative: Vec::new(),
            m2: std * std,
            m3_signed: 0.0,
            m3_abs,
        })
    }

    /// Asymmetric two-point law {(2, 0.2), (−0.5, 0.8)}: centered, unit
    /// variance, third moment 1.5.
    pub fn asymmetric_two_point() -> Self {
        Self::finite(vec![(2.0, 0.2), (-0.5, 0.8)]).expect("builtin law is valid")
    }

    /// Rademacher law {(1, 1/2), (−1, 1/2)}: centered, unit variance,
    /// vanishing third moment.
    pub fn rademacher() -> Self {
        Self::finite(vec![(1.0, 0.5), (-1.0, 0.5)]).expect("builtin law is valid")
    }

    /// Named lookup used by config files.
    pub fn by_name(name: &str) -> Result<Self, JumpLawError> {
        match name {
            "asymmetric" => Ok(Self::asymmetric_two_point()),
            "rademacher" => Ok(Self::rademacher()),
            "gaussian" => Self::gaussian(1.0, 21),
            other => Err(JumpLawError::UnknownName {
                name: other.to_string(),
            }),
        }
    }

    /// Second moment ∫u² dν.
    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// ζ = (∫u² dν)^{1/2}: the standard deviation surviving in the limit.
    pub fn zeta(&self) -> f64 {
        self.m2.sqrt()
    }

    /// Signed third moment ∫u³ dν.
    pub fn m3_signed(&self) -> f64 {
        self.m3_signed
    }

    /// Absolute third moment ∫|u|³ dν.
    pub fn m3_abs(&self) -> f64 {
        self.m3_abs
    }

    /// Integration points (value, weight) for generator evaluation: exact
    /// support for finite laws, quadrature nodes otherwise.
    pub fn integration_points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Whether [`Self::integration_points`] integrates polynomials exactly
    /// (finite support) rather than by quadrature.
    pub fn integrates_exactly(&self) -> bool {
        matches!(self.kind, LawKind::Finite)
    }

    /// One i.i.d. draw.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        match self.kind {
            LawKind::Finite => {
                let u = crate::rng::uniform_unit(rng.next_u64());
                let idx = self
                    .cumulative
                    .partition_point(|&c| c < u)
                    .min(self.points.len() - 1);
                self.points[idx].0
            }
            LawKind::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            }
        }
    }
}

/// Nodes and weights of n-point physicists' Gauss-Hermite quadrature
/// (weight function e^{−x²}), by Newton iteration on the Hermite recurrence.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    // Hermite H_n values via the three-term recurrence.
    let hermite = |k: usize, x: f64| -> (f64, f64) {
        // Returns (H_k(x), H_{k-1}(x)).
        let (mut h0, mut h1) = (1.0f64, 2.0 * x);
        if k == 0 {
            return (1.0, 0.0);
        }
        for j in 2..=k {
            let h2 = 2.0 * x * h1 - 2.0 * (j as f64 - 1.0) * h0;
            h0 = h1;
            h1 = h2;
        }
        (h1, h0)
    };
    let mut roots = Vec::with_capacity(n);
    // Initial guesses: zeros interlace; use the standard asymptotic seed and
    // polish with Newton (derivative H_n' = 2n·H_{n-1}).
    for i in 0..n {
        // Seed from a uniform spread over the oscillation interval, then
        // Newton converges locally; deflation keeps the roots distinct.
        let mut x = (2.0 * (n as f64)).sqrt() * (i as f64 + 0.5 - n as f64 / 2.0)
            / (n as f64 / 2.0 + 0.5);
        for _ in 0..60 {
            let (hn, hn1) = hermite(n, x);
            let dh = 2.0 * n as f64 * hn1;
            // Deflate already-found roots for robust separation.
            let defl: f64 = roots.iter().map(|&(r, _)| 1.0 / (x - r)).sum();
            let step = hn / (dh - hn * defl);
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, hn1) = hermite(n, x);
        // w_i = 2^{n-1} n! √π / (n² H_{n-1}(x_i)²)
        let mut log_w = (n as f64 - 1.0) * std::f64::consts::LN_2
            + std::f64::consts::PI.sqrt().ln()
            - 2.0 * (n as f64).ln()
            - 2.0 * hn1.abs().ln();
        for j in 1..=n {
            log_w += (j as f64).ln();
        }
        roots.push((x, log_w.exp()));
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn builtin_laws_have_frozen_moments() {
        let asym = JumpLaw::asymmetric_two_point();
        assert!(asym.points.iter().map(|&(u, p)| u * p).sum::<f64>().abs() < 1e-15);
        assert!((asym.m2() - 1.0).abs() < 1e-15);
        assert!((asym.zeta() - 1.0).abs() < 1e-15);
        assert!((asym.m3_signed() - 1.5).abs() < 1e-15);
        assert!((asym.m3_abs() - 1.7).abs() < 1e-15);

        let rad = JumpLaw::rademacher();
        assert_eq!(rad.m2(), 1.0);
        assert_eq!(rad.m3_signed(), 0.0);
        assert_eq!(rad.m3_abs(), 1.0);
    }

    #[test]
    fn construction_rejects_uncentered_and_malformed_laws() {
        assert!(matches!(
            JumpLaw::finite(vec![(1.0, 1.0)]),
            Err(JumpLawError::NotCentered { .. })
        ));
        assert!(matches!(
            JumpLaw::finite(vec![(0.0, 1.0)]).map(|_| ()),
            Ok(())
        ));
        assert!(matches!(
            JumpLaw::finite(vec![(1.0, 0.6), (-1.0, 0.6)]),
            Err(JumpLawError::ProbabilitySum { .. })
        ));
        assert!(matches!(
            JumpLaw::finite(vec![]),
            Err(JumpLawError::Empty)
        ));
        assert!(matches!(
            JumpLaw::finite(vec![(1.0, -0.5), (-1.0, 1.5)]),
            Err(JumpLawError::BadProbability { .. })
        ));
        assert!(matches!(
            JumpLaw::by_name("cauchy"),
            Err(JumpLawError::UnknownName { .. })
        ));
    }

    #[test]
    fn sampling_matches_probabilities_within_clt_band() {
        let law = JumpLaw::asymmetric_two_point();
        let mut rng = CounterRng::from_key(314);
        let n = 1_000_000u64;
        let mut count_high = 0u64;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = law.sample(&mut rng);
            if u == 2.0 {
                count_high += 1;
            }
            sum += u;
        }
        let p_hat = count_high as f64 / n as f64;
        // SE of p̂ is √(0.2·0.8/n) = 4e-4.
        assert!((p_hat - 0.2).abs() < 5.0 * 4.0e-4, "p̂={p_hat}");
        // SE of the mean is ζ/√n = 1e-3.
        assert!((sum / n as f64).abs() < 4.0e-3);
    }

    #[test]
    fn rademacher_empirical_mean_is_centered() {
        let law = JumpLaw::rademacher();
        let mut rng = CounterRng::from_key(2718);
        let n = 1_000_000u64;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += law.sample(&mut rng);
        }
        assert!((sum / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn gauss_hermite_quadrature_reproduces_gaussian_moments() {
        let law = JumpLaw::gaussian(0.8, 21).unwrap();
        let moment = |k: u32| -> f64 {
            law.integration_points()
                .iter()
                .map(|&(u, w)| w * u.powi(k as i32))
                .sum()
        };
        assert!(moment(0).abs() - 1.0 < 1e-10, "mass={}", moment(0));
        assert!((moment(0) - 1.0).abs() < 1e-10);
        assert!(moment(1).abs() < 1e-10);
        assert!((moment(2) - 0.64).abs() < 1e-10, "m2={}", moment(2));
        assert!(moment(3).abs() < 1e-9);
        let m4_expect = 3.0 * 0.8f64.powi(4);
        assert!((moment(4) - m4_expect).abs() < 1e-9, "m4={}", moment(4));
    }

    #[test]
    fn gaussian_sampling_has_declared_variance() {
        let law = JumpLaw::gaussian(1.5, 11).unwrap();
        let mut rng = CounterRng::from_key(55);
        let n = 200_000;
        let (mut s, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let u = law.sample(&mut rng);
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02);
        assert!((var - 2.25).abs() < 0.05, "var={var}");
    }
}
