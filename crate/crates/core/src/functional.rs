//! Measure-variable polynomials `G(m) = ∫ φ dm^⊗n` and their derivative
//! calculus.
//!
//! The canonical (centered) linear derivative is
//!
//! ```text
//! δG(m,y) = Σ_k ∫ φ(x with slot k ← y) dm^⊗(n−1) − n·G(m),
//! ```
//!
//! the unique version satisfying ∫ δG(m,y) dm(y) = 0. The second derivative
//! adds the ordered double-substitution sum plus correction terms depending
//! on one variable each, so its fully mixed partial keeps only the kernel
//! part. The Lions derivative is ∂_y δG(m,y).
//!
//! All derivative values are computed analytically from the kernel's
//! factor-wise derivatives; with the per-slot integrals `∫ g dm` cached in
//! [`Prepared`], each point evaluation is O(terms · arity²) regardless of
//! the atom count.

use rand_core::RngCore;

use crate::kernel::{factorial, Factor, Kernel, KernelError, Term};
use crate::measure::{DiscreteMeasure, MeasureError, DEFAULT_TENSOR_BUDGET, LP_ORACLE_MAX_ATOMS};
use crate::transport;
use thiserror::Error;

/// Errors from functional construction and calculus operations.
#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error("operation needs smoothness order {needs}, functional declares {has}")]
    Smoothness { needs: usize, has: usize },
    #[error("finite-difference mixing weight {eta} outside (0, 1)")]
    EtaRange { eta: f64 },
    #[error("taylor expansion order {order} unsupported (must be 1 or 2)")]
    TaylorOrder { order: usize },
    #[error("signed tensor power of order {order} unsupported (max 3)")]
    SignedPower { order: usize },
    #[error("product check limited to {max} components, got {got}")]
    ProductLength { got: usize, max: usize },
    #[error("product measures have {left}×{right} atoms, LP oracle cap is {cap} per side")]
    ProductSize { left: usize, right: usize, cap: usize },
    #[error("component lists have different lengths {left} and {right}")]
    ComponentMismatch { left: usize, right: usize },
    #[error("unknown builtin functional id \"{id}\"")]
    UnknownBuiltin { id: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Transport(#[from] transport::TransportError),
}

/// A measure-variable polynomial `G(m) = ∫ φ dm^⊗n`.
#[derive(Debug, Clone)]
pub struct PolynomialFunctional {
    id: String,
    kernel: Kernel,
    smoothness_order: usize,
}

/// Smoothness order declared for all builtin functionals (their factors are
/// C^∞ with derivatives implemented up to order 4).
pub const BUILTIN_SMOOTHNESS: usize = 4;

/// Builtin functional ids accepted by [`PolynomialFunctional::builtin`].
pub const BUILTIN_FUNCTIONALS: &[&str] = &[
    "mean",
    "second_moment",
    "third_moment",
    "mean_squared",
    "mean_cubed",
    "sin_mean",
    "sin_mean_squared",
    "tanh_mean",
];

impl PolynomialFunctional {
    /// Wraps a kernel with a declared smoothness order.
    pub fn new(id: impl Into<String>, kernel: Kernel, smoothness_order: usize) -> Self {
        Self {
            id: id.into(),
            kernel,
            smoothness_order,
        }
    }

    /// Builtin registry addressable by string id (config files use these).
    pub fn builtin(id: &str) -> Result<Self, FunctionalError> {
        let kernel = match id {
            "mean" => Kernel::monomial_term(1.0, vec![Factor::Power(1)])?,
            "second_moment" => Kernel::monomial_term(1.0, vec![Factor::Power(2)])?,
            "third_moment" => Kernel::monomial_term(1.0, vec![Factor::Power(3)])?,
            "mean_squared" => {
                Kernel::monomial_term(1.0, vec![Factor::Power(1), Factor::Power(1)])?
            }
            "mean_cubed" => Kernel::monomial_term(
                1.0,
                vec![Factor::Power(1), Factor::Power(1), Factor::Power(1)],
            )?,
            "sin_mean" => Kernel::monomial_term(1.0, vec![Factor::Sin])?,
            "sin_mean_squared" => Kernel::monomial_term(1.0, vec![Factor::Sin, Factor::Sin])?,
            "tanh_mean" => Kernel::monomial_term(1.0, vec![Factor::Tanh])?,
            other => {
                return Err(FunctionalError::UnknownBuiltin {
                    id: other.to_string(),
                })
            }
        };
        Ok(Self::new(id, kernel, BUILTIN_SMOOTHNESS))
    }

    /// Constant functional G ≡ value (arity 0).
    pub fn constant(value: f64) -> Self {
        Self::new("constant", Kernel::constant(value), BUILTIN_SMOOTHNESS)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn arity(&self) -> usize {
        self.kernel.arity()
    }

    pub fn smoothness_order(&self) -> usize {
        self.smoothness_order
    }

    /// Errors unless the declared smoothness order covers `needs`
    /// derivatives.
    pub fn require_smoothness(&self, needs: usize) -> Result<(), FunctionalError> {
        if self.smoothness_order < needs {
            return Err(FunctionalError::Smoothness {
                needs,
                has: self.smoothness_order,
            });
        }
        Ok(())
    }

    /// G(m), evaluated through the exact factorized form of the separable
    /// kernel (mathematically identical to the tensor sum, and O(atoms)
    /// instead of O(atoms^arity), so empirical measures of any size work).
    pub fn eval(&self, m: &DiscreteMeasure) -> f64 {
        self.prepare(m).value()
    }

    /// G(m) through the generic tensor-sum route of the measure module.
    ///
    /// Independent of the factorized path; used by tests and oracles.
    pub fn eval_via_tensor(&self, m: &DiscreteMeasure) -> Result<f64, FunctionalError> {
        Ok(m.tensor_integrate(self.arity(), DEFAULT_TENSOR_BUDGET, |args| {
            self.kernel.eval(args)
        })?)
    }

    /// Caches the per-slot integrals ∫g dm and ∫g′ dm for fast repeated
    /// derivative evaluation against a fixed measure.
    pub fn prepare<'g>(&'g self, m: &DiscreteMeasure) -> Prepared<'g> {
        let n = self.arity();
        let terms = self.kernel.terms();
        let mut ints = vec![0.0f64; terms.len() * n];
        let mut dints = vec![0.0f64; terms.len() * n];
        for (t, term) in terms.iter().enumerate() {
            for (s, factor) in term.factors.iter().enumerate() {
                let mut i0 = 0.0;
                let mut i1 = 0.0;
                for (x, w) in m.iter() {
                    i0 += w * factor.deriv(0, x);
                    i1 += w * factor.deriv(1, x);
                }
                ints[t * n + s] = i0;
                dints[t * n + s] = i1;
            }
        }
        let mut value = 0.0;
        for (t, term) in terms.iter().enumerate() {
            let mut prod = term.coeff;
            for s in 0..n {
                prod *= ints[t * n + s];
            }
            value += prod;
        }
        Prepared {
            functional: self,
            ints,
            dints,
            value,
        }
    }

    /// Canonical first derivative δG(m,y).
    pub fn delta(&self, m: &DiscreteMeasure, y: f64) -> Result<f64, FunctionalError> {
        self.require_smoothness(1)?;
        Ok(self.prepare(m).delta(y))
    }

    /// Canonical second derivative δ²G(m,y₁,y₂).
    pub fn delta2(&self, m: &DiscreteMeasure, y1: f64, y2: f64) -> Result<f64, FunctionalError> {
        self.require_smoothness(2)?;
        Ok(self.prepare(m).delta2(y1, y2))
    }

    /// Lions derivative ∂G(m,y) = ∂_y δG(m,y).
    pub fn lions(&self, m: &DiscreteMeasure, y: f64) -> Result<f64, FunctionalError> {
        self.require_smoothness(1)?;
        Ok(self.prepare(m).lions(y))
    }

    /// Dawson finite-difference quotient
    /// (G((1−η)m + ηδ_x) − G(m)) / η, which converges to δG(m,x) as η ↓ 0.
    pub fn directional_fd(
        &self,
        m: &DiscreteMeasure,
        x: f64,
        eta: f64,
    ) -> Result<f64, FunctionalError> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(FunctionalError::EtaRange { eta });
        }
        let spiked = m.mix(&DiscreteMeasure::dirac(x)?, eta)?;
        Ok((self.eval(&spiked) - self.eval(m)) / eta)
    }

    /// Taylor-Lagrange check at the given order (1 or 2): returns
    /// `lhs = |G(m1) − Σ_{k≤order} (1/k!) ∫ δᵏG(m0,·) d(m1−m0)^⊗k|` and the
    /// remainder bound
    /// `rhs = D_KR(m0,m1)^{order+1}/(order+1)! · (fully mixed bound)`.
    pub fn taylor_check(
        &self,
        m0: &DiscreteMeasure,
        m1: &DiscreteMeasure,
        order: usize,
    ) -> Result<TaylorCheck, FunctionalError> {
        if !(order == 1 || order == 2) {
            return Err(FunctionalError::TaylorOrder { order });
        }
        self.require_smoothness(order + 1)?;
        let prepared = self.prepare(m0);
        let signed = signed_difference_atoms(m1, m0);
        let mut expansion = prepared.value();
        // First-order term ∫ δG(m0,y) dΔ(y).
        let t1: f64 = signed.iter().map(|&(y, w)| w * prepared.delta(y)).sum();
        expansion += t1;
        if order == 2 {
            let mut t2 = 0.0;
            for &(y1, w1) in &signed {
                for &(y2, w2) in &signed {
                    t2 += w1 * w2 * prepared.delta2(y1, y2);
                }
            }
            expansion += t2 / factorial(2);
        }
        let lhs = (self.eval(m1) - expansion).abs();
        let distance = m0.kr_distance(m1);
        let radius = m0.support_radius().max(m1.support_radius());
        let mixed_bound = self.kernel.fully_mixed_bound(order + 1, radius)?;
        let rhs_bound = distance.powi(order as i32 + 1) / factorial(order + 1) * mixed_bound;
        Ok(TaylorCheck {
            lhs,
            rhs_bound,
            distance,
        })
    }

    /// Upper bound for the fully mixed derivative of order `j` on the
    /// radius box (see [`Kernel::fully_mixed_bound`]).
    pub fn fully_mixed_bound(&self, j: usize, radius: f64) -> Result<f64, FunctionalError> {
        Ok(self.kernel.fully_mixed_bound(j, radius)?)
    }
}

/// Result of a Taylor-Lagrange remainder check.
#[derive(Debug, Clone, Copy)]
pub struct TaylorCheck {
    /// |remainder| actually observed.
    pub lhs: f64,
    /// Theorem bound: D^{order+1}/(order+1)! × mixed-derivative bound.
    pub rhs_bound: f64,
    /// The Kantorovich-Rubinstein distance used in the bound.
    pub distance: f64,
}

/// Per-measure cache of slot integrals for fast derivative evaluation.
pub struct Prepared<'g> {
    functional: &'g PolynomialFunctional,
    /// ints[t·n + s] = ∫ g_{t,s} dm
    ints: Vec<f64>,
    /// dints[t·n + s] = ∫ g′_{t,s} dm
    dints: Vec<f64>,
    value: f64,
}

impl<'g> Prepared<'g> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn functional(&self) -> &'g PolynomialFunctional {
        self.functional
    }

    /// G(translate(m, shift)) − G(m) for the measure this was prepared on.
    ///
    /// Exact algebra, not a Taylor truncation: per-slot integrals of the
    /// shifted measure are written as cached integral + increment, with the
    /// increment from [`Factor::increment`], and the product difference is
    /// telescoped so every summand carries at least one increment factor.
    /// Evaluating G twice and subtracting would cancel the O(1) parts and
    /// amplify rounding when the shift is small.
    pub fn shifted_difference(&self, m: &DiscreteMeasure, shift: f64) -> f64 {
        let n = self.arity();
        let mut increments = [0.0f64; crate::kernel::MAX_ARITY];
        let mut total = 0.0;
        for (t, term) in self.terms().iter().enumerate() {
            for (s, factor) in term.factors.iter().enumerate() {
                increments[s] = m
                    .atoms()
                    .iter()
                    .map(|a| a.weight * factor.increment(a.position, shift))
                    .sum();
            }
            // Π(I_s + Δ_s) − Π I_s = Σ_j Δ_j · Π_{s<j}(I_s + Δ_s) · Π_{s>j} I_s
            let mut term_sum = 0.0;
            for j in 0..n {
                let mut prod = increments[j];
                for (s, increment) in increments.iter().enumerate().take(j) {
                    prod *= self.ints[t * n + s] + increment;
                }
                for s in (j + 1)..n {
                    prod *= self.ints[t * n + s];
                }
                term_sum += prod;
            }
            total += term.coeff * term_sum;
        }
        total
    }

    fn arity(&self) -> usize {
        self.functional.arity()
    }

    fn terms(&self) -> &'g [Term] {
        self.functional.kernel.terms()
    }

    /// Π over slots ≠ k of the cached integrals for term t.
    fn leave_one_out(&self, t: usize, k: usize) -> f64 {
        let n = self.arity();
        let mut prod = 1.0;
        for s in 0..n {
            if s != k {
                prod *= self.ints[t * n + s];
            }
        }
        prod
    }

    /// Π over slots ∉ {k, l} of the cached integrals for term t.
    fn leave_two_out(&self, t: usize, k: usize, l: usize) -> f64 {
        let n = self.arity();
        let mut prod = 1.0;
        for s in 0..n {
            if s != k && s != l {
                prod *= self.ints[t * n + s];
            }
        }
        prod
    }

    /// S(y) = Σ_k ∫ φ(slot k ← y) dm^⊗(n−1): the uncentered substitution sum,
    /// with the factor in slot k differentiated `order` times.
    fn substitution_sum(&self, y: f64, order: usize) -> f64 {
        let mut total = 0.0;
        for (t, term) in self.terms().iter().enumerate() {
            let mut term_sum = 0.0;
            for (k, factor) in term.factors.iter().enumerate() {
                term_sum += factor.deriv(order, y) * self.leave_one_out(t, k);
            }
            total += term.coeff * term_sum;
        }
        total
    }

    /// Canonical first derivative δG(m,y).
    pub fn delta(&self, y: f64) -> f64 {
        self.substitution_sum(y, 0) - self.arity() as f64 * self.value
    }

    /// Lions derivative ∂_y δG(m,y).
    pub fn lions(&self, y: f64) -> f64 {
        self.substitution_sum(y, 1)
    }

    /// Derivative of G under a common translation of the prepared measure,
    /// d/dε G(m ⊕ ε) at ε = 0, which equals ∫ ∂G(m,y) dm(y). Read off the
    /// cached slot integrals, so no extra pass over the atoms.
    pub fn translation_derivative(&self) -> f64 {
        let n = self.arity();
        let mut total = 0.0;
        for (t, term) in self.terms().iter().enumerate() {
            let mut term_sum = 0.0;
            for s in 0..n {
                term_sum += self.dints[t * n + s] * self.leave_one_out(t, s);
            }
            total += term.coeff * term_sum;
        }
        total
    }

    /// Second position derivative ∂²_y δG(m,y).
    pub fn lions_second(&self, y: f64) -> f64 {
        self.substitution_sum(y, 2)
    }

    /// Ordered double-substitution sum with the slot-k factor differentiated
    /// `d1` times at y1 and the slot-l factor `d2` times at y2.
    fn double_substitution(&self, y1: f64, d1: usize, y2: f64, d2: usize) -> f64 {
        let mut total = 0.0;
        for (t, term) in self.terms().iter().enumerate() {
            let mut term_sum = 0.0;
            for (k, fk) in term.factors.iter().enumerate() {
                for (l, fl) in term.factors.iter().enumerate() {
                    if k == l {
                        continue;
                    }
                    term_sum += fk.deriv(d1, y1)
                        * fl.deriv(d2, y2)
                        * self.leave_two_out(t, k, l);
                }
            }
            total += term.coeff * term_sum;
        }
        total
    }

    /// Canonical second derivative δ²G(m,y₁,y₂).
    pub fn delta2(&self, y1: f64, y2: f64) -> f64 {
        let n = self.arity() as f64;
        self.double_substitution(y1, 0, y2, 0)
            - (n - 1.0) * self.substitution_sum(y1, 0)
            - n * self.delta(y2)
    }

    /// Mixed partial ∂²_{y₁y₂} δ²G(m,y₁,y₂): only the kernel part survives.
    pub fn delta2_mixed(&self, y1: f64, y2: f64) -> f64 {
        self.double_substitution(y1, 1, y2, 1)
    }

    /// Partial ∂_{y₁} δ²G(m,y₁,y₂).
    pub fn delta2_partial_y1(&self, y1: f64, y2: f64) -> f64 {
        let n = self.arity() as f64;
        self.double_substitution(y1, 1, y2, 0) - (n - 1.0) * self.substitution_sum(y1, 1)
    }

    /// Partial ∂_{y₂} δ²G(m,y₁,y₂).
    pub fn delta2_partial_y2(&self, y1: f64, y2: f64) -> f64 {
        let n = self.arity() as f64;
        self.double_substitution(y1, 0, y2, 1) - n * self.lions(y2)
    }

    /// Factorized quadrature ∬ ∂²_{y₁y₂} δ²G(m,y₁,y₂) dm(y₁) dm(y₂).
    ///
    /// Identical to integrating [`Self::delta2_mixed`] against m⊗m, but
    /// O(terms · arity²) instead of O(atoms²).
    pub fn delta2_mixed_quadrature(&self) -> f64 {
        let n = self.arity();
        let mut total = 0.0;
        for (t, term) in self.terms().iter().enumerate() {
            let mut term_sum = 0.0;
            for k in 0..n {
                for l in 0..n {
                    if k == l {
                        continue;
                    }
                    term_sum +=
                        self.dints[t * n + k] * self.dints[t * n + l] * self.leave_two_out(t, k, l);
                }
            }
            total += term.coeff * term_sum;
        }
        total
    }
}

/// Atoms of the signed measure m1 − m0 (weights of m0 negated).
pub fn signed_difference_atoms(m1: &DiscreteMeasure, m0: &DiscreteMeasure) -> Vec<(f64, f64)> {
    m1.iter().chain(m0.iter().map(|(x, w)| (x, -w))).collect()
}

/// Both sides of the tensor-power Lipschitz inequality:
/// `lhs = |∫ g d(m1−m0)^⊗n|`,
/// `rhs = D_KR(m0,m1)^n · sup |∂₁…∂ₙ g|` (one derivative per slot).
pub fn tensor_lipschitz_check(
    g: &Kernel,
    m0: &DiscreteMeasure,
    m1: &DiscreteMeasure,
) -> Result<(f64, f64), FunctionalError> {
    let n = g.arity();
    if n == 0 || n > 3 {
        return Err(FunctionalError::SignedPower { order: n });
    }
    let signed = signed_difference_atoms(m1, m0);
    let mut args = vec![0.0f64; n];
    let lhs = signed_tensor_integral(g, &signed, &mut args, 0, 1.0);
    let radius = m0.support_radius().max(m1.support_radius());
    let sup = g.sup_partial_bound(&vec![1; n], radius)?;
    let rhs = m0.kr_distance(m1).powi(n as i32) * sup;
    Ok((lhs.abs(), rhs))
}

fn signed_tensor_integral(
    g: &Kernel,
    signed: &[(f64, f64)],
    args: &mut [f64],
    slot: usize,
    weight: f64,
) -> f64 {
    if slot == args.len() {
        return weight * g.eval(args);
    }
    let mut acc = 0.0;
    for &(x, w) in signed {
        args[slot] = x;
        acc += signed_tensor_integral(g, signed, args, slot + 1, weight * w);
    }
    acc
}

/// Both sides of the product-measure distance inequality:
/// `lhs = D_KR(⊗ ms[k], ⊗ mus[k])` by LP with L¹ ground cost,
/// `rhs = Σ_k D_KR(ms[k], mus[k])`.
pub fn product_distance_check(
    ms: &[DiscreteMeasure],
    mus: &[DiscreteMeasure],
) -> Result<(f64, f64), FunctionalError> {
    if ms.len() != mus.len() {
        return Err(FunctionalError::ComponentMismatch {
            left: ms.len(),
            right: mus.len(),
        });
    }
    if ms.is_empty() || ms.len() > 3 {
        return Err(FunctionalError::ProductLength {
            got: ms.len(),
            max: 3,
        });
    }
    let left = product_atoms(ms);
    let right = product_atoms(mus);
    if left.len() > LP_ORACLE_MAX_ATOMS || right.len() > LP_ORACLE_MAX_ATOMS {
        return Err(FunctionalError::ProductSize {
            left: left.len(),
            right: right.len(),
            cap: LP_ORACLE_MAX_ATOMS,
        });
    }
    let supplies: Vec<f64> = left.iter().map(|a| a.1).collect();
    let demands: Vec<f64> = right.iter().map(|a| a.1).collect();
    let lhs = transport::min_cost_transport(&supplies, &demands, |i, j| {
        left[i]
            .0
            .iter()
            .zip(right[j].0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    })?;
    let rhs = ms
        .iter()
        .zip(mus.iter())
        .map(|(a, b)| a.kr_distance(b))
        .sum();
    Ok((lhs, rhs))
}

/// Atom list of ⊗ components: d-dimensional positions with product weights.
fn product_atoms(components: &[DiscreteMeasure]) -> Vec<(Vec<f64>, f64)> {
    let mut acc: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for comp in components {
        let mut next = Vec::with_capacity(acc.len() * comp.atom_count());
        for (prefix, weight) in &acc {
            for (x, w) in comp.iter() {
                let mut pos = prefix.clone();
                pos.push(x);
                next.push((pos, weight * w));
            }
        }
        acc = next;
    }
    acc
}

/// Draws a random smooth functional for the property suites: arity 1–3,
/// one or two separable terms, factors from the full family.
pub fn random_functional<R: RngCore>(rng: &mut R) -> PolynomialFunctional {
    let arity = 1 + (rng.next_u64() % 3) as usize;
    let n_terms = 1 + (rng.next_u64() % 2) as usize;
    let mut terms = Vec::with_capacity(n_terms);
    for _ in 0..n_terms {
        let mut factors = Vec::with_capacity(arity);
        for _ in 0..arity {
            factors.push(match rng.next_u64() % 6 {
                0 => Factor::Power(1),
                1 => Factor::Power(2),
                2 => Factor::Power(3),
                3 => Factor::Sin,
                4 => Factor::Cos,
                _ => Factor::Tanh,
            });
        }
        let magnitude = 0.5 + 1.5 * crate::rng::uniform_unit(rng.next_u64());
        let sign = if rng.next_u64() % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(Term {
            coeff: sign * magnitude,
            factors,
        });
    }
    let kernel = Kernel::new(arity, terms).expect("random kernel is well-formed");
    PolynomialFunctional::new("random", kernel, BUILTIN_SMOOTHNESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_points(points).expect("valid test measure")
    }

    fn mean_squared() -> PolynomialFunctional {
        PolynomialFunctional::builtin("mean_squared").unwrap()
    }

    #[test]
    fn eval_matches_hand_values_and_tensor_route() {
        let m = uniform(&[1.0, 3.0]);
        let mean = PolynomialFunctional::builtin("mean").unwrap();
        assert!((mean.eval(&m) - 2.0).abs() < 1e-15);

        let m02 = uniform(&[0.0, 2.0]);
        assert!((mean_squared().eval(&m02) - 1.0).abs() < 1e-15);

        let constant = PolynomialFunctional::constant(3.25);
        assert_eq!(constant.eval(&m), 3.25);

        // Factorized path agrees with the generic tensor sum.
        let g = PolynomialFunctional::builtin("sin_mean_squared").unwrap();
        let m3 = uniform(&[-0.7, 0.4, 1.9]);
        let fast = g.eval(&m3);
        let slow = g.eval_via_tensor(&m3).unwrap();
        assert!((fast - slow).abs() < 1e-14, "fast={fast} slow={slow}");
    }

    #[test]
    fn delta_of_mean_is_centered_residual() {
        let mean = PolynomialFunctional::builtin("mean").unwrap();
        let m = uniform(&[1.0, 5.0]);
        for y in [-2.0, 0.0, 4.5] {
            assert!((mean.delta(&m, y).unwrap() - (y - 3.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn delta_of_squared_mean_matches_frozen_value() {
        // m = uniform{0,2} (mean 1), y = 3: δG = 2·3·1 − 2·1 = 4.
        let m = uniform(&[0.0, 2.0]);
        let d = mean_squared().delta(&m, 3.0).unwrap();
        assert!((d - 4.0).abs() < 1e-12, "delta={d}");
    }

    #[test]
    fn delta_of_constant_functional_is_zero() {
        let c = PolynomialFunctional::constant(7.0);
        let m = uniform(&[0.0, 1.0]);
        assert_eq!(c.delta(&m, 2.0).unwrap(), 0.0);
        assert_eq!(c.delta2(&m, 2.0, -1.0).unwrap(), 0.0);
        assert_eq!(c.lions(&m, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn delta_is_centered_against_the_base_measure() {
        let mut rng = crate::rng::CounterRng::from_key(11);
        for _ in 0..20 {
            let g = random_functional(&mut rng);
            let m = crate::measure::random_measure(&mut rng, 6, 2.0);
            let integral: f64 = m
                .iter()
                .map(|(x, w)| w * g.delta(&m, x).unwrap())
                .sum();
            let scale = 1.0 + g.eval(&m).abs();
            assert!(
                integral.abs() <= 1e-10 * scale,
                "centering violated: {integral} for {:?}",
                g.id()
            );
        }
    }

    #[test]
    fn directional_fd_converges_to_delta_at_first_order() {
        let m = uniform(&[0.0, 2.0]);
        let g = mean_squared();
        let exact = g.delta(&m, 3.0).unwrap();
        let fd = g.directional_fd(&m, 3.0, 1e-3).unwrap();
        assert!((fd - exact).abs() < 5e-3, "fd={fd} exact={exact}");
        // Linear functional: the quotient is exact for every η.
        let mean = PolynomialFunctional::builtin("mean").unwrap();
        let fd_lin = mean.directional_fd(&m, 3.0, 0.37).unwrap();
        assert!((fd_lin - mean.delta(&m, 3.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn directional_fd_rejects_eta_out_of_range() {
        let m = uniform(&[0.0, 2.0]);
        assert!(matches!(
            mean_squared().directional_fd(&m, 1.0, 0.0),
            Err(FunctionalError::EtaRange { .. })
        ));
        assert!(matches!(
            mean_squared().directional_fd(&m, 1.0, 1.0),
            Err(FunctionalError::EtaRange { .. })
        ));
    }

    #[test]
    fn delta2_mixed_partial_of_squared_mean_is_two() {
        let m = uniform(&[0.0, 2.0]);
        let p = mean_squared();
        for (y1, y2) in [(0.0, 0.0), (3.0, -1.5), (0.25, 7.0)] {
            let v = p.prepare(&m).delta2_mixed(y1, y2);
            assert!((v - 2.0).abs() < 1e-13, "mixed={v}");
        }
        // First-order functional: mixed partial of δ² vanishes.
        let mean = PolynomialFunctional::builtin("mean").unwrap();
        assert_eq!(mean.prepare(&m).delta2_mixed(1.0, 2.0), 0.0);
    }

    #[test]
    fn delta2_is_centered_in_its_second_argument() {
        let mut rng = crate::rng::CounterRng::from_key(13);
        for _ in 0..10 {
            let g = random_functional(&mut rng);
            let m = crate::measure::random_measure(&mut rng, 5, 1.5);
            let prepared = g.prepare(&m);
            let y1 = 0.7;
            let integral: f64 = m
                .iter()
                .map(|(y2, w)| w * prepared.delta2(y1, y2))
                .sum();
            assert!(
                integral.abs() <= 1e-10 * (1.0 + prepared.value().abs()),
                "δ² centering violated: {integral}"
            );
        }
    }

    #[test]
    fn lions_of_squared_mean_is_twice_the_mean() {
        let m = DiscreteMeasure::new([(1.0, 0.25), (-2.0, 0.75)]).unwrap();
        let expect = 2.0 * m.mean();
        for y in [-1.0, 0.5, 2.0] {
            let v = mean_squared().lions(&m, y).unwrap();
            assert!((v - expect).abs() < 1e-14);
        }
        let mean = PolynomialFunctional::builtin("mean").unwrap();
        assert!((mean.lions(&m, 0.3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_taylor_expansion_is_exact_for_quadratic_functionals() {
        let m0 = uniform(&[0.0, 1.0]);
        let m1 = DiscreteMeasure::new([(0.5, 0.4), (2.0, 0.6)]).unwrap();
        let check = mean_squared().taylor_check(&m0, &m1, 2).unwrap();
        assert!(check.lhs < 1e-13, "remainder {} should vanish", check.lhs);
        // order+1 = 3 exceeds arity 2, so the bound is exactly zero too.
        assert_eq!(check.rhs_bound, 0.0);
    }

    #[test]
    fn taylor_remainder_within_bound_on_smooth_kernels() {
        let g = PolynomialFunctional::builtin("sin_mean_squared").unwrap();
        let m0 = uniform(&[0.1, 0.9, 2.0, -1.2]);
        let m1 = uniform(&[0.3, 1.1, 1.7, -0.8]);
        for order in [1, 2] {
            let check = g.taylor_check(&m0, &m1, order).unwrap();
            assert!(
                check.lhs <= check.rhs_bound + 1e-12,
                "order {order}: lhs={} rhs={}",
                check.lhs,
                check.rhs_bound
            );
        }
        // Identical measures: both sides collapse to zero.
        let same = g.taylor_check(&m0, &m0, 1).unwrap();
        assert_eq!(same.lhs, 0.0);
        assert_eq!(same.rhs_bound, 0.0);
    }

    #[test]
    fn taylor_check_enforces_order_and_smoothness() {
        let m = uniform(&[0.0, 1.0]);
        assert!(matches!(
            mean_squared().taylor_check(&m, &m, 3),
            Err(FunctionalError::TaylorOrder { order: 3 })
        ));
        let rough = PolynomialFunctional::new(
            "rough",
            Kernel::monomial_term(1.0, vec![Factor::Sin]).unwrap(),
            1,
        );
        assert!(matches!(
            rough.taylor_check(&m, &m, 1),
            Err(FunctionalError::Smoothness { needs: 2, has: 1 })
        ));
    }

    #[test]
    fn tensor_lipschitz_inequality_on_sin_product() {
        let g = Kernel::new(
            2,
            vec![Term {
                coeff: 1.0,
                factors: vec![Factor::Sin, Factor::Sin],
            }],
        )
        .unwrap();
        let m0 = uniform(&[0.0, 1.0, 2.5]);
        let m1 = uniform(&[0.4, 1.2, 2.0]);
        let (lhs, rhs) = tensor_lipschitz_check(&g, &m0, &m1).unwrap();
        assert!(lhs <= rhs + 1e-12, "lhs={lhs} rhs={rhs}");
        let (zero, _) = tensor_lipschitz_check(&g, &m0, &m0).unwrap();
        assert!(zero.abs() < 1e-14);
    }

    #[test]
    fn one_lipschitz_kernel_reduces_to_plain_distance_bound() {
        // n=1, g = x (1-Lipschitz on any radius through its derivative
        // bound): lhs = |mean difference| ≤ distance.
        let g = Kernel::monomial_term(1.0, vec![Factor::Power(1)]).unwrap();
        let m0 = uniform(&[0.0, 2.0]);
        let m1 = uniform(&[1.0, 4.0]);
        let (lhs, rhs) = tensor_lipschitz_check(&g, &m0, &m1).unwrap();
        assert!((lhs - 1.5).abs() < 1e-14);
        assert!((rhs - m0.kr_distance(&m1)).abs() < 1e-14);
        assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn product_distance_check_on_identical_and_shifted_components() {
        let a = uniform(&[0.0, 1.0]);
        let b = uniform(&[0.5, 2.0]);
        // Identical lists: product distance zero.
        let (lhs, _) = product_distance_check(
            std::slice::from_ref(&a),
            std::slice::from_ref(&a),
        )
        .unwrap();
        assert!(lhs.abs() < 1e-12);
        // d=1 reduces to the plain distance.
        let (lhs1, rhs1) =
            product_distance_check(std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap();
        assert!((lhs1 - a.kr_distance(&b)).abs() < 1e-9);
        assert!((lhs1 - rhs1).abs() < 1e-9);
        // d=2: subadditivity.
        let (lhs2, rhs2) =
            product_distance_check(&[a.clone(), b.clone()], &[b.clone(), a.clone()]).unwrap();
        assert!(lhs2 <= rhs2 + 1e-9, "lhs={lhs2} rhs={rhs2}");
    }

    #[test]
    fn product_distance_check_validates_inputs() {
        let a = uniform(&[0.0, 1.0]);
        assert!(matches!(
            product_distance_check(std::slice::from_ref(&a), &[]),
            Err(FunctionalError::ComponentMismatch { .. })
        ));
        let many: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let big = uniform(&many);
        assert!(matches!(
            product_distance_check(
                &[big.clone(), big.clone()],
                &[big.clone(), big.clone()]
            ),
            Err(FunctionalError::ProductSize { .. })
        ));
    }

    #[test]
    fn builtin_registry_resolves_all_ids() {
        for id in BUILTIN_FUNCTIONALS {
            let g = PolynomialFunctional::builtin(id).unwrap();
            assert_eq!(g.id(), *id);
        }
        assert!(matches!(
            PolynomialFunctional::builtin("nope"),
            Err(FunctionalError::UnknownBuiltin { .. })
        ));
    }

    #[test]
    fn shifted_difference_matches_translate_and_subtract() {
        let mut rng = crate::rng::CounterRng::from_key(808);
        for _ in 0..30 {
            let g = random_functional(&mut rng);
            let m = crate::measure::random_measure(&mut rng, 6, 2.0);
            let prepared = g.prepare(&m);
            for &shift in &[0.7f64, -0.4, 0.05] {
                let translated = m.translate(shift).unwrap();
                let direct = g.eval(&translated) - g.eval(&m);
                let stable = prepared.shifted_difference(&m, shift);
                assert!(
                    (stable - direct).abs() <= 1e-11 * (1.0 + direct.abs()),
                    "{}: shift={shift}, stable={stable}, direct={direct}",
                    g.id()
                );
            }
        }
    }

    #[test]
    fn shifted_difference_scales_linearly_for_tiny_shifts() {
        // For G(m)=(∫x dm)² the exact difference is 2·m̄·λ + λ², which the
        // telescoped form reproduces to relative precision even when the
        // direct subtraction would round to a few digits.
        let g = PolynomialFunctional::builtin("mean_squared").unwrap();
        let m = crate::measure::random_measure(&mut crate::rng::CounterRng::from_key(9), 5, 3.0);
        let prepared = g.prepare(&m);
        let mean = m.mean();
        for &shift in &[1e-6f64, -1e-9, 1e-12] {
            let expected = 2.0 * mean * shift + shift * shift;
            let got = prepared.shifted_difference(&m, shift);
            assert!(
                (got - expected).abs() <= 1e-12 * expected.abs(),
                "shift={shift:e}: got={got:e}, expected={expected:e}"
            );
        }
    }
}
