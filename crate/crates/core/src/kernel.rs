//! Smooth kernels φ: ℝⁿ → ℝ for measure-variable polynomials, with analytic
//! partial derivatives and derivative sup-bounds.
//!
//! A [`Kernel`] is a sum of separable terms `c · g₁(x₁)···gₙ(xₙ)` where each
//! factor is one of a small closed family ([`Factor`]) with hand-written
//! derivatives up to order 4. No automatic differentiation: derivative
//! formulas are themselves under test, so they must come from an independent
//! analytic source.

use thiserror::Error;

/// Highest per-slot derivative order the factor family provides.
pub const MAX_FACTOR_DERIVATIVE: usize = 4;

/// Largest supported kernel arity; keeps tensor evaluation exact and lets
/// hot paths use fixed-size slot buffers.
pub const MAX_ARITY: usize = 8;

/// Errors from kernel construction and evaluation.
#[derive(Debug, Error)]
pub enum KernelError {
    #[error("term {term} has {got} factors, kernel arity is {arity}")]
    FactorCount { term: usize, got: usize, arity: usize },
    #[error("coefficient of term {term} is not finite")]
    BadCoefficient { term: usize },
    #[error("derivative order {order} exceeds supported maximum {max}")]
    DerivativeOrder { order: usize, max: usize },
    #[error("partial-derivative multi-index has {got} entries, arity is {arity}")]
    MultiIndexLength { got: usize, arity: usize },
    #[error("monomial degree {degree} exceeds supported maximum 8")]
    MonomialDegree { degree: u32 },
    #[error("kernel arity {arity} exceeds supported maximum {max}")]
    ArityTooLarge { arity: usize, max: usize },
}

/// One univariate smooth factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    /// Constant 1 (slot unused by this term).
    One,
    /// Monomial x^degree, degree ∈ 1..=8.
    Power(u32),
    /// sin(x)
    Sin,
    /// cos(x)
    Cos,
    /// tanh(x)
    Tanh,
}

impl Factor {
    /// Value of the `order`-th derivative at `x` (order 0 = the factor).
    pub fn deriv(&self, order: usize, x: f64) -> f64 {
        match *self {
            Factor::One => {
                if order == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Factor::Power(p) => {
                let p = p as usize;
                if order > p {
                    return 0.0;
                }
                let mut coeff = 1.0;
                for i in 0..order {
                    coeff *= (p - i) as f64;
                }
                coeff * x.powi((p - order) as i32)
            }
            Factor::Sin => match order % 4 {
                0 => x.sin(),
                1 => x.cos(),
                2 => -x.sin(),
                _ => -x.cos(),
            },
            Factor::Cos => match order % 4 {
                0 => x.cos(),
                1 => -x.sin(),
                2 => -x.cos(),
                _ => x.sin(),
            },
            Factor::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                match order {
                    0 => t,
                    1 => s,
                    2 => -2.0 * t * s,
                    3 => -2.0 * s * s + 4.0 * t * t * s,
                    4 => 8.0 * t * s * (2.0 * s - t * t),
                    _ => f64::NAN,
                }
            }
        }
    }

    /// f(x + shift) − f(x), written so every term is O(shift): exact
    /// algebraic identities (binomial expansion, prosthaphaeresis, tanh
    /// addition), not Taylor truncations. Subtracting two evaluations
    /// directly would lose the leading digits when shift is small.
    pub fn increment(&self, x: f64, shift: f64) -> f64 {
        match *self {
            Factor::One => 0.0,
            Factor::Power(p) => {
                // Σ_{j=1..p} C(p,j)·shift^j·x^{p−j}
                let p = p as usize;
                let mut binom = 1.0;
                let mut shift_pow = 1.0;
                let mut total = 0.0;
                for j in 1..=p {
                    binom *= (p - j + 1) as f64 / j as f64;
                    shift_pow *= shift;
                    total += binom * shift_pow * x.powi((p - j) as i32);
                }
                total
            }
            Factor::Sin => 2.0 * (x + 0.5 * shift).cos() * (0.5 * shift).sin(),
            Factor::Cos => -2.0 * (x + 0.5 * shift).sin() * (0.5 * shift).sin(),
            Factor::Tanh => {
                let t1 = (x + shift).tanh();
                let t2 = x.tanh();
                shift.tanh() * (1.0 - t1 * t2)
            }
        }
    }

    /// Upper bound for |derivative of the given order| on |x| ≤ radius.
    ///
    /// Bounds are valid (never undershoot), not necessarily tight.
    pub fn sup_deriv(&self, order: usize, radius: f64) -> f64 {
        match *self {
            Factor::One => {
                if order == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Factor::Power(p) => {
                let p = p as usize;
                if order > p {
                    return 0.0;
                }
                let mut coeff = 1.0;
                for i in 0..order {
                    coeff *= (p - i) as f64;
                }
                coeff * radius.powi((p - order) as i32)
            }
            Factor::Sin | Factor::Cos => 1.0,
            Factor::Tanh => match order {
                0 => radius.min(1.0),
                1 => 1.0,
                // Global maxima of |tanh''|, |tanh'''|, |tanh''''|, rounded up.
                2 => 0.7699,
                3 => 2.0,
                _ => 4.09,
            },
        }
    }

    fn max_order(&self) -> usize {
        MAX_FACTOR_DERIVATIVE
    }
}

/// One separable term `coeff · Π_k factors[k](x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

/// A kernel φ(x₁, …, xₙ) given as a sum of separable terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    arity: usize,
    terms: Vec<Term>,
}

impl Kernel {
    /// Builds and validates a kernel of the given arity.
    ///
    /// An empty term list is the zero kernel.
    pub fn new(arity: usize, terms: Vec<Term>) -> Result<Self, KernelError> {
        if arity > MAX_ARITY {
            return Err(KernelError::ArityTooLarge {
                arity,
                max: MAX_ARITY,
            });
        }
        for (index, term) in terms.iter().enumerate() {
            if term.factors.len() != arity {
                return Err(KernelError::FactorCount {
                    term: index,
                    got: term.factors.len(),
                    arity,
                });
            }
            if !term.coeff.is_finite() {
                return Err(KernelError::BadCoefficient { term: index });
            }
            for factor in &term.factors {
                if let Factor::Power(degree) = *factor {
                    if degree == 0 || degree > 8 {
                        return Err(KernelError::MonomialDegree { degree });
                    }
                }
            }
        }
        Ok(Self { arity, terms })
    }

    /// Constant kernel of arity 0.
    pub fn constant(value: f64) -> Self {
        Self {
            arity: 0,
            terms: vec![Term {
                coeff: value,
                factors: Vec::new(),
            }],
        }
    }

    /// Separable single-term kernel.
    pub fn monomial_term(coeff: f64, factors: Vec<Factor>) -> Result<Self, KernelError> {
        let arity = factors.len();
        Self::new(arity, vec![Term { coeff, factors }])
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// φ(args).
    pub fn eval(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.arity);
        let mut total = 0.0;
        for term in &self.terms {
            let mut prod = term.coeff;
            for (factor, &x) in term.factors.iter().zip(args.iter()) {
                prod *= factor.deriv(0, x);
            }
            total += prod;
        }
        total
    }

    /// Mixed partial derivative ∂^orders φ(args), entry k giving the
    /// derivative order in slot k.
    pub fn partial(&self, orders: &[usize], args: &[f64]) -> Result<f64, KernelError> {
        if orders.len() != self.arity {
            return Err(KernelError::MultiIndexLength {
                got: orders.len(),
                arity: self.arity,
            });
        }
        for (&order, factor_cap) in orders.iter().zip(std::iter::repeat(MAX_FACTOR_DERIVATIVE)) {
            if order > factor_cap {
                return Err(KernelError::DerivativeOrder {
                    order,
                    max: factor_cap,
                });
            }
        }
        let mut total = 0.0;
        for term in &self.terms {
            let mut prod = term.coeff;
            for ((factor, &x), &order) in term.factors.iter().zip(args.iter()).zip(orders.iter()) {
                prod *= factor.deriv(order, x);
                if prod == 0.0 {
                    break;
                }
            }
            total += prod;
        }
        Ok(total)
    }

    /// Upper bound for sup |∂^orders φ| over the box |x_k| ≤ radius.
    pub fn sup_partial_bound(&self, orders: &[usize], radius: f64) -> Result<f64, KernelError> {
        if orders.len() != self.arity {
            return Err(KernelError::MultiIndexLength {
                got: orders.len(),
                arity: self.arity,
            });
        }
        let mut total = 0.0;
        for term in &self.terms {
            let mut prod = term.coeff.abs();
            for (factor, &order) in term.factors.iter().zip(orders.iter()) {
                if order > factor.max_order() {
                    return Err(KernelError::DerivativeOrder {
                        order,
                        max: factor.max_order(),
                    });
                }
                prod *= factor.sup_deriv(order, radius);
            }
            total += prod;
        }
        Ok(total)
    }

    /// Upper bound for the fully mixed derivative sum of order `j`:
    /// Σ over ordered injective slot tuples (k₁,…,k_j) of
    /// sup |∂_{k₁}…∂_{k_j} φ| on the radius box. This dominates the fully
    /// mixed j-th derivative of the canonical derivatives of the induced
    /// polynomial functional (each distinct argument differentiated once).
    pub fn fully_mixed_bound(&self, j: usize, radius: f64) -> Result<f64, KernelError> {
        if j > self.arity {
            return Ok(0.0);
        }
        let mut orders = vec![0usize; self.arity];
        let mut total = 0.0;
        self.fully_mixed_rec(j, 0, &mut orders, radius, &mut total)?;
        // The recursion visits unordered slot supports; every ordering of a
        // support is a distinct tuple with the same sup bound.
        Ok(total * factorial(j))
    }

    fn fully_mixed_rec(
        &self,
        remaining: usize,
        start_count: usize,
        orders: &mut [usize],
        radius: f64,
        total: &mut f64,
    ) -> Result<(), KernelError> {
        if remaining == 0 {
            *total += self.sup_partial_bound(orders, radius)?;
            return Ok(());
        }
        for k in start_count..self.arity {
            if orders[k] == 0 {
                orders[k] = 1;
                self.fully_mixed_rec(remaining - 1, k + 1, orders, radius, total)?;
                orders[k] = 0;
            }
        }
        Ok(())
    }

    /// Largest per-slot derivative order needed to exercise this kernel in
    /// validation (cap for finite-difference consistency checks).
    pub fn max_supported_order(&self) -> usize {
        MAX_FACTOR_DERIVATIVE
    }
}

/// Factorial, for the small orders used by Taylor machinery.
pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product_kernel() -> Kernel {
        // φ(x, y) = x·y
        Kernel::monomial_term(1.0, vec![Factor::Power(1), Factor::Power(1)]).unwrap()
    }

    #[test]
    fn evaluates_separable_sums() {
        // φ(x, y) = 2·x²·sin(y) − y³  (second term: One factor in slot 0)
        let k = Kernel::new(
            2,
            vec![
                Term {
                    coeff: 2.0,
                    factors: vec![Factor::Power(2), Factor::Sin],
                },
                Term {
                    coeff: -1.0,
                    factors: vec![Factor::One, Factor::Power(3)],
                },
            ],
        )
        .unwrap();
        let (x, y) = (1.5f64, 0.7f64);
        let expect = 2.0 * x * x * y.sin() - y * y * y;
        assert!((k.eval(&[x, y]) - expect).abs() < 1e-15);
    }

    #[test]
    fn partial_derivatives_match_hand_formulas() {
        let k = product_kernel();
        // ∂_x(xy) = y, ∂_y = x, ∂_xy = 1, ∂_xx = 0.
        assert_eq!(k.partial(&[1, 0], &[2.0, 5.0]).unwrap(), 5.0);
        assert_eq!(k.partial(&[0, 1], &[2.0, 5.0]).unwrap(), 2.0);
        assert_eq!(k.partial(&[1, 1], &[2.0, 5.0]).unwrap(), 1.0);
        assert_eq!(k.partial(&[2, 0], &[2.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn tanh_derivatives_match_finite_differences() {
        let h = 1e-5;
        for &x in &[-1.3, 0.0, 0.4, 2.2] {
            for order in 1..=3usize {
                let f = |v: f64| Factor::Tanh.deriv(order - 1, v);
                let fd = (f(x + h) - f(x - h)) / (2.0 * h);
                let exact = Factor::Tanh.deriv(order, x);
                assert!(
                    (fd - exact).abs() < 1e-8 + 1e-6 * exact.abs(),
                    "order {order} at {x}: fd={fd} exact={exact}"
                );
            }
        }
    }

    #[test]
    fn sup_bounds_dominate_sampled_derivatives() {
        let factors = [
            Factor::Power(3),
            Factor::Sin,
            Factor::Cos,
            Factor::Tanh,
            Factor::One,
        ];
        let radius = 2.5;
        for factor in factors {
            for order in 0..=4usize {
                let bound = factor.sup_deriv(order, radius);
                let mut x = -radius;
                while x <= radius {
                    let v = factor.deriv(order, x).abs();
                    assert!(
                        v <= bound * (1.0 + 1e-12) + 1e-12,
                        "{factor:?} order {order} at {x}: |{v}| > {bound}"
                    );
                    x += radius / 100.0;
                }
            }
        }
    }

    #[test]
    fn fully_mixed_bound_counts_ordered_tuples() {
        // φ = x·y: support {1,2} with sup ∂₁∂₂φ = 1, two orderings.
        let k = product_kernel();
        assert_eq!(k.fully_mixed_bound(2, 3.0).unwrap(), 2.0);
        // j=1: sup|∂_x φ| + sup|∂_y φ| = radius + radius.
        assert_eq!(k.fully_mixed_bound(1, 3.0).unwrap(), 6.0);
        // j exceeding arity: zero.
        assert_eq!(k.fully_mixed_bound(3, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_malformed_kernels() {
        assert!(matches!(
            Kernel::new(
                2,
                vec![Term {
                    coeff: 1.0,
                    factors: vec![Factor::Sin],
                }],
            ),
            Err(KernelError::FactorCount { .. })
        ));
        assert!(matches!(
            Kernel::monomial_term(f64::INFINITY, vec![Factor::Sin]),
            Err(KernelError::BadCoefficient { .. })
        ));
        assert!(matches!(
            Kernel::monomial_term(1.0, vec![Factor::Power(9)]),
            Err(KernelError::MonomialDegree { degree: 9 })
        ));
    }

    #[test]
    fn constant_kernel_evaluates_with_no_args() {
        let k = Kernel::constant(4.25);
        assert_eq!(k.eval(&[]), 4.25);
        assert_eq!(k.arity(), 0);
    }

    #[test]
    fn rejects_oversized_arity() {
        let term = Term {
            coeff: 1.0,
            factors: vec![Factor::One; MAX_ARITY + 1],
        };
        assert!(matches!(
            Kernel::new(MAX_ARITY + 1, vec![term]),
            Err(KernelError::ArityTooLarge { .. })
        ));
    }

    #[test]
    fn increment_matches_direct_difference_at_moderate_shifts() {
        let factors = [
            Factor::One,
            Factor::Power(1),
            Factor::Power(3),
            Factor::Power(8),
            Factor::Sin,
            Factor::Cos,
            Factor::Tanh,
        ];
        for factor in factors {
            for &x in &[-2.3f64, -0.4, 0.0, 1.7] {
                for &shift in &[-0.8f64, 0.3, 1.5] {
                    let direct = factor.deriv(0, x + shift) - factor.deriv(0, x);
                    let stable = factor.increment(x, shift);
                    assert!(
                        (stable - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
                        "{factor:?} x={x} shift={shift}: {stable} vs {direct}"
                    );
                }
            }
        }
    }

    #[test]
    fn increment_is_cancellation_free_at_tiny_shifts() {
        // For shift → 0 the increment must stay within O(shift²) of
        // shift·f′(x), which direct subtraction cannot achieve in f64.
        let shift = 1e-9;
        let factors = [Factor::Power(4), Factor::Sin, Factor::Tanh];
        for factor in factors {
            for &x in &[-1.2f64, 0.5, 2.0] {
                let inc = factor.increment(x, shift);
                let linear = shift * factor.deriv(1, x);
                let curvature = factor.deriv(2, x).abs().max(factor.deriv(2, x + shift).abs());
                assert!(
                    (inc - linear).abs() <= shift * shift * curvature + 1e-30,
                    "{factor:?} at x={x}: inc={inc:e}, linear={linear:e}"
                );
            }
        }
    }
}
