//! Continued fractions `a₁/(b₁ + a₂/(b₂ + a₃/(b₃ + …)))`.
//!
//! Convergents are computed with the modified Lentz method, which carries
//! the ratios `Cₖ = Aₖ/Aₖ₋₁` and `Dₖ = Bₖ₋₁/Bₖ` instead of the raw Wallis
//! numerators and denominators, and stopped with the a-posteriori bound
//!
//! ```text
//! |f − f⁽ᵏ⁾| ≤ |Bₖ/Bₖ₋₁| / |Im(Bₖ/Bₖ₋₁)| · |f⁽ᵏ⁾ − f⁽ᵏ⁻¹⁾|
//! ```
//!
//! which holds for birth-death fractions whenever `Im(s) ≠ 0`. For real `s`
//! the bound degenerates and the last step size is reported instead, marked
//! non-rigorous.

use num_complex::Complex64;

use crate::error::NumericError;
use crate::modelspec::Rates;

/// Magnitude floor for Lentz `C` and `D` denominators.
pub const TINY: f64 = 1e-30;

/// Default depth limit for infinite fractions.
pub const DEFAULT_MAX_DEPTH: usize = 100_000;

/// Source of partial numerators and denominators.
pub trait ContinuedFraction {
    /// `(aₖ, bₖ)` for `k ≥ 1`, or `None` past the end of a terminating fraction.
    fn term(&self, k: usize) -> Option<(Complex64, Complex64)>;
}

/// An explicitly tabulated (hence terminating) continued fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ContFrac {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl ContFrac {
    /// `a[0]`, `b[0]` are `a₁`, `b₁`.
    pub fn new(a: Vec<Complex64>, b: Vec<Complex64>) -> Self {
        assert_eq!(a.len(), b.len(), "partial numerators and denominators differ in length");
        Self { a, b }
    }

    pub fn depth(&self) -> usize {
        self.a.len()
    }
}

impl ContinuedFraction for ContFrac {
    fn term(&self, k: usize) -> Option<(Complex64, Complex64)> {
        if k == 0 {
            return None;
        }
        Some((*self.a.get(k - 1)?, self.b[k - 1]))
    }
}

/// A fraction given by a closure `k ↦ (aₖ, bₖ)`.
pub struct FnFrac<F>(pub F);

impl<F> ContinuedFraction for FnFrac<F>
where
    F: Fn(usize) -> Option<(Complex64, Complex64)>,
{
    fn term(&self, k: usize) -> Option<(Complex64, Complex64)> {
        (self.0)(k)
    }
}

impl<T: ContinuedFraction + ?Sized> ContinuedFraction for &T {
    fn term(&self, k: usize) -> Option<(Complex64, Complex64)> {
        (**self).term(k)
    }
}

/// The fraction for `f₀₀(s)` of a birth-death chain, or one of its tails.
///
/// With `offset = 0` the terms are `a₁ = 1`, `b₁ = s + λ₀`,
/// `aⱼ = −λⱼ₋₂μⱼ₋₁`, `bⱼ = s + λⱼ₋₁ + μⱼ₋₁`. A nonzero offset `m` yields
/// the tail whose k-th term is the `(m+k)`-th term of the full fraction.
pub struct BdpFraction<'r, R: ?Sized> {
    rates: &'r R,
    s: Complex64,
    offset: usize,
}

impl<'r, R: Rates + ?Sized> BdpFraction<'r, R> {
    pub fn new(rates: &'r R, s: Complex64) -> Self {
        Self::tail(rates, s, 0)
    }

    pub fn tail(rates: &'r R, s: Complex64, offset: usize) -> Self {
        Self { rates, s, offset }
    }
}

/// `(aⱼ, bⱼ)` of the full birth-death fraction.
#[inline]
pub fn bdp_term<R: Rates + ?Sized>(rates: &R, s: Complex64, j: usize) -> (Complex64, Complex64) {
    debug_assert!(j >= 1);
    if j == 1 {
        (Complex64::new(1.0, 0.0), s + rates.birth(0))
    } else {
        let a = -rates.birth(j - 2) * rates.death(j - 1);
        let b = s + rates.birth(j - 1) + rates.death(j - 1);
        (Complex64::new(a, 0.0), b)
    }
}

impl<R: Rates + ?Sized> ContinuedFraction for BdpFraction<'_, R> {
    fn term(&self, k: usize) -> Option<(Complex64, Complex64)> {
        if k == 0 {
            return None;
        }
        Some(bdp_term(self.rates, self.s, self.offset + k))
    }
}

/// Evaluation state after `depth` steps of the modified Lentz method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LentzState {
    /// The convergent `f⁽ᵏ⁾`.
    pub value: Complex64,
    /// `Aₖ/Aₖ₋₁`.
    pub c: Complex64,
    /// `Bₖ₋₁/Bₖ`.
    pub d: Complex64,
    pub depth: usize,
    /// `f⁽ᵏ⁾ − f⁽ᵏ⁻¹⁾`.
    pub last_step: Complex64,
}

impl LentzState {
    /// The truncation bound for the current convergent, and whether it is
    /// rigorous (false when `Im(Bₖ/Bₖ₋₁)` vanishes).
    pub fn error_bound(&self) -> (f64, bool) {
        let step = self.last_step.norm();
        if step == 0.0 {
            return (0.0, true);
        }
        let ratio = self.d.inv();
        let im = ratio.im.abs();
        if im > 1e-300 && im.is_finite() {
            let bound = ratio.norm() / im * step;
            if bound.is_finite() {
                return (bound, true);
            }
        }
        (step, false)
    }
}

fn floor_magnitude(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r < TINY {
        if r == 0.0 {
            Complex64::new(TINY, 0.0)
        } else {
            z * (TINY / r)
        }
    } else {
        z
    }
}

/// Step-by-step modified Lentz evaluation.
pub struct Lentz<C> {
    cf: C,
    state: LentzState,
    exhausted: bool,
}

impl<C: ContinuedFraction> Lentz<C> {
    pub fn new(cf: C) -> Self {
        Self {
            cf,
            // f⁽⁰⁾ = A₀/B₀ = 0 is stood in for by the floor so that C₁ stays finite.
            state: LentzState {
                value: Complex64::new(TINY, 0.0),
                c: Complex64::new(TINY, 0.0),
                d: Complex64::new(0.0, 0.0),
                depth: 0,
                last_step: Complex64::new(0.0, 0.0),
            },
            exhausted: false,
        }
    }

    pub fn state(&self) -> &LentzState {
        &self.state
    }

    /// Advance one level. Returns `None` once the fraction has terminated;
    /// the state then holds the exact value.
    pub fn step(&mut self) -> Option<&LentzState> {
        if self.exhausted {
            return None;
        }
        let k = self.state.depth + 1;
        let Some((a, b)) = self.cf.term(k) else {
            self.exhausted = true;
            return None;
        };
        if a == Complex64::new(0.0, 0.0) {
            // A zero partial numerator cuts the fraction off here.
            if k == 1 {
                self.state.value = Complex64::new(0.0, 0.0);
                self.state.last_step = Complex64::new(0.0, 0.0);
            }
            self.exhausted = true;
            return None;
        }
        let d = floor_magnitude(b + a * self.state.d).inv();
        let c = floor_magnitude(b + a / self.state.c);
        let prev = if k == 1 {
            Complex64::new(0.0, 0.0)
        } else {
            self.state.value
        };
        let value = self.state.value * c * d;
        self.state = LentzState {
            value,
            c,
            d,
            depth: k,
            last_step: value - prev,
        };
        Some(&self.state)
    }
}

/// Result of [`lentz_eval`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LentzResult {
    pub value: Complex64,
    pub depth: usize,
    /// Bound on `|f − value|`; zero when the fraction terminated.
    pub err_est: f64,
    /// False when the bound fell back to the last step size (real `s`).
    pub rigorous: bool,
}

/// Evaluate a continued fraction to absolute tolerance `tol`.
///
/// Iteration also stops when the convergents stagnate at machine precision,
/// in which case `err_est` is whatever the bound reports there and may
/// exceed `tol`.
pub fn lentz_eval<C: ContinuedFraction>(
    cf: C,
    tol: f64,
    max_depth: usize,
) -> Result<LentzResult, NumericError> {
    if !(tol > 0.0) {
        return Err(NumericError::Argument(format!("tolerance must be positive, got {tol}")));
    }
    let mut lentz = Lentz::new(cf);
    let mut last = None;
    while lentz.state().depth < max_depth {
        let Some(state) = lentz.step() else {
            let s = lentz.state();
            return Ok(LentzResult {
                value: if s.depth == 0 && s.value.norm() <= TINY {
                    Complex64::new(0.0, 0.0)
                } else {
                    s.value
                },
                depth: s.depth,
                err_est: 0.0,
                rigorous: true,
            });
        };
        let (bound, rigorous) = state.error_bound();
        let result = LentzResult {
            value: state.value,
            depth: state.depth,
            err_est: bound,
            rigorous,
        };
        let stagnant = state.depth > 1 && state.last_step.norm() <= 2.0 * f64::EPSILON * state.value.norm();
        if !state.value.is_finite() {
            return Err(NumericError::NonConvergence {
                value: state.value,
                depth: state.depth,
                err_est: f64::INFINITY,
            });
        }
        if bound <= tol || stagnant {
            return Ok(result);
        }
        last = Some(result);
    }
    match last {
        Some(r) => Err(NumericError::NonConvergence {
            value: r.value,
            depth: r.depth,
            err_est: r.err_est,
        }),
        None => Err(NumericError::Argument("max_depth must be at least 1".into())),
    }
}

/// Wallis numerator and denominator `(Aₖ, Bₖ)` of the k-th convergent.
///
/// Raw Wallis values overflow for deep or large-term fractions; use this
/// only as a reference at small `k`.
pub fn wallis_convergent<C: ContinuedFraction>(cf: C, k: usize) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    // (A₋₁, A₀) = (1, 0), (B₋₁, B₀) = (0, 1)
    let (mut a_prev, mut a_cur) = (one, zero);
    let (mut b_prev, mut b_cur) = (zero, one);
    for j in 1..=k {
        let (aj, bj) = cf.term(j).unwrap_or((zero, one));
        let a_next = bj * a_cur + aj * a_prev;
        let b_next = bj * b_cur + aj * b_prev;
        (a_prev, a_cur) = (a_cur, a_next);
        (b_prev, b_cur) = (b_cur, b_next);
    }
    (a_cur, b_cur)
}

/// `B_{m+j}/B_m` by the stable recurrence
/// `Z₀ = 1`, `Z₁ = 1/d`, `Z_j = b_{m+j} Z_{j−1} + a_{m+j} Z_{j−2}`,
/// where `d = B_m/B_{m+1}` is the Lentz `D` value at depth `m + 1`.
pub fn denominator_ratio<C: ContinuedFraction>(
    cf: C,
    m: usize,
    j: usize,
    d: Complex64,
) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    if j == 0 {
        return one;
    }
    let (mut z_prev, mut z) = (one, d.inv());
    for step in 2..=j {
        let (a, b) = cf
            .term(m + step)
            .unwrap_or((Complex64::new(0.0, 0.0), one));
        (z_prev, z) = (z, b * z + a * z_prev);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{make_model, ModelKind};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn constant_frac(a: f64, b: f64) -> FnFrac<impl Fn(usize) -> Option<(Complex64, Complex64)>> {
        FnFrac(move |_| Some((c(a), c(b))))
    }

    #[test]
    fn sqrt2_minus_one() {
        let r = lentz_eval(constant_frac(1.0, 2.0), 1e-12, 1000).unwrap();
        assert!((r.value.re - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!(!r.rigorous);
    }

    #[test]
    fn depth_one_is_first_convergent() {
        let cf = ContFrac::new(vec![c(3.0)], vec![Complex64::new(2.0, 1.0)]);
        let r = lentz_eval(&cf, 1e-12, 10).unwrap();
        assert!((r.value - c(3.0) / Complex64::new(2.0, 1.0)).norm() < 1e-15);
        assert_eq!(r.depth, 1);
        assert_eq!(r.err_est, 0.0);
        // forced truncation of an infinite fraction at depth 1
        let err = lentz_eval(constant_frac(3.0, 2.0), 1e-300, 1).unwrap_err();
        match err {
            NumericError::NonConvergence { value, depth, .. } => {
                assert_eq!(depth, 1);
                assert!((value.re - 1.5).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wallis_small_k() {
        let cf = constant_frac(1.0, 2.0);
        assert_eq!(wallis_convergent(&cf, 0), (c(0.0), c(1.0)));
        assert_eq!(wallis_convergent(&cf, 1), (c(1.0), c(2.0)));
        // A₂ = 2·1 + 1·0 = 2, B₂ = 2·2 + 1 = 5; A₃ = 2·2 + 1 = 5, B₃ = 2·5 + 2 = 12
        assert_eq!(wallis_convergent(&cf, 2), (c(2.0), c(5.0)));
        let (a3, b3) = wallis_convergent(&cf, 3);
        assert_eq!((a3, b3), (c(5.0), c(12.0)));
        assert!(((a3 / b3).re - 0.41667).abs() < 1e-5);
    }

    #[test]
    fn ratio_first_terms() {
        let m = make_model(&ModelKind::Kendall { lambda: 0.1, mu: 0.5 }).unwrap();
        let s = Complex64::new(1.0, 1.0);
        let cf = BdpFraction::new(&m, s);
        let d = Complex64::new(0.3, -0.2);
        assert_eq!(denominator_ratio(&cf, 4, 0, d), c(1.0));
        assert!((denominator_ratio(&cf, 4, 1, d) - d.inv()).norm() < 1e-15);
        let (a6, b6) = cf.term(6).unwrap();
        assert!((denominator_ratio(&cf, 4, 2, d) - (b6 / d + a6)).norm() < 1e-14);
    }

    #[test]
    fn zero_first_numerator_is_zero() {
        let cf = ContFrac::new(vec![c(0.0), c(1.0)], vec![c(1.0), c(1.0)]);
        let r = lentz_eval(&cf, 1e-12, 10).unwrap();
        assert_eq!(r.value, c(0.0));
        assert_eq!(r.err_est, 0.0);
    }

    #[test]
    fn finite_chain_terminates_exactly() {
        let m = make_model(&ModelKind::Moran {
            population: 10,
            fitness_1: 0.5,
            fitness_2: 1.0,
            u: 0.1,
            v: 0.1,
        })
        .unwrap();
        let s = Complex64::new(0.7, 2.0);
        let r = lentz_eval(BdpFraction::new(&m, s), 1e-300, 10_000).unwrap();
        // a_{N+2} = −λ_N μ_{N+1} = 0: depth N+1 is the last level
        assert_eq!(r.depth, 11);
        assert_eq!(r.err_est, 0.0);
        let (a, b) = wallis_convergent(BdpFraction::new(&m, s), 11);
        assert!(((a / b) - r.value).norm() < 1e-13 * r.value.norm());
    }

    #[test]
    fn invalid_tolerance() {
        assert!(lentz_eval(constant_frac(1.0, 2.0), 0.0, 10).is_err());
    }
}
