//! Laplace transforms of transition probabilities and their numerical
//! inversion.
//!
//! For `j ≤ i` the transform of `P_ij(t)` is
//!
//! ```text
//! f_ij(s) = (∏_{k=j+1}^{i} μₖ) · B_j / (B_{i+1} + B_i·T_i),
//! T_i = a_{i+2}/(b_{i+2} + a_{i+3}/(b_{i+3} + …))
//! ```
//!
//! where `B_k` are the convergent denominators of the `f₀₀` fraction; the
//! case `i ≤ j` swaps the roles of `i` and `j` and uses `∏_{k=i}^{j-1} λₖ`.
//! Dividing through by `B_i` leaves only ratios `B_k/B_{k−1}`, which are
//! the reciprocals of the Lentz `D` values, and the tail `T`, which is a
//! continued fraction of its own. The raw `B_k` are never formed.
//!
//! Inversion uses the Fourier-series (Riemann sum) form of the Bromwich
//! integral on the contour `Re s = A/(2t)`, `A = γ ln 10`, whose alternating
//! series is accelerated by Euler summation.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::contfrac::{bdp_term, BdpFraction, Lentz, DEFAULT_MAX_DEPTH, TINY};
use crate::error::NumericError;
use crate::modelspec::{Rates, StateIndex};

/// Value of a transform at one contour point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValue {
    pub value: Complex64,
    /// Bound on the truncation error of `value`.
    pub trunc_err: f64,
    /// False if any part of `trunc_err` is a step-size heuristic.
    pub rigorous: bool,
}

impl TransformValue {
    pub fn exact(value: Complex64) -> Self {
        Self {
            value,
            trunc_err: 0.0,
            rigorous: true,
        }
    }
}

/// Something that can be evaluated on the inversion contour.
pub trait LaplaceTransform: Sync {
    /// Evaluate at `s`, aiming for an absolute truncation error below `tol`.
    fn eval(&self, s: Complex64, tol: f64) -> Result<TransformValue, NumericError>;
}

/// A transform known in closed form.
pub struct ClosedForm<F>(pub F);

impl<F> LaplaceTransform for ClosedForm<F>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    fn eval(&self, s: Complex64, _tol: f64) -> Result<TransformValue, NumericError> {
        Ok(TransformValue::exact((self.0)(s)))
    }
}

/// `Σ_{j ∈ targets} f_ij(s)` (optionally times `s`) for a birth-death chain.
pub struct LaplaceFn<R> {
    rates: R,
    start: StateIndex,
    targets: Vec<StateIndex>,
    multiply_by_s: bool,
    max_depth: usize,
}

/// The transform of `P_ij(t)`.
pub fn transform_fij<R: Rates>(rates: R, i: StateIndex, j: StateIndex) -> LaplaceFn<R> {
    LaplaceFn::new(rates, i, vec![j])
}

impl<R: Rates> LaplaceFn<R> {
    pub fn new(rates: R, start: StateIndex, targets: Vec<StateIndex>) -> Self {
        Self {
            rates,
            start,
            targets,
            multiply_by_s: false,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    /// Multiply by `s`, turning the transform of a distribution function
    /// vanishing at zero into the transform of its derivative.
    pub fn times_s(mut self) -> Self {
        self.multiply_by_s = true;
        self
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn rates(&self) -> &R {
        &self.rates
    }

    /// Terms for a single target, with the branch chosen by `j` vs `start`.
    fn single(
        &self,
        s: Complex64,
        ratios: &[Complex64],
        j: StateIndex,
        tol: f64,
    ) -> Result<TransformValue, NumericError> {
        let i = self.start;
        if j <= i {
            self.branch(s, ratios, j, i, Side::Below, tol)
        } else {
            self.branch(s, ratios, i, j, Side::Above, tol)
        }
    }

    /// `f` for the pair `lo ≤ hi`: the prefactor runs over `k = lo+1..=hi`
    /// and the tail starts after `hi`.
    fn branch(
        &self,
        s: Complex64,
        ratios: &[Complex64],
        lo: StateIndex,
        hi: StateIndex,
        side: Side,
        tol: f64,
    ) -> Result<TransformValue, NumericError> {
        let prefactor = match prefactor(&self.rates, ratios, lo, hi, side) {
            Some(p) => p,
            None => return Ok(TransformValue::exact(Complex64::new(0.0, 0.0))),
        };
        let head = ratios[hi + 1];
        tail_quotient(&self.rates, s, hi, head, prefactor, tol, self.max_depth)
    }

    /// `f_{lo,hi}` through the `j ≤ i` branch and `f_{hi,lo}`'s mirror; the
    /// two must agree when `lo == hi`.
    #[cfg(test)]
    pub(crate) fn both_branches(&self, s: Complex64, n: StateIndex) -> (Complex64, Complex64) {
        let ratios = denominator_ratios(&self.rates, s, n + 1);
        let below = self.branch(s, &ratios, n, n, Side::Below, 1e-14).unwrap().value;
        let above = self.branch(s, &ratios, n, n, Side::Above, 1e-14).unwrap().value;
        (below, above)
    }
}

#[derive(Clone, Copy)]
enum Side {
    /// `j ≤ i`: death-rate product.
    Below,
    /// `i ≤ j`: birth-rate product.
    Above,
}

/// `r_k = B_k/B_{k−1}` for `k = 0..=top` (`r_0` unused), by
/// `r_1 = b_1`, `r_k = b_k + a_k/r_{k−1}`.
fn denominator_ratios<R: Rates + ?Sized>(rates: &R, s: Complex64, top: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(top + 1);
    out.push(Complex64::new(1.0, 0.0));
    let mut prev = Complex64::new(1.0, 0.0);
    for k in 1..=top {
        let (a, b) = bdp_term(rates, s, k);
        let r = if k == 1 { b } else { b + a / floor(prev) };
        out.push(r);
        prev = r;
    }
    out
}

fn floor(z: Complex64) -> Complex64 {
    if z.norm() < TINY {
        Complex64::new(TINY, 0.0)
    } else {
        z
    }
}

/// `∏_{k=lo+1}^{hi} rate_k / r_k` accumulated as log-magnitude and phase,
/// with `rate_k = μ_k` below and `λ_{k−1}` above. `None` if a rate vanishes.
fn prefactor<R: Rates + ?Sized>(
    rates: &R,
    ratios: &[Complex64],
    lo: StateIndex,
    hi: StateIndex,
    side: Side,
) -> Option<(f64, f64)> {
    let mut log_mag = 0.0;
    let mut phase = 0.0;
    for k in lo + 1..=hi {
        let rate = match side {
            Side::Below => rates.death(k),
            Side::Above => rates.birth(k - 1),
        };
        if rate == 0.0 {
            return None;
        }
        let r = floor(ratios[k]);
        log_mag += rate.ln() - r.norm().ln();
        phase -= r.arg();
    }
    Some((log_mag, phase))
}

/// `P / (head + T)` where `T` is the tail fraction after state `hi` and
/// `P = exp(log_mag + i·phase)`, stopping once the propagated tail error
/// falls below `tol`.
fn tail_quotient<R: Rates + ?Sized>(
    rates: &R,
    s: Complex64,
    hi: StateIndex,
    head: Complex64,
    (log_mag, phase): (f64, f64),
    tol: f64,
    max_depth: usize,
) -> Result<TransformValue, NumericError> {
    let mut lentz = Lentz::new(BdpFraction::tail(rates, s, hi + 1));
    let finish = |tail: Complex64, tail_err: f64, rigorous: bool| {
        let den = head + tail;
        let den_norm = den.norm();
        let value = Complex64::from_polar((log_mag - den_norm.ln()).exp(), phase - den.arg());
        let gap = den_norm - tail_err;
        let err = if tail_err == 0.0 {
            0.0
        } else if gap > 0.0 {
            (log_mag - den_norm.ln()).exp() * tail_err / gap
        } else {
            f64::INFINITY
        };
        TransformValue {
            value,
            trunc_err: err,
            rigorous,
        }
    };

    let mut last = None;
    while lentz.state().depth < max_depth {
        let Some(state) = lentz.step() else {
            let st = lentz.state();
            let tail = if st.depth == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                st.value
            };
            return Ok(finish(tail, 0.0, true));
        };
        let (bound, rigorous) = state.error_bound();
        let out = finish(state.value, bound, rigorous);
        if !out.value.is_finite() {
            return Err(NumericError::NonFinite { s });
        }
        let stagnant = state.depth > 1
            && state.last_step.norm() <= 2.0 * f64::EPSILON * state.value.norm();
        if out.trunc_err <= tol || stagnant {
            return Ok(out);
        }
        last = Some(out);
    }
    let out = last.expect("at least one Lentz step");
    Err(NumericError::NonConvergence {
        value: out.value,
        depth: max_depth,
        err_est: out.trunc_err,
    })
}

impl<R: Rates> LaplaceTransform for LaplaceFn<R> {
    fn eval(&self, s: Complex64, tol: f64) -> Result<TransformValue, NumericError> {
        let top = self
            .targets
            .iter()
            .copied()
            .chain(std::iter::once(self.start))
            .max()
            .unwrap_or(0)
            + 1;
        let ratios = denominator_ratios(&self.rates, s, top);
        let per_target = tol / self.targets.len().max(1) as f64;
        let mut total = TransformValue::exact(Complex64::new(0.0, 0.0));
        for &j in &self.targets {
            let v = self.single(s, &ratios, j, per_target)?;
            total.value += v.value;
            total.trunc_err += v.trunc_err;
            total.rigorous &= v.rigorous;
        }
        if self.multiply_by_s {
            total.value *= s;
            total.trunc_err *= s.norm();
        }
        Ok(total)
    }
}

/// Parameters of the Fourier-series inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InversionPlan {
    /// Target number of correct digits; sets `A = γ ln 10`.
    pub gamma: f64,
    /// Upper limit on the number of series terms.
    pub series_terms: usize,
    /// Terms entering the first Euler estimate.
    pub initial_terms: usize,
    /// Width `m` of the binomial averaging window.
    pub euler_terms: usize,
    /// Per-contour-point truncation tolerance on the contribution to the
    /// inverted value; `None` means `e^{−A} / (10 · series_terms)`.
    pub trunc_tol: Option<f64>,
}

impl Default for InversionPlan {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            series_terms: 500,
            initial_terms: 15,
            euler_terms: 11,
            trunc_tol: None,
        }
    }
}

impl InversionPlan {
    pub fn with_gamma(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }

    pub fn a(&self) -> f64 {
        self.gamma * std::f64::consts::LN_10
    }

    /// `e^{−A}/(1 − e^{−A})`, the discretization error for functions bounded by 1.
    pub fn discretization_bound(&self) -> f64 {
        let e = (-self.a()).exp();
        e / (1.0 - e)
    }

    fn point_tolerance(&self) -> f64 {
        self.trunc_tol
            .unwrap_or_else(|| (-self.a()).exp() / (10.0 * self.series_terms as f64))
    }

    fn validate(&self) -> Result<(), NumericError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(NumericError::Argument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.euler_terms == 0 || self.initial_terms == 0 {
            return Err(NumericError::Argument("series term counts must be positive".into()));
        }
        if self.series_terms < self.initial_terms + self.euler_terms + 1 {
            return Err(NumericError::Argument(
                "series_terms must exceed initial_terms + euler_terms".into(),
            ));
        }
        Ok(())
    }
}

/// An inverted value with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inversion {
    pub value: f64,
    /// Total reported error: the sum of the components below.
    pub err: f64,
    pub discretization_err: f64,
    pub truncation_err: f64,
    /// Difference of the last two Euler estimates.
    pub series_err: f64,
    pub roundoff_err: f64,
    /// False if the Euler estimates did not settle within `series_terms`.
    pub settled: bool,
    /// False if some component of the budget is heuristic.
    pub rigorous: bool,
}

/// Invert `f` at `t` for a target bounded by 1 in magnitude.
pub fn invert<F: LaplaceTransform + ?Sized>(
    f: &F,
    t: f64,
    plan: &InversionPlan,
) -> Result<Inversion, NumericError> {
    invert_bounded(f, t, plan, |_| 1.0)
}

/// Invert `f` at `t`; `bound(u)` must bound the magnitude of the target
/// function at `u ≥ 3t`, and enters the discretization error
/// `Σ_{k≥1} e^{−kA} bound((2k+1)t)`.
pub fn invert_bounded<F, B>(
    f: &F,
    t: f64,
    plan: &InversionPlan,
    bound: B,
) -> Result<Inversion, NumericError>
where
    F: LaplaceTransform + ?Sized,
    B: Fn(f64) -> f64,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(NumericError::Argument(format!("time must be positive, got {t}")));
    }
    plan.validate()?;
    let a = plan.a();
    let scale = (a / 2.0).exp() / t;
    let point_tol = plan.point_tolerance() / scale;
    let m = plan.euler_terms;
    let weights = binomial_weights(m);

    let mut series = Series {
        partial: Vec::with_capacity(plan.initial_terms + m + 2),
        trunc: 0.0,
        rigorous: true,
        abs_sum: 0.0,
    };
    let push = |k: usize, series: &mut Series| -> Result<(), NumericError> {
        let s = Complex64::new(a, 2.0 * k as f64 * std::f64::consts::PI) / (2.0 * t);
        let v = f.eval(s, point_tol)?;
        if !v.value.re.is_finite() {
            return Err(NumericError::NonFinite { s });
        }
        let weight = match k {
            0 => 0.5,
            k if k % 2 == 0 => 1.0,
            _ => -1.0,
        };
        let term = weight * v.value.re * scale;
        series.trunc += weight.abs() * v.trunc_err * scale;
        series.rigorous &= v.rigorous;
        series.abs_sum += term.abs();
        let prev = series.partial.last().copied().unwrap_or(0.0);
        series.partial.push(prev + term);
        Ok(())
    };
    let euler = |partial: &[f64], n: usize| -> f64 {
        weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * partial[n + j])
            .sum()
    };

    // partial[n] holds the sum through term n
    let n0 = plan.initial_terms;
    for k in 0..=n0 + m {
        push(k, &mut series)?;
    }
    let mut prev_est = euler(&series.partial, n0);
    let mut n = n0;
    let (value, series_err, settled) = loop {
        push(n + m + 1, &mut series)?;
        n += 1;
        let est = euler(&series.partial, n);
        let diff = (est - prev_est).abs();
        let target = plan
            .discretization_bound()
            .max(64.0 * f64::EPSILON * series.abs_sum);
        if diff <= target {
            break (est, diff, true);
        }
        if n + m + 1 >= plan.series_terms {
            break (est, diff, false);
        }
        prev_est = est;
    };
    let Series {
        trunc,
        rigorous,
        abs_sum,
        ..
    } = series;

    let e = (-a).exp();
    let mut discretization = 0.0;
    let mut k = 1;
    loop {
        let term = e.powi(k) * bound((2 * k + 1) as f64 * t);
        discretization += term;
        if term <= 1e-3 * discretization * f64::EPSILON || k >= 200 {
            break;
        }
        k += 1;
    }
    let roundoff = 8.0 * f64::EPSILON * abs_sum;
    Ok(Inversion {
        value,
        err: discretization + trunc + series_err + roundoff,
        discretization_err: discretization,
        truncation_err: trunc,
        series_err,
        roundoff_err: roundoff,
        settled,
        rigorous,
    })
}

struct Series {
    partial: Vec<f64>,
    trunc: f64,
    rigorous: bool,
    abs_sum: f64,
}

fn binomial_weights(m: usize) -> Vec<f64> {
    let mut w = vec![1.0; m + 1];
    for j in 1..=m {
        w[j] = w[j - 1] * (m - j + 1) as f64 / j as f64;
    }
    let scale = 0.5f64.powi(m as i32);
    w.iter_mut().for_each(|x| *x *= scale);
    w
}

/// `P_ij(t)` of the chain `rates`.
pub fn transition_probability<R: Rates>(
    rates: R,
    i: StateIndex,
    j: StateIndex,
    t: f64,
    plan: &InversionPlan,
) -> Result<Inversion, NumericError> {
    invert(&transform_fij(rates, i, j), t, plan)
}

/// A distribution function and/or density tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistCurve {
    pub grid: Vec<f64>,
    pub cdf: Option<Vec<f64>>,
    pub density: Option<Vec<f64>>,
    /// Per-point error budget.
    pub err: Vec<f64>,
    /// Set when any part of the budget rests on a heuristic.
    pub heuristic: bool,
    /// Limit of the distribution function, when known; below 1 for a
    /// defective distribution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_mass: Option<f64>,
    pub warnings: Vec<String>,
}

impl DistCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Largest per-point error in the curve.
    pub fn max_err(&self) -> f64 {
        self.err.iter().copied().fold(0.0, f64::max)
    }
}

/// Check a grid is nonempty, finite, positive and strictly increasing.
pub fn check_grid(grid: &[f64]) -> Result<(), NumericError> {
    if grid.is_empty() {
        return Err(NumericError::Argument("empty grid".into()));
    }
    if grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(NumericError::Argument("grid points must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NumericError::Argument("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Invert a distribution-function transform (bounded by 1) over a grid.
pub fn invert_cdf_curve<F: LaplaceTransform>(
    f: &F,
    grid: &[f64],
    plan: &InversionPlan,
) -> Result<DistCurve, NumericError> {
    check_grid(grid)?;
    let points: Vec<Inversion> = grid
        .par_iter()
        .map(|&t| invert(f, t, plan))
        .collect::<Result<_, _>>()?;
    let mut curve = DistCurve {
        grid: grid.to_vec(),
        cdf: Some(points.iter().map(|p| p.value).collect()),
        density: None,
        err: points.iter().map(|p| p.err).collect(),
        heuristic: points.iter().any(|p| !p.rigorous),
        total_mass: None,
        warnings: Vec::new(),
    };
    if points.iter().any(|p| !p.settled) {
        curve.warnings.push("inversion series did not settle at some grid points".into());
    }
    Ok(curve)
}

/// Invert a density transform over a grid.
///
/// The discretization bound assumes the density is at most `max(1, sup)`,
/// with `sup` the largest value found on the grid itself. The budget is
/// therefore flagged heuristic when that sup exceeds 1.
pub fn invert_density_curve<F: LaplaceTransform>(
    f: &F,
    grid: &[f64],
    plan: &InversionPlan,
) -> Result<DistCurve, NumericError> {
    check_grid(grid)?;
    let points: Vec<Inversion> = grid
        .par_iter()
        .map(|&t| invert(f, t, plan))
        .collect::<Result<_, _>>()?;
    let sup = points.iter().map(|p| p.value.abs()).fold(1.0, f64::max);
    let mut curve = DistCurve {
        grid: grid.to_vec(),
        cdf: None,
        density: Some(points.iter().map(|p| p.value).collect()),
        err: points
            .iter()
            .map(|p| p.err + p.discretization_err * (sup - 1.0))
            .collect(),
        heuristic: sup > 1.0 || points.iter().any(|p| !p.rigorous),
        total_mass: None,
        warnings: Vec::new(),
    };
    if sup > 1.0 {
        curve
            .warnings
            .push(format!("density exceeds 1 (sup ≈ {sup:.4}); discretization error scaled heuristically"));
    }
    if points.iter().any(|p| !p.settled) {
        curve.warnings.push("inversion series did not settle at some grid points".into());
    }
    Ok(curve)
}
