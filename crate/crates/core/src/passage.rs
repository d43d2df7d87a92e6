//! First-passage times into barrier taboo sets.
//!
//! Making every taboo state absorbing turns the first-passage distribution
//! into a sum of transition probabilities: `Pr(τᵢ < t) = Σ_{j∈S} P_ij(t)`
//! for the absorbed chain.

use serde::Serialize;

use crate::error::Result;
use crate::laplace::{invert_cdf_curve, invert_density_curve, DistCurve, InversionPlan, LaplaceFn};
use crate::modelspec::{Rates, StateIndex, TabooSet};

/// `base` with all rates zeroed on the taboo barriers.
#[derive(Debug, Clone, Copy)]
pub struct AbsorbedModel<R> {
    base: R,
    taboo: TabooSet,
}

impl<R: Rates> AbsorbedModel<R> {
    pub fn new(base: R, taboo: TabooSet) -> Self {
        Self { base, taboo }
    }

    pub fn base(&self) -> &R {
        &self.base
    }

    pub fn taboo(&self) -> TabooSet {
        self.taboo
    }
}

impl<R: Rates> Rates for AbsorbedModel<R> {
    #[inline]
    fn birth(&self, n: StateIndex) -> f64 {
        if self.taboo.contains(n) {
            0.0
        } else {
            self.base.birth(n)
        }
    }

    #[inline]
    fn death(&self, n: StateIndex) -> f64 {
        if self.taboo.contains(n) {
            0.0
        } else {
            self.base.death(n)
        }
    }

    fn state_cap(&self) -> Option<StateIndex> {
        match (self.base.state_cap(), self.taboo.upper_barrier()) {
            (Some(c), Some(b)) => Some(c.min(b)),
            (c, b) => c.or(b),
        }
    }
}

/// The transform of `Pr(τᵢ < t)` (or of its density).
pub(crate) fn passage_transform<R: Rates>(
    rates: R,
    i: StateIndex,
    taboo: TabooSet,
    density: bool,
) -> Result<LaplaceFn<AbsorbedModel<R>>> {
    taboo.check_start(i)?;
    let f = LaplaceFn::new(AbsorbedModel::new(rates, taboo), i, taboo.targets());
    Ok(if density { f.times_s() } else { f })
}

/// Distribution function of the first passage time from `i` into `taboo`.
pub fn fpt_cdf<R: Rates>(
    rates: R,
    i: StateIndex,
    taboo: TabooSet,
    grid: &[f64],
    plan: &InversionPlan,
) -> Result<DistCurve> {
    let f = passage_transform(rates, i, taboo, false)?;
    let mut curve = invert_cdf_curve(&f, grid, plan)?;
    attach_mass(&mut curve, f.rates(), i)?;
    Ok(curve)
}

/// Density of the first passage time from `i` into `taboo`.
pub fn fpt_density<R: Rates>(
    rates: R,
    i: StateIndex,
    taboo: TabooSet,
    grid: &[f64],
    plan: &InversionPlan,
) -> Result<DistCurve> {
    let f = passage_transform(rates, i, taboo, true)?;
    let mut curve = invert_density_curve(&f, grid, plan)?;
    attach_mass(&mut curve, f.rates(), i)?;
    Ok(curve)
}

/// Number of states summed when computing the total mass of a passage law.
pub const MASS_TERMS: usize = 100_000;

pub(crate) fn attach_mass<R: Rates>(curve: &mut DistCurve, chain: &AbsorbedModel<R>, i: StateIndex) -> Result<()> {
    let mass = absorption_probability(chain.base(), i, chain.taboo(), MASS_TERMS)?;
    if mass < 1.0 - 1e-9 {
        curve
            .warnings
            .push(format!("defective distribution: total mass {mass:.12}"));
    }
    curve.total_mass = Some(mass);
    Ok(())
}

/// Probability that the chain started at `i` ever enters `taboo`.
///
/// Computed from the embedded jump chain by the gambler's-ruin sums
/// `ρ_k = ∏_{m=a+1}^{k} μ_m/λ_m`. States with `λ_m = 0` (above `i`) or
/// `μ_m = 0` (below `i`) bound the walk: reflecting if the other rate is
/// positive, a trap otherwise. Infinite sums are accumulated in log space
/// until their terms are negligible or `max_terms` is reached.
pub fn absorption_probability<R: Rates>(
    rates: R,
    i: StateIndex,
    taboo: TabooSet,
    max_terms: usize,
) -> Result<f64> {
    taboo.check_start(i)?;
    let chain = AbsorbedModel::new(&rates, taboo);

    // Effective lower end: the barrier, or the first state below i that
    // cannot step down.
    let mut lo = i;
    let lower_is_target;
    loop {
        if taboo.lower_barrier() == Some(lo) {
            lower_is_target = true;
            break;
        }
        if lo == 0 || chain.death(lo) == 0.0 {
            lower_is_target = false;
            break;
        }
        lo -= 1;
    }
    let lower_trap = !lower_is_target && lo < i && chain.birth(lo) == 0.0;
    let lower_absorbs = lower_is_target || lower_trap || (lo == i && chain.birth(i) == 0.0);

    // Effective upper end, searched up to max_terms states above i.
    let mut hi = i;
    let mut upper = None;
    while hi - i < max_terms {
        if taboo.upper_barrier() == Some(hi) {
            upper = Some((hi, true));
            break;
        }
        if chain.birth(hi) == 0.0 {
            let trap = hi > i && chain.death(hi) == 0.0;
            upper = Some((hi, trap));
            break;
        }
        hi += 1;
    }

    // P(reach lo before hi) from i, with ρ_k relative to lo.
    let ruin = |hi: Option<StateIndex>| -> f64 {
        // log ρ_k for k = lo..; sums over k ∈ [i, hi) and [lo, hi)
        let mut log_rho = 0.0;
        let mut num = Vec::new();
        let mut den = Vec::new();
        let end = hi.unwrap_or(lo + max_terms);
        let mut converged = hi.is_some();
        for k in lo..end {
            if k > lo {
                log_rho += chain.death(k).ln() - chain.birth(k).ln();
            }
            den.push(log_rho);
            if k >= i {
                num.push(log_rho);
            }
            if hi.is_none() && k > i + 50 && log_rho < den[0].max(num[0]) - 745.0 {
                converged = true;
                break;
            }
        }
        if !converged && den.len() >= 4 {
            // Power-law tail ρ_k ~ k^{−p}: divergent for p ≤ 1.02, otherwise
            // add Σ_{k>K} ρ_k ≈ ρ_K K/(p − 1).
            let k_end = den.len();
            let p = -(den[k_end - 1] - den[k_end / 2 - 1]) / ((k_end as f64) / (k_end / 2) as f64).ln();
            if !(p > 1.02) {
                return 1.0;
            }
            let tail = den[k_end - 1] + (k_end as f64).ln() - (p - 1.0).ln();
            den.push(tail);
            num.push(tail);
        }
        let lse = |v: &[f64]| {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::INFINITY {
                return f64::INFINITY;
            }
            m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
        };
        let (ln_num, ln_den) = (lse(&num), lse(&den));
        if ln_den == f64::INFINITY {
            return 1.0;
        }
        (ln_num - ln_den).exp().min(1.0)
    };

    let upper_absorbs = matches!(upper, Some((_, true)));
    let upper_is_target = matches!(upper, Some((b, _)) if taboo.upper_barrier() == Some(b));
    let p_lower_first = if !lower_absorbs {
        0.0
    } else if !upper_absorbs {
        match upper {
            // reflecting at the top of a finite stretch: the bottom is hit surely
            Some(_) => 1.0,
            None => ruin(None),
        }
    } else {
        ruin(upper.map(|(b, _)| b))
    };
    let p_upper_first = if upper_absorbs {
        if lower_absorbs {
            1.0 - p_lower_first
        } else {
            1.0
        }
    } else {
        0.0
    };
    let mut total = 0.0;
    if lower_is_target {
        total += p_lower_first;
    }
    if upper_is_target {
        total += p_upper_first;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Explosive,
    NonExplosive,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplosionReport {
    /// Expected time to reach infinity from the bottom state; `+∞` when the
    /// defining series diverges.
    pub expected_passage_to_infinity: f64,
    pub verdict: Verdict,
    /// Partial sums at powers of two up to the last term evaluated.
    pub partial_sum_trace: Vec<f64>,
}

/// Default number of terms for [`explosion_check`].
pub const EXPLOSION_TERMS: usize = 10_000;

/// Test whether the chain started at 0 reaches infinity in finite expected time.
pub fn explosion_check<R: Rates>(rates: R, terms: usize) -> ExplosionReport {
    explosion_check_from(rates, 0, terms)
}

/// As [`explosion_check`] with `bottom` treated as the lowest state.
///
/// The expected passage time to infinity is
/// `Σ_{n≥b} (1/λ_n) Σ_{j=b}^{n} π_j/π_n` with `π_j/π_n = ∏_{k=j+1}^{n} μ_k/λ_{k−1}`;
/// the inner sum obeys `R_b = 1`, `R_n = 1 + (μ_n/λ_{n−1}) R_{n−1}` and is
/// carried as a logarithm.
///
/// Partial sums `S_T` and `S_{2T}` are compared: a relative change below
/// 1e−9 means convergent (explosive). Otherwise the tail terms between `T`
/// and `2T` decide: terms not decreasing (ratio ≥ 1 − 1e−6), decaying no
/// faster than `n^{−1.02}`, or an infinite term mean divergence; geometric
/// decay or decay at least as fast as `n^{−1.1}` means convergence, with
/// the tail added as a power-law or geometric extrapolation.
pub fn explosion_check_from<R: Rates>(rates: R, bottom: StateIndex, terms: usize) -> ExplosionReport {
    let terms = terms.max(16);
    let total = 2 * terms;
    let mut log_r = 0.0f64;
    let mut sum = 0.0f64;
    let mut trace = Vec::new();
    let mut t_half = 0.0;
    let mut t_full = 0.0;
    let mut s_half = 0.0;
    let mut last_terms = [0.0f64; 2];
    let mut next_mark = 1;
    for idx in 0..total {
        let n = bottom + idx;
        if idx > 0 {
            let lam_prev = rates.birth(n - 1);
            let ratio = rates.death(n) / lam_prev;
            log_r = if ratio == 0.0 {
                0.0
            } else {
                // ln(1 + ratio·R)
                let x = ratio.ln() + log_r;
                if x > 0.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            };
        }
        let lam = rates.birth(n);
        if lam == 0.0 {
            trace.push(f64::INFINITY);
            return ExplosionReport {
                expected_passage_to_infinity: f64::INFINITY,
                verdict: Verdict::NonExplosive,
                partial_sum_trace: trace,
            };
        }
        let term = (log_r - lam.ln()).exp();
        sum += term;
        if !sum.is_finite() {
            trace.push(f64::INFINITY);
            return ExplosionReport {
                expected_passage_to_infinity: f64::INFINITY,
                verdict: Verdict::NonExplosive,
                partial_sum_trace: trace,
            };
        }
        if idx + 1 == next_mark {
            trace.push(sum);
            next_mark *= 2;
        }
        if idx + 1 == terms {
            s_half = sum;
            t_half = term;
        }
        last_terms = [last_terms[1], term];
        t_full = term;
    }
    if trace.last() != Some(&sum) {
        trace.push(sum);
    }

    let rel_change = (sum - s_half) / sum;
    let ratio = if last_terms[0] > 0.0 {
        last_terms[1] / last_terms[0]
    } else {
        1.0
    };
    // local power-law exponent of the terms between T and 2T
    let slope = if t_half > 0.0 && t_full > 0.0 {
        -(t_full / t_half).ln() / (total as f64 / terms as f64).ln()
    } else {
        f64::INFINITY
    };
    let n_end = (bottom + total) as f64;

    let (verdict, estimate) = if rel_change < 1e-9 {
        (Verdict::Explosive, sum)
    } else if ratio >= 1.0 - 1e-6 || slope <= 1.02 {
        (Verdict::NonExplosive, f64::INFINITY)
    } else if slope >= 1.1 {
        // Σ_{n>N} c n^{−p} ≈ t_N · N / (p − 1); geometric decay makes p huge.
        let tail = if ratio < 1.0 - 1e-3 {
            t_full * ratio / (1.0 - ratio)
        } else {
            t_full * n_end / (slope - 1.0)
        };
        (Verdict::Explosive, sum + tail)
    } else {
        (Verdict::Inconclusive, sum)
    };
    ExplosionReport {
        expected_passage_to_infinity: estimate,
        verdict,
        partial_sum_trace: trace,
    }
}
