//! Smallest control level or strike meeting a probability bound on the
//! accumulated reward.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, ModelError, Result};
use crate::laplace::InversionPlan;
use crate::modelspec::{BdpModel, StateIndex, TabooSet};
use crate::reward::reward_cdf;

/// One evaluation of the constraint probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe<V> {
    pub value: V,
    pub prob: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult<V> {
    /// Smallest qualifying parameter; the top of the range when infeasible.
    pub value: V,
    pub constraint_prob: f64,
    /// The next-smaller candidate and its (failing) probability, if any.
    pub bracket: Option<(V, f64)>,
    pub feasible: bool,
    /// Every probe, sorted by parameter value.
    pub probes: Vec<Probe<V>>,
}

/// Settings for [`min_control`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlSearch {
    pub lower: f64,
    pub upper: f64,
    /// Coarse grid spacing.
    pub step: f64,
    /// Bracket width at which bisection stops.
    pub tol: f64,
}

impl Default for ControlSearch {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: 10.0,
            step: 0.5,
            tol: 0.01,
        }
    }
}

fn cdf_at(model: &BdpModel, i: StateIndex, x: f64, plan: &InversionPlan) -> Result<(f64, f64)> {
    if x <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let c = reward_cdf(model, i, &[x], plan)?;
    Ok((c.cdf.as_ref().expect("cdf curve")[0], c.err[0]))
}

/// Abort if the probe sequence decreases by more than three error budgets.
fn audit<V: Copy + PartialOrd + std::fmt::Debug>(probes: &mut [Probe<V>]) -> Result<()> {
    probes.sort_by(|a, b| a.value.partial_cmp(&b.value).expect("ordered parameters"));
    for w in probes.windows(2) {
        let slack = 3.0 * (w[0].err + w[1].err);
        if w[1].prob < w[0].prob - slack {
            return Err(Error::NonMonotone(format!(
                "constraint probability is assumed nondecreasing, but it drops from {:.6} at {:?} to {:.6} at {:?}",
                w[0].prob, w[0].value, w[1].prob, w[1].value
            )));
        }
    }
    Ok(())
}

/// Smallest `ε` in `[lower, upper]` with `Pr(Wᵢ < C) ≥ 1 − α` for the model
/// `family(ε)`.
///
/// A coarse grid locates the first passing grid point; bisection against
/// the failing point before it narrows the bracket to `tol`.
pub fn min_control<F>(
    family: F,
    i: StateIndex,
    cost: f64,
    alpha: f64,
    search: &ControlSearch,
    plan: &InversionPlan,
) -> Result<SearchResult<f64>>
where
    F: Fn(f64) -> Result<BdpModel, ModelError> + Sync,
{
    check_alpha(alpha)?;
    let ControlSearch { lower, upper, step, tol } = *search;
    if !(lower.is_finite() && upper.is_finite() && lower <= upper && step > 0.0 && tol > 0.0) {
        return Err(ModelError::Parameter(format!(
            "bad control range [{lower}, {upper}] with step {step}, tol {tol}"
        ))
        .into());
    }
    let target = 1.0 - alpha;
    let probe = |eps: f64| -> Result<Probe<f64>> {
        let (prob, err) = cdf_at(&family(eps)?, i, cost, plan)?;
        Ok(Probe { value: eps, prob, err })
    };

    let n = ((upper - lower) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| lower + k as f64 * step).collect();
    if *grid.last().expect("nonempty grid") < upper {
        grid.push(upper);
    }
    let mut probes: Vec<Probe<f64>> = grid.par_iter().map(|&e| probe(e)).collect::<Result<_>>()?;
    let first = probes.iter().position(|p| p.prob >= target);

    let result = match first {
        None => {
            let last = *probes.last().expect("nonempty grid");
            SearchResult {
                value: last.value,
                constraint_prob: last.prob,
                bracket: None,
                feasible: false,
                probes: Vec::new(),
            }
        }
        Some(0) => SearchResult {
            value: probes[0].value,
            constraint_prob: probes[0].prob,
            bracket: None,
            feasible: true,
            probes: Vec::new(),
        },
        Some(k) => {
            let (mut lo, mut hi) = (probes[k - 1], probes[k]);
            while hi.value - lo.value > tol {
                let mid = probe(0.5 * (lo.value + hi.value))?;
                probes.push(mid);
                if mid.prob >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            SearchResult {
                value: hi.value,
                constraint_prob: hi.prob,
                bracket: Some((lo.value, lo.prob)),
                feasible: true,
                probes: Vec::new(),
            }
        }
    };
    audit(&mut probes)?;
    Ok(SearchResult { probes, ..result })
}

/// Smallest strike `k` in `strikes` with `Pr(Wᵢ(k) > R) > 1 − α`, where
/// `Wᵢ(k)` is the reward accumulated until the chain first reaches `k`.
///
/// The model's taboo set is replaced by the upper barrier `k` (keeping any
/// lower barrier). Strikes are scanned in ascending order.
pub fn min_strike(
    model: &BdpModel,
    i: StateIndex,
    ret: f64,
    alpha: f64,
    strikes: std::ops::RangeInclusive<StateIndex>,
    plan: &InversionPlan,
) -> Result<SearchResult<StateIndex>> {
    check_alpha(alpha)?;
    if !ret.is_finite() {
        return Err(ModelError::Parameter(format!("return must be finite, got {ret}")).into());
    }
    let (first, last) = (*strikes.start(), *strikes.end());
    if first <= i || first > last {
        return Err(ModelError::Parameter(format!(
            "strike range {first}..={last} must be nonempty and lie above the start {i}"
        ))
        .into());
    }
    let lower = model.taboo().lower_barrier().filter(|&a| a < i);
    let target = 1.0 - alpha;
    let mut probes = Vec::new();
    let mut found = None;
    for k in strikes {
        let m = model.clone().with_taboo(TabooSet::new(lower, Some(k))?);
        let (cdf, err) = cdf_at(&m, i, ret, plan)?;
        probes.push(Probe { value: k, prob: 1.0 - cdf, err });
        if 1.0 - cdf > target {
            found = Some(probes.len() - 1);
            break;
        }
    }
    audit(&mut probes)?;
    let at = found.unwrap_or(probes.len() - 1);
    Ok(SearchResult {
        value: probes[at].value,
        constraint_prob: probes[at].prob,
        bracket: at.checked_sub(1).map(|b| (probes[b].value, probes[b].prob)),
        feasible: found.is_some(),
        probes,
    })
}

fn check_alpha(alpha: f64) -> Result<(), ModelError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ModelError::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}
