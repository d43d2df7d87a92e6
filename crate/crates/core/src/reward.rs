//! Distribution of the reward accumulated until the taboo set is entered,
//! `Wᵢ = ∫₀^{τᵢ} g(X(t)) dt`.
//!
//! Dividing both rates at `n` by `g(n)` turns `Wᵢ` into the first passage
//! time of the modified chain, so the passage machinery applies unchanged.

use crate::error::{ModelError, Result};
use crate::laplace::{invert_cdf_curve, invert_density_curve, DistCurve, InversionPlan};
use crate::modelspec::{BdpModel, Rates, StateIndex, TabooSet};
use crate::passage::{attach_mass, explosion_check_from, passage_transform, Verdict, EXPLOSION_TERMS};

/// The chain with rates `λₙ/g(n)`, `μₙ/g(n)` off the taboo set.
///
/// Rates on taboo states are left to the passage layer, which zeroes them.
///
/// The one zero reward allowed is `g(0) = 0` when state 0 is not taboo. No
/// reward accrues there, so in reward time the visit is instantaneous: with
/// `λ₀ > 0` the chain returns to 1 at once and the step `1 → 0` is dropped
/// (`μ*₁ = 0`); with `λ₀ = 0` state 0 traps the chain.
#[derive(Debug, Clone, Copy)]
pub struct RewardModel<'a> {
    base: &'a BdpModel,
    skip_zero: bool,
}

impl<'a> RewardModel<'a> {
    /// Wrap `base`, checking `g > 0` on every non-taboo state between the
    /// barriers (up to the state cap or the probe horizon).
    pub fn new(base: &'a BdpModel) -> Result<Self, ModelError> {
        let taboo = base.taboo();
        let lo = taboo.lower_barrier().map_or(0, |a| a + 1);
        let hi = match taboo.upper_barrier() {
            Some(b) => b - 1,
            None => base.probe_horizon(),
        }
        .min(base.probe_horizon());
        let mut skip_zero = false;
        for n in lo..=hi {
            let g = base.reward(n);
            if n == 0 && g == 0.0 {
                skip_zero = base.birth(0) > 0.0;
                continue;
            }
            if !(g > 0.0 && g.is_finite()) {
                return Err(ModelError::Invariant(format!(
                    "reward at non-taboo state {n} is {g}; must be positive"
                )));
            }
        }
        Ok(Self { base, skip_zero })
    }

    /// Reject a start state the modified chain cannot represent.
    fn check_start(&self, i: StateIndex) -> Result<(), ModelError> {
        if i == 0 && self.skip_zero {
            return Err(ModelError::Invariant(
                "cannot start in state 0, which carries zero reward".into(),
            ));
        }
        Ok(())
    }

    pub fn base(&self) -> &BdpModel {
        self.base
    }

    pub fn taboo(&self) -> TabooSet {
        self.base.taboo()
    }
}

impl Rates for RewardModel<'_> {
    #[inline]
    fn birth(&self, n: StateIndex) -> f64 {
        if self.taboo().contains(n) || (n == 0 && self.base.reward(0) == 0.0) {
            0.0
        } else {
            self.base.birth(n) / self.base.reward(n)
        }
    }

    #[inline]
    fn death(&self, n: StateIndex) -> f64 {
        if self.taboo().contains(n) || (n == 1 && self.skip_zero) {
            0.0
        } else {
            self.base.death(n) / self.base.reward(n)
        }
    }

    fn state_cap(&self) -> Option<StateIndex> {
        self.base.state_cap()
    }
}

/// Warn when the modified chain may reach infinity in finite reward.
fn explosion_warning(m: &RewardModel<'_>) -> Option<String> {
    if m.taboo().upper_barrier().is_some() || m.state_cap().is_some() {
        return None;
    }
    let bottom = m.taboo().lower_barrier().map_or(0, |a| a + 1);
    let report = explosion_check_from(m, bottom, EXPLOSION_TERMS);
    match report.verdict {
        Verdict::NonExplosive => None,
        Verdict::Explosive => Some(format!(
            "modified process is explosive (expected reward to infinity ≈ {:.6e}); distribution may be defective",
            report.expected_passage_to_infinity
        )),
        Verdict::Inconclusive => Some("explosion test of the modified process is inconclusive".into()),
    }
}

/// Distribution function of `Wᵢ` on a grid of reward levels.
pub fn reward_cdf(model: &BdpModel, i: StateIndex, grid: &[f64], plan: &InversionPlan) -> Result<DistCurve> {
    reward_curve(model, i, grid, plan, false)
}

/// Density of `Wᵢ` on a grid of reward levels.
pub fn reward_density(model: &BdpModel, i: StateIndex, grid: &[f64], plan: &InversionPlan) -> Result<DistCurve> {
    reward_curve(model, i, grid, plan, true)
}

fn reward_curve(
    model: &BdpModel,
    i: StateIndex,
    grid: &[f64],
    plan: &InversionPlan,
    density: bool,
) -> Result<DistCurve> {
    let taboo = model.taboo();
    taboo.check_start(i)?;
    let modified = RewardModel::new(model)?;
    modified.check_start(i)?;
    let f = passage_transform(modified, i, taboo, density)?;
    let mut curve = if density {
        invert_density_curve(&f, grid, plan)?
    } else {
        invert_cdf_curve(&f, grid, plan)?
    };
    attach_mass(&mut curve, f.rates(), i)?;
    if let Some(w) = explosion_warning(&modified) {
        curve.warnings.push(w);
    }
    Ok(curve)
}

/// Closed-form density of the area under a linear birth-death path until
/// extinction (`λₙ = nλ`, `μₙ = nμ`, `g(n) = n`, start `i`):
/// `(i/w) e^{−(λ+μ)w} (μ/λ)^{i/2} I_i(2w√(λμ))`.
pub fn kendall_reference_density(lambda: f64, mu: f64, i: u32, w: f64) -> Result<f64, ModelError> {
    if !(lambda > 0.0 && mu > lambda && mu.is_finite()) {
        return Err(ModelError::Parameter(format!(
            "need 0 < lambda < mu, got lambda = {lambda}, mu = {mu}"
        )));
    }
    if i == 0 {
        return Err(ModelError::Parameter("start state must be at least 1".into()));
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(ModelError::Parameter(format!("w must be positive, got {w}")));
    }
    let x = 2.0 * w * (lambda * mu).sqrt();
    let ln = (i as f64 / w).ln() - (lambda + mu) * w + 0.5 * i as f64 * (mu / lambda).ln() + ln_bessel_i(i, x);
    Ok(ln.exp())
}

/// `ln I_n(x)` for `x > 0` from the power series, summed with a running
/// maximum so that large arguments do not overflow.
pub fn ln_bessel_i(n: u32, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let half = (0.5 * x).ln();
    let nf = n as f64;
    // log of the k = 0 term: n ln(x/2) − ln n!
    let mut ln_term = nf * half - (1..=n).map(|m| (m as f64).ln()).sum::<f64>();
    let mut ln_max = ln_term;
    let mut sum = 1.0; // Σ exp(ln_term − ln_max)
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        ln_term += 2.0 * half - k.ln() - (k + nf).ln();
        if ln_term > ln_max {
            sum = sum * (ln_max - ln_term).exp() + 1.0;
            ln_max = ln_term;
        } else {
            let r = (ln_term - ln_max).exp();
            sum += r;
            if r < 1e-17 * sum && k * (k + nf) > 0.25 * x * x {
                break;
            }
        }
    }
    ln_max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{make_model, ModelKind, RateFunction};
    use crate::passage::{fpt_cdf, fpt_density};

    fn kendall() -> BdpModel {
        make_model(&ModelKind::Kendall { lambda: 0.1, mu: 0.5 }).unwrap()
    }

    #[test]
    fn bessel_values() {
        // I_0(1), I_1(1), I_2(10)
        assert!((ln_bessel_i(0, 1.0).exp() - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((ln_bessel_i(1, 1.0).exp() - 0.565_159_103_992_485).abs() < 1e-15);
        assert!((ln_bessel_i(2, 10.0).exp() / 2_281.518_967_726_004 - 1.0).abs() < 1e-13);
        // I_1(x) ~ e^x / √(2πx) for large x
        let x = 800.0;
        let asym = x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + (1.0 - 3.0 / (8.0 * x)).ln();
        assert!((ln_bessel_i(1, x) - asym).abs() < 1e-5);
    }

    #[test]
    fn reference_density_point() {
        let expect = 0.5 * (-1.2f64).exp() * 5f64.sqrt() * ln_bessel_i(1, 4.0 * 0.05f64.sqrt()).exp();
        let v = kendall_reference_density(0.1, 0.5, 1, 2.0).unwrap();
        assert_eq!(v, expect);
        assert!((kendall_reference_density(0.1, 0.5, 1, 1e-9).unwrap() - 0.5).abs() < 1e-8);
        assert!(kendall_reference_density(0.5, 0.1, 1, 1.0).is_err());
        assert!(kendall_reference_density(0.1, 0.5, 0, 1.0).is_err());
    }

    #[test]
    fn pipeline_matches_closed_form() {
        let m = kendall();
        let plan = InversionPlan::default();
        let grid = [0.5, 2.0, 7.5, 20.0];
        for i in 1..=3 {
            let d = reward_density(&m, i, &grid, &plan).unwrap();
            for (w, v) in grid.iter().zip(d.density.unwrap()) {
                let r = kendall_reference_density(0.1, 0.5, i as u32, *w).unwrap();
                assert!((v - r).abs() < 1e-8, "i={i} w={w}: {v} vs {r}");
            }
        }
    }

    #[test]
    fn unit_reward_is_passage_time() {
        let m = kendall().with_reward(RateFunction::constant(1.0));
        let plan = InversionPlan::default();
        let grid = [0.3, 1.0, 4.0];
        let a = reward_cdf(&m, 3, &grid, &plan).unwrap();
        let b = fpt_cdf(&m, 3, m.taboo(), &grid, &plan).unwrap();
        assert_eq!(a.cdf, b.cdf);
        let a = reward_density(&m, 3, &grid, &plan).unwrap();
        let b = fpt_density(&m, 3, m.taboo(), &grid, &plan).unwrap();
        assert_eq!(a.density, b.density);
    }

    #[test]
    fn constant_reward_rescales_time() {
        let c = 2.5;
        let m = kendall().with_reward(RateFunction::constant(c));
        let plan = InversionPlan::default();
        let w: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let t: Vec<f64> = w.iter().map(|w| w / c).collect();
        let a = reward_cdf(&m, 2, &w, &plan).unwrap();
        let b = fpt_cdf(&m, 2, m.taboo(), &t, &plan).unwrap();
        for (x, y) in a.cdf.unwrap().iter().zip(b.cdf.unwrap()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn nonpositive_reward_rejected() {
        let m = kendall().with_reward(RateFunction::closure(|n| n as f64 - 3.0));
        assert!(reward_cdf(&m, 5, &[1.0], &InversionPlan::default()).is_err());
        // g on the taboo state is never consulted
        let m = kendall().with_reward(RateFunction::closure(|n| n as f64));
        assert!(reward_cdf(&m, 5, &[1.0], &InversionPlan::default()).is_ok());
    }

    #[test]
    fn zero_reward_at_bottom() {
        // births 1, a death only from 1, g(n) = n: with the step to 0
        // dropped the chain is pure birth at rate 1/n in reward time, so W
        // from 1 to 3 is Exp(1) + Exp(1/2).
        let m = BdpModel::new(
            RateFunction::constant(1.0),
            RateFunction::closure(|n| if n == 1 { 1.0 } else { 0.0 }),
            TabooSet::upper(3),
            RateFunction::closure(|n| n as f64),
            None,
        );
        let w: f64 = 1.5;
        let c = reward_cdf(&m, 1, &[w], &InversionPlan::default()).unwrap();
        let expect = 1.0 - 2.0 * (-w / 2.0).exp() + (-w).exp();
        assert!((c.cdf.unwrap()[0] - expect).abs() < 1e-8);
        assert!(reward_cdf(&m, 0, &[w], &InversionPlan::default()).is_err());
    }

    #[test]
    fn defective_mass_reported() {
        let m = make_model(&ModelKind::Queue { lambda: 2.0, mu: 1.0, servers: Some(1) }).unwrap();
        let c = reward_cdf(&m, 1, &[1.0], &InversionPlan::default()).unwrap();
        assert!((c.total_mass.unwrap() - 0.5).abs() < 1e-12);
        assert!(c.warnings.iter().any(|w| w.contains("defective")));
    }

    #[test]
    fn explosive_modified_chain_warns() {
        // λₙ = n, μₙ = 0, g(n) = 1/n²: modified births n³
        let m = BdpModel::new(
            RateFunction::closure(|n| n as f64),
            RateFunction::constant(0.0),
            TabooSet::lower(0),
            RateFunction::closure(|n| 1.0 / (n * n) as f64),
            None,
        );
        let c = reward_cdf(&m, 1, &[0.5], &InversionPlan::default()).unwrap();
        assert!(c.warnings.iter().any(|w| w.contains("explosive")), "{:?}", c.warnings);
    }
}
