use std::fmt;
use std::sync::Arc;

use super::expr::RateExpr;
use crate::error::ModelError;

/// Index of a state of the chain (a population count).
pub type StateIndex = usize;

/// Rates of a birth-death chain, queried one state at a time.
///
/// Every computation in this crate consumes rates through this trait, so a
/// chain may be backed by closures, tables, parsed expressions, or a
/// modification of another chain.
pub trait Rates: Sync {
    fn birth(&self, n: StateIndex) -> f64;
    fn death(&self, n: StateIndex) -> f64;
    /// A state `N` with all rates zero above it and `birth(N) == 0`, if known.
    fn state_cap(&self) -> Option<StateIndex>;
}

/// A rate (or reward) as a total function of the state.
#[derive(Clone)]
pub enum RateFunction {
    Closure(Arc<dyn Fn(StateIndex) -> f64 + Send + Sync>),
    /// Values past the end of the table are zero.
    Table(Arc<[f64]>),
    /// Evaluation errors (division by zero) surface as NaN; model loading
    /// probes for them.
    Expr(RateExpr),
}

impl RateFunction {
    pub fn closure(f: impl Fn(StateIndex) -> f64 + Send + Sync + 'static) -> Self {
        RateFunction::Closure(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::closure(move |_| c)
    }

    pub fn table(values: Vec<f64>) -> Self {
        RateFunction::Table(values.into())
    }

    #[inline]
    pub fn at(&self, n: StateIndex) -> f64 {
        match self {
            RateFunction::Closure(f) => f(n),
            RateFunction::Table(t) => t.get(n).copied().unwrap_or(0.0),
            RateFunction::Expr(e) => e.eval(n as u64).unwrap_or(f64::NAN),
        }
    }
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFunction::Closure(_) => write!(f, "RateFunction::Closure"),
            RateFunction::Table(t) => f.debug_tuple("RateFunction::Table").field(&t.len()).finish(),
            RateFunction::Expr(e) => write!(f, "RateFunction::Expr({})", e.source()),
        }
    }
}

/// Absorbing barriers: the lower state `a`, the upper state `b`, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabooSet {
    lower: Option<StateIndex>,
    upper: Option<StateIndex>,
}

impl TabooSet {
    pub fn new(lower: Option<StateIndex>, upper: Option<StateIndex>) -> Result<Self, ModelError> {
        match (lower, upper) {
            (None, None) => Err(ModelError::Taboo("at least one barrier is required".into())),
            (Some(a), Some(b)) if a >= b => Err(ModelError::Taboo(format!(
                "lower barrier {a} must be below upper barrier {b}"
            ))),
            _ => Ok(Self { lower, upper }),
        }
    }

    pub fn lower(a: StateIndex) -> Self {
        Self {
            lower: Some(a),
            upper: None,
        }
    }

    pub fn upper(b: StateIndex) -> Self {
        Self {
            lower: None,
            upper: Some(b),
        }
    }

    pub fn both(a: StateIndex, b: StateIndex) -> Result<Self, ModelError> {
        Self::new(Some(a), Some(b))
    }

    pub fn lower_barrier(&self) -> Option<StateIndex> {
        self.lower
    }

    pub fn upper_barrier(&self) -> Option<StateIndex> {
        self.upper
    }

    pub fn contains(&self, n: StateIndex) -> bool {
        self.lower == Some(n) || self.upper == Some(n)
    }

    /// The barrier states, lower first.
    pub fn targets(&self) -> Vec<StateIndex> {
        self.lower.into_iter().chain(self.upper).collect()
    }

    /// A start state must lie strictly between the barriers.
    pub fn check_start(&self, i: StateIndex) -> Result<(), ModelError> {
        let above = self.lower.is_none_or(|a| i > a);
        let below = self.upper.is_none_or(|b| i < b);
        if above && below {
            Ok(())
        } else {
            Err(ModelError::StartInTaboo { start: i })
        }
    }
}

/// A general birth-death process with taboo set and reward function.
///
/// Immutable after construction; clones share the underlying rate functions.
#[derive(Debug, Clone)]
pub struct BdpModel {
    pub(crate) birth: RateFunction,
    pub(crate) death: RateFunction,
    pub(crate) reward: RateFunction,
    pub(crate) taboo: TabooSet,
    pub(crate) state_cap: Option<StateIndex>,
}

impl BdpModel {
    /// Assemble a model without validating it; see [`BdpModel::validate`].
    pub fn new(
        birth: RateFunction,
        death: RateFunction,
        taboo: TabooSet,
        reward: RateFunction,
        state_cap: Option<StateIndex>,
    ) -> Self {
        Self {
            birth,
            death,
            reward,
            taboo,
            state_cap,
        }
    }

    pub fn taboo(&self) -> TabooSet {
        self.taboo
    }

    pub fn with_taboo(mut self, taboo: TabooSet) -> Self {
        self.taboo = taboo;
        self
    }

    pub fn with_reward(mut self, reward: RateFunction) -> Self {
        self.reward = reward;
        self
    }

    pub fn reward(&self, n: StateIndex) -> f64 {
        self.reward.at(n)
    }

    /// Largest state probed when checking invariants of an infinite chain.
    pub(crate) fn probe_horizon(&self) -> StateIndex {
        self.state_cap.unwrap_or(1000)
    }

    /// Check nonnegative finite rates, `μ₀ = 0` and nonnegative rewards up to
    /// the state cap (or state 1000 for infinite chains).
    pub fn validate(&self) -> Result<(), ModelError> {
        let raw_death0 = self.death.at(0);
        if raw_death0 != 0.0 {
            return Err(ModelError::Invariant(format!(
                "death rate at state 0 must be 0, got {raw_death0}"
            )));
        }
        for n in 0..=self.probe_horizon() {
            for (what, v) in [
                ("birth rate", self.birth(n)),
                ("death rate", self.death(n)),
                ("reward", self.reward(n)),
            ] {
                if !v.is_finite() || v < 0.0 {
                    return Err(ModelError::Invariant(format!(
                        "{what} at state {n} is {v}; must be finite and nonnegative"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Rates for BdpModel {
    #[inline]
    fn birth(&self, n: StateIndex) -> f64 {
        match self.state_cap {
            Some(cap) if n >= cap => 0.0,
            _ => self.birth.at(n),
        }
    }

    #[inline]
    fn death(&self, n: StateIndex) -> f64 {
        match self.state_cap {
            _ if n == 0 => 0.0,
            Some(cap) if n > cap => 0.0,
            _ => self.death.at(n),
        }
    }

    fn state_cap(&self) -> Option<StateIndex> {
        self.state_cap
    }
}

impl<R: Rates + ?Sized> Rates for &R {
    fn birth(&self, n: StateIndex) -> f64 {
        (**self).birth(n)
    }
    fn death(&self, n: StateIndex) -> f64 {
        (**self).death(n)
    }
    fn state_cap(&self) -> Option<StateIndex> {
        (**self).state_cap()
    }
}

/// The built-in model zoo.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Simple linear birth-death: `λₙ = nλ`, `μₙ = nμ`, reward `g(n) = n`.
    Kendall { lambda: f64, mu: f64 },
    /// Busy period of an M/M/c queue (`servers = None` is M/M/∞):
    /// `λₙ = λ`, `μₙ = min(n, c)μ`, reward `g(n) = n`.
    Queue {
        lambda: f64,
        mu: f64,
        servers: Option<u32>,
    },
    /// Moran model with mutation and selection on a population of `population`.
    Moran {
        population: StateIndex,
        fitness_1: f64,
        fitness_2: f64,
        u: f64,
        v: f64,
    },
    /// Logistic SIS epidemic with control `epsilon` and cost
    /// `g(n) = control_cost·ε + infected_cost·n`.
    Sis {
        population: StateIndex,
        lambda: f64,
        mu: f64,
        epsilon: f64,
        control_cost: f64,
        infected_cost: f64,
    },
    /// Asset price with linear rates plus immigration/emigration, stopped at
    /// the strike. Reward `g(n) = reward_slope·n + reward_base·start`.
    Option {
        lambda: f64,
        mu: f64,
        immigration: f64,
        emigration: f64,
        reward_slope: f64,
        reward_base: f64,
        start: StateIndex,
        strike: StateIndex,
        /// Birth rate at zero; `None` means `immigration`.
        lambda0: Option<f64>,
    },
}

fn require(cond: bool, what: impl Into<String>) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::Parameter(what.into()))
    }
}

fn positive(name: &str, x: f64) -> Result<(), ModelError> {
    require(x.is_finite() && x > 0.0, format!("{name} must be positive, got {x}"))
}

fn nonnegative(name: &str, x: f64) -> Result<(), ModelError> {
    require(x.is_finite() && x >= 0.0, format!("{name} must be nonnegative, got {x}"))
}

fn probability(name: &str, x: f64) -> Result<(), ModelError> {
    require((0.0..=1.0).contains(&x), format!("{name} must lie in [0, 1], got {x}"))
}

pub fn make_model(kind: &ModelKind) -> Result<BdpModel, ModelError> {
    let identity = RateFunction::closure(|n| n as f64);
    Ok(match *kind {
        ModelKind::Kendall { lambda, mu } => {
            positive("lambda", lambda)?;
            positive("mu", mu)?;
            BdpModel::new(
                RateFunction::closure(move |n| n as f64 * lambda),
                RateFunction::closure(move |n| n as f64 * mu),
                TabooSet::lower(0),
                identity,
                None,
            )
        }
        ModelKind::Queue {
            lambda,
            mu,
            servers,
        } => {
            positive("lambda", lambda)?;
            positive("mu", mu)?;
            let death = match servers {
                Some(c) => {
                    require(c >= 1, format!("number of servers must be at least 1, got {c}"))?;
                    let c = c as f64;
                    RateFunction::closure(move |n| (n as f64).min(c) * mu)
                }
                None => RateFunction::closure(move |n| n as f64 * mu),
            };
            BdpModel::new(
                RateFunction::constant(lambda),
                death,
                TabooSet::lower(0),
                identity,
                None,
            )
        }
        ModelKind::Moran {
            population,
            fitness_1,
            fitness_2,
            u,
            v,
        } => {
            require(population >= 1, "population must be at least 1")?;
            positive("fitness_1", fitness_1)?;
            positive("fitness_2", fitness_2)?;
            probability("u", u)?;
            probability("v", v)?;
            let big_n = population as f64;
            BdpModel::new(
                RateFunction::closure(move |n| {
                    let n = n as f64;
                    (big_n - n) * (fitness_1 * n * (1.0 - u) + fitness_2 * (big_n - n) * v)
                }),
                RateFunction::closure(move |n| {
                    let n = n as f64;
                    n * (fitness_2 * (big_n - n) * (1.0 - v) + fitness_1 * n * u)
                }),
                TabooSet::lower(0),
                identity,
                Some(population),
            )
        }
        ModelKind::Sis {
            population,
            lambda,
            mu,
            epsilon,
            control_cost,
            infected_cost,
        } => {
            require(population >= 1, "population must be at least 1")?;
            positive("lambda", lambda)?;
            positive("mu", mu)?;
            nonnegative("epsilon", epsilon)?;
            nonnegative("control cost a", control_cost)?;
            positive("infected cost b", infected_cost)?;
            let big_n = population as f64;
            let base = control_cost * epsilon;
            BdpModel::new(
                RateFunction::closure(move |n| {
                    let n = n as f64;
                    lambda * n * (big_n - n)
                }),
                RateFunction::closure(move |n| n as f64 * (mu + epsilon)),
                TabooSet::lower(0),
                RateFunction::closure(move |n| base + infected_cost * n as f64),
                Some(population),
            )
        }
        ModelKind::Option {
            lambda,
            mu,
            immigration,
            emigration,
            reward_slope,
            reward_base,
            start,
            strike,
            lambda0,
        } => {
            positive("lambda", lambda)?;
            positive("mu", mu)?;
            nonnegative("alpha (immigration)", immigration)?;
            nonnegative("beta (emigration)", emigration)?;
            nonnegative("a", reward_slope)?;
            nonnegative("b", reward_base)?;
            require(strike > start, format!("strike {strike} must exceed start {start}"))?;
            let lambda0 = lambda0.unwrap_or(immigration);
            nonnegative("lambda0", lambda0)?;
            let base = reward_base * start as f64;
            BdpModel::new(
                RateFunction::closure(move |n| {
                    if n == 0 {
                        lambda0
                    } else {
                        n as f64 * lambda + immigration
                    }
                }),
                RateFunction::closure(move |n| {
                    if n == 0 {
                        0.0
                    } else {
                        n as f64 * mu + emigration
                    }
                }),
                TabooSet::upper(strike),
                RateFunction::closure(move |n| reward_slope * n as f64 + base),
                None,
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kendall_rates() {
        let m = make_model(&ModelKind::Kendall {
            lambda: 0.1,
            mu: 0.5,
        })
        .unwrap();
        assert!((m.birth(3) - 0.3).abs() < 1e-15);
        assert!((m.death(3) - 1.5).abs() < 1e-15);
        assert_eq!(m.death(0), 0.0);
    }

    #[test]
    fn mmc_death_saturates() {
        let m = make_model(&ModelKind::Queue {
            lambda: 2.0,
            mu: 1.0,
            servers: Some(3),
        })
        .unwrap();
        assert_eq!(m.death(5), 3.0);
        assert_eq!(m.death(2), 2.0);
        assert!(make_model(&ModelKind::Queue {
            lambda: 2.0,
            mu: 1.0,
            servers: Some(0)
        })
        .is_err());
    }

    #[test]
    fn sis_rates() {
        let m = make_model(&ModelKind::Sis {
            population: 100,
            lambda: 0.1,
            mu: 8.0,
            epsilon: 0.0,
            control_cost: 0.1,
            infected_cost: 0.3,
        })
        .unwrap();
        assert!((m.birth(50) - 250.0).abs() < 1e-12);
        assert!((m.death(50) - 400.0).abs() < 1e-12);
        assert_eq!(m.birth(100), 0.0);
        assert_eq!(m.birth(101), 0.0);
        assert_eq!(m.death(101), 0.0);
        assert_eq!(m.state_cap(), Some(100));
    }

    #[test]
    fn moran_parameter_domain() {
        let bad = ModelKind::Moran {
            population: 50,
            fitness_1: 0.5,
            fitness_2: 1.0,
            u: 1.5,
            v: 0.0,
        };
        assert!(matches!(make_model(&bad), Err(ModelError::Parameter(_))));
    }

    #[test]
    fn option_lambda0_convention() {
        let kind = |lambda0| ModelKind::Option {
            lambda: 2.0,
            mu: 1.5,
            immigration: 0.3,
            emigration: 0.5,
            reward_slope: 0.0,
            reward_base: 1.0,
            start: 10,
            strike: 27,
            lambda0,
        };
        let m = make_model(&kind(None)).unwrap();
        assert_eq!(m.birth(0), 0.3);
        assert!((m.birth(4) - 8.3).abs() < 1e-12);
        assert_eq!(m.death(0), 0.0);
        assert_eq!(m.reward(7), 10.0);
        assert_eq!(m.taboo(), TabooSet::upper(27));
        assert_eq!(make_model(&kind(Some(0.0))).unwrap().birth(0), 0.0);
    }

    #[test]
    fn taboo_rules() {
        assert!(TabooSet::new(None, None).is_err());
        assert!(TabooSet::both(5, 5).is_err());
        let s = TabooSet::both(2, 9).unwrap();
        assert!(s.check_start(2).is_err());
        assert!(s.check_start(9).is_err());
        assert!(s.check_start(5).is_ok());
        assert_eq!(s.targets(), vec![2, 9]);
    }

    #[test]
    fn builtins_are_nonnegative_over_wide_range() {
        let kinds = [
            ModelKind::Kendall { lambda: 0.1, mu: 0.5 },
            ModelKind::Queue { lambda: 2.0, mu: 1.0, servers: None },
            ModelKind::Queue { lambda: 2.0, mu: 1.0, servers: Some(4) },
            ModelKind::Moran { population: 50, fitness_1: 0.5, fitness_2: 1.0, u: 0.2, v: 0.03 },
            ModelKind::Sis { population: 100, lambda: 0.1, mu: 8.0, epsilon: 2.0, control_cost: 0.1, infected_cost: 0.3 },
            ModelKind::Option { lambda: 2.0, mu: 1.5, immigration: 0.3, emigration: 0.5, reward_slope: 0.0, reward_base: 1.0, start: 10, strike: 27, lambda0: None },
        ];
        for kind in &kinds {
            let m = make_model(kind).unwrap();
            let horizon = 10 * m.state_cap().unwrap_or(1000);
            assert_eq!(m.death(0), 0.0);
            for n in 0..=horizon {
                assert!(m.birth(n) >= 0.0 && m.death(n) >= 0.0, "{kind:?} at {n}");
            }
            m.validate().unwrap();
        }
    }
}
