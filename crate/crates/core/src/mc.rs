//! Exact path simulation, used as an independent check on the analytic
//! distributions.
//!
//! Each path draws from its own ChaCha8 stream selected by `(seed, path
//! index)`, so a batch is identical whatever the thread count or order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplace::DistCurve;
use crate::modelspec::{BdpModel, Rates, StateIndex, TabooSet};

/// When to stop a path that has not yet entered the taboo set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Horizon {
    None,
    /// Elapsed time.
    Time(f64),
    /// Accumulated reward.
    Reward(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub jump_times: Vec<f64>,
    /// Visited states, starting with the initial one.
    pub states: Vec<StateIndex>,
    pub reward_integral: f64,
    pub absorbed_at: Option<StateIndex>,
    /// The horizon was reached first.
    pub censored: bool,
}

/// Summary of a path without its trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub reward: f64,
    pub time: f64,
    pub absorbed_at: Option<StateIndex>,
    pub censored: bool,
}

/// The RNG for path `path` of the batch seeded by `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn run<F: FnMut(f64, StateIndex)>(
    model: &BdpModel,
    i: StateIndex,
    taboo: TabooSet,
    rng: &mut ChaCha8Rng,
    horizon: Horizon,
    mut on_jump: F,
) -> Result<Outcome> {
    taboo.check_start(i)?;
    if let Horizon::Time(h) | Horizon::Reward(h) = horizon {
        if !(h > 0.0) {
            return Err(Error::Simulation(format!("horizon must be positive, got {h}")));
        }
    }
    let (mut n, mut t, mut w) = (i, 0.0f64, 0.0f64);
    loop {
        if taboo.contains(n) {
            return Ok(Outcome { reward: w, time: t, absorbed_at: Some(n), censored: false });
        }
        let (lam, mu, g) = (model.birth(n), model.death(n), model.reward(n));
        let total = lam + mu;
        let hold = if total > 0.0 {
            rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };
        match horizon {
            Horizon::Time(h) if t + hold >= h => {
                w += g * (h - t);
                return Ok(Outcome { reward: w, time: h, absorbed_at: None, censored: true });
            }
            Horizon::Reward(h) if g > 0.0 && w + g * hold >= h => {
                t += (h - w) / g;
                return Ok(Outcome { reward: h, time: t, absorbed_at: None, censored: true });
            }
            _ if total == 0.0 => {
                return Err(Error::Simulation(format!(
                    "trapped state {n}: no transitions out and no horizon reachable"
                )));
            }
            _ => {}
        }
        t += hold;
        w += g * hold;
        n = if rng.gen::<f64>() * total < lam { n + 1 } else { n - 1 };
        on_jump(t, n);
    }
}

/// Simulate one path (index 0 of the batch seeded by `seed`).
pub fn simulate(
    model: &BdpModel,
    i: StateIndex,
    taboo: TabooSet,
    seed: u64,
    horizon: Horizon,
) -> Result<PathSample> {
    simulate_path(model, i, taboo, seed, 0, horizon)
}

/// Simulate path `path` of the batch seeded by `seed`, keeping the trajectory.
pub fn simulate_path(
    model: &BdpModel,
    i: StateIndex,
    taboo: TabooSet,
    seed: u64,
    path: u64,
    horizon: Horizon,
) -> Result<PathSample> {
    let mut rng = path_rng(seed, path);
    let mut jump_times = Vec::new();
    let mut states = vec![i];
    let out = run(model, i, taboo, &mut rng, horizon, |t, n| {
        jump_times.push(t);
        states.push(n);
    })?;
    Ok(PathSample {
        jump_times,
        states,
        reward_integral: out.reward,
        absorbed_at: out.absorbed_at,
        censored: out.censored,
    })
}

/// Outcomes of paths `0..paths`, generated in parallel.
pub fn sample_outcomes(
    model: &BdpModel,
    i: StateIndex,
    taboo: TabooSet,
    seed: u64,
    paths: usize,
    horizon: Horizon,
) -> Result<Vec<Outcome>> {
    (0..paths as u64)
        .into_par_iter()
        .map(|p| run(model, i, taboo, &mut path_rng(seed, p), horizon, |_, _| {}))
        .collect()
}

/// Empirical distribution function of the rewards on `grid`.
///
/// Censored outcomes count towards the sample size but never below the
/// horizon, so the curve estimates the possibly defective law. `err` holds
/// the 95% Dvoretzky–Kiefer–Wolfowitz band half-width and `total_mass`
/// the uncensored fraction.
pub fn empirical_cdf(outcomes: &[Outcome], grid: &[f64]) -> Result<DistCurve> {
    let mut done: Vec<f64> = outcomes.iter().filter(|o| !o.censored).map(|o| o.reward).collect();
    if done.is_empty() {
        return Err(Error::Simulation("no uncensored samples".into()));
    }
    done.sort_by(f64::total_cmp);
    let n = outcomes.len() as f64;
    let cdf = grid
        .iter()
        .map(|&w| done.partition_point(|&x| x <= w) as f64 / n)
        .collect();
    let band = ((2.0f64 / 0.05).ln() / (2.0 * n)).sqrt();
    let censored = outcomes.len() - done.len();
    let mut warnings = Vec::new();
    if censored > 0 {
        warnings.push(format!("{censored} of {} paths censored at the horizon", outcomes.len()));
    }
    Ok(DistCurve {
        grid: grid.to_vec(),
        cdf: Some(cdf),
        density: None,
        err: vec![band; grid.len()],
        heuristic: false,
        total_mass: Some(done.len() as f64 / n),
        warnings,
    })
}

/// Largest absolute difference between two distribution functions on a
/// common grid.
pub fn ks_distance(a: &DistCurve, b: &DistCurve) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Simulation("curves are on different grids".into()));
    }
    let (Some(x), Some(y)) = (&a.cdf, &b.cdf) else {
        return Err(Error::Simulation("both curves need distribution function values".into()));
    };
    if x.is_empty() {
        return Err(Error::Simulation("empty curves".into()));
    }
    Ok(x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
}

/// Write trajectories as CSV with columns `path_id,jump_time,state`; the
/// first row of each path is its initial state at time 0.
pub fn write_paths_csv<W: Write>(mut out: W, paths: &[PathSample]) -> std::io::Result<()> {
    writeln!(out, "path_id,jump_time,state")?;
    for (id, p) in paths.iter().enumerate() {
        writeln!(out, "{id},0,{}", p.states[0])?;
        for (t, s) in p.jump_times.iter().zip(&p.states[1..]) {
            writeln!(out, "{id},{t:.12e},{s}")?;
        }
    }
    Ok(())
}
