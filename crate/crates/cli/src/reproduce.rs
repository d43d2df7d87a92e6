//! Data behind the worked examples: each report carries `params`, `curves`,
//! `result` and `error_budget`.

use bdp_integral::laplace::{DistCurve, InversionPlan};
use bdp_integral::mc::{empirical_cdf, ks_distance, sample_outcomes, Horizon};
use bdp_integral::modelspec::{make_model, BdpModel, ModelKind};
use bdp_integral::reward::{kendall_reference_density, reward_cdf, reward_density};
use bdp_integral::search::{min_control, min_strike, ControlSearch, SearchResult};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{budget_json, curve_json, num, nums};
use crate::{parse_grid, CliResult};

pub fn figure(name: &str, plan: &InversionPlan, paths: usize, seed: u64) -> CliResult<Value> {
    let mut report = match name {
        "fig2" => fig2(plan, paths, seed)?,
        "fig3" => fig3(plan, paths, seed)?,
        "fig4" => fig4(plan, paths, seed)?,
        "fig5" => fig5(plan, paths, seed)?,
        "fig6" => fig6(plan, paths, seed)?,
        _ => unreachable!("figure names are validated by the parser"),
    };
    report["figure"] = json!(name);
    report["inversion"] = json!({
        "gamma": num(plan.gamma),
        "series_terms": plan.series_terms,
        "trunc_tol": plan.trunc_tol.map(num),
    });
    Ok(report)
}

/// KS distance between `analytic` and the empirical law of `paths` simulated
/// paths, censored at the end of the grid.
fn mc_check(model: &BdpModel, i: usize, analytic: &DistCurve, paths: usize, seed: u64) -> CliResult<Value> {
    if paths == 0 {
        return Ok(Value::Null);
    }
    let horizon = Horizon::Reward(*analytic.grid.last().expect("nonempty grid"));
    let outcomes = sample_outcomes(model, i, model.taboo(), seed, paths, horizon)?;
    let ecdf = empirical_cdf(&outcomes, &analytic.grid)?;
    Ok(json!({
        "paths": paths,
        "seed": seed,
        "ks_distance": num(ks_distance(analytic, &ecdf)?),
        "dkw_band_95": num(ecdf.err[0]),
        "uncensored_fraction": num(ecdf.total_mass.unwrap_or(1.0)),
    }))
}

fn fig2(plan: &InversionPlan, paths: usize, seed: u64) -> CliResult<Value> {
    let (lambda, mu) = (0.1, 0.5);
    let model = make_model(&ModelKind::Kendall { lambda, mu })?;
    let grid = parse_grid("0.1:30:0.1")?;
    let mut curves = Vec::new();
    let mut densities = Vec::new();
    let mut max_diff: f64 = 0.0;
    for i in 1..=5usize {
        let d = reward_density(&model, i, &grid, plan)?;
        let reference = grid
            .iter()
            .map(|&w| kendall_reference_density(lambda, mu, i as u32, w))
            .collect::<Result<Vec<_>, _>>()?;
        for (a, b) in d.density.as_ref().expect("density").iter().zip(&reference) {
            max_diff = max_diff.max((a - b).abs());
        }
        let mut c = curve_json(&format!("i={i}"), &d);
        c["closed_form"] = nums(&reference);
        curves.push(c);
        densities.push(d);
    }
    let cdf = reward_cdf(&model, 1, &grid, plan)?;
    let mc = mc_check(&model, 1, &cdf, paths, seed)?;
    Ok(json!({
        "params": { "model": "kendall", "lambda": lambda, "mu": mu, "reward": "n", "taboo": [0], "i": [1, 2, 3, 4, 5] },
        "curves": curves,
        "result": { "max_abs_diff_closed_form": num(max_diff), "monte_carlo_i1": mc },
        "error_budget": budget_json(&densities.iter().collect::<Vec<_>>()),
    }))
}

fn fig3(plan: &InversionPlan, paths: usize, seed: u64) -> CliResult<Value> {
    let (lambda, mu, i) = (2.0, 1.0, 5usize);
    let grid = parse_grid("0.2:60:0.2")?;
    let servers = [None, Some(5), Some(4), Some(3), Some(2), Some(1)];
    let results = servers
        .par_iter()
        .map(|&c| -> CliResult<(String, BdpModel, DistCurve)> {
            let model = make_model(&ModelKind::Queue { lambda, mu, servers: c })?;
            let d = reward_density(&model, i, &grid, plan)?;
            let label = c.map_or("M/M/inf".to_string(), |c| format!("M/M/{c}"));
            Ok((label, model, d))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let infinite = &results[0].1;
    let cdf = reward_cdf(infinite, i, &grid, plan)?;
    let mc = mc_check(infinite, i, &cdf, paths, seed)?;
    Ok(json!({
        "params": { "model": "mm_queue", "lambda": lambda, "mu": mu, "servers": ["inf", 5, 4, 3, 2, 1], "reward": "n", "taboo": [0], "i": i },
        "curves": results.iter().map(|(l, _, d)| curve_json(l, d)).collect::<Vec<_>>(),
        "result": {
            "total_mass": results.iter().map(|(l, _, d)| json!({ "queue": l, "mass": d.total_mass.map(num) })).collect::<Vec<_>>(),
            "monte_carlo_mm_inf": mc,
        },
        "error_budget": budget_json(&results.iter().map(|(_, _, d)| d).collect::<Vec<_>>()),
    }))
}

fn moran(v: f64) -> CliResult<BdpModel> {
    Ok(make_model(&ModelKind::Moran {
        population: 50,
        fitness_1: 0.5,
        fitness_2: 1.0,
        u: 0.0,
        v,
    })?)
}

fn fig4(plan: &InversionPlan, paths: usize, seed: u64) -> CliResult<Value> {
    let i = 25usize;
    let grid = parse_grid("0.05:20:0.05")?;
    let vs = [0.01, 0.02, 0.03, 0.04, 0.05];
    let results = vs
        .par_iter()
        .map(|&v| -> CliResult<DistCurve> { Ok(reward_density(&moran(v)?, i, &grid, plan)?) })
        .collect::<CliResult<Vec<_>>>()?;
    let model = moran(0.03)?;
    let cdf = reward_cdf(&model, i, &grid, plan)?;
    let mc = mc_check(&model, i, &cdf, paths, seed)?;
    Ok(json!({
        "params": { "model": "moran", "N": 50, "fitness_1": 0.5, "fitness_2": 1.0, "u": 0.0, "v": vs, "reward": "n", "taboo": [0], "i": i },
        "curves": vs.iter().zip(&results).map(|(v, d)| curve_json(&format!("v={v}"), d)).collect::<Vec<_>>(),
        "result": { "monte_carlo_v0.03": mc },
        "error_budget": budget_json(&results.iter().collect::<Vec<_>>()),
    }))
}

/// Reward `g(n) = n`, the reading under which the strike search lands on 27.
pub fn option_model(strike: usize) -> CliResult<BdpModel> {
    Ok(make_model(&ModelKind::Option {
        lambda: 2.0,
        mu: 1.5,
        immigration: 0.3,
        emigration: 0.5,
        reward_slope: 1.0,
        reward_base: 0.0,
        start: 10,
        strike,
        lambda0: None,
    })?)
}

pub fn strike_json(r: &SearchResult<usize>) -> Value {
    json!({
        "k_star": r.value,
        "feasible": r.feasible,
        "constraint_prob": num(r.constraint_prob),
        "bracket": r.bracket.map(|(k, p)| json!({ "k": k, "prob": num(p) })),
        "probes": r.probes.iter().map(|p| json!({ "k": p.value, "prob": num(p.prob), "err": num(p.err) })).collect::<Vec<_>>(),
    })
}

pub fn control_json(r: &SearchResult<f64>) -> Value {
    json!({
        "epsilon_star": num(r.value),
        "feasible": r.feasible,
        "constraint_prob": num(r.constraint_prob),
        "bracket": r.bracket.map(|(e, p)| json!({ "epsilon": num(e), "prob": num(p) })),
        "probes": r.probes.iter().map(|p| json!({ "epsilon": num(p.value), "prob": num(p.prob), "err": num(p.err) })).collect::<Vec<_>>(),
    })
}

fn fig5(plan: &InversionPlan, paths: usize, seed: u64) -> CliResult<Value> {
    let (i, ret, alpha) = (10usize, 10.0, 0.05);
    let grid = parse_grid("0.1:30:0.1")?;
    let strikes: Vec<usize> = (11..=21).collect();
    let results = strikes
        .par_iter()
        .map(|&k| -> CliResult<DistCurve> { Ok(reward_cdf(&option_model(k)?, i, &grid, plan)?) })
        .collect::<CliResult<Vec<_>>>()?;
    let base = option_model(40)?;
    let search = min_strike(&base, i, ret, alpha, 11..=40, plan)?;
    let top = option_model(21)?;
    let mc = mc_check(&top, i, &results[results.len() - 1], paths, seed)?;
    let mut result = strike_json(&search);
    result["monte_carlo_k21"] = mc;
    Ok(json!({
        "params": {
            "model": "option", "lambda": 2.0, "mu": 1.5, "alpha_immigration": 0.3, "beta_emigration": 0.5,
            "lambda0": 0.3, "reward": "n", "i": i, "return": ret, "alpha": alpha, "strikes_plotted": strikes, "strikes_scanned": [11, 40],
        },
        "curves": strikes.iter().zip(&results).map(|(k, d)| curve_json(&format!("k={k}"), d)).collect::<Vec<_>>(),
        "result": result,
        "error_budget": budget_json(&results.iter().collect::<Vec<_>>()),
    }))
}

pub fn sis_model(epsilon: f64) -> Result<BdpModel, bdp_integral::ModelError> {
    make_model(&ModelKind::Sis {
        population: 100,
        lambda: 0.1,
        mu: 8.0,
        epsilon,
        control_cost: 0.1,
        infected_cost: 0.3,
    })
}

fn fig6(plan: &InversionPlan, paths: usize, seed: u64) -> CliResult<Value> {
    let (i, cost, alpha) = (50usize, 7.0, 0.05);
    let grid = parse_grid("0.05:15:0.05")?;
    let eps = [0.0, 0.5, 1.0, 1.5, 2.0];
    let results = eps
        .par_iter()
        .map(|&e| -> CliResult<DistCurve> { Ok(reward_cdf(&sis_model(e)?, i, &grid, plan)?) })
        .collect::<CliResult<Vec<_>>>()?;
    let trace_eps: Vec<f64> = (0..=60).map(|k| k as f64 * 0.1).collect();
    let trace = trace_eps
        .par_iter()
        .map(|&e| -> CliResult<DistCurve> { Ok(reward_cdf(&sis_model(e)?, i, &[cost], plan)?) })
        .collect::<CliResult<Vec<_>>>()?;
    let trace_curve = DistCurve {
        grid: trace_eps.clone(),
        cdf: Some(trace.iter().map(|c| c.cdf.as_ref().expect("cdf")[0]).collect()),
        density: None,
        err: trace.iter().map(|c| c.err[0]).collect(),
        heuristic: trace.iter().any(|c| c.heuristic),
        total_mass: None,
        warnings: Vec::new(),
    };
    let search = min_control(sis_model, i, cost, alpha, &ControlSearch::default(), plan)?;
    let mc = mc_check(&sis_model(2.0)?, i, &results[4], paths, seed)?;
    let mut result = control_json(&search);
    result["monte_carlo_eps2"] = mc;
    let mut curves: Vec<Value> = eps.iter().zip(&results).map(|(e, d)| curve_json(&format!("epsilon={e}"), d)).collect();
    let mut t = curve_json("Pr(W<7) vs epsilon", &trace_curve);
    t["grid_is"] = json!("epsilon");
    curves.push(t);
    let mut budget: Vec<&DistCurve> = results.iter().collect();
    budget.push(&trace_curve);
    Ok(json!({
        "params": { "model": "sis", "N": 100, "lambda": 0.1, "mu": 8.0, "a": 0.1, "b": 0.3, "epsilon": eps, "i": i, "cost_bound": cost, "alpha": alpha },
        "curves": curves,
        "result": result,
        "error_budget": budget_json(&budget),
    }))
}
