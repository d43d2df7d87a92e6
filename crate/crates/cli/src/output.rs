use std::fmt::Write as _;

use bdp_integral::laplace::DistCurve;
use serde_json::{json, Value};

/// `x` with 12 significant digits, in the shorter of fixed and scientific
/// notation, trailing zeros removed.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to 12 significant digits, for JSON output.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        fmt12(x).parse().expect("formatted float")
    } else {
        x
    }
}

/// JSON number with 12 significant digits; non-finite values become strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round12(x))
    } else {
        json!(fmt12(x))
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// CSV with columns `t_or_w,cdf,density,err`, blank where a quantity is absent.
pub fn curve_csv(curve: &DistCurve) -> String {
    let mut out = String::from("t_or_w,cdf,density,err\n");
    let cell = |v: &Option<Vec<f64>>, k: usize| v.as_ref().map_or(String::new(), |v| fmt12(v[k]));
    for k in 0..curve.len() {
        writeln!(
            out,
            "{},{},{},{}",
            fmt12(curve.grid[k]),
            cell(&curve.cdf, k),
            cell(&curve.density, k),
            fmt12(curve.err[k])
        )
        .expect("write to string");
    }
    out
}

/// Merge a distribution-function curve and a density curve on one grid.
pub fn merge(cdf: Option<DistCurve>, density: Option<DistCurve>) -> DistCurve {
    match (cdf, density) {
        (Some(mut c), Some(d)) => {
            for (e, f) in c.err.iter_mut().zip(&d.err) {
                *e = e.max(*f);
            }
            c.density = d.density;
            c.heuristic |= d.heuristic;
            for w in d.warnings {
                if !c.warnings.contains(&w) {
                    c.warnings.push(w);
                }
            }
            c
        }
        (Some(c), None) => c,
        (None, Some(d)) => d,
        (None, None) => unreachable!("at least one curve is requested"),
    }
}

pub fn curve_json(label: &str, curve: &DistCurve) -> Value {
    let mut v = json!({
        "label": label,
        "grid": nums(&curve.grid),
        "err": nums(&curve.err),
    });
    if let Some(c) = &curve.cdf {
        v["cdf"] = nums(c);
    }
    if let Some(d) = &curve.density {
        v["density"] = nums(d);
    }
    if let Some(m) = curve.total_mass {
        v["total_mass"] = num(m);
    }
    v
}

/// Summary of the error budgets of several curves.
pub fn budget_json(curves: &[&DistCurve]) -> Value {
    let max_err = curves.iter().map(|c| c.max_err()).fold(0.0, f64::max);
    let mut warnings: Vec<&str> = Vec::new();
    for c in curves {
        for w in &c.warnings {
            if !warnings.contains(&w.as_str()) {
                warnings.push(w);
            }
        }
    }
    json!({
        "max_err": num(max_err),
        "heuristic": curves.iter().any(|c| c.heuristic),
        "warnings": warnings,
    })
}
