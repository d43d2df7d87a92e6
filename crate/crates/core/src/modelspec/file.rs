//! JSON model files.
//!
//! ```json
//! { "kind": "custom",
//!   "params": { "lambda": 0.1, "mu": 0.5 },
//!   "birth": { "expr": "n*lambda" },
//!   "death": { "table": [0, 0.5, 1.0, 1.5] },
//!   "reward": { "expr": "n" },
//!   "taboo": { "lower": 0 },
//!   "state_cap": 3 }
//! ```
//!
//! Built-in kinds take their parameters from `params` and may override
//! `reward` and `taboo`; only `custom` accepts `birth`/`death`/`state_cap`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expr::parse_rate_expr;
use super::model::{make_model, BdpModel, ModelKind, RateFunction, StateIndex, TabooSet};
use crate::error::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taboo: Option<TabooSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_cap: Option<StateIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum RateSpec {
    Expr { expr: String },
    Table { table: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabooSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<StateIndex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<StateIndex>,
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<BdpModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    parse_model_json(&text)
}

pub fn parse_model_json(text: &str) -> Result<BdpModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text)?;
    build_model(&file)
}

/// Reads named parameters, rejecting any that are not consumed.
struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
    used: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn new(map: &'a BTreeMap<String, f64>) -> Self {
        Self {
            map,
            used: Vec::new(),
        }
    }

    fn opt(&mut self, name: &'static str) -> Option<f64> {
        self.used.push(name);
        self.map.get(name).copied()
    }

    fn get(&mut self, name: &'static str) -> Result<f64, ModelError> {
        self.opt(name)
            .ok_or_else(|| ModelError::Schema(format!("missing parameter `{name}`")))
    }

    fn or(&mut self, name: &'static str, default: f64) -> f64 {
        self.opt(name).unwrap_or(default)
    }

    fn int(&mut self, name: &'static str) -> Result<usize, ModelError> {
        let x = self.get(name)?;
        as_index(name, x)
    }

    fn opt_int(&mut self, name: &'static str) -> Result<Option<usize>, ModelError> {
        self.opt(name).map(|x| as_index(name, x)).transpose()
    }

    fn finish(self, kind: &str) -> Result<(), ModelError> {
        match self.map.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(extra) => Err(ModelError::Schema(format!(
                "unknown parameter `{extra}` for kind `{kind}`"
            ))),
            None => Ok(()),
        }
    }
}

fn as_index(name: &str, x: f64) -> Result<usize, ModelError> {
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(ModelError::Schema(format!(
            "parameter `{name}` must be a nonnegative integer, got {x}"
        )))
    }
}

fn rate_function(
    spec: &RateSpec,
    what: &str,
    params: &BTreeMap<String, f64>,
    state_cap: Option<StateIndex>,
) -> Result<RateFunction, ModelError> {
    match spec {
        RateSpec::Expr { expr } => Ok(RateFunction::Expr(parse_rate_expr(expr, params)?)),
        RateSpec::Table { table } => {
            let Some(cap) = state_cap else {
                return Err(ModelError::Schema("tabulated rates require state_cap".into()));
            };
            if table.len() != cap + 1 {
                return Err(ModelError::Schema(format!(
                    "{what} table has {} entries; state_cap {cap} needs {}",
                    table.len(),
                    cap + 1
                )));
            }
            Ok(RateFunction::table(table.clone()))
        }
    }
}

pub fn build_model(file: &ModelFile) -> Result<BdpModel, ModelError> {
    let kind = file.kind.as_str();
    if kind != "custom" {
        for (field, present) in [
            ("birth", file.birth.is_some()),
            ("death", file.death.is_some()),
            ("state_cap", file.state_cap.is_some()),
        ] {
            if present {
                return Err(ModelError::Schema(format!(
                    "`{field}` is only allowed for kind `custom`"
                )));
            }
        }
    }

    let mut p = Params::new(&file.params);
    let mut model = match kind {
        "kendall" => make_model(&ModelKind::Kendall {
            lambda: p.get("lambda")?,
            mu: p.get("mu")?,
        })?,
        "mm_queue" => {
            let servers = p
                .opt_int("c")?
                .map(|c| u32::try_from(c).map_err(|_| ModelError::Parameter("c too large".into())))
                .transpose()?;
            make_model(&ModelKind::Queue {
                lambda: p.get("lambda")?,
                mu: p.get("mu")?,
                servers,
            })?
        }
        "moran" => make_model(&ModelKind::Moran {
            population: p.int("N")?,
            fitness_1: p.get("fitness_1")?,
            fitness_2: p.get("fitness_2")?,
            u: p.get("u")?,
            v: p.get("v")?,
        })?,
        "sis" => make_model(&ModelKind::Sis {
            population: p.int("N")?,
            lambda: p.get("lambda")?,
            mu: p.get("mu")?,
            epsilon: p.or("epsilon", 0.0),
            control_cost: p.or("a", 0.0),
            infected_cost: p.or("b", 1.0),
        })?,
        "option" => make_model(&ModelKind::Option {
            lambda: p.get("lambda")?,
            mu: p.get("mu")?,
            immigration: p.get("alpha")?,
            emigration: p.get("beta")?,
            reward_slope: p.or("a", 0.0),
            reward_base: p.or("b", 1.0),
            start: p.int("i")?,
            strike: p.int("k")?,
            lambda0: p.opt("lambda0"),
        })?,
        "custom" => {
            let birth = file
                .birth
                .as_ref()
                .ok_or_else(|| ModelError::Schema("custom model needs `birth`".into()))?;
            let death = file
                .death
                .as_ref()
                .ok_or_else(|| ModelError::Schema("custom model needs `death`".into()))?;
            BdpModel::new(
                rate_function(birth, "birth", &file.params, file.state_cap)?,
                rate_function(death, "death", &file.params, file.state_cap)?,
                TabooSet::lower(0),
                RateFunction::constant(1.0),
                file.state_cap,
            )
        }
        other => return Err(ModelError::Schema(format!("unknown model kind `{other}`"))),
    };
    if kind != "custom" {
        p.finish(kind)?;
    }

    if let Some(reward) = &file.reward {
        model = model.with_reward(rate_function(reward, "reward", &file.params, file.state_cap)?);
    }
    if let Some(t) = file.taboo {
        model = model.with_taboo(TabooSet::new(t.lower, t.upper)?);
    }
    model.validate()?;
    Ok(model)
}
