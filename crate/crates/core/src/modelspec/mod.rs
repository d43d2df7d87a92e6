//! Model definitions: rates, taboo barriers, rewards, the built-in model zoo,
//! a small expression language and JSON model files.

mod expr;
mod file;
mod model;

pub use expr::{parse_rate_expr, BinOp, Expr, ExprError, Func, RateExpr};
pub use file::{build_model, load_model_file, parse_model_json, ModelFile, RateSpec, TabooSpec};
pub use model::{make_model, BdpModel, ModelKind, RateFunction, Rates, StateIndex, TabooSet};
