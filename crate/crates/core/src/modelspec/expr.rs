//! A tiny arithmetic language for writing rates and rewards as text,
//! e.g. `min(n, c) * mu` or `n*(N-n)*lambda`.
//!
//! Grammar (all binary operators left-associative, `^` binds tightest):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' operand)*
//! operand := '-' operand | atom
//! atom    := number | ident | ident '(' expr ',' expr ')' | '(' expr ')'
//! ```
//!
//! The only free variable is `n`; every other identifier must be a bound
//! parameter. Parameters are resolved when parsing, so evaluation never
//! fails on a name lookup.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at offset {offset} takes 2 arguments, got {got}")]
    Arity {
        name: String,
        offset: usize,
        got: usize,
    },
    #[error("empty expression")]
    Empty,
    #[error("division by zero at n = {n}")]
    DivisionByZero { n: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Param { name: String, value: f64 },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, n: u64) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var => n as f64,
            Expr::Param { value, .. } => *value,
            Expr::Neg(e) => -e.eval(n)?,
            Expr::Binary(op, l, r) => {
                let (l, r) = (l.eval(n)?, r.eval(n)?);
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(ExprError::DivisionByZero { n });
                        }
                        l / r
                    }
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(f, a, b) => {
                let (a, b) = (a.eval(n)?, b.eval(n)?);
                match f {
                    Func::Min => a.min(b),
                    Func::Max => a.max(b),
                }
            }
        })
    }
}

// Fully parenthesized so that re-parsing yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var => write!(f, "n"),
            Expr::Param { name, .. } => write!(f, "{name}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, a, b) => {
                let name = match func {
                    Func::Min => "min",
                    Func::Max => "max",
                };
                write!(f, "{name}({a}, {b})")
            }
        }
    }
}

/// A parsed rate or reward expression together with its parameter bindings.
#[derive(Debug, Clone, PartialEq)]
pub struct RateExpr {
    source: String,
    params: BTreeMap<String, f64>,
    ast: Expr,
}

impl RateExpr {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn eval(&self, n: u64) -> Result<f64, ExprError> {
        self.ast.eval(n)
    }

    /// Canonical text form; parses back to the same AST.
    pub fn unparse(&self) -> String {
        self.ast.to_string()
    }
}

pub fn parse_rate_expr(
    source: &str,
    params: &BTreeMap<String, f64>,
) -> Result<RateExpr, ExprError> {
    if source.trim().is_empty() {
        return Err(ExprError::Empty);
    }
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        params,
        end: source.len(),
    };
    let ast = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(ExprError::Syntax {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(RateExpr {
        source: source.to_string(),
        params: params.clone(),
        ast,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(x) => format!("number {x}"),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Op(c) => format!("operator `{c}`"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push(Token {
                    kind: TokenKind::Op(c as char),
                    offset: start,
                });
                i += 1;
            }
            b'(' => {
                out.push(Token {
                    kind: TokenKind::LParen,
                    offset: start,
                });
                i += 1;
            }
            b')' => {
                out.push(Token {
                    kind: TokenKind::RParen,
                    offset: start,
                });
                i += 1;
            }
            b',' => {
                out.push(Token {
                    kind: TokenKind::Comma,
                    offset: start,
                });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // optional exponent: e, E followed by optional sign and digits
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push(Token {
                    kind: TokenKind::Number(value),
                    offset: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident(src[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    params: &'a BTreeMap<String, f64>,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn peek_op(&self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) if ops.contains(c) => Some(*c),
            _ => None,
        }
    }

    fn offset_here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), ExprError> {
        let offset = self.offset_here();
        match self.next() {
            Some(tok) if tok.kind == kind => Ok(()),
            Some(tok) => Err(ExprError::Syntax {
                offset,
                message: format!("expected {what}, found {}", tok.kind.describe()),
            }),
            None => Err(ExprError::Syntax {
                offset,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op(&['+', '-']) {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_op(&['*', '/']) {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek_op(&['-']).is_some() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.atom()?;
        while self.peek_op(&['^']).is_some() {
            self.pos += 1;
            let exponent = self.operand()?;
            base = Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent));
        }
        Ok(base)
    }

    fn operand(&mut self) -> Result<Expr, ExprError> {
        if self.peek_op(&['-']).is_some() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.operand()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset_here();
        let Some(tok) = self.next() else {
            return Err(ExprError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            });
        };
        match tok.kind {
            TokenKind::Number(x) => Ok(Expr::Const(x)),
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                let is_call = matches!(
                    self.peek(),
                    Some(Token {
                        kind: TokenKind::LParen,
                        ..
                    })
                );
                if is_call {
                    self.call(name, tok.offset)
                } else if name == "n" {
                    Ok(Expr::Var)
                } else if let Some(&value) = self.params.get(&name) {
                    Ok(Expr::Param { name, value })
                } else {
                    Err(ExprError::UnknownIdentifier {
                        name,
                        offset: tok.offset,
                    })
                }
            }
            other => Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ExprError> {
        let func = match name.as_str() {
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return Err(ExprError::UnknownIdentifier { name, offset }),
        };
        self.expect(TokenKind::LParen, "`(`")?;
        let mut args = Vec::new();
        if !matches!(
            self.peek(),
            Some(Token {
                kind: TokenKind::RParen,
                ..
            })
        ) {
            args.push(self.expr()?);
            while matches!(
                self.peek(),
                Some(Token {
                    kind: TokenKind::Comma,
                    ..
                })
            ) {
                self.pos += 1;
                args.push(self.expr()?);
            }
        }
        self.expect(TokenKind::RParen, "`)`")?;
        if args.len() != 2 {
            return Err(ExprError::Arity {
                name,
                offset,
                got: args.len(),
            });
        }
        let b = args.pop().expect("two args");
        let a = args.pop().expect("two args");
        Ok(Expr::Call(func, Box::new(a), Box::new(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn logistic_style_rate() {
        let e = parse_rate_expr("n*(N-n)*lambda", &params(&[("N", 10.0), ("lambda", 0.1)])).unwrap();
        assert!((e.eval(3).unwrap() - 2.1).abs() < 1e-12);
    }

    #[test]
    fn min_rate() {
        let e = parse_rate_expr("min(n,c)*mu", &params(&[("c", 3.0), ("mu", 1.0)])).unwrap();
        assert_eq!(e.eval(5).unwrap(), 3.0);
        assert_eq!(e.eval(2).unwrap(), 2.0);
    }

    #[test]
    fn unbalanced_paren_reports_offset() {
        let err = parse_rate_expr("n*(", &BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            ExprError::Syntax {
                offset: 3,
                message: "unexpected end of input".into()
            }
        );
    }

    #[test]
    fn unknown_identifier() {
        let err = parse_rate_expr("n*beta", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ExprError::UnknownIdentifier { ref name, offset: 2 } if name == "beta"));
    }

    #[test]
    fn arity() {
        let err = parse_rate_expr("min(n)", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ExprError::Arity { got: 1, .. }));
        let err = parse_rate_expr("max(n, 1, 2)", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ExprError::Arity { got: 3, .. }));
    }

    #[test]
    fn precedence_and_associativity() {
        let p = BTreeMap::new();
        let ev = |s: &str| parse_rate_expr(s, &p).unwrap().eval(2).unwrap();
        assert_eq!(ev("1 - 2 - 3"), -4.0);
        assert_eq!(ev("8 / 2 / 2"), 2.0);
        assert_eq!(ev("2 * n ^ 2"), 8.0);
        assert_eq!(ev("-n ^ 2"), -4.0);
        assert_eq!(ev("2 ^ 3 ^ 2"), 64.0);
        assert_eq!(ev("n ^ -1"), 0.5);
        assert_eq!(ev("1.5e1 + .5"), 15.5);
    }

    #[test]
    fn division_by_zero_is_reported_at_eval() {
        let e = parse_rate_expr("1 / n", &BTreeMap::new()).unwrap();
        assert_eq!(e.eval(0), Err(ExprError::DivisionByZero { n: 0 }));
        assert_eq!(e.eval(4).unwrap(), 0.25);
    }

    #[test]
    fn trailing_garbage() {
        let err = parse_rate_expr("n n", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { offset: 2, .. }));
        assert_eq!(parse_rate_expr("  ", &BTreeMap::new()), Err(ExprError::Empty));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Expr::Const),
            Just(Expr::Var),
            Just(Expr::Param {
                name: "mu".into(),
                value: 0.5
            }),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
                (prop_oneof![Just(Func::Min), Just(Func::Max)], inner.clone(), inner)
                    .prop_map(|(f, a, b)| Expr::Call(f, Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn unparse_reparse_is_identity(ast in arb_expr()) {
            let p = params(&[("mu", 0.5)]);
            let text = ast.to_string();
            let once = parse_rate_expr(&text, &p).unwrap();
            prop_assert_eq!(once.ast(), &ast);
            let twice = parse_rate_expr(&once.unparse(), &p).unwrap();
            prop_assert_eq!(twice.ast(), once.ast());
        }
    }
}
