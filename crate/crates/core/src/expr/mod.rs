//! Interaction-function expressions over subset variables.
//!
//! A variable `x<digits>` names the subset of species listed by its digits,
//! which must be strictly increasing (`x1`, `x12`, `x134`). Evaluation binds
//! each variable to the real embedding of the symbol carried by that subset's
//! coordinate.

mod parser;

use std::fmt;

use thiserror::Error;

use crate::model::SubsetId;

pub use parser::{parse, MAX_DEPTH, MAX_SOURCE_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
}

impl UnaryOp {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "tanh" => UnaryOp::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Tanh => "tanh",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Num(f64),
    Var(SubsetId),
    Unary(UnaryOp, Box<PhiExpr>),
    Binary(BinaryOp, Box<PhiExpr>, Box<PhiExpr>),
}

/// A parsed expression node. `pos` is the byte offset of the node in the
/// source text; equality ignores it.
#[derive(Clone, Debug)]
pub struct PhiExpr {
    pub kind: ExprKind,
    pub pos: usize,
}

impl PartialEq for PhiExpr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{func} is undefined at {arg} (position {pos})")]
    Domain {
        func: &'static str,
        arg: f64,
        pos: usize,
    },
    #[error("non-finite value at position {pos}")]
    NonFinite { pos: usize },
    #[error("variable x{var} has no assigned value (position {pos})")]
    Unassigned { var: String, pos: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at position {pos}")]
pub struct ParseError {
    pub pos: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character '{0}'")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("malformed variable 'x{0}': species digits must be 1-9 and strictly increasing")]
    MalformedVariable(String),
    #[error("invalid number literal '{0}'")]
    InvalidNumber(String),
    #[error("expression nests deeper than {MAX_DEPTH} levels")]
    TooDeep,
    #[error("source exceeds {MAX_SOURCE_LEN} bytes")]
    TooLong,
}

impl PhiExpr {
    pub fn num(value: f64) -> Self {
        PhiExpr {
            kind: ExprKind::Num(value),
            pos: 0,
        }
    }

    pub fn var(subset: SubsetId) -> Self {
        PhiExpr {
            kind: ExprKind::Var(subset),
            pos: 0,
        }
    }

    pub fn unary(op: UnaryOp, arg: PhiExpr) -> Self {
        PhiExpr {
            kind: ExprKind::Unary(op, Box::new(arg)),
            pos: 0,
        }
    }

    pub fn binary(op: BinaryOp, lhs: PhiExpr, rhs: PhiExpr) -> Self {
        PhiExpr {
            kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
            pos: 0,
        }
    }

    /// Evaluates with `values[J.index()]` bound to variable `J`.
    pub fn evaluate(&self, values: &[f64]) -> Result<f64, EvalError> {
        let out = match &self.kind {
            ExprKind::Num(v) => *v,
            ExprKind::Var(subset) => match values.get(subset.index()) {
                Some(v) => *v,
                None => {
                    return Err(EvalError::Unassigned {
                        var: subset.label(),
                        pos: self.pos,
                    })
                }
            },
            ExprKind::Unary(op, arg) => {
                let a = arg.evaluate(values)?;
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Log => {
                        if a <= 0.0 {
                            return Err(self.domain("log", a));
                        }
                        a.ln()
                    }
                    UnaryOp::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain("sqrt", a));
                        }
                        a.sqrt()
                    }
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Tanh => a.tanh(),
                }
            }
            ExprKind::Binary(op, lhs, rhs) => {
                let a = lhs.evaluate(values)?;
                let b = rhs.evaluate(values)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    BinaryOp::Pow => a.powf(b),
                }
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(EvalError::NonFinite { pos: self.pos })
        }
    }

    fn domain(&self, func: &'static str, arg: f64) -> EvalError {
        EvalError::Domain {
            func,
            arg,
            pos: self.pos,
        }
    }

    /// Every subset referenced by a variable, in first-appearance order.
    pub fn variables(&self) -> Vec<SubsetId> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<SubsetId>) {
        match &self.kind {
            ExprKind::Num(_) => {}
            ExprKind::Var(s) => {
                if !out.contains(s) {
                    out.push(*s);
                }
            }
            ExprKind::Unary(_, a) => a.collect_vars(out),
            ExprKind::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match &self.kind {
            ExprKind::Num(_) | ExprKind::Var(_) => 1,
            ExprKind::Unary(_, a) => 1 + a.depth(),
            ExprKind::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

/// Fully parenthesized rendering. Parsing it back yields an equal tree for
/// every parsed expression; a negative literal built by hand comes back as a
/// negation.
impl fmt::Display for PhiExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Num(v) => {
                if *v < 0.0 {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            ExprKind::Var(s) => write!(f, "x{}", s.label()),
            ExprKind::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            ExprKind::Unary(op, a) => write!(f, "{}({a})", op.name()),
            ExprKind::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}
