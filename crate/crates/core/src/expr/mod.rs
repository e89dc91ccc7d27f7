//! Scalar expression DSL: parsing, exact differentiation and evaluation.
//!
//! Expressions are immutable reference-counted DAGs. Differentiation and
//! evaluation are memoized per node, so shared subexpressions are processed
//! once no matter how many parents reference them.

mod diff;
mod eval;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

pub use diff::{differentiate, Differentiator, DEFAULT_NODE_BUDGET};
pub use eval::{evaluate, Tape};
pub use parse::parse;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("domain error: {message} in `{subexpr}`")]
    Domain { message: String, subexpr: String },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("expression node budget of {budget} exceeded")]
    Budget { budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Neg,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Neg => "neg",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(Arc<str>),
    Unary(Func, Expr),
    Binary(BinOp, Expr, Expr),
}

/// Shared handle to an expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn key(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    // Raw constructors build exactly the requested node.

    pub fn raw_unary(f: Func, a: Expr) -> Expr {
        Expr(Arc::new(Node::Unary(f, a)))
    }

    pub fn raw_binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr(Arc::new(Node::Binary(op, a, b)))
    }

    pub fn constant(c: f64) -> Expr {
        Expr(Arc::new(Node::Const(c)))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(name: &str) -> Expr {
        Expr(Arc::new(Node::Var(Arc::from(name))))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    // Folding constructors: only literal constants are simplified.

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), _) if x == 0.0 => b.clone(),
            (_, Some(y)) if y == 0.0 => a.clone(),
            _ => Expr::raw_binary(BinOp::Add, a.clone(), b.clone()),
        }
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        if a.ptr_eq(b) {
            return Expr::zero();
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a.clone(),
            _ => Expr::raw_binary(BinOp::Sub, a.clone(), b.clone()),
        }
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b.clone(),
            (_, Some(y)) if y == 1.0 => a.clone(),
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::raw_binary(BinOp::Mul, a.clone(), b.clone()),
        }
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::constant(x / y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a.clone(),
            _ => Expr::raw_binary(BinOp::Div, a.clone(), b.clone()),
        }
    }

    pub fn pow(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (_, Some(y)) if y == 0.0 => Expr::one(),
            (_, Some(y)) if y == 1.0 => a.clone(),
            (Some(x), Some(y)) if x > 0.0 || y.fract() == 0.0 => {
                let v = if y.fract() == 0.0 && y.abs() < i32::MAX as f64 {
                    x.powi(y as i32)
                } else {
                    x.powf(y)
                };
                if v.is_finite() {
                    Expr::constant(v)
                } else {
                    Expr::raw_binary(BinOp::Pow, a.clone(), b.clone())
                }
            }
            _ => Expr::raw_binary(BinOp::Pow, a.clone(), b.clone()),
        }
    }

    pub fn powi(a: &Expr, n: i32) -> Expr {
        Expr::pow(a, &Expr::constant(n as f64))
    }

    pub fn neg(a: &Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Unary(Func::Neg, inner) => inner.clone(),
            _ => Expr::raw_unary(Func::Neg, a.clone()),
        }
    }

    pub fn apply(f: Func, a: &Expr) -> Expr {
        if f == Func::Neg {
            return Expr::neg(a);
        }
        if let Some(c) = a.as_const() {
            let folded = match f {
                Func::Sin | Func::Tan | Func::Sinh | Func::Tanh | Func::Sqrt if c == 0.0 => Some(0.0),
                Func::Cos | Func::Cosh | Func::Exp if c == 0.0 => Some(1.0),
                Func::Log if c == 1.0 => Some(0.0),
                Func::Sqrt if c == 1.0 => Some(1.0),
                _ => None,
            };
            if let Some(v) = folded {
                return Expr::constant(v);
            }
        }
        Expr::raw_unary(f, a.clone())
    }

    /// Sum of an iterator of expressions (zero when empty).
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), |acc, t| Expr::add(&acc, &t))
    }

    /// Names of every variable referenced by the expression.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            match e.node() {
                Node::Const(_) => {}
                Node::Var(v) => {
                    out.insert(v.to_string());
                }
                Node::Unary(_, a) => stack.push(a.clone()),
                Node::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
            }
        }
        out
    }

    pub fn depends_on(&self, var: &str) -> bool {
        self.variables().contains(var)
    }

    /// Number of distinct nodes in the DAG.
    pub fn dag_size(&self) -> usize {
        let mut seen: HashMap<*const Node, Expr> = HashMap::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if seen.contains_key(&e.key()) {
                continue;
            }
            match e.node() {
                Node::Unary(_, a) => stack.push(a.clone()),
                Node::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                _ => {}
            }
            seen.insert(e.key(), e);
        }
        seen.len()
    }

    /// Replace every occurrence of `var` by `value` (folding literals on the way).
    pub fn substitute(&self, var: &str, value: &Expr) -> Expr {
        let mut memo: HashMap<*const Node, (Expr, Expr)> = HashMap::new();
        substitute_rec(self, var, value, &mut memo)
    }
}

fn substitute_rec(e: &Expr, var: &str, value: &Expr, memo: &mut HashMap<*const Node, (Expr, Expr)>) -> Expr {
    if let Some((_, r)) = memo.get(&e.key()) {
        return r.clone();
    }
    let r = match e.node() {
        Node::Const(_) => e.clone(),
        Node::Var(v) => {
            if &**v == var {
                value.clone()
            } else {
                e.clone()
            }
        }
        Node::Unary(f, a) => {
            let a2 = substitute_rec(a, var, value, memo);
            if a2.ptr_eq(a) {
                e.clone()
            } else {
                Expr::apply(*f, &a2)
            }
        }
        Node::Binary(op, a, b) => {
            let a2 = substitute_rec(a, var, value, memo);
            let b2 = substitute_rec(b, var, value, memo);
            if a2.ptr_eq(a) && b2.ptr_eq(b) {
                e.clone()
            } else {
                binary(*op, &a2, &b2)
            }
        }
    };
    memo.insert(e.key(), (e.clone(), r.clone()));
    r
}

pub(crate) fn binary(op: BinOp, a: &Expr, b: &Expr) -> Expr {
    match op {
        BinOp::Add => Expr::add(a, b),
        BinOp::Sub => Expr::sub(a, b),
        BinOp::Mul => Expr::mul(a, b),
        BinOp::Div => Expr::div(a, b),
        BinOp::Pow => Expr::pow(a, b),
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Unary(f, a), Node::Unary(g, b)) => f == g && a == b,
            (Node::Binary(o, a1, b1), Node::Binary(p, a2, b2)) => o == p && a1 == a2 && b1 == b2,
            _ => false,
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", -c)
            }
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(v) => write!(f, "{v}"),
            Node::Unary(Func::Neg, a) => write!(f, "(-({a}))"),
            Node::Unary(func, a) => write!(f, "{}({a})", func.name()),
            Node::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(&self, &rhs)
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(&self, &rhs)
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(&self, &rhs)
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(&self, &rhs)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(&Expr::constant(self), &rhs)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::constant(c)
    }
}
