use std::collections::HashMap;

use super::{BinOp, Expr, ExprError, Func, Node};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

/// Memoizing differentiator with respect to one variable.
///
/// The memo survives across calls, so differentiating many expressions that
/// share subgraphs (the components of a tensor field, say) reuses work and
/// keeps the results shared as well.
pub struct Differentiator {
    var: String,
    budget: usize,
    created: usize,
    memo: HashMap<*const Node, (Expr, Expr)>,
}

// The raw pointers are only used as identity keys for nodes kept alive by the
// memo itself.
unsafe impl Send for Differentiator {}

impl Differentiator {
    pub fn new(var: &str) -> Self {
        Self::with_budget(var, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(var: &str, budget: usize) -> Self {
        Differentiator {
            var: var.to_string(),
            budget,
            created: 0,
            memo: HashMap::new(),
        }
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    /// Number of derivative nodes produced so far.
    pub fn nodes_created(&self) -> usize {
        self.created
    }

    pub fn diff(&mut self, e: &Expr) -> Result<Expr, ExprError> {
        if let Some((_, d)) = self.memo.get(&e.key()) {
            return Ok(d.clone());
        }
        let d = match e.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(v) => {
                if **v == *self.var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Unary(f, a) => {
                let da = self.diff(a)?;
                if da.is_zero() {
                    Expr::zero()
                } else {
                    unary_rule(*f, a, e, &da)
                }
            }
            Node::Binary(op, a, b) => {
                let da = self.diff(a)?;
                let db = self.diff(b)?;
                binary_rule(*op, a, b, e, &da, &db)
            }
        };
        self.created += 1;
        if self.created > self.budget {
            return Err(ExprError::Budget { budget: self.budget });
        }
        self.memo.insert(e.key(), (e.clone(), d.clone()));
        Ok(d)
    }
}

fn unary_rule(f: Func, a: &Expr, whole: &Expr, da: &Expr) -> Expr {
    let outer = match f {
        Func::Neg => return Expr::neg(da),
        Func::Sin => Expr::apply(Func::Cos, a),
        Func::Cos => Expr::neg(&Expr::apply(Func::Sin, a)),
        Func::Tan => {
            let c = Expr::apply(Func::Cos, a);
            Expr::div(&Expr::one(), &Expr::mul(&c, &c))
        }
        Func::Sinh => Expr::apply(Func::Cosh, a),
        Func::Cosh => Expr::apply(Func::Sinh, a),
        Func::Tanh => Expr::sub(&Expr::one(), &Expr::mul(whole, whole)),
        Func::Exp => whole.clone(),
        Func::Log => return Expr::div(da, a),
        Func::Sqrt => return Expr::div(da, &Expr::mul(&Expr::constant(2.0), whole)),
    };
    Expr::mul(da, &outer)
}

fn binary_rule(op: BinOp, a: &Expr, b: &Expr, whole: &Expr, da: &Expr, db: &Expr) -> Expr {
    match op {
        BinOp::Add => Expr::add(da, db),
        BinOp::Sub => Expr::sub(da, db),
        BinOp::Mul => Expr::add(&Expr::mul(da, b), &Expr::mul(a, db)),
        BinOp::Div => {
            if db.is_zero() {
                Expr::div(da, b)
            } else {
                // (a/b)' = (a' - (a/b) b') / b
                Expr::div(&Expr::sub(da, &Expr::mul(whole, db)), b)
            }
        }
        BinOp::Pow => {
            if let Some(c) = b.as_const() {
                let lower = Expr::pow(a, &Expr::constant(c - 1.0));
                Expr::mul(&Expr::mul(&Expr::constant(c), &lower), da)
            } else {
                // a^b = exp(b log a)
                let log_a = Expr::apply(Func::Log, a);
                let inner = Expr::add(&Expr::mul(db, &log_a), &Expr::div(&Expr::mul(b, da), a));
                Expr::mul(whole, &inner)
            }
        }
    }
}

/// One-shot derivative of `e` with respect to `var`.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    Differentiator::with_budget(var, usize::MAX)
        .diff(e)
        .expect("unbounded budget")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse};

    fn at(e: &Expr, pts: &[(&str, f64)]) -> f64 {
        evaluate(e, &pts.iter().cloned().collect()).unwrap()
    }

    #[test]
    fn chain_rule_on_exponential() {
        let d = differentiate(&parse("exp(2*t)").unwrap(), "t");
        assert_eq!(d, parse("2*exp(2*t)").unwrap());
    }

    #[test]
    fn chain_rule_on_squared_sine() {
        let d = differentiate(&parse("sin(x)^2").unwrap(), "x");
        assert_eq!(d, parse("2*sin(x)*cos(x)").unwrap());
    }

    #[test]
    fn independent_variable_gives_zero() {
        assert!(differentiate(&parse("x^2").unwrap(), "y").is_zero());
    }

    #[test]
    fn variable_exponent() {
        let e = parse("x^y").unwrap();
        let dy = differentiate(&e, "y");
        let v = at(&dy, &[("x", 2.0), ("y", 3.0)]);
        assert!((v - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shared_subgraphs_stay_shared() {
        // f_{n+1} = f_n * f_n is 2^n nodes as a tree but n nodes as a DAG.
        let mut f = Expr::var("x");
        for _ in 0..40 {
            f = Expr::mul(&f, &f);
        }
        let mut d = Differentiator::new("x");
        let df = d.diff(&f).unwrap();
        assert!(df.dag_size() < 400);
        assert!(d.nodes_created() <= 42);
    }

    #[test]
    fn budget_is_enforced() {
        let mut f = Expr::var("x");
        for i in 0..50 {
            f = Expr::mul(&Expr::apply(Func::Sin, &f), &Expr::constant(i as f64 + 2.0));
        }
        let mut d = Differentiator::with_budget("x", 10);
        assert!(matches!(d.diff(&f), Err(ExprError::Budget { budget: 10 })));
    }
}
