use std::collections::HashMap;

use super::{BinOp, Expr, ExprError, Func, Node};

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    Var(usize),
    Unary(Func, usize),
    PowConst(usize, f64),
    Binary(BinOp, usize, usize),
}

/// A batch of expressions flattened into one instruction list.
///
/// Shared subexpressions across all outputs are evaluated once per point.
/// A tape is immutable once built and can be evaluated concurrently.
#[derive(Clone)]
pub struct Tape {
    vars: Vec<String>,
    instrs: Vec<Instr>,
    sources: Vec<Expr>,
    outputs: Vec<usize>,
}

impl Tape {
    /// Compile `outputs` with variables bound positionally to `vars`.
    pub fn compile(outputs: &[Expr], vars: &[&str]) -> Result<Tape, ExprError> {
        let var_index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut slots: HashMap<*const Node, usize> = HashMap::new();
        let mut instrs = Vec::new();
        let mut sources = Vec::new();
        let mut out_slots = Vec::with_capacity(outputs.len());

        for root in outputs {
            // iterative post-order walk
            let mut stack: Vec<(Expr, bool)> = vec![(root.clone(), false)];
            while let Some((e, expanded)) = stack.pop() {
                if slots.contains_key(&e.key()) {
                    continue;
                }
                if !expanded {
                    stack.push((e.clone(), true));
                    match e.node() {
                        Node::Unary(_, a) => stack.push((a.clone(), false)),
                        Node::Binary(_, a, b) => {
                            stack.push((b.clone(), false));
                            stack.push((a.clone(), false));
                        }
                        _ => {}
                    }
                    continue;
                }
                let instr = match e.node() {
                    Node::Const(c) => Instr::Const(*c),
                    Node::Var(v) => Instr::Var(*var_index.get(&**v).ok_or_else(|| ExprError::Unbound(v.to_string()))?),
                    Node::Unary(f, a) => Instr::Unary(*f, slots[&a.key()]),
                    Node::Binary(BinOp::Pow, a, b) if b.as_const().is_some() => {
                        Instr::PowConst(slots[&a.key()], b.as_const().unwrap())
                    }
                    Node::Binary(op, a, b) => Instr::Binary(*op, slots[&a.key()], slots[&b.key()]),
                };
                slots.insert(e.key(), instrs.len());
                instrs.push(instr);
                sources.push(e);
            }
            out_slots.push(slots[&root.key()]);
        }
        Ok(Tape {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            instrs,
            sources,
            outputs: out_slots,
        })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluate every output at `point` (ordered like `vars`).
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, ExprError> {
        assert_eq!(point.len(), self.vars.len(), "point has wrong arity");
        let mut vals = vec![0.0; self.instrs.len()];
        for (i, ins) in self.instrs.iter().enumerate() {
            vals[i] = match *ins {
                Instr::Const(c) => c,
                Instr::Var(k) => point[k],
                Instr::Unary(f, a) => self.unary(i, f, vals[a])?,
                Instr::PowConst(a, c) => self.pow_const(i, vals[a], c)?,
                Instr::Binary(op, a, b) => self.binary(i, op, vals[a], vals[b])?,
            };
        }
        Ok(self.outputs.iter().map(|&s| vals[s]).collect())
    }

    fn domain(&self, i: usize, message: &str) -> ExprError {
        let mut text = self.sources[i].to_string();
        if text.len() > 200 {
            let cut = (0..=200).rev().find(|&k| text.is_char_boundary(k)).unwrap_or(0);
            text.truncate(cut);
            text.push_str("...");
        }
        ExprError::Domain {
            message: message.to_string(),
            subexpr: text,
        }
    }

    fn unary(&self, i: usize, f: Func, x: f64) -> Result<f64, ExprError> {
        Ok(match f {
            Func::Neg => -x,
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
            Func::Exp => x.exp(),
            Func::Log => {
                if x <= 0.0 {
                    return Err(self.domain(i, &format!("log of non-positive value {x}")));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(self.domain(i, &format!("sqrt of negative value {x}")));
                }
                x.sqrt()
            }
        })
    }

    fn pow_const(&self, i: usize, base: f64, c: f64) -> Result<f64, ExprError> {
        if c.fract() == 0.0 && c.abs() < i32::MAX as f64 {
            if base == 0.0 && c < 0.0 {
                return Err(self.domain(i, "division by zero"));
            }
            Ok(base.powi(c as i32))
        } else {
            if base < 0.0 {
                return Err(self.domain(i, &format!("non-integer power of negative value {base}")));
            }
            Ok(base.powf(c))
        }
    }

    fn binary(&self, i: usize, op: BinOp, a: f64, b: f64) -> Result<f64, ExprError> {
        Ok(match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(self.domain(i, "division by zero"));
                }
                a / b
            }
            BinOp::Pow => {
                if a <= 0.0 {
                    return Err(self.domain(i, &format!("variable power of non-positive value {a}")));
                }
                (b * a.ln()).exp()
            }
        })
    }
}

/// Evaluate `e` with named bindings.
pub fn evaluate(e: &Expr, bindings: &HashMap<&str, f64>) -> Result<f64, ExprError> {
    let vars: Vec<String> = e.variables().into_iter().collect();
    let names: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
    let mut point = Vec::with_capacity(names.len());
    for n in &names {
        point.push(*bindings.get(n).ok_or_else(|| ExprError::Unbound(n.to_string()))?);
    }
    let tape = Tape::compile(std::slice::from_ref(e), &names)?;
    Ok(tape.eval(&point)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn ev(src: &str, pts: &[(&str, f64)]) -> Result<f64, ExprError> {
        evaluate(&parse(src).unwrap(), &pts.iter().cloned().collect())
    }

    #[test]
    fn identity_cases() {
        assert_eq!(ev("exp(2*t)", &[("t", 0.0)]).unwrap(), 1.0);
        assert!((ev("sin(x)", &[("x", std::f64::consts::FRAC_PI_2)]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pole_is_a_domain_error() {
        match ev("3/(1+t)", &[("t", -1.0)]) {
            Err(ExprError::Domain { message, subexpr }) => {
                assert!(message.contains("division by zero"));
                assert_eq!(subexpr, "(3 / (1 + t))");
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn log_and_sqrt_domains() {
        assert!(matches!(ev("log(x)", &[("x", -1.0)]), Err(ExprError::Domain { .. })));
        assert!(matches!(ev("sqrt(x)", &[("x", -1.0)]), Err(ExprError::Domain { .. })));
        assert_eq!(ev("sqrt(x)", &[("x", 0.0)]).unwrap(), 0.0);
    }

    #[test]
    fn powers_of_negative_bases() {
        assert_eq!(ev("x^3", &[("x", -2.0)]).unwrap(), -8.0);
        assert!(matches!(ev("x^0.5", &[("x", -2.0)]), Err(ExprError::Domain { .. })));
        assert!(matches!(
            ev("x^y", &[("x", -2.0), ("y", 2.0)]),
            Err(ExprError::Domain { .. })
        ));
        assert!((ev("x^y", &[("x", 2.0), ("y", 0.5)]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unbound_variable() {
        assert!(matches!(ev("x+y", &[("x", 1.0)]), Err(ExprError::Unbound(v)) if v == "y"));
    }

    #[test]
    fn tape_shares_outputs() {
        let x = Expr::var("x");
        let s = Expr::apply(Func::Sin, &x);
        let outs = vec![Expr::mul(&s, &s), Expr::add(&s, &x)];
        let tape = Tape::compile(&outs, &["x"]).unwrap();
        assert_eq!(tape.len(), 4);
        let v = tape.eval(&[0.5]).unwrap();
        assert!((v[0] - 0.5f64.sin().powi(2)).abs() < 1e-16);
        assert!((v[1] - (0.5f64.sin() + 0.5)).abs() < 1e-16);
    }
}
