//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' factor)?
//! base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base
//! ```
//!
//! `^` is right-associative and binds tighter than `*`. A unary minus
//! applies to the following `base` only, so `-x^2` is `(-x)^2`. A minus
//! directly in front of a numeric literal produces a negative constant.

use super::{BinOp, Expr, ExprError, Func};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

struct Lexer;

impl Lexer {
    fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
        let bytes = src.as_bytes();
        let mut out = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
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
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((Tok::Num(v), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            } else if "+-*/^()".contains(c) {
                out.push((Tok::Sym(c), i));
                i += 1;
            } else {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(self.end)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: self.offset(),
                message: format!("expected `{c}`"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::raw_binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = Expr::raw_binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.eat('^') {
            let exponent = self.factor()?;
            Ok(Expr::raw_binary(BinOp::Pow, base, exponent))
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::constant(v))
            }
            Some(Tok::Sym('-')) => {
                self.pos += 1;
                if let Some(Tok::Num(v)) = self.peek().cloned() {
                    self.pos += 1;
                    return Ok(Expr::constant(-v));
                }
                let inner = self.base()?;
                Ok(Expr::raw_unary(Func::Neg, inner))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let f = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        name: name.clone(),
                        offset,
                    })?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Expr::raw_unary(f, arg))
                } else {
                    Ok(Expr::var(&name))
                }
            }
            Some(Tok::Sym(c)) => Err(ExprError::Syntax {
                offset,
                message: format!("unexpected `{c}`"),
            }),
            None => Err(ExprError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parse an expression. The returned tree mirrors the source exactly; no
/// folding is applied.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let toks = Lexer::lex(source)?;
    if toks.is_empty() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: source.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        let offset = p.offset();
        let message = if p.peek() == Some(&Tok::Sym(')')) {
            "unbalanced `)`".to_string()
        } else {
            "trailing tokens".to_string()
        };
        return Err(ExprError::Syntax { offset, message });
    }
    Ok(e)
}
