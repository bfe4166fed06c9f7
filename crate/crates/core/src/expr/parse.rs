//! Recursive-descent parser for coefficient expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '×' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers: `u`, `d<k>u` (one dimension), `u_<axes>` such as `u_xy`,
//! coordinates `x y z`, time `t`, and `pi`.

use std::f64::consts::PI;

use super::{Expr, Func, Var};
use crate::error::{Error, Result};
use crate::torus::MultiIndex;

/// What a parsed expression is allowed to read.
#[derive(Clone, Copy, Debug)]
pub struct ParseContext {
    pub n_dims: usize,
    /// Slots of this order or higher are rejected; `None` forbids all slots.
    pub slot_limit: Option<usize>,
}

impl ParseContext {
    /// Coefficients of an order-`2p` operator read `u, …, ∇^{2p-1}u`.
    pub fn coefficient(n_dims: usize, p: usize) -> Self {
        ParseContext { n_dims, slot_limit: Some(2 * p) }
    }

    /// Data expressions in `(x, t)` only.
    pub fn data(n_dims: usize) -> Self {
        ParseContext { n_dims, slot_limit: None }
    }
}

pub fn parse(src: &str, ctx: ParseContext) -> Result<Expr> {
    let mut p = Parser { src, pos: 0, ctx };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    ctx: ParseContext,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse { position: self.pos, message: message.into() }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = Expr::sum(acc, self.term()?);
            } else if self.eat('-') || self.eat('−') {
                acc = Expr::difference(acc, self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') || self.eat('×') {
                acc = Expr::product(acc, self.unary()?);
            } else if self.eat('/') {
                let den = self.unary()?;
                if den.as_const() == Some(0.0) {
                    return Err(self.error("division by zero"));
                }
                acc = Expr::quotient(acc, den);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') || self.eat('−') {
            return Ok(Expr::negate(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            let r = exp.as_const().ok_or_else(|| self.error("exponent must be a constant"))?;
            return Ok(Expr::power(base, r));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let c = self.peek().ok_or_else(|| self.error("unexpected end of input"))?;
        if c == '(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        if c.is_ascii_digit() || c == '.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let ident = &self.src[start..self.pos];
            if let Some(f) = function(ident) {
                if !self.eat('(') {
                    return Err(self.error(format!("expected `(` after `{ident}`")));
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                return Ok(Expr::call(f, arg));
            }
            let pos = self.pos;
            return self.identifier(ident).map_err(|e| match e {
                Error::Parse { message, .. } => Error::Parse { position: pos, message },
                other => other,
            });
        }
        Err(self.error(format!("unexpected character `{c}`")))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
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
        self.pos = i;
        self.src[start..i]
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| Error::Parse { position: start, message: format!("bad number `{}`", &self.src[start..i]) })
    }

    fn identifier(&self, ident: &str) -> Result<Expr> {
        let n = self.ctx.n_dims;
        match ident {
            "pi" => return Ok(Expr::Const(PI)),
            "t" => return Ok(Expr::var(Var::Time)),
            "x" | "y" | "z" => {
                let axis = (ident.as_bytes()[0] - b'x') as usize;
                if axis >= n {
                    return Err(self.error(format!("coordinate `{ident}` on a {n}-dimensional torus")));
                }
                return Ok(Expr::var(Var::Coord(axis)));
            }
            _ => {}
        }
        let slot = if ident == "u" {
            Some(MultiIndex::ZERO)
        } else if let Some(axes) = ident.strip_prefix("u_") {
            let mut list = Vec::new();
            for ch in axes.chars() {
                let axis = match ch {
                    'x' => 0,
                    'y' => 1,
                    'z' => 2,
                    _ => return Err(self.error(format!("unknown axis `{ch}` in `{ident}`"))),
                };
                if axis >= n {
                    return Err(self.error(format!("axis `{ch}` on a {n}-dimensional torus")));
                }
                list.push(axis);
            }
            if list.is_empty() {
                return Err(self.error("empty derivative slot"));
            }
            Some(MultiIndex::from_axes(&list))
        } else if let Some(k) = ident.strip_prefix('d').and_then(|r| r.strip_suffix('u')) {
            let k: usize = k.parse().map_err(|_| self.error(format!("unknown identifier `{ident}`")))?;
            if n != 1 && k > 0 {
                return Err(self.error(format!("`{ident}` is ambiguous in {n} dimensions; use u_<axes>")));
            }
            Some(MultiIndex::from_axes(&vec![0; k]))
        } else {
            None
        };
        let Some(alpha) = slot else {
            return Err(self.error(format!("unknown identifier `{ident}`")));
        };
        match self.ctx.slot_limit {
            None => Err(self.error(format!("`{ident}` cannot appear in a data expression"))),
            Some(limit) if alpha.order() >= limit => Err(self.error(format!(
                "`{ident}` has order {}: coefficients may read only up to ∇^{}u",
                alpha.order(),
                limit - 1
            ))),
            Some(_) => Ok(Expr::slot(alpha)),
        }
    }
}

fn function(name: &str) -> Option<Func> {
    Some(match name {
        "sin" => Func::Sin,
        "cos" => Func::Cos,
        "exp" => Func::Exp,
        "log" | "ln" => Func::Ln,
        "sqrt" => Func::Sqrt,
        "abs" => Func::Abs,
        "smoothstep" => Func::Smoothstep(0),
        _ => return None,
    })
}
