//! Infix grammar for expression literals in scenario files.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' exponent)?
//! exponent := ['-'] integer | ['-'] '0.5' | '(' exponent ')'
//! atom   := number | 'pi' | variable | func '(' args ')' | '(' expr ')'
//! func   := exp | log | sin | cos | sqrt | tanh | bracket | bump | norm
//! ```
//!
//! Variables are `x1 .. x{n-1}, xn, k1 .. k{n-1}, kn` (aliases `y*`, `e*`),
//! plus `t`, `tau`, `lam`. `norm` takes a list of variables. A `0.5`
//! exponent is read as `sqrt`; all other exponents must be integers.

use super::{Expr, Space};
use crate::error::{Error, Result};

pub fn parse(space: &Space, src: &str) -> Result<Expr> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, space };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    space: &'a Space,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                terms.push(self.term()?.neg());
            } else {
                break;
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = acc.mul(&self.unary()?);
            } else if self.eat(b'/') {
                acc = acc.div(&self.unary()?);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(self.unary()?.neg());
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let exp = self.exponent()?;
        if exp == 0.5 {
            Ok(base.sqrt())
        } else if exp == -0.5 {
            Ok(Expr::one().div(&base.sqrt()))
        } else if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
            Ok(base.powi(exp as i32))
        } else {
            Err(self.err("only integer and +-0.5 exponents are supported"))
        }
    }

    fn exponent(&mut self) -> Result<f64> {
        if self.eat(b'(') {
            let v = self.exponent()?;
            self.expect(b')')?;
            return Ok(v);
        }
        let neg = self.eat(b'-');
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exp_sign = (c == b'-' || c == b'+')
                && self.pos > start
                && matches!(self.src[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map_err(|_| Error::Parse { pos: start, msg: format!("bad number `{text}`") })
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        String::from_utf8(self.src[start..self.pos].to_vec()).unwrap()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::constant(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let name = self.ident();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    return self.call(&name, start);
                }
                if name == "pi" {
                    return Ok(Expr::constant(std::f64::consts::PI));
                }
                self.space
                    .lookup(&name)
                    .map(Expr::var)
                    .ok_or(Error::Parse { pos: start, msg: format!("unknown variable `{name}`") })
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Expr> {
        if name == "norm" {
            let mut vars = Vec::new();
            loop {
                let id = self.ident();
                let v = self
                    .space
                    .lookup(&id)
                    .ok_or(Error::Parse { pos: self.pos, msg: format!("norm expects variables, got `{id}`") })?;
                vars.push(v);
                if !self.eat(b',') {
                    break;
                }
            }
            self.expect(b')')?;
            return Ok(Expr::norm(vars));
        }
        let arg = self.expr()?;
        self.expect(b')')?;
        Ok(match name {
            "exp" => arg.exp(),
            "log" => arg.log(),
            "sin" => arg.sin(),
            "cos" => arg.cos(),
            "sqrt" => arg.sqrt(),
            "tanh" => arg.tanh(),
            "bracket" => arg.bracket(),
            "bump" => arg.bump(),
            _ => return Err(Error::Parse { pos: start, msg: format!("unknown function `{name}`") }),
        })
    }
}
