use std::collections::HashMap;
use std::sync::OnceLock;

use super::{Expr, Node};
use crate::error::{Error, Result};

/// Coefficients (ascending powers of `u = 1/s`) of the polynomial `P_n` with
/// `F^(n)(s) = P_n(1/s) exp(-1/s)`. `P_0 = 1`, `P_{n+1}(u) = u^2 (P_n(u) - P_n'(u))`.
fn bump_poly(order: u32) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; p.len() + 2];
        for (j, c) in p.iter().enumerate() {
            next[j + 2] += c;
            if j >= 1 {
                next[j + 1] -= j as f64 * c;
            }
        }
        p = next;
    }
    p
}

const CACHED_BUMP_ORDERS: usize = 24;

fn bump_table() -> &'static Vec<Vec<f64>> {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..CACHED_BUMP_ORDERS as u32).map(bump_poly).collect())
}

pub(crate) fn bump_value(order: u32, s: f64) -> f64 {
    if s.is_nan() {
        return f64::NAN;
    }
    if s <= 0.0 {
        return 0.0;
    }
    let u = 1.0 / s;
    if u > 745.0 {
        return 0.0;
    }
    let owned;
    let coeffs: &[f64] = if (order as usize) < CACHED_BUMP_ORDERS {
        &bump_table()[order as usize]
    } else {
        owned = bump_poly(order);
        &owned
    };
    let poly = coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c);
    poly * (-u).exp()
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Const,
    Var,
    Sum,
    Product,
    Quotient,
    PowI,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Bracket,
    Norm,
    Bump,
    Masked,
}

#[derive(Clone, Copy, Debug)]
struct Op {
    kind: Kind,
    a: u32,
    b: u32,
    c: f64,
}

/// Flattened evaluation tape for one or more expressions.
///
/// Shared subexpressions are evaluated once. Values inside a declared
/// singular locus propagate as NaN and are turned into
/// [`Error::SingularLocus`] by [`Compiled::eval`].
#[derive(Clone, Debug)]
pub struct Compiled {
    ops: Vec<Op>,
    args: Vec<u32>,
    outputs: Vec<u32>,
}

impl Compiled {
    pub fn new(expr: &Expr) -> Self {
        Compiled::many(std::slice::from_ref(expr))
    }

    pub fn many(exprs: &[Expr]) -> Self {
        let mut c = Compiled { ops: Vec::new(), args: Vec::new(), outputs: Vec::new() };
        let mut index = HashMap::new();
        for e in exprs {
            let slot = c.emit(e, &mut index);
            c.outputs.push(slot);
        }
        c
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn emit(&mut self, e: &Expr, index: &mut HashMap<usize, u32>) -> u32 {
        if let Some(&i) = index.get(&e.key()) {
            return i;
        }
        // Children first (post-order), using an explicit stack to bound recursion depth.
        let mut stack: Vec<(Expr, bool)> = vec![(e.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if index.contains_key(&node.key()) {
                continue;
            }
            if !expanded {
                stack.push((node.clone(), true));
                node.for_each_child(|ch| {
                    if !index.contains_key(&ch.key()) {
                        stack.push((ch.clone(), false));
                    }
                });
                continue;
            }
            let op = self.lower(&node, index);
            let slot = self.ops.len() as u32;
            self.ops.push(op);
            index.insert(node.key(), slot);
        }
        index[&e.key()]
    }

    fn lower(&mut self, e: &Expr, index: &HashMap<usize, u32>) -> Op {
        let ix = |x: &Expr| index[&x.key()];
        let op = |kind, a, b, c| Op { kind, a, b, c };
        match e.node() {
            Node::Const(v) => op(Kind::Const, 0, 0, *v),
            Node::Var(v) => op(Kind::Var, v.0 as u32, 0, 0.0),
            Node::Sum(v) | Node::Product(v) => {
                let start = self.args.len() as u32;
                for t in v {
                    self.args.push(ix(t));
                }
                let kind = if matches!(e.node(), Node::Sum(_)) { Kind::Sum } else { Kind::Product };
                op(kind, start, v.len() as u32, 0.0)
            }
            Node::Quotient(a, b) => op(Kind::Quotient, ix(a), ix(b), 0.0),
            Node::Masked(a, b) => op(Kind::Masked, ix(a), ix(b), 0.0),
            Node::PowI(a, n) => op(Kind::PowI, ix(a), 0, *n as f64),
            Node::Exp(a) => op(Kind::Exp, ix(a), 0, 0.0),
            Node::Log(a) => op(Kind::Log, ix(a), 0, 0.0),
            Node::Sin(a) => op(Kind::Sin, ix(a), 0, 0.0),
            Node::Cos(a) => op(Kind::Cos, ix(a), 0, 0.0),
            Node::Sqrt(a) => op(Kind::Sqrt, ix(a), 0, 0.0),
            Node::Bracket(a) => op(Kind::Bracket, ix(a), 0, 0.0),
            Node::Bump(k, a) => op(Kind::Bump, ix(a), *k, 0.0),
            Node::Norm(vars) => {
                let start = self.args.len() as u32;
                for v in vars {
                    self.args.push(v.0 as u32);
                }
                op(Kind::Norm, start, vars.len() as u32, 0.0)
            }
        }
    }

    /// Evaluates every output; singular values come back as NaN.
    pub fn eval_raw(&self, point: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let r = |i: u32| scratch[i as usize];
            let v = match op.kind {
                Kind::Const => op.c,
                Kind::Var => point[op.a as usize],
                Kind::Sum => {
                    let mut acc = 0.0;
                    for &i in &self.args[op.a as usize..(op.a + op.b) as usize] {
                        acc += scratch[i as usize];
                    }
                    acc
                }
                Kind::Product => {
                    let mut acc = 1.0;
                    for &i in &self.args[op.a as usize..(op.a + op.b) as usize] {
                        acc *= scratch[i as usize];
                    }
                    acc
                }
                Kind::Quotient => {
                    let d = r(op.b);
                    if d == 0.0 {
                        f64::NAN
                    } else {
                        r(op.a) / d
                    }
                }
                Kind::Masked => {
                    let m = r(op.a);
                    if m == 0.0 {
                        0.0
                    } else {
                        m * r(op.b)
                    }
                }
                Kind::PowI => {
                    let base = r(op.a);
                    let n = op.c as i32;
                    if n < 0 && base == 0.0 {
                        f64::NAN
                    } else {
                        base.powi(n)
                    }
                }
                Kind::Exp => r(op.a).exp(),
                Kind::Log => {
                    let x = r(op.a);
                    if x > 0.0 {
                        x.ln()
                    } else {
                        f64::NAN
                    }
                }
                Kind::Sin => r(op.a).sin(),
                Kind::Cos => r(op.a).cos(),
                Kind::Sqrt => {
                    let x = r(op.a);
                    if x > 0.0 {
                        x.sqrt()
                    } else {
                        f64::NAN
                    }
                }
                Kind::Bracket => {
                    let x = r(op.a);
                    (1.0 + x * x).sqrt()
                }
                Kind::Norm => {
                    let mut acc = 0.0;
                    for &s in &self.args[op.a as usize..(op.a + op.b) as usize] {
                        let x = point[s as usize];
                        acc += x * x;
                    }
                    if acc > 0.0 {
                        acc.sqrt()
                    } else {
                        f64::NAN
                    }
                }
                Kind::Bump => bump_value(op.b, r(op.a)),
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot as usize];
        }
    }

    /// Evaluates all outputs, rejecting points in the singular locus.
    pub fn eval_all(&self, point: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<()> {
        self.eval_raw(point, scratch, out);
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            return Err(singular(point, bad));
        }
        Ok(())
    }

    /// Evaluates the first output.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let mut scratch = Vec::new();
        let mut out = [0.0];
        self.eval_raw(point, &mut scratch, &mut out);
        if out[0].is_finite() {
            Ok(out[0])
        } else {
            Err(singular(point, 0))
        }
    }
}

fn singular(point: &[f64], output: usize) -> Error {
    Error::SingularLocus(format!("output {output} at point {point:?}"))
}

impl Expr {
    /// Evaluates the expression at `point` (a slot vector laid out by `Space`).
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if let Some(c) = self.as_const() {
            return Ok(c);
        }
        Compiled::new(self).eval(point)
    }

    pub fn compile(&self) -> Compiled {
        Compiled::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_polynomials_match_hand_derivatives() {
        // F' = F / s^2, F'' = F (1 - 2 s) / s^4
        assert_eq!(bump_poly(1), vec![0.0, 0.0, 1.0]);
        let p2 = bump_poly(2);
        assert_eq!(p2, vec![0.0, 0.0, 0.0, -2.0, 1.0]);
        let s: f64 = 0.37;
        let f = (-1.0 / s).exp();
        assert!((bump_value(2, s) - f * (1.0 - 2.0 * s) / s.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn bump_vanishes_on_nonpositive_axis() {
        for k in 0..8 {
            assert_eq!(bump_value(k, 0.0), 0.0);
            assert_eq!(bump_value(k, -3.0), 0.0);
            assert_eq!(bump_value(k, 1e-5), 0.0);
        }
    }
}
