//! Smooth expressions over collar coordinates with exact symbolic
//! differentiation.
//!
//! Every check in the crate takes its derivatives from this module. An
//! [`Expr`] is an immutable, reference-counted DAG; [`Expr::diff`] returns a
//! new expression and shares untouched subtrees with its input. Evaluation is
//! a pure function of the point, so expressions can be evaluated from many
//! threads at once.
//!
//! Singular loci are declared by the node kinds themselves: `sqrt` and `log`
//! of a non-positive argument, a quotient by zero, and the euclidean norm at
//! the origin are rejected with [`Error::SingularLocus`] rather than computed.

mod diff;
mod eval;
mod jet;
mod parse;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

pub use eval::Compiled;
pub use jet::{derivative_table, fd_crosscheck, jet, Jet, MultiIndex};
pub use parse::parse;

use crate::error::{Error, Result};

/// Upper bound on the number of distinct nodes of a single expression.
pub const NODE_BUDGET: usize = 1_000_000;

/// A variable slot. Slots are laid out by [`Space`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub u16);

/// Variable namespace for dimension `n`.
///
/// Slot layout: `x1 .. x{n-1}, xn, k1 .. k{n-1}, kn, t, tau, lam`. Maps of the
/// form `(y, eta) -> (x, xi)` reuse the `x`/`k` slots for `(y, eta)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Space {
    pub n: usize,
}

impl Space {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        Space { n }
    }

    /// Tangential base variable `x_{i+1}`, `i < n - 1`.
    pub fn x(&self, i: usize) -> Var {
        assert!(i + 1 < self.n);
        Var(i as u16)
    }

    pub fn xn(&self) -> Var {
        Var((self.n - 1) as u16)
    }

    /// Tangential covariable `xi_{i+1}`, `i < n - 1`.
    pub fn k(&self, i: usize) -> Var {
        assert!(i + 1 < self.n);
        Var((self.n + i) as u16)
    }

    pub fn kn(&self) -> Var {
        Var((2 * self.n - 1) as u16)
    }

    pub fn t(&self) -> Var {
        Var((2 * self.n) as u16)
    }

    pub fn tau(&self) -> Var {
        Var((2 * self.n + 1) as u16)
    }

    pub fn lam(&self) -> Var {
        Var((2 * self.n + 2) as u16)
    }

    /// Number of slots in a point of this space.
    pub fn len(&self) -> usize {
        2 * self.n + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tangential(&self) -> usize {
        self.n - 1
    }

    pub fn xs(&self) -> Vec<Var> {
        (0..self.n).map(|i| Var(i as u16)).collect()
    }

    pub fn ks(&self) -> Vec<Var> {
        (0..self.n).map(|i| Var((self.n + i) as u16)).collect()
    }

    pub fn zero_point(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    pub fn name(&self, v: Var) -> String {
        let s = v.0 as usize;
        let n = self.n;
        if s + 1 == n {
            "xn".into()
        } else if s < n {
            format!("x{}", s + 1)
        } else if s + 1 == 2 * n {
            "kn".into()
        } else if s < 2 * n {
            format!("k{}", s - n + 1)
        } else {
            match s - 2 * n {
                0 => "t".into(),
                1 => "tau".into(),
                _ => "lam".into(),
            }
        }
    }

    /// Resolves a variable name. `y*`/`e*` are accepted as aliases of
    /// `x*`/`k*` for map components written in `(y, eta)`.
    pub fn lookup(&self, name: &str) -> Option<Var> {
        match name {
            "t" => return Some(self.t()),
            "tau" => return Some(self.tau()),
            "lam" => return Some(self.lam()),
            _ => {}
        }
        let (head, tail) = name.split_at(1);
        let base = match head {
            "x" | "y" => 0,
            "k" | "e" => self.n,
            _ => return None,
        };
        if tail == "n" {
            return Some(Var((base + self.n - 1) as u16));
        }
        let i: usize = tail.parse().ok()?;
        if i >= 1 && i < self.n {
            Some(Var((base + i - 1) as u16))
        } else {
            None
        }
    }
}

/// Node kinds of the expression DAG.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(Var),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Quotient(Expr, Expr),
    PowI(Expr, i32),
    Exp(Expr),
    Log(Expr),
    Sin(Expr),
    Cos(Expr),
    Sqrt(Expr),
    /// `<a> = sqrt(1 + a^2)`.
    Bracket(Expr),
    /// Euclidean norm of a variable tuple; singular at the origin.
    Norm(Vec<Var>),
    /// `order`-th derivative of `F(s) = exp(-1/s)` for `s > 0`, `0` otherwise.
    Bump(u32, Expr),
    /// `mask * body`, with `body` evaluated only where `mask != 0`.
    Masked(Expr, Expr),
}

/// Immutable smooth expression.
#[derive(Clone, Debug)]
pub struct Expr(pub(crate) Arc<Node>);

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(c: f64) -> Self {
        Expr::from_node(Node::Const(c))
    }

    pub fn zero() -> Self {
        Expr::constant(0.0)
    }

    pub fn one() -> Self {
        Expr::constant(1.0)
    }

    pub fn var(v: Var) -> Self {
        Expr::from_node(Node::Var(v))
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

    pub fn sum(terms: Vec<Expr>) -> Self {
        let mut flat = Vec::with_capacity(terms.len());
        let mut acc = 0.0;
        let mut have_const = false;
        for t in terms {
            match t.node() {
                Node::Const(c) => {
                    acc += c;
                    have_const = true;
                }
                Node::Sum(inner) => {
                    for s in inner {
                        match s.node() {
                            Node::Const(c) => {
                                acc += c;
                                have_const = true;
                            }
                            _ => flat.push(s.clone()),
                        }
                    }
                }
                _ => flat.push(t),
            }
        }
        if have_const && acc != 0.0 {
            flat.insert(0, Expr::constant(acc));
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => Expr::from_node(Node::Sum(flat)),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        let mut flat = Vec::with_capacity(factors.len());
        let mut acc = 1.0;
        for f in factors {
            match f.node() {
                Node::Const(c) => acc *= c,
                Node::Product(inner) => {
                    for s in inner {
                        match s.node() {
                            Node::Const(c) => acc *= c,
                            _ => flat.push(s.clone()),
                        }
                    }
                }
                _ => flat.push(f),
            }
        }
        if acc == 0.0 {
            return Expr::zero();
        }
        if acc != 1.0 {
            flat.insert(0, Expr::constant(acc));
        }
        match flat.len() {
            0 => Expr::one(),
            1 => flat.pop().unwrap(),
            _ => Expr::from_node(Node::Product(flat)),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        Expr::sum(vec![self.clone(), other.clone()])
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        Expr::sum(vec![self.clone(), other.neg()])
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        Expr::product(vec![self.clone(), other.clone()])
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::product(vec![Expr::constant(c), self.clone()])
    }

    pub fn neg(&self) -> Expr {
        self.scale(-1.0)
    }

    pub fn div(&self, other: &Expr) -> Expr {
        if other.is_one() {
            return self.clone();
        }
        if self.is_zero() {
            return Expr::zero();
        }
        if let (Some(a), Some(b)) = (self.as_const(), other.as_const()) {
            if b != 0.0 {
                return Expr::constant(a / b);
            }
        }
        Expr::from_node(Node::Quotient(self.clone(), other.clone()))
    }

    pub fn powi(&self, n: i32) -> Expr {
        match n {
            0 => return Expr::one(),
            1 => return self.clone(),
            _ => {}
        }
        if let Some(c) = self.as_const() {
            let v = c.powi(n);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr::from_node(Node::PowI(self.clone(), n))
    }

    fn unary(&self, f: fn(f64) -> f64, domain_ok: fn(f64) -> bool, mk: fn(Expr) -> Node) -> Expr {
        if let Some(c) = self.as_const() {
            if domain_ok(c) {
                return Expr::constant(f(c));
            }
        }
        Expr::from_node(mk(self.clone()))
    }

    pub fn exp(&self) -> Expr {
        self.unary(f64::exp, |_| true, Node::Exp)
    }

    pub fn log(&self) -> Expr {
        self.unary(f64::ln, |c| c > 0.0, Node::Log)
    }

    pub fn sin(&self) -> Expr {
        self.unary(f64::sin, |_| true, Node::Sin)
    }

    pub fn cos(&self) -> Expr {
        self.unary(f64::cos, |_| true, Node::Cos)
    }

    pub fn sqrt(&self) -> Expr {
        self.unary(f64::sqrt, |c| c > 0.0, Node::Sqrt)
    }

    pub fn bracket(&self) -> Expr {
        self.unary(|c| (1.0 + c * c).sqrt(), |_| true, Node::Bracket)
    }

    /// `tanh(a)` written through `exp`; there is no dedicated node.
    pub fn tanh(&self) -> Expr {
        let e = self.scale(2.0).exp();
        e.sub(&Expr::one()).div(&e.add(&Expr::one()))
    }

    pub fn norm(vars: Vec<Var>) -> Expr {
        Expr::from_node(Node::Norm(vars))
    }

    /// Bump-transition primitive `F(s) = exp(-1/s)` (`s > 0`), `0` otherwise.
    pub fn bump(&self) -> Expr {
        self.bump_deriv(0)
    }

    pub fn bump_deriv(&self, order: u32) -> Expr {
        if let Some(c) = self.as_const() {
            return Expr::constant(eval::bump_value(order, c));
        }
        Expr::from_node(Node::Bump(order, self.clone()))
    }

    /// `mask * body` where `body` is only evaluated on the support of `mask`.
    pub fn masked(mask: &Expr, body: &Expr) -> Expr {
        if mask.is_zero() || body.is_zero() {
            return Expr::zero();
        }
        if mask.is_one() {
            return body.clone();
        }
        Expr::from_node(Node::Masked(mask.clone(), body.clone()))
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            e.for_each_child(|c| stack.push(c.clone()));
        }
        seen.len()
    }

    pub fn check_budget(&self) -> Result<()> {
        let n = self.node_count();
        if n > NODE_BUDGET {
            Err(Error::NodeBudgetExceeded(n))
        } else {
            Ok(())
        }
    }

    pub(crate) fn for_each_child(&self, mut f: impl FnMut(&Expr)) {
        match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Norm(_) => {}
            Node::Sum(v) | Node::Product(v) => v.iter().for_each(f),
            Node::Quotient(a, b) | Node::Masked(a, b) => {
                f(a);
                f(b);
            }
            Node::PowI(a, _)
            | Node::Exp(a)
            | Node::Log(a)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Sqrt(a)
            | Node::Bracket(a)
            | Node::Bump(_, a) => f(a),
        }
    }

    /// Whether the expression depends on `v`.
    pub fn depends_on(&self, v: Var) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.key()) {
                continue;
            }
            match e.node() {
                Node::Var(w) if *w == v => return true,
                Node::Norm(vs) if vs.contains(&v) => return true,
                _ => e.for_each_child(|c| stack.push(c.clone())),
            }
        }
        false
    }

    /// Simultaneous substitution of variables by expressions.
    pub fn subst(&self, map: &[(Var, Expr)]) -> Expr {
        let mut memo = std::collections::HashMap::new();
        self.subst_rec(map, &mut memo)
    }

    fn subst_rec(&self, map: &[(Var, Expr)], memo: &mut std::collections::HashMap<usize, Expr>) -> Expr {
        if let Some(e) = memo.get(&self.key()) {
            return e.clone();
        }
        let mut go = |e: &Expr| e.subst_rec(map, memo);
        let out = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(v) => match map.iter().find(|(w, _)| w == v) {
                Some((_, e)) => e.clone(),
                None => self.clone(),
            },
            Node::Norm(vs) => {
                if vs.iter().any(|v| map.iter().any(|(w, _)| w == v)) {
                    let sq: Vec<Expr> = vs
                        .iter()
                        .map(|v| match map.iter().find(|(w, _)| w == v) {
                            Some((_, e)) => e.powi(2),
                            None => Expr::var(*v).powi(2),
                        })
                        .collect();
                    Expr::sum(sq).sqrt()
                } else {
                    self.clone()
                }
            }
            Node::Sum(v) => Expr::sum(v.iter().map(&mut go).collect()),
            Node::Product(v) => Expr::product(v.iter().map(&mut go).collect()),
            Node::Quotient(a, b) => go(a).div(&go(b)),
            Node::PowI(a, n) => go(a).powi(*n),
            Node::Exp(a) => go(a).exp(),
            Node::Log(a) => go(a).log(),
            Node::Sin(a) => go(a).sin(),
            Node::Cos(a) => go(a).cos(),
            Node::Sqrt(a) => go(a).sqrt(),
            Node::Bracket(a) => go(a).bracket(),
            Node::Bump(k, a) => go(a).bump_deriv(*k),
            Node::Masked(m, b) => {
                let m = go(m);
                let b = go(b);
                Expr::masked(&m, &b)
            }
        };
        memo.insert(self.key(), out.clone());
        out
    }

    /// Renders the expression in the scenario grammar.
    pub fn display<'a>(&'a self, space: &'a Space) -> Display<'a> {
        Display { expr: self, space }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

pub struct Display<'a> {
    expr: &'a Expr,
    space: &'a Space,
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sp = self.space;
        fn sub<'b>(expr: &'b Expr, space: &'b Space) -> Display<'b> {
            Display { expr, space }
        }
        let d = |e| sub(e, sp);
        match self.expr.node() {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(v) => write!(f, "{}", sp.name(*v)),
            Node::Sum(v) => {
                write!(f, "(")?;
                for (i, t) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{}", d(t))?;
                }
                write!(f, ")")
            }
            Node::Product(v) => {
                write!(f, "(")?;
                for (i, t) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{}", d(t))?;
                }
                write!(f, ")")
            }
            Node::Quotient(a, b) => write!(f, "({}/{})", d(a), d(b)),
            Node::PowI(a, n) => write!(f, "({}^{})", d(a), n),
            Node::Exp(a) => write!(f, "exp({})", d(a)),
            Node::Log(a) => write!(f, "log({})", d(a)),
            Node::Sin(a) => write!(f, "sin({})", d(a)),
            Node::Cos(a) => write!(f, "cos({})", d(a)),
            Node::Sqrt(a) => write!(f, "sqrt({})", d(a)),
            Node::Bracket(a) => write!(f, "bracket({})", d(a)),
            Node::Norm(vs) => {
                let names: Vec<String> = vs.iter().map(|v| sp.name(*v)).collect();
                write!(f, "norm({})", names.join(", "))
            }
            Node::Bump(0, a) => write!(f, "bump({})", d(a)),
            Node::Bump(k, a) => write!(f, "bumpd{}({})", k, d(a)),
            Node::Masked(m, b) => write!(f, "mask({}, {})", d(m), d(b)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp() -> Space {
        Space::new(2)
    }

    fn p(s: &str) -> Expr {
        parse(&sp(), s).unwrap()
    }

    fn at(pairs: &[(&str, f64)]) -> Vec<f64> {
        let s = sp();
        let mut pt = s.zero_point();
        for (name, v) in pairs {
            pt[s.lookup(name).unwrap().0 as usize] = *v;
        }
        pt
    }

    #[test]
    fn bracket_derivative_vanishes_at_origin() {
        let s = sp();
        let d = p("bracket(kn)").diff(s.kn());
        assert_eq!(d.eval(&at(&[("kn", 0.0)])).unwrap(), 0.0);
        assert_eq!(p("bracket(kn)").eval(&at(&[])).unwrap(), 1.0);
    }

    #[test]
    fn product_rule_on_normal_linear_term() {
        let s = sp();
        let d = p("xn*kn*exp(sin(x1)/2)").diff(s.xn());
        let want = p("kn*exp(sin(x1)/2)");
        for &(x1, kn) in &[(0.3, 2.0), (-1.0, -0.5), (0.0, 7.0)] {
            let pt = at(&[("x1", x1), ("kn", kn), ("xn", 0.4)]);
            assert_eq!(d.eval(&pt).unwrap(), want.eval(&pt).unwrap());
        }
    }

    #[test]
    fn bump_derivative_matches_central_difference() {
        let s = sp();
        let e = Expr::var(s.t()).bump();
        let err = fd_crosscheck(&e, &at(&[("t", 0.75)]), s.t(), 1e-4).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn high_precision_oracle_value() {
        // 50-digit reference: exp(sin(1)/2)
        let oracle = 1.523_081_358_534_682_2_f64;
        let v = p("exp(sin(x1)/2)").eval(&at(&[("x1", 1.0)])).unwrap();
        assert!((v - oracle).abs() <= 1e-12);
    }

    #[test]
    fn norm_rejects_origin() {
        let e = p("norm(k1, kn)");
        assert!(matches!(e.eval(&at(&[])), Err(Error::SingularLocus(_))));
        assert_eq!(e.eval(&at(&[("k1", 3.0), ("kn", 4.0)])).unwrap(), 5.0);
    }

    #[test]
    fn sqrt_and_log_reject_nonpositive() {
        assert!(p("sqrt(x1)").eval(&at(&[("x1", -1.0)])).is_err());
        assert!(p("log(x1)").eval(&at(&[("x1", 0.0)])).is_err());
        assert!(p("1/x1").eval(&at(&[])).is_err());
    }

    #[test]
    fn jet_mixed_entry_and_constant() {
        let s = sp();
        let bound = MultiIndex::from_orders(s.len(), &[(s.xn(), 1), (s.kn(), 1)]);
        let j = jet(&p("xn*kn"), &at(&[("xn", 2.0), ("kn", -3.0)]), &bound).unwrap();
        assert_eq!(j.get(&bound), Some(1.0));
        assert_eq!(j.table.len(), 4);

        let j = jet(&Expr::constant(5.0), &at(&[]), &bound).unwrap();
        assert_eq!(j.value(), 5.0);
        for (m, v) in &j.table {
            if m.order() > 0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn bump_jet_matches_richardson_differences() {
        let s = sp();
        let t = Expr::var(s.t());
        // exp(-1/s) composed with a smooth inner map
        let e = t.mul(&t).add(&t.scale(0.5)).bump();
        let s0 = 0.6;
        let bound = MultiIndex::from_orders(s.len(), &[(s.t(), 3)]);
        let j = jet(&e, &at(&[("t", s0)]), &bound).unwrap();
        let f = e.compile();
        let ev = |x: f64| f.eval(&at(&[("t", x)])).unwrap();
        let d3 = |h: f64| (ev(s0 + 2.0 * h) - 2.0 * ev(s0 + h) + 2.0 * ev(s0 - h) - ev(s0 - 2.0 * h)) / (2.0 * h.powi(3));
        let h = 1e-2;
        let rich = (4.0 * d3(h / 2.0) - d3(h)) / 3.0;
        let sym = j.get(&bound).unwrap();
        assert!((sym - rich).abs() / sym.abs().max(1.0) <= 1e-6, "{sym} vs {rich}");
    }

    #[test]
    fn fd_crosscheck_reference_cases() {
        let s = sp();
        let e = p("xn^3");
        for x in [-2.0, 0.0, 0.7, 3.0] {
            assert!(fd_crosscheck(&e, &at(&[("xn", x)]), s.xn(), 1e-4).unwrap() <= 1e-8);
        }
        let e = p("exp(xn*kn)");
        assert!(fd_crosscheck(&e, &at(&[("xn", 1.0), ("kn", 1.0)]), s.xn(), 1e-4).unwrap() <= 1e-6);
        let e = p("bracket(kn)");
        assert!(fd_crosscheck(&e, &at(&[("kn", 2.0)]), s.kn(), 1e-4).unwrap() <= 1e-6);
    }

    #[test]
    fn parser_round_trips_through_display() {
        let srcs = [
            "x1*k1 + xn*kn*exp(sin(x1)/2)",
            "x1*k1 + xn*kn + 0.1*xn*norm(k1, kn)",
            "(x1 + 0.3*tanh(x1))*k1 - xn^2*kn^-1",
            "bump(1 - t^2) / (bump(1 - t^2) + bump(t^2 - 0.25))",
            "sqrt(1 + k1^2)^3 + kn^0.5 + 2.5e-3",
        ];
        let s = sp();
        let mut pt = at(&[("x1", 0.37), ("xn", -0.21), ("k1", 1.3), ("kn", 0.8), ("t", 0.6)]);
        pt[s.tau().0 as usize] = 0.2;
        for src in srcs {
            let e = p(src);
            let shown = e.display(&s).to_string();
            let again = parse(&s, &shown).unwrap();
            assert_eq!(e.eval(&pt).unwrap(), again.eval(&pt).unwrap(), "{src} -> {shown}");
        }
    }

    #[test]
    fn parser_errors_carry_positions() {
        let s = sp();
        assert!(matches!(parse(&s, "x1 +"), Err(Error::Parse { .. })));
        assert!(matches!(parse(&s, "foo(x1)"), Err(Error::Parse { pos: 0, .. })));
        assert!(matches!(parse(&s, "x7"), Err(Error::Parse { .. })));
        assert!(matches!(parse(&s, "x1^1.5"), Err(Error::Parse { .. })));
        assert!(matches!(parse(&s, "(x1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn node_budget_is_enforced() {
        let s = sp();
        let small = Expr::sum((0..50).map(|i| Expr::var(s.x(0)).scale(i as f64 + 2.0).sin()).collect());
        assert!(small.check_budget().is_ok());
        let big = Expr::sum((0..NODE_BUDGET + 1).map(|i| Expr::var(s.xn()).scale(i as f64 + 1.0)).collect());
        assert!(matches!(big.check_budget(), Err(Error::NodeBudgetExceeded(_))));
    }

    fn catalog_exprs() -> Vec<Expr> {
        [
            "x1*k1 + xn*kn",
            "x1*k1 + xn*kn*exp(sin(x1)/2)",
            "x1*k1 + xn*kn*(1 + xn*0.2*cos(x1))",
            "(x1 + 0.3*tanh(x1))*k1 + xn*kn",
            "x1*k1 + xn*kn + 0.1*xn*norm(k1, kn)",
            "kn*exp(sin(x1)/2)",
            "kn^2/norm(k1, kn)",
        ]
        .iter()
        .map(|s| p(s))
        .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn first_and_second_derivatives_match_differences(
            x1 in -1.0f64..1.0, xn in -0.5f64..0.5, k1 in 0.2f64..3.0, kn in 0.2f64..3.0,
        ) {
            let s = sp();
            let pt = at(&[("x1", x1), ("xn", xn), ("k1", k1), ("kn", kn)]);
            for e in catalog_exprs() {
                for v in [s.x(0), s.xn(), s.k(0), s.kn()] {
                    prop_assert!(fd_crosscheck(&e, &pt, v, 1e-4).unwrap() <= 1e-6);
                    for w in [s.x(0), s.xn(), s.k(0), s.kn()] {
                        prop_assert!(fd_crosscheck(&e.diff(w), &pt, v, 1e-4).unwrap() <= 1e-6);
                    }
                }
            }
        }

        #[test]
        fn mixed_partials_commute(
            x1 in -1.0f64..1.0, xn in -0.5f64..0.5, k1 in 0.2f64..3.0, kn in 0.2f64..3.0,
        ) {
            let s = sp();
            let pt = at(&[("x1", x1), ("xn", xn), ("k1", k1), ("kn", kn)]);
            for e in catalog_exprs() {
                let a = e.diff(s.x(0)).diff(s.kn()).diff(s.xn()).eval(&pt).unwrap();
                let b = e.diff(s.xn()).diff(s.x(0)).diff(s.kn()).eval(&pt).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn homogeneous_expressions_scale(
            x1 in -1.0f64..1.0, k1 in -3.0f64..3.0, kn in 0.2f64..3.0,
        ) {
            let e1 = p("x1*k1 + xn*kn*exp(sin(x1)/2) + 0.1*xn*norm(k1, kn)");
            let e2 = p("kn^2/norm(k1, kn) + k1");
            let e0 = p("k1/norm(k1, kn)");
            for (e, d) in [(&e1, 1), (&e2, 1), (&e0, 0)] {
                let base = at(&[("x1", x1), ("xn", 0.3), ("k1", k1), ("kn", kn)]);
                let v = e.eval(&base).unwrap();
                for lam in [2.0, 10.0, 100.0] {
                    let scaled = at(&[("x1", x1), ("xn", 0.3), ("k1", lam * k1), ("kn", lam * kn)]);
                    let w = e.eval(&scaled).unwrap();
                    let want = f64::powi(lam, d) * v;
                    prop_assert!((w - want).abs() <= 1e-10 * want.abs().max(1e-300) + 1e-300);
                }
            }
        }

        #[test]
        fn evaluation_is_deterministic(x1 in -1.0f64..1.0, kn in -3.0f64..3.0) {
            let e = p("exp(sin(x1)/2)*kn + bracket(kn)^3");
            let pt = at(&[("x1", x1), ("kn", kn)]);
            prop_assert_eq!(e.eval(&pt).unwrap().to_bits(), e.eval(&pt).unwrap().to_bits());
        }
    }
}
