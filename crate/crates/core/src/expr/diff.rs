use std::collections::HashMap;

use super::{Expr, Node, Var};

impl Expr {
    /// Exact partial derivative with respect to `v`.
    pub fn diff(&self, v: Var) -> Expr {
        let mut memo = HashMap::new();
        self.diff_rec(v, &mut memo)
    }

    /// Repeated differentiation along `vars` (in order).
    pub fn diff_many(&self, vars: &[Var]) -> Expr {
        vars.iter().fold(self.clone(), |e, &v| e.diff(v))
    }

    fn diff_rec(&self, v: Var, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.key()) {
            return d.clone();
        }
        let out = match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(w) => {
                if *w == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Sum(terms) => Expr::sum(terms.iter().map(|t| t.diff_rec(v, memo)).collect()),
            Node::Product(fs) => {
                let mut terms = Vec::new();
                for i in 0..fs.len() {
                    let di = fs[i].diff_rec(v, memo);
                    if di.is_zero() {
                        continue;
                    }
                    let mut factors = Vec::with_capacity(fs.len());
                    for (j, f) in fs.iter().enumerate() {
                        factors.push(if i == j { di.clone() } else { f.clone() });
                    }
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Node::Quotient(a, b) => {
                let da = a.diff_rec(v, memo);
                let db = b.diff_rec(v, memo);
                let first = da.div(b);
                if db.is_zero() {
                    first
                } else {
                    first.sub(&a.mul(&db).div(&b.powi(2)))
                }
            }
            Node::PowI(a, n) => {
                let da = a.diff_rec(v, memo);
                Expr::product(vec![Expr::constant(*n as f64), a.powi(n - 1), da])
            }
            Node::Exp(a) => a.diff_rec(v, memo).mul(self),
            Node::Log(a) => a.diff_rec(v, memo).div(a),
            Node::Sin(a) => a.diff_rec(v, memo).mul(&a.cos()),
            Node::Cos(a) => a.diff_rec(v, memo).mul(&a.sin()).neg(),
            Node::Sqrt(a) => a.diff_rec(v, memo).div(&self.scale(2.0)),
            Node::Bracket(a) => {
                let da = a.diff_rec(v, memo);
                da.mul(a).div(self)
            }
            Node::Norm(vars) => {
                if vars.contains(&v) {
                    Expr::var(v).div(self)
                } else {
                    Expr::zero()
                }
            }
            Node::Bump(k, a) => a.diff_rec(v, memo).mul(&a.bump_deriv(k + 1)),
            Node::Masked(m, b) => {
                let dm = m.diff_rec(v, memo);
                let db = b.diff_rec(v, memo);
                Expr::sum(vec![Expr::masked(&dm, b), Expr::masked(m, &db)])
            }
        };
        memo.insert(self.key(), out.clone());
        out
    }
}
