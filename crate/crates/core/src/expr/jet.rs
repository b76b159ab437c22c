use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Compiled, Expr, Var};
use crate::error::Result;

/// Per-slot derivative orders.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(len: usize) -> Self {
        MultiIndex(vec![0; len])
    }

    pub fn unit(len: usize, slot: usize) -> Self {
        let mut m = MultiIndex::zeros(len);
        m.0[slot] = 1;
        m
    }

    /// Multi-index with the given order on selected variables.
    pub fn from_orders(len: usize, orders: &[(Var, u32)]) -> Self {
        let mut m = MultiIndex::zeros(len);
        for &(v, k) in orders {
            m.0[v.0 as usize] += k;
        }
        m
    }

    /// `|alpha|`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, v: Var) -> u32 {
        self.0[v.0 as usize]
    }

    /// Every multi-index `<= self` componentwise, in lexicographic order.
    pub fn below(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex::zeros(self.len())];
        for (slot, &max) in self.0.iter().enumerate() {
            if max == 0 {
                continue;
            }
            let mut next = Vec::with_capacity(out.len() * (max as usize + 1));
            for m in &out {
                for k in 0..=max {
                    let mut m2 = m.clone();
                    m2.0[slot] = k;
                    next.push(m2);
                }
            }
            out = next;
        }
        out.sort();
        out
    }

    /// Differentiation sequence realizing this index.
    pub fn as_vars(&self) -> Vec<Var> {
        let mut vars = Vec::new();
        for (slot, &k) in self.0.iter().enumerate() {
            for _ in 0..k {
                vars.push(Var(slot as u16));
            }
        }
        vars
    }
}

/// Table of partial derivatives at a base point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Jet {
    pub base: Vec<f64>,
    pub table: BTreeMap<MultiIndex, f64>,
}

impl Jet {
    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.table.get(m).copied()
    }

    pub fn value(&self) -> f64 {
        self.table[&MultiIndex::zeros(self.base.len())]
    }
}

/// Derivative expressions for every multi-index below `bound`. Each entry is
/// obtained from its predecessor by one differentiation, so mixed partials
/// are computed (and stored) once.
pub fn derivative_table(e: &Expr, bound: &MultiIndex) -> BTreeMap<MultiIndex, Expr> {
    let mut table: BTreeMap<MultiIndex, Expr> = BTreeMap::new();
    for m in bound.below() {
        let expr = match m.0.iter().rposition(|&k| k > 0) {
            None => e.clone(),
            Some(slot) => {
                let mut parent = m.clone();
                parent.0[slot] -= 1;
                table[&parent].diff(Var(slot as u16))
            }
        };
        table.insert(m, expr);
    }
    table
}

/// All partials of `e` at `point` up to `bound`.
pub fn jet(e: &Expr, point: &[f64], bound: &MultiIndex) -> Result<Jet> {
    let exprs = derivative_table(e, bound);
    let keys: Vec<MultiIndex> = exprs.keys().cloned().collect();
    let list: Vec<Expr> = exprs.into_values().collect();
    for x in &list {
        x.check_budget()?;
    }
    let tape = Compiled::many(&list);
    let mut out = vec![0.0; list.len()];
    tape.eval_all(point, &mut Vec::new(), &mut out)?;
    Ok(Jet { base: point.to_vec(), table: keys.into_iter().zip(out).collect() })
}

/// Relative discrepancy between the symbolic first derivative and a central
/// difference of step `h`: `|sym - fd| / max(1, |sym|)`.
pub fn fd_crosscheck(e: &Expr, point: &[f64], v: Var, h: f64) -> Result<f64> {
    let sym = e.diff(v).eval(point)?;
    let f = e.compile();
    let mut p = point.to_vec();
    p[v.0 as usize] = point[v.0 as usize] + h;
    let fp = f.eval(&p)?;
    p[v.0 as usize] = point[v.0 as usize] - h;
    let fm = f.eval(&p)?;
    let fd = (fp - fm) / (2.0 * h);
    Ok((sym - fd).abs() / sym.abs().max(1.0))
}
