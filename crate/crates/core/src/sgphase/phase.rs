use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Cutoff;
use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr, Space};
use crate::genphase::GeneratingPhase;
use crate::numeric::bracket;

/// Highest `t`- and `tau`-derivative order kept on the tape.
pub const ORDER_BOUND: u32 = 3;

/// Tape output index of `d^a_t d^alpha_tau`.
pub fn slot(a: u32, alpha: u32) -> usize {
    (a * (ORDER_BOUND + 1) + alpha) as usize
}

/// The `(t, tau)` sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgGrid {
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
}

impl SgGrid {
    /// `{0, +-0.25, ..., +-50}` with 20 geometric steps per sign, in both
    /// variables (41 x 41).
    pub fn standard() -> Self {
        let l = Self::ladder(0.25, 50.0, 20);
        SgGrid { t: l.clone(), tau: l }
    }

    /// Symmetric geometric ladder with `per_side` positive points.
    pub fn ladder(lo: f64, hi: f64, per_side: usize) -> Vec<f64> {
        let step = (hi / lo).ln() / (per_side as f64 - 1.0);
        let mut pos: Vec<f64> = (0..per_side).map(|i| lo * (step * i as f64).exp()).collect();
        if let Some(last) = pos.last_mut() {
            *last = hi;
        }
        let mut out: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
        out.push(0.0);
        out.extend(pos);
        out
    }

    /// Inserts `factor - 1` geometric (or linear next to zero) points
    /// between neighbours.
    pub fn refined(&self, factor: usize) -> Self {
        let refine = |v: &[f64]| {
            let mut out = Vec::new();
            for w in v.windows(2) {
                out.push(w[0]);
                for j in 1..factor {
                    let s = j as f64 / factor as f64;
                    let p = if w[0] * w[1] > 0.0 { w[0].signum() * (w[0].abs().ln() * (1.0 - s) + w[1].abs().ln() * s).exp() } else { w[0] + s * (w[1] - w[0]) };
                    out.push(p);
                }
            }
            out.extend(v.last());
            out
        };
        SgGrid { t: refine(&self.t), tau: refine(&self.tau) }
    }

    pub fn len(&self) -> usize {
        self.t.len() * self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// sha256 of the little-endian bytes of both ladders.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.t.iter().chain(&self.tau) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// `*Phi(t, tau)` for a generating phase, with the base point `(x', xi')`
/// left as tape inputs so one compilation serves every base point.
#[derive(Clone, Debug)]
pub struct RegularizedPhase {
    pub space: Space,
    pub k: f64,
    pub big_k: f64,
    /// `*Phi` as an expression in `t, tau, x', xi'` and `lam = <xi'>`.
    pub star: Expr,
    tape: Arc<Compiled>,
    pub x_tangential: Vec<f64>,
    pub xi_tangential: Vec<f64>,
}

/// Builds `*Phi(t, tau) = w * phi(x', t/<xi'>, xi', tau <xi'>) + (1 - w) K t tau`
/// with `w = omega_k(t / <xi'>)`; the `phi` summand is only evaluated where
/// `w != 0`.
pub fn build_star_phi(psi: &GeneratingPhase, x_tangential: &[f64], xi_tangential: &[f64], k: f64, big_k: f64) -> Result<RegularizedPhase> {
    if !(k > 0.0) || k > psi.half_width / 2.0 {
        return Err(Error::CollarExceeded { k, half_width: psi.half_width });
    }
    let sp = psi.space;
    let (t, tau, r) = (Expr::var(sp.t()), Expr::var(sp.tau()), Expr::var(sp.lam()));
    let phi = psi.phi.subst(&[(sp.xn(), t.div(&r)), (sp.kn(), tau.mul(&r))]);
    let w = Cutoff::new(k).expr(&t.div(&r));
    let linear = t.mul(&tau).scale(big_k);
    let star = Expr::masked(&w, &phi).add(&Expr::one().sub(&w).mul(&linear));
    star.check_budget()?;
    let mut table = Vec::new();
    let mut da = star.clone();
    for _ in 0..=ORDER_BOUND {
        let mut d = da.clone();
        for _ in 0..=ORDER_BOUND {
            table.push(d.clone());
            d = d.diff(sp.tau());
        }
        da = da.diff(sp.t());
    }
    let phase = RegularizedPhase {
        space: sp,
        k,
        big_k,
        star,
        tape: Arc::new(Compiled::many(&table)),
        x_tangential: Vec::new(),
        xi_tangential: Vec::new(),
    };
    phase.at(x_tangential, xi_tangential)
}

impl RegularizedPhase {
    /// The same phase frozen at another base point.
    pub fn at(&self, x_tangential: &[f64], xi_tangential: &[f64]) -> Result<Self> {
        let nt = self.space.tangential();
        if x_tangential.len() != nt || xi_tangential.len() != nt {
            return Err(Error::Validation(format!("base point needs {nt} tangential coordinates")));
        }
        Ok(RegularizedPhase { x_tangential: x_tangential.to_vec(), xi_tangential: xi_tangential.to_vec(), ..self.clone() })
    }

    /// `<xi'>`.
    pub fn scale(&self) -> f64 {
        bracket(self.xi_tangential.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    fn base_point(&self) -> Vec<f64> {
        let sp = self.space;
        let mut p = sp.zero_point();
        for i in 0..sp.tangential() {
            p[sp.x(i).0 as usize] = self.x_tangential[i];
            p[sp.k(i).0 as usize] = self.xi_tangential[i];
        }
        p[sp.lam().0 as usize] = self.scale();
        p
    }

    /// All derivatives `d^a_t d^alpha_tau *Phi(t, tau)` with `a, alpha <= 3`,
    /// indexed by [`slot`].
    pub fn derivatives(&self, t: f64, tau: f64) -> Result<Vec<f64>> {
        let mut p = self.base_point();
        p[self.space.t().0 as usize] = t;
        p[self.space.tau().0 as usize] = tau;
        let mut out = vec![0.0; self.tape.n_outputs()];
        self.tape.eval_all(&p, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    pub fn value(&self, t: f64, tau: f64) -> Result<f64> {
        Ok(self.derivatives(t, tau)?[0])
    }

    /// Derivative table on every grid point, row-major in `(t, tau)`.
    pub fn sweep(&self, grid: &SgGrid) -> Result<Vec<Vec<f64>>> {
        let base = self.base_point();
        let (ts, taus) = (self.space.t().0 as usize, self.space.tau().0 as usize);
        let mut scratch = Vec::new();
        let mut rows = Vec::with_capacity(grid.len());
        let mut p = base;
        for &t in &grid.t {
            for &tau in &grid.tau {
                p[ts] = t;
                p[taus] = tau;
                let mut out = vec![0.0; self.tape.n_outputs()];
                self.tape.eval_all(&p, &mut scratch, &mut out)?;
                rows.push(out);
            }
        }
        Ok(rows)
    }
}
