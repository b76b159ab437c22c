use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Space};

/// Smooth even cutoff `omega` built from the bump primitive `F(s) = exp(-1/s)`:
///
/// `omega(t) = 1 - F(t^2 - 1/4) / (F(1 - t^2) + F(t^2 - 1/4))`,
///
/// identically `1` for `|t| <= 1/2`, identically `0` for `|t| >= 1`,
/// non-increasing on the positive half-line. `omega_k(t) = omega(t / k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub k: f64,
}

impl Cutoff {
    pub fn new(k: f64) -> Self {
        assert!(k > 0.0, "cutoff scale must be positive");
        Cutoff { k }
    }

    /// The unscaled profile `omega(arg)`.
    pub fn profile(arg: &Expr) -> Expr {
        let sq = arg.powi(2);
        let inner = Expr::one().sub(&sq).bump();
        let outer = sq.sub(&Expr::constant(0.25)).bump();
        // Written as 1 - outer/(inner + outer) so that every derivative is an
        // exact zero on the plateau and outside the support.
        Expr::one().sub(&outer.div(&inner.add(&outer)))
    }

    /// `omega_k(arg)`.
    pub fn expr(&self, arg: &Expr) -> Expr {
        Cutoff::profile(&arg.scale(1.0 / self.k))
    }

    /// `omega_k(t)` evaluated directly.
    pub fn value(&self, t: f64) -> f64 {
        let sp = Space::new(1);
        let e = self.expr(&Expr::var(sp.t()));
        let mut p = sp.zero_point();
        p[sp.t().0 as usize] = t;
        e.eval(&p).expect("cutoff is defined everywhere")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::linspace;

    fn derivs(order: u32) -> (Space, Vec<Expr>) {
        let sp = Space::new(1);
        let mut e = Cutoff::profile(&Expr::var(sp.t()));
        let mut out = vec![e.clone()];
        for _ in 0..order {
            e = e.diff(sp.t());
            out.push(e.clone());
        }
        (sp, out)
    }

    fn at(sp: &Space, t: f64) -> Vec<f64> {
        let mut p = sp.zero_point();
        p[sp.t().0 as usize] = t;
        p
    }

    #[test]
    fn plateau_support_and_evenness() {
        let c = Cutoff::new(1.0);
        for t in linspace(-0.5, 0.5, 41) {
            assert_eq!(c.value(t), 1.0);
        }
        for t in [1.0, 1.2, 5.0, -1.0, -3.0] {
            assert_eq!(c.value(t), 0.0);
        }
        for t in linspace(0.0, 1.5, 77) {
            assert_eq!(c.value(t), c.value(-t));
        }
        assert_eq!(Cutoff::new(0.25).value(0.25), 0.0);
        assert!(Cutoff::new(0.25).value(0.2) > 0.0);
        assert_eq!(Cutoff::new(0.25).value(0.125), 1.0);
    }

    #[test]
    fn non_increasing_on_positive_axis() {
        let c = Cutoff::new(1.0);
        let ts = linspace(0.0, 1.2, 1000);
        let vals: Vec<f64> = ts.iter().map(|&t| c.value(t)).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn derivatives_vanish_at_transition_endpoints() {
        let (sp, ds) = derivs(6);
        for d in &ds[1..] {
            for t in [0.5 - 1e-3, 0.5, 1.0 - 1e-3, 1.0] {
                let v = d.eval(&at(&sp, t)).unwrap();
                assert!(v.abs() <= 1e-8, "{t}: {v}");
            }
        }
    }

    #[test]
    fn derivative_times_argument_is_nonpositive() {
        let (sp, ds) = derivs(1);
        for s in linspace(0.0, 1.5, 1000) {
            let d = ds[1].eval(&at(&sp, s)).unwrap();
            assert!(d * s <= 1e-12, "{s}: {d}");
        }
    }
}
