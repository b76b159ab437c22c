use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr};
use crate::numeric::linspace;
use crate::oscint::{line_space, AnalyticTerm, SchwartzFn};

/// The unitary dilation `(kappa_lam u)(t) = lam^{1/2} u(lam t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAction {
    pub scale: f64,
}

impl GroupAction {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Validation(format!("group action needs a positive scale, got {scale}")));
        }
        Ok(GroupAction { scale })
    }

    /// `kappa_lam o kappa_mu = kappa_{lam mu}`.
    pub fn compose(&self, other: &GroupAction) -> GroupAction {
        GroupAction { scale: self.scale * other.scale }
    }

    pub fn inverse(&self) -> GroupAction {
        GroupAction { scale: 1.0 / self.scale }
    }

    /// Applies the action to sampled values: `lam^{1/2} f(lam t)`.
    pub fn apply_fn<F: Fn(f64) -> f64>(&self, f: F, t: f64) -> f64 {
        self.scale.sqrt() * f(self.scale * t)
    }
}

/// `kappa_lam u` in closed form. The analytic transform, if any, follows
/// `F(kappa_lam u)(xi) = lam^{-1/2} u^(xi / lam)`.
pub fn apply_group_action(u: &SchwartzFn, g: &GroupAction) -> SchwartzFn {
    let lam = g.scale;
    if lam == 1.0 {
        return u.clone();
    }
    let t = line_space().t();
    let expr = u.expr.subst(&[(t, Expr::var(t).scale(lam))]).scale(lam.sqrt());
    let analytic =
        u.analytic.iter().map(|a| AnalyticTerm { coeff: a.coeff * lam.sqrt(), dilation: a.dilation * lam, kind: a.kind }).collect();
    SchwartzFn { name: format!("kappa[{lam}]({})", u.name), expr, analytic }
}

/// Sampling for [`schwartz_seminorm`]: `points` equispaced nodes on
/// `|t| <= radius`, then a local refinement around the largest node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormGrid {
    pub radius: f64,
    pub points: usize,
    pub polish: bool,
}

impl Default for SeminormGrid {
    fn default() -> Self {
        SeminormGrid { radius: 40.0, points: 4001, polish: true }
    }
}

/// `sup_{|t| <= R} |t^l u^{(s)}(t)|` with `u^{(s)}` taken symbolically.
pub fn schwartz_seminorm(u: &SchwartzFn, l: u32, s: u32, grid: &SeminormGrid) -> Result<f64> {
    let d = u.derivative(s);
    d.check_budget().map_err(|e| Error::DerivativeUnavailable(format!("{}^({s}): {e}", u.name)))?;
    let tape = Compiled::new(&d);
    let sp = line_space();
    let mut p = sp.zero_point();
    let mut scratch = Vec::new();
    let slot = sp.t().0 as usize;
    let mut weight = |t: f64| -> Result<f64> {
        p[slot] = t;
        let mut out = [0.0];
        tape.eval_all(&p, &mut scratch, &mut out)?;
        Ok((t.powi(l as i32) * out[0]).abs())
    };
    let nodes = linspace(-grid.radius, grid.radius, grid.points);
    let mut best = (0.0, 0usize);
    for (i, &t) in nodes.iter().enumerate() {
        let w = weight(t)?;
        if w > best.0 {
            best = (w, i);
        }
    }
    if !grid.polish || grid.points < 3 {
        return Ok(best.0);
    }
    let h = nodes[1] - nodes[0];
    let (mut a, mut b) = ((nodes[best.1] - h).max(-grid.radius), (nodes[best.1] + h).min(grid.radius));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let (c, d) = (b - inv_phi * (b - a), a + inv_phi * (b - a));
        if weight(c)? >= weight(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best.0.max(weight(0.5 * (a + b))?))
}

/// Cumulative seminorm `max_{l' <= l, s' <= s} p_{l', s'}(u)`, the
/// increasing family used in estimates.
pub fn seminorm_system(u: &SchwartzFn, l: u32, s: u32, grid: &SeminormGrid) -> Result<f64> {
    let mut best: f64 = 0.0;
    for li in 0..=l {
        for si in 0..=s {
            best = best.max(schwartz_seminorm(u, li, si, grid)?);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l2(u: &SchwartzFn) -> f64 {
        let ts = linspace(-60.0, 60.0, 120_001);
        let h = ts[1] - ts[0];
        (ts.iter().map(|t| u.value(*t).unwrap().powi(2)).sum::<f64>() * h).sqrt()
    }

    #[test]
    fn action_examples() {
        let h0 = SchwartzFn::hermite(0);
        let same = apply_group_action(&h0, &GroupAction::new(1.0).unwrap());
        assert_eq!(same.value(0.7).unwrap(), h0.value(0.7).unwrap());
        let k4 = apply_group_action(&h0, &GroupAction::new(4.0).unwrap());
        assert_eq!(k4.value(0.0).unwrap(), 2.0);
        let h1 = SchwartzFn::hermite(1);
        let n = l2(&h1);
        for lam in [0.125, 8.0] {
            let v = apply_group_action(&h1, &GroupAction::new(lam).unwrap());
            assert!((l2(&v) - n).abs() <= 1e-9, "{lam}");
        }
        assert!(GroupAction::new(0.0).is_err());
    }

    #[test]
    fn transform_follows_the_action() {
        let u = SchwartzFn::hermite(3);
        let v = apply_group_action(&u, &GroupAction::new(2.5).unwrap());
        let tol = crate::oscint::Tolerance::default();
        for xi in [-4.0, -0.3, 1.0, 6.0] {
            assert!((v.analytic_ft(xi).unwrap() - v.numeric_ft(xi, &tol).unwrap()).norm() <= 1e-9);
        }
    }

    #[test]
    fn seminorm_examples() {
        let g = SeminormGrid::default();
        let h0 = SchwartzFn::hermite(0);
        assert!((schwartz_seminorm(&h0, 0, 0, &g).unwrap() - 1.0).abs() <= 1e-12);
        assert!((schwartz_seminorm(&h0, 1, 0, &g).unwrap() - (-0.5f64).exp()).abs() <= 1e-10);
        let h2 = SchwartzFn::hermite(2);
        let fine = SeminormGrid { points: 400_001, polish: false, ..g };
        let oracle = schwartz_seminorm(&h2, 2, 1, &fine).unwrap();
        assert!((schwartz_seminorm(&h2, 2, 1, &g).unwrap() - oracle).abs() <= 1e-6);
    }

    #[test]
    fn seminorm_system_is_monotone() {
        let g = SeminormGrid { points: 801, ..SeminormGrid::default() };
        for u in SchwartzFn::catalog() {
            for l in 0..2 {
                for s in 0..2 {
                    let base = seminorm_system(&u, l, s, &g).unwrap();
                    assert!(seminorm_system(&u, l + 1, s, &g).unwrap() >= base);
                    assert!(seminorm_system(&u, l, s + 1, &g).unwrap() >= base);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn group_law(le in -3.0f64..3.0, me in -3.0f64..3.0, t in -5.0f64..5.0, j in 0u32..5) {
            let (lam, mu) = (GroupAction::new(10f64.powf(le)).unwrap(), GroupAction::new(10f64.powf(me)).unwrap());
            let u = SchwartzFn::hermite(j);
            let nested = apply_group_action(&apply_group_action(&u, &mu), &lam);
            let direct = apply_group_action(&u, &lam.compose(&mu));
            let (a, b) = (nested.value(t).unwrap(), direct.value(t).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            let back = apply_group_action(&apply_group_action(&u, &lam), &lam.inverse());
            prop_assert!((back.value(t).unwrap() - u.value(t).unwrap()).abs() <= 1e-12);
        }
    }
}
