use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::quad::{integrate_panels, Tolerance};
use crate::error::{Error, Result};
use crate::expr::{parse, Compiled, Expr, Space};
use crate::numeric::{geometric, linspace, loglog_fit, PowerFit};

/// The one-variable space used for test functions (variable `t`).
pub fn line_space() -> Space {
    Space::new(1)
}

/// Closed-form Fourier transforms known for catalog functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analytic {
    /// `h_j -> sqrt(2 pi) (-i)^j h_j`.
    Hermite(u32),
    /// `e^{-c t}` on the half-line `-> 1 / (c + i xi)`.
    HalfLineExp(f64),
}

/// `coeff * f(dilation * t)` where `f` has the closed-form transform `kind`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTerm {
    pub coeff: f64,
    pub dilation: f64,
    pub kind: Analytic,
}

impl AnalyticTerm {
    pub fn new(kind: Analytic) -> Self {
        AnalyticTerm { coeff: 1.0, dilation: 1.0, kind }
    }
}

/// Derivative bounds `sup_{|t| <= radius} |t^l u^{(s)}(t)|` for `l, s <= 6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCertificate {
    pub radius: f64,
    /// `constants[l][s]`.
    pub constants: Vec<Vec<f64>>,
    /// Largest `|t^l u^{(s)}(t)|` at `|t| = radius`, relative to the bound.
    pub edge_ratio: f64,
    pub pass: bool,
}

pub const CERT_ORDER: usize = 6;

/// A Schwartz test function on the line, given in closed form in `t`.
#[derive(Clone, Debug)]
pub struct SchwartzFn {
    pub name: String,
    pub expr: Expr,
    /// Closed-form transform as a linear combination; empty when unknown.
    pub analytic: Vec<AnalyticTerm>,
}

/// Physicists' Hermite polynomial `H_j(t)`.
pub fn hermite_poly(j: u32, t: &Expr) -> Expr {
    let (mut prev, mut cur) = (Expr::one(), t.scale(2.0));
    if j == 0 {
        return prev;
    }
    for i in 1..j {
        let next = t.mul(&cur).scale(2.0).sub(&prev.scale(2.0 * i as f64));
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_j(x)` evaluated directly.
pub fn hermite_value(j: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if j == 0 {
        return prev;
    }
    for i in 1..j {
        let next = 2.0 * x * cur - 2.0 * i as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

impl SchwartzFn {
    pub fn new(name: &str, expr: Expr) -> Self {
        SchwartzFn { name: name.to_string(), expr, analytic: Vec::new() }
    }

    pub fn parse(name: &str, src: &str) -> Result<Self> {
        Ok(SchwartzFn::new(name, parse(&line_space(), src)?))
    }

    /// `h_j(t) = H_j(t) e^{-t^2/2}`.
    pub fn hermite(j: u32) -> Self {
        let t = Expr::var(line_space().t());
        let e = hermite_poly(j, &t).mul(&t.powi(2).scale(-0.5).exp());
        SchwartzFn { name: format!("h{j}"), expr: e, analytic: vec![AnalyticTerm::new(Analytic::Hermite(j))] }
    }

    /// `h_0 .. h_4`.
    pub fn catalog() -> Vec<SchwartzFn> {
        (0..5).map(SchwartzFn::hermite).collect()
    }

    pub fn by_name(name: &str) -> Result<SchwartzFn> {
        name.strip_prefix('h')
            .and_then(|j| j.parse::<u32>().ok())
            .map(SchwartzFn::hermite)
            .ok_or_else(|| Error::Validation(format!("unknown test function `{name}`")))
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        eval_line(&self.expr, t)
    }

    /// `u^{(s)}` in closed form.
    pub fn derivative(&self, s: u32) -> Expr {
        let v = line_space().t();
        (0..s).fold(self.expr.clone(), |e, _| e.diff(v))
    }

    /// Tabulates `sup |t^l u^{(s)}|` on `|t| <= 40` (4001 points).
    pub fn certificate(&self) -> Result<DecayCertificate> {
        let radius = 40.0;
        let derivs: Vec<Expr> = (0..=CERT_ORDER as u32).map(|s| self.derivative(s)).collect();
        let tape = Compiled::many(&derivs);
        let sp = line_space();
        let mut p = sp.zero_point();
        let mut out = vec![0.0; derivs.len()];
        let mut scratch = Vec::new();
        let mut c = vec![vec![0.0f64; CERT_ORDER + 1]; CERT_ORDER + 1];
        let mut edge: f64 = 0.0;
        for t in linspace(-radius, radius, 4001) {
            p[sp.t().0 as usize] = t;
            tape.eval_all(&p, &mut scratch, &mut out)?;
            for (l, row) in c.iter_mut().enumerate() {
                for (s, v) in row.iter_mut().enumerate() {
                    let w = (t.abs().powi(l as i32) * out[s]).abs();
                    *v = v.max(w);
                    if t.abs() == radius {
                        edge = edge.max(w);
                    }
                }
            }
        }
        let top = c.iter().flatten().cloned().fold(0.0, f64::max);
        let edge_ratio = if top > 0.0 { edge / top } else { 0.0 };
        let pass = c.iter().flatten().all(|v| v.is_finite()) && edge_ratio <= 1e-12;
        Ok(DecayCertificate { radius, constants: c, edge_ratio, pass })
    }

    /// Smallest `R` (step 0.5, at most 40) beyond which `(1 + |t|^2) |u(t)|`
    /// stays below `eps` times its maximum.
    pub fn support_radius(&self, eps: f64) -> Result<f64> {
        let mut top: f64 = 0.0;
        let mut vals = Vec::new();
        for t in linspace(0.0, 40.0, 81) {
            let v = (1.0 + t * t) * self.value(t)?.abs().max(self.value(-t)?.abs());
            top = top.max(v);
            vals.push((t, v));
        }
        let r = vals.iter().rev().find(|(_, v)| *v > eps * top).map(|(t, _)| *t + 0.5).unwrap_or(0.5);
        Ok(r.min(40.0))
    }

    /// `sum c_i u_i`, keeping the closed-form transform when every term has one.
    pub fn combination(name: &str, terms: &[(f64, &SchwartzFn)]) -> Self {
        let expr = Expr::sum(terms.iter().map(|(c, u)| u.expr.scale(*c)).collect());
        let analytic = if terms.iter().all(|(_, u)| !u.analytic.is_empty()) {
            terms.iter().flat_map(|(c, u)| u.analytic.iter().map(move |a| AnalyticTerm { coeff: c * a.coeff, ..*a })).collect()
        } else {
            Vec::new()
        };
        SchwartzFn { name: name.to_string(), expr, analytic }
    }

    /// `u^(xi)` from the closed form, if known.
    pub fn analytic_ft(&self, xi: f64) -> Option<Complex64> {
        if self.analytic.is_empty() {
            return None;
        }
        let mut total = Complex64::new(0.0, 0.0);
        for a in &self.analytic {
            let Analytic::Hermite(j) = a.kind else { return None };
            let phase = match j % 4 {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, -1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, 1.0),
            };
            let x = xi / a.dilation;
            let c = a.coeff / a.dilation;
            total += phase * (c * (2.0 * std::f64::consts::PI).sqrt() * hermite_value(j, x) * (-x * x / 2.0).exp());
        }
        Some(total)
    }

    /// `u^(xi) = int e^{-i t xi} u(t) dt` by adaptive quadrature.
    pub fn numeric_ft(&self, xi: f64, tol: &Tolerance) -> Result<Complex64> {
        let r = self.support_radius(1e-18)?;
        let tape = self.expr.compile();
        let sp = line_space();
        let mut p = sp.zero_point();
        let mut scratch = Vec::new();
        let mut out = [0.0];
        let mut f = |t: f64| {
            p[sp.t().0 as usize] = t;
            tape.eval_raw(&p, &mut scratch, &mut out);
            Complex64::from_polar(out[0], -t * xi)
        };
        let breaks = linspace(-r, r, 2 + (r * xi.abs().max(1.0)) as usize);
        Ok(integrate_panels(&mut f, &breaks, tol)?.value)
    }
}

/// Fourier transform on a frequency grid. The closed form is used when
/// known, quadrature otherwise.
pub fn fourier_transform(u: &SchwartzFn, xi: &[f64], tol: &Tolerance) -> Result<Vec<Complex64>> {
    xi.iter().map(|&x| u.analytic_ft(x).map(Ok).unwrap_or_else(|| u.numeric_ft(x, tol))).collect()
}

fn eval_line(e: &Expr, t: f64) -> Result<f64> {
    let sp = line_space();
    let mut p = sp.zero_point();
    p[sp.t().0 as usize] = t;
    e.eval(&p)
}

/// A function on the closed half-line `t >= 0`, smooth up to `0`, to be
/// extended by zero to `t < 0`.
#[derive(Clone, Debug)]
pub struct HalfLineFn {
    pub name: String,
    pub expr: Expr,
    pub analytic: Option<Analytic>,
}

impl HalfLineFn {
    pub fn new(name: &str, expr: Expr) -> Self {
        HalfLineFn { name: name.to_string(), expr, analytic: None }
    }

    pub fn parse(name: &str, src: &str) -> Result<Self> {
        Ok(HalfLineFn::new(name, parse(&line_space(), src)?))
    }

    /// `e^{-t}`.
    pub fn exp_decay() -> Self {
        let t = Expr::var(line_space().t());
        HalfLineFn { name: "exp".into(), expr: t.neg().exp(), analytic: Some(Analytic::HalfLineExp(1.0)) }
    }

    /// `e^{-t^2/2}` restricted to the half-line.
    pub fn half_gaussian() -> Self {
        let t = Expr::var(line_space().t());
        HalfLineFn::new("half-gaussian", t.powi(2).scale(-0.5).exp())
    }

    pub fn by_name(name: &str) -> Result<HalfLineFn> {
        match name {
            "exp" => Ok(HalfLineFn::exp_decay()),
            "half-gaussian" => Ok(HalfLineFn::half_gaussian()),
            _ => Err(Error::Validation(format!("unknown half-line function `{name}`"))),
        }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        eval_line(&self.expr, t)
    }

    pub fn analytic_ft(&self, xi: f64) -> Option<Complex64> {
        match self.analytic? {
            Analytic::HalfLineExp(c) => Some(Complex64::new(1.0, 0.0) / Complex64::new(c, xi)),
            Analytic::Hermite(_) => None,
        }
    }

    fn support_radius(&self) -> Result<f64> {
        let mut top: f64 = 0.0;
        let mut vals = Vec::new();
        for t in linspace(0.0, 60.0, 121) {
            let v = (1.0 + t * t) * self.value(t)?.abs();
            top = top.max(v);
            vals.push((t, v));
        }
        let r = vals.iter().rev().find(|(_, v)| *v > 1e-18 * top).map(|(t, _)| *t + 0.5).unwrap_or(0.5);
        Ok(r.min(60.0))
    }
}

/// `F(e^+ u)(xi) = int_0^inf e^{-i t xi} u(t) dt` by adaptive quadrature.
/// Panels are graded towards `t = 0`, where `e^+ u` jumps.
pub fn half_line_ft(u: &HalfLineFn, xi: &[f64], tol: &Tolerance) -> Result<Vec<Complex64>> {
    let r = u.support_radius()?;
    let tape = u.expr.compile();
    let sp = line_space();
    xi.iter()
        .map(|&x| {
            let mut p = sp.zero_point();
            let mut scratch = Vec::new();
            let mut out = [0.0];
            let mut f = |t: f64| {
                p[sp.t().0 as usize] = t;
                tape.eval_raw(&p, &mut scratch, &mut out);
                Complex64::from_polar(out[0], -t * x)
            };
            let cycles = (r * x.abs() / std::f64::consts::PI).ceil() as usize;
            let mut breaks = vec![0.0];
            breaks.extend(geometric(1e-3, 2.0, 1.0).into_iter().filter(|b| *b < r));
            breaks.extend(linspace(1.0, r, 2 + cycles).into_iter().skip(1));
            Ok(integrate_panels(&mut f, &breaks, tol)?.value)
        })
        .collect()
}

/// Decay measurement of `|F(e^+ u)|` on `count` geometric frequencies in
/// `[lo, hi]`, both signs merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lo: f64,
    pub hi: f64,
    pub exponent: Option<f64>,
    pub fit: PowerFit,
    /// `|xi| |F(e^+ u)(xi)|` at the largest frequency.
    pub limit: f64,
}

pub fn measure_decay(u: &HalfLineFn, lo: f64, hi: f64, count: usize, tol: &Tolerance) -> Result<DecayFit> {
    let ratio = (hi / lo).powf(1.0 / (count as f64 - 1.0));
    let xs: Vec<f64> = (0..count).map(|i| lo * ratio.powi(i as i32)).collect();
    let plus = half_line_ft(u, &xs, tol)?;
    let minus = half_line_ft(u, &xs.iter().map(|x| -x).collect::<Vec<_>>(), tol)?;
    let ys: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| a.norm().max(b.norm())).collect();
    let fit = loglog_fit(&xs, &ys, 4)?;
    Ok(DecayFit { lo, hi, exponent: fit.slope, limit: xs[count - 1] * ys[count - 1], fit })
}
