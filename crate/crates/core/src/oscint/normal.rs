use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functions::{half_line_ft, HalfLineFn, SchwartzFn};
use super::quad::{integrate_panels, Tolerance};
use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr};
use crate::genphase::GeneratingPhase;
use crate::numeric::{bracket, linspace};
use crate::sgphase::Cutoff;
use crate::symbolcls::SymbolFn;

/// Largest decay order of `a u^` that is integrated without a cutoff.
pub const DIRECT_DECAY: f64 = -1.5;
/// Decay order assigned to transforms of extensions by zero.
pub const HALF_LINE_DECAY: f64 = -1.0;
/// Upper limit on any truncation or cutoff radius.
pub const MAX_RADIUS: f64 = 65_536.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Hard truncation at a radius where the tail is below tolerance.
    Direct,
    /// Smooth cutoff `omega(xi / R)` at `R, 2R, 4R, ...` followed by
    /// extrapolation in `R`.
    CutoffExtrapolate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Forced mode; chosen from the decay order when absent.
    pub mode: Option<Mode>,
    pub tol: Tolerance,
    /// Base radius of the cutoff ladder.
    pub radius: f64,
    pub levels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { mode: None, tol: Tolerance::default(), radius: 64.0, levels: 3 }
    }
}

impl QuadratureSpec {
    pub fn halved(&self) -> Self {
        QuadratureSpec { tol: self.tol.halved(), ..*self }
    }

    pub fn select(&self, decay_order: f64) -> Result<Mode> {
        if decay_order >= 0.0 {
            return Err(Error::DecayClassUnsupported(format!("integrand decay order {decay_order} is not negative")));
        }
        match self.mode {
            Some(Mode::Direct) if decay_order > DIRECT_DECAY => {
                Err(Error::DecayClassUnsupported(format!("direct quadrature needs decay order <= {DIRECT_DECAY}, got {decay_order}")))
            }
            Some(m) => Ok(m),
            None if decay_order <= DIRECT_DECAY => Ok(Mode::Direct),
            None => Ok(Mode::CutoffExtrapolate),
        }
    }
}

/// The normal-direction operator at a frozen tangential base point.
#[derive(Clone, Debug)]
pub struct NormalOperatorSpec {
    pub psi: GeneratingPhase,
    pub amplitude: SymbolFn,
    pub x_tangential: Vec<f64>,
    pub xi_tangential: Vec<f64>,
    pub quad: QuadratureSpec,
}

impl NormalOperatorSpec {
    pub fn new(psi: GeneratingPhase, amplitude: SymbolFn, x_tangential: &[f64], xi_tangential: &[f64]) -> Result<Self> {
        let nt = psi.space.tangential();
        if x_tangential.len() != nt || xi_tangential.len() != nt {
            return Err(Error::Validation(format!("base point needs {nt} tangential coordinates")));
        }
        if amplitude.space != psi.space {
            return Err(Error::Validation("amplitude and phase live in different spaces".into()));
        }
        Ok(NormalOperatorSpec {
            psi,
            amplitude,
            x_tangential: x_tangential.to_vec(),
            xi_tangential: xi_tangential.to_vec(),
            quad: QuadratureSpec::default(),
        })
    }

    pub fn with_quad(mut self, quad: QuadratureSpec) -> Self {
        self.quad = quad;
        self
    }

    /// Tape with outputs `phi, Re a, Im a`.
    fn tape(&self) -> Compiled {
        let im = self.amplitude.im.clone().unwrap_or_else(Expr::zero);
        Compiled::many(&[self.psi.phi.clone(), self.amplitude.re.clone(), im])
    }

    fn base_point(&self) -> Vec<f64> {
        let sp = self.psi.space;
        let mut p = sp.zero_point();
        for i in 0..sp.tangential() {
            p[sp.x(i).0 as usize] = self.x_tangential[i];
            p[sp.k(i).0 as usize] = self.xi_tangential[i];
        }
        p
    }
}

/// Values of an operator applied to a test function on an `x_n` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub mode: Mode,
    pub decay_order: f64,
    pub x_normal: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Error estimate per point.
    pub errors: Vec<f64>,
    /// Radius used per point (the largest one in cutoff mode).
    pub radii: Vec<f64>,
    pub evals: usize,
}

impl SampledFunction {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest `|value - f(x_n)|`.
    pub fn max_deviation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.x_normal.iter().zip(&self.values).map(|(x, v)| (v - f(*x)).norm()).fold(0.0, f64::max)
    }
}

enum Input<'a> {
    Line(&'a SchwartzFn),
    HalfLine(&'a HalfLineFn),
}

impl Input<'_> {
    fn transform(&self, xi: f64, tol: &Tolerance) -> Result<Complex64> {
        match self {
            Input::Line(u) => u.analytic_ft(xi).map(Ok).unwrap_or_else(|| u.numeric_ft(xi, tol)),
            Input::HalfLine(u) => match u.analytic_ft(xi) {
                Some(v) => Ok(v),
                None => Ok(half_line_ft(u, &[xi], tol)?[0]),
            },
        }
    }

    fn decay(&self) -> f64 {
        match self {
            Input::Line(_) => f64::NEG_INFINITY,
            Input::HalfLine(_) => HALF_LINE_DECAY,
        }
    }
}

/// `(A_n u)(x_n) = int e^{i (psi - psi_boundary)} a u^(xi_n) dxi_n / (2 pi)`
/// on the given grid.
pub fn apply_normal_op(spec: &NormalOperatorSpec, u: &SchwartzFn, x_normal: &[f64]) -> Result<SampledFunction> {
    apply(spec, &Input::Line(u), x_normal)
}

/// `r^+` of the operator applied to the extension by zero of `u`; every
/// grid point must be positive.
pub fn apply_truncated_op(spec: &NormalOperatorSpec, u: &HalfLineFn, x_normal: &[f64]) -> Result<SampledFunction> {
    if let Some(x) = x_normal.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Validation(format!("truncated operator is evaluated on x_n > 0 only, got {x}")));
    }
    apply(spec, &Input::HalfLine(u), x_normal)
}

struct PointResult {
    value: Complex64,
    error: f64,
    radius: f64,
    evals: usize,
}

fn apply(spec: &NormalOperatorSpec, u: &Input, x_normal: &[f64]) -> Result<SampledFunction> {
    let decay_order = spec.amplitude.order + u.decay();
    let mode = spec.quad.select(decay_order)?;
    let tape = spec.tape();
    let base = spec.base_point();
    let results: Vec<PointResult> = x_normal
        .par_iter()
        .map(|&xn| {
            let mut point = Integrand { spec, tape: &tape, input: u, p: base.clone(), scratch: Vec::new() };
            point.p[spec.psi.space.xn().0 as usize] = xn;
            match mode {
                Mode::Direct => point.direct(xn, decay_order),
                Mode::CutoffExtrapolate => point.extrapolated(xn),
            }
        })
        .collect::<Result<_>>()?;
    Ok(SampledFunction {
        mode,
        decay_order,
        x_normal: x_normal.to_vec(),
        values: results.iter().map(|r| r.value).collect(),
        errors: results.iter().map(|r| r.error).collect(),
        radii: results.iter().map(|r| r.radius).collect(),
        evals: results.iter().map(|r| r.evals).sum(),
    })
}

struct Integrand<'a> {
    spec: &'a NormalOperatorSpec,
    tape: &'a Compiled,
    input: &'a Input<'a>,
    p: Vec<f64>,
    scratch: Vec<f64>,
}

impl Integrand<'_> {
    /// `e^{i phi} a u^(xi) / (2 pi)` without cutoff.
    fn eval(&mut self, xi: f64) -> Complex64 {
        self.p[self.spec.psi.space.kn().0 as usize] = xi;
        let mut out = [0.0; 3];
        self.tape.eval_raw(&self.p, &mut self.scratch, &mut out);
        let uhat = self.input.transform(xi, &self.spec.quad.tol).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        Complex64::from_polar(1.0, out[0]) * Complex64::new(out[1], out[2]) * uhat / (2.0 * PI)
    }

    fn integrate(&mut self, radius: f64, xn: f64, cutoff: bool) -> Result<(Complex64, f64, usize)> {
        let n = 16usize.max((radius * (1.0 + xn.abs()) / PI).ceil() as usize);
        let mut breaks = linspace(-radius, radius, n + 1);
        if cutoff {
            breaks.extend([-radius / 2.0, radius / 2.0]);
            breaks.sort_by(f64::total_cmp);
        }
        let omega = Cutoff::new(1.0);
        let tol = self.spec.quad.tol;
        let mut f = |xi: f64| {
            let w = if cutoff { omega.value(xi / radius) } else { 1.0 };
            if w == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                self.eval(xi) * w
            }
        };
        let r = integrate_panels(&mut f, &breaks, &tol)?;
        Ok((r.value, r.error, r.evals))
    }

    /// Envelope `|a u^|` at `xi`, used to pick truncation radii.
    fn envelope(&mut self, xi: f64) -> f64 {
        self.eval(xi).norm() * 2.0 * PI
    }

    fn direct(&mut self, xn: f64, decay_order: f64) -> Result<PointResult> {
        let target = self.spec.quad.tol.abs;
        let (radius, tail) = if decay_order.is_finite() {
            // Algebraic decay: bound the tail by C |xi|^d with C fitted at 64.
            let d = decay_order;
            let r0 = 64.0f64;
            let c = self.envelope(r0).max(self.envelope(-r0)) / bracket(r0).powf(d);
            let tail = |r: f64| c * r.powf(d + 1.0) / (PI * (d + 1.0).abs());
            let mut r = r0;
            while tail(r) > target && r < MAX_RADIUS {
                r *= 2.0;
            }
            (r, tail(r))
        } else {
            let mut top: f64 = 0.0;
            let mut env = Vec::new();
            for xi in linspace(0.0, 200.0, 401) {
                let v = self.envelope(xi).max(self.envelope(-xi));
                top = top.max(v);
                env.push((xi, v));
            }
            let r = env.iter().rev().find(|(_, v)| *v > 1e-17 * top.max(1e-300)).map(|(x, _)| x + 1.0).unwrap_or(1.0);
            (r.max(4.0), 0.0)
        };
        let (value, error, evals) = self.integrate(radius, xn, false)?;
        Ok(PointResult { value, error: error + tail, radius, evals })
    }

    fn extrapolated(&mut self, xn: f64) -> Result<PointResult> {
        let q = self.spec.quad;
        let base = (q.radius * 1f64.max(1.0 / xn.abs())).min(MAX_RADIUS / 2f64.powi(q.levels as i32 - 1));
        let mut vals = Vec::new();
        let mut qerr: f64 = 0.0;
        let mut evals = 0;
        let mut radius = base;
        for level in 0..q.levels.max(2) {
            radius = base * 2f64.powi(level as i32);
            let (v, e, n) = self.integrate(radius, xn, true)?;
            vals.push(v);
            qerr = qerr.max(e);
            evals += n;
        }
        let n = vals.len();
        let d2 = vals[n - 1] - vals[n - 2];
        let d1 = if n >= 3 { vals[n - 2] - vals[n - 3] } else { Complex64::new(0.0, 0.0) };
        let rho = if d1.norm() > 0.0 { d2.norm() / d1.norm() } else { 0.0 };
        let value = if rho > 0.0 && rho < 0.5 { vals[n - 1] + d2 * (rho / (1.0 - rho)) } else { vals[n - 1] };
        Ok(PointResult { value, error: d2.norm() + qerr, radius, evals })
    }
}
