use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::family::integrand_derivative;
use crate::error::Result;
use crate::expr::{Compiled, Expr};
use crate::numeric::linspace;
use crate::oscint::{integrate_panels, NormalOperatorSpec, SchwartzFn, Tolerance};
use crate::symbolcls::{check_bs_membership, BsGrid, BsOrders, BsReport, SymbolFn};

/// Allowed excess of the BS exponents of the differentiated amplitudes.
pub const LEMMA_SLACK: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransposeReport {
    /// `<A_n u, v>`, integrating in `xi_n` first.
    pub forward: Complex64,
    /// `<u, A_n^t v>`, integrating in `x_n` first.
    pub transposed: Complex64,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

struct Kernel<'a> {
    spec: &'a NormalOperatorSpec,
    tape: Compiled,
    p: Vec<f64>,
    scratch: Vec<f64>,
}

impl Kernel<'_> {
    /// `e^{i phi(x_n, xi_n)} a(x_n, xi_n)`.
    fn eval(&mut self, xn: f64, xi: f64) -> Complex64 {
        let sp = self.spec.psi.space;
        self.p[sp.xn().0 as usize] = xn;
        self.p[sp.kn().0 as usize] = xi;
        let mut out = [0.0; 3];
        self.tape.eval_raw(&self.p, &mut self.scratch, &mut out);
        Complex64::from_polar(1.0, out[0]) * Complex64::new(out[1], out[2])
    }
}

fn kernel(spec: &NormalOperatorSpec) -> Kernel<'_> {
    let sp = spec.psi.space;
    let im = spec.amplitude.im.clone().unwrap_or_else(Expr::zero);
    let mut p = sp.zero_point();
    for i in 0..sp.tangential() {
        p[sp.x(i).0 as usize] = spec.x_tangential[i];
        p[sp.k(i).0 as usize] = spec.xi_tangential[i];
    }
    Kernel { spec, tape: Compiled::many(&[spec.psi.phi.clone(), spec.amplitude.re.clone(), im]), p, scratch: Vec::new() }
}

fn ft_radius(u: &SchwartzFn) -> f64 {
    let xs = linspace(0.0, 60.0, 241);
    let env: Vec<f64> = xs.iter().map(|&x| u.analytic_ft(x).unwrap_or_default().norm().max(u.analytic_ft(-x).unwrap_or_default().norm())).collect();
    let top = env.iter().cloned().fold(0.0, f64::max);
    xs.iter().zip(&env).rev().find(|(_, v)| **v > 1e-17 * top).map(|(x, _)| x + 0.5).unwrap_or(1.0)
}

/// Compares `int (A_n u) v dx_n` with `int u^(xi) W(xi) dxi / (2 pi)`,
/// `W(xi) = int e^{i phi(x_n, xi)} a(x_n, xi) v(x_n) dx_n` being the
/// transposed quantization applied to `v` and paired with `u`.
pub fn transpose_check(spec: &NormalOperatorSpec, u: &SchwartzFn, v: &SchwartzFn, tol: f64) -> Result<TransposeReport> {
    let quad = Tolerance { abs: 1e-13, rel: 1e-12, max_evals: 4_000_000 };
    let rx = v.support_radius(1e-18)?;
    let rxi = ft_radius(u);
    let uhat = |xi: f64| u.analytic_ft(xi).map(Ok).unwrap_or_else(|| u.numeric_ft(xi, &quad));
    let vtape = v.expr.compile();
    let tslot = crate::oscint::line_space().t().0 as usize;
    let vval = |x: f64, scratch: &mut Vec<f64>| {
        let mut p = crate::oscint::line_space().zero_point();
        p[tslot] = x;
        let mut out = [0.0];
        vtape.eval_raw(&p, scratch, &mut out);
        out[0]
    };
    let xi_breaks = linspace(-rxi, rxi, 65);
    let x_breaks = linspace(-rx, rx, 65);

    let mut k = kernel(spec);
    let mut err = None;
    let mut vs = Vec::new();
    let mut outer = |x: f64| {
        let mut inner = |xi: f64| k.eval(x, xi) * uhat(xi).unwrap_or_default();
        match integrate_panels(&mut inner, &xi_breaks, &quad) {
            Ok(r) => r.value * vval(x, &mut vs) / (2.0 * PI),
            Err(e) => {
                err = Some(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let forward = integrate_panels(&mut outer, &x_breaks, &quad)?.value;
    if let Some(e) = err.take() {
        return Err(e);
    }

    let mut k = kernel(spec);
    let mut outer = |xi: f64| {
        let mut inner = |x: f64| k.eval(x, xi) * vval(x, &mut vs);
        match integrate_panels(&mut inner, &x_breaks, &quad) {
            Ok(r) => r.value * uhat(xi).unwrap_or_default() / (2.0 * PI),
            Err(e) => {
                err = Some(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let transposed = integrate_panels(&mut outer, &xi_breaks, &quad)?.value;
    if let Some(e) = err {
        return Err(e);
    }
    let residual = (forward - transposed).norm();
    Ok(TransposeReport { forward, transposed, residual, tol, pass: residual <= tol })
}

/// The amplitude `e^{-i phi} d^alpha_{x'} d^beta_{xi'} (e^{i phi} a)` produced by
/// differentiating the integrand under the integral sign, declared of order
/// `m - |beta|`.
pub fn lemma_amplitude(spec: &NormalOperatorSpec, alpha: &[u32], beta: &[u32]) -> Result<SymbolFn> {
    let sp = spec.psi.space;
    let phi = &spec.psi.phi;
    let mut amp = (spec.amplitude.re.clone(), spec.amplitude.im.clone().unwrap_or_else(Expr::zero));
    for i in 0..sp.tangential() {
        for _ in 0..alpha.get(i).copied().unwrap_or(0) {
            amp = integrand_derivative(phi, &amp, sp.x(i));
        }
        for _ in 0..beta.get(i).copied().unwrap_or(0) {
            amp = integrand_derivative(phi, &amp, sp.k(i));
        }
    }
    amp.0.check_budget()?;
    amp.1.check_budget()?;
    let order = spec.amplitude.order - beta.iter().sum::<u32>() as f64;
    Ok(SymbolFn::complex(sp, amp.0, amp.1, order))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// One `xi'`-derivative, checked in `BS^{m-1}` with normal order `m`.
    pub xi_derivative: BsReport,
    /// One `x'`-derivative, checked in `BS^m` with normal order `m + 1`.
    pub x_derivative: BsReport,
    pub pass: bool,
}

/// BS membership of the amplitudes from one `xi'`- and one
/// `x'`-derivative of the integrand (first tangential axis).
pub fn check_lemma_structure(spec: &NormalOperatorSpec, grid: &BsGrid, orders: BsOrders) -> Result<LemmaReport> {
    let nt = spec.psi.space.tangential();
    let unit: Vec<u32> = (0..nt).map(|i| u32::from(i == 0)).collect();
    let none = vec![0; nt];
    let m = spec.amplitude.order;
    let a_xi = lemma_amplitude(spec, &none, &unit)?;
    let a_x = lemma_amplitude(spec, &unit, &none)?;
    let xi_derivative = check_bs_membership(&a_xi, m - 1.0, m, grid, orders, LEMMA_SLACK)?;
    let x_derivative = check_bs_membership(&a_x, m, m + 1.0, grid, orders, LEMMA_SLACK)?;
    let pass = xi_derivative.pass && x_derivative.pass;
    Ok(LemmaReport { xi_derivative, x_derivative, pass })
}
