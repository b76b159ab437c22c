use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr, Var};
use crate::numeric::{bracket, geometric, linspace, loglog_fit, PowerFit};
use crate::oscint::{integrate_vec, Mode, NormalOperatorSpec, SampledFunction, SchwartzFn, Tolerance};

/// Allowed excess of a fitted slope over its target.
pub const ORDER_SLACK: f64 = 0.1;

/// `e^{-i phi} d_v (e^{i phi} (re + i im))` as a pair of real expressions.
pub fn integrand_derivative(phi: &Expr, amp: &(Expr, Expr), v: Var) -> (Expr, Expr) {
    let p = phi.diff(v);
    (amp.0.diff(v).sub(&p.mul(&amp.1)), amp.1.diff(v).add(&p.mul(&amp.0)))
}

/// All multi-indices of length `dims` and order at most `order`, in
/// graded lexicographic order.
pub fn derivative_indices(dims: usize, order: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out.into_iter().flat_map(|p: Vec<u32>| (0..=order).map(move |k| [p.clone(), vec![k]].concat())).collect();
    }
    out.retain(|m| m.iter().sum::<u32>() <= order);
    out.sort_by_key(|m| (m.iter().sum::<u32>(), m.clone()));
    out
}

/// Sampling of the conjugated family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    /// `<xi'>` rungs.
    pub rungs: Vec<f64>,
    /// Rescaled normal variable.
    pub t_grid: Vec<f64>,
    /// Largest `x_n`-derivative order `s` sampled.
    pub max_s: u32,
    pub tol: Tolerance,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            rungs: geometric(1.0, 2.0, 256.0),
            t_grid: linspace(-9.0, 9.0, 61),
            max_s: 2,
            tol: Tolerance { abs: 1e-10, rel: 1e-9, max_evals: 4_000_000 },
        }
    }
}

/// Samples of `kappa_{<xi'>}^{-1} d^alpha_{x'} d^beta_{xi'} A_n kappa_{<xi'>} u`
/// and its `t`-derivatives for several `(alpha, beta)` and `u` at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySweep {
    pub rungs: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub max_s: u32,
    /// `(alpha, beta)`: `x'`- and `xi'`-derivative orders.
    pub indices: Vec<(Vec<u32>, Vec<u32>)>,
    pub functions: Vec<String>,
    pub order: f64,
    /// Flattened `[rung][index][function][s][t]`.
    pub values: Vec<Complex64>,
    /// Quadrature estimate per `(rung, t)`, in the units of `values`.
    pub errors: Vec<f64>,
    pub evals: usize,
}

impl FamilySweep {
    fn offset(&self, rung: usize, index: usize, function: usize, s: u32) -> usize {
        let ns = self.max_s as usize + 1;
        let nt = self.t_grid.len();
        (((rung * self.indices.len() + index) * self.functions.len() + function) * ns + s as usize) * nt
    }

    /// Output samples on the `t` grid.
    pub fn samples(&self, rung: usize, index: usize, function: usize, s: u32) -> &[Complex64] {
        let o = self.offset(rung, index, function, s);
        &self.values[o..o + self.t_grid.len()]
    }

    /// `sup_t |t^l d^s_t (...)|` per rung.
    pub fn seminorms(&self, index: usize, function: usize, l: u32, s: u32) -> Vec<f64> {
        (0..self.rungs.len())
            .map(|r| {
                self.samples(r, index, function, s)
                    .iter()
                    .zip(&self.t_grid)
                    .map(|(v, t)| t.abs().powi(l as i32) * v.norm())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().cloned().fold(0.0, f64::max)
    }
}

/// Fitted `<xi'>`-growth of one seminorm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub l: u32,
    pub s: u32,
    pub function: String,
    pub rungs: Vec<f64>,
    pub seminorms: Vec<f64>,
    pub fit: PowerFit,
    /// `m - |beta|`.
    pub target: f64,
    pub pass: bool,
}

impl OrderFit {
    pub fn slope(&self) -> Option<f64> {
        self.fit.slope
    }
}

/// Runs the conjugated family for every `(alpha, beta)` in `indices` and
/// every test function.
pub fn run_sweep(
    spec: &NormalOperatorSpec,
    indices: &[(Vec<u32>, Vec<u32>)],
    functions: &[SchwartzFn],
    config: &FamilyConfig,
) -> Result<FamilySweep> {
    let sp = spec.psi.space;
    let nt = sp.tangential();
    if indices.iter().any(|(a, b)| a.len() != nt || b.len() != nt) {
        return Err(Error::Validation(format!("derivative indices need {nt} entries")));
    }
    if functions.iter().any(|u| u.analytic.is_empty()) {
        return Err(Error::Validation("conjugated families need closed-form transforms".into()));
    }
    let m = spec.amplitude.order;
    let phi = &spec.psi.phi;
    let zero = Expr::zero();
    let base = (spec.amplitude.re.clone(), spec.amplitude.im.clone().unwrap_or(zero));
    let ns = config.max_s as usize + 1;
    let mut exprs = vec![phi.clone()];
    for (alpha, beta) in indices {
        let mut amp = base.clone();
        for i in 0..nt {
            for _ in 0..alpha[i] {
                amp = integrand_derivative(phi, &amp, sp.x(i));
            }
            for _ in 0..beta[i] {
                amp = integrand_derivative(phi, &amp, sp.k(i));
            }
        }
        for _ in 0..ns {
            amp.0.check_budget()?;
            amp.1.check_budget()?;
            exprs.push(amp.0.clone());
            exprs.push(amp.1.clone());
            amp = integrand_derivative(phi, &amp, sp.xn());
        }
    }
    let tape = Compiled::many(&exprs);
    let radius = spectral_radius(functions)?;
    let direction = {
        let norm = spec.xi_tangential.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            spec.xi_tangential.iter().map(|v| v / norm).collect()
        } else {
            (0..nt).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect::<Vec<f64>>()
        }
    };
    let nf = functions.len();
    let ni = indices.len();
    let dim = ni * nf * ns;
    let jobs: Vec<(usize, usize)> = (0..config.rungs.len()).flat_map(|r| (0..config.t_grid.len()).map(move |t| (r, t))).collect();
    let results: Vec<(Vec<Complex64>, f64, usize)> = jobs
        .par_iter()
        .map(|&(ri, ti)| {
            let lam = config.rungs[ri];
            let t = config.t_grid[ti];
            let rad = (lam * lam - 1.0).max(0.0).sqrt();
            let mut p = sp.zero_point();
            for i in 0..nt {
                p[sp.x(i).0 as usize] = spec.x_tangential[i];
                p[sp.k(i).0 as usize] = rad * direction[i];
            }
            p[sp.xn().0 as usize] = t / lam;
            let kn = sp.kn().0 as usize;
            // Each (alpha, beta) is normalised by its target growth lam^{m - |beta|}
            // and each s by the rescaling lam^{-1/2 - s} of the conjugation.
            let weights: Vec<f64> = indices
                .iter()
                .flat_map(|(_, beta)| {
                    let target = m - beta.iter().sum::<u32>() as f64;
                    (0..ns).map(move |s| lam.powf(-target - 1.0 - s as f64) / (2.0 * PI))
                })
                .collect();
            let mut scratch = Vec::new();
            let mut out = vec![0.0; exprs.len()];
            let mut uhat = vec![Complex64::new(0.0, 0.0); nf];
            let mut f = |xi: f64, buf: &mut [Complex64]| {
                p[kn] = xi;
                tape.eval_raw(&p, &mut scratch, &mut out);
                let e = Complex64::from_polar(1.0, out[0]);
                for (h, u) in uhat.iter_mut().zip(functions) {
                    *h = u.analytic_ft(xi / lam).unwrap_or_default();
                }
                for c in 0..ni * ns {
                    let amp = e * Complex64::new(out[1 + 2 * c], out[2 + 2 * c]) * weights[c];
                    let (idx, s) = (c / ns, c % ns);
                    for (fi, h) in uhat.iter().enumerate() {
                        buf[(idx * nf + fi) * ns + s] = amp * h;
                    }
                }
            };
            let r = radius * lam;
            let breaks = linspace(-r, r, 65);
            let q = integrate_vec(&mut f, dim, &breaks, &config.tol)?;
            Ok((q.values, q.error, q.evals))
        })
        .collect::<Result<_>>()?;

    let ntg = config.t_grid.len();
    let mut values = vec![Complex64::new(0.0, 0.0); config.rungs.len() * dim * ntg];
    let mut errors = Vec::with_capacity(jobs.len());
    let mut evals = 0;
    for (&(ri, ti), (vals, err, n)) in jobs.iter().zip(&results) {
        let lam = config.rungs[ri];
        for (k, v) in vals.iter().enumerate() {
            let idx = k / (nf * ns);
            let target = m - indices[idx].1.iter().sum::<u32>() as f64;
            values[(ri * dim + k) * ntg + ti] = v * lam.powf(target);
        }
        errors.push(*err * lam.powf(m));
        evals += n;
    }
    Ok(FamilySweep {
        rungs: config.rungs.clone(),
        t_grid: config.t_grid.clone(),
        max_s: config.max_s,
        indices: indices.to_vec(),
        functions: functions.iter().map(|u| u.name.clone()).collect(),
        order: m,
        values,
        errors,
        evals,
    })
}

/// Frequency radius beyond which every `|u^(xi)| <xi>^4` is negligible.
fn spectral_radius(functions: &[SchwartzFn]) -> Result<f64> {
    let xs = linspace(0.0, 100.0, 401);
    let mut radius: f64 = 1.0;
    for u in functions {
        let env: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let v = u.analytic_ft(x).unwrap_or_default().norm().max(u.analytic_ft(-x).unwrap_or_default().norm());
                v * bracket(x).powi(4)
            })
            .collect();
        let top = env.iter().cloned().fold(0.0, f64::max);
        let last = xs.iter().zip(&env).rev().find(|(_, v)| **v > 1e-17 * top).map(|(x, _)| *x + 0.5);
        radius = radius.max(last.unwrap_or(1.0));
    }
    if radius >= 100.0 {
        return Err(Error::DecayClassUnsupported("test function transforms do not decay within |xi| <= 100".into()));
    }
    Ok(radius)
}

/// `kappa^{-1} d^alpha_{x'} d^beta_{xi'} A_n kappa u` on `t_grid`, one
/// sampled function per rung.
pub fn conjugated_family(
    spec: &NormalOperatorSpec,
    alpha: &[u32],
    beta: &[u32],
    u: &SchwartzFn,
    t_grid: &[f64],
    rungs: &[f64],
) -> Result<Vec<SampledFunction>> {
    let config = FamilyConfig { rungs: rungs.to_vec(), t_grid: t_grid.to_vec(), max_s: 0, ..FamilyConfig::default() };
    let sweep = run_sweep(spec, &[(alpha.to_vec(), beta.to_vec())], std::slice::from_ref(u), &config)?;
    let nt = t_grid.len();
    Ok((0..rungs.len())
        .map(|r| SampledFunction {
            mode: Mode::Direct,
            decay_order: f64::NEG_INFINITY,
            x_normal: t_grid.to_vec(),
            values: sweep.samples(r, 0, 0, 0).to_vec(),
            errors: sweep.errors[r * nt..(r + 1) * nt].to_vec(),
            radii: vec![rungs[r]; nt],
            evals: 0,
        })
        .collect())
}

fn fit_row(sweep: &FamilySweep, index: usize, function: usize, l: u32, s: u32) -> Result<OrderFit> {
    let (alpha, beta) = sweep.indices[index].clone();
    let seminorms = sweep.seminorms(index, function, l, s);
    let fit = loglog_fit(&sweep.rungs, &seminorms, 6)?;
    let target = sweep.order - beta.iter().sum::<u32>() as f64;
    let pass = fit.slope.map_or(true, |k| k <= target + ORDER_SLACK);
    Ok(OrderFit { alpha, beta, l, s, function: sweep.functions[function].clone(), rungs: sweep.rungs.clone(), seminorms, fit, target, pass })
}

/// Growth fit of `p_{l,s}` of the conjugated family for one `(alpha, beta)`,
/// one fit per test function.
pub fn estimate_symbol_order(
    spec: &NormalOperatorSpec,
    alpha: &[u32],
    beta: &[u32],
    l: u32,
    s: u32,
    functions: &[SchwartzFn],
    rungs: &[f64],
) -> Result<Vec<OrderFit>> {
    if rungs.len() < 6 {
        return Err(Error::RegressionIllConditioned(format!("{} rungs, need at least 6", rungs.len())));
    }
    let config = FamilyConfig { rungs: rungs.to_vec(), max_s: s, ..FamilyConfig::default() };
    let sweep = run_sweep(spec, &[(alpha.to_vec(), beta.to_vec())], functions, &config)?;
    (0..functions.len()).map(|f| fit_row(&sweep, 0, f, l, s)).collect()
}

/// Every `(alpha, beta, l, s)` with `|alpha|, |beta|, l, s <= order` for
/// every test function, from a single sweep.
pub fn certify_symbol_orders(
    spec: &NormalOperatorSpec,
    functions: &[SchwartzFn],
    order: u32,
    config: &FamilyConfig,
) -> Result<(FamilySweep, Vec<OrderFit>)> {
    let nt = spec.psi.space.tangential();
    let multi = derivative_indices(nt, order);
    let indices: Vec<(Vec<u32>, Vec<u32>)> = multi.iter().flat_map(|a| multi.iter().map(move |b| (a.clone(), b.clone()))).collect();
    let config = FamilyConfig { max_s: order, ..config.clone() };
    let sweep = run_sweep(spec, &indices, functions, &config)?;
    let mut fits = Vec::new();
    for i in 0..indices.len() {
        for f in 0..functions.len() {
            for l in 0..=order {
                for s in 0..=order {
                    fits.push(fit_row(&sweep, i, f, l, s)?);
                }
            }
        }
    }
    Ok((sweep, fits))
}
