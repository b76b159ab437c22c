//! Symbol-class membership on grids: Hormander seminorms, the transmission
//! (symmetry) condition for homogeneous symbols, and the collar-rescaled BS
//! classes whose seminorms grow like a power of `<xi'>`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{derivative_table, Compiled, Expr, MultiIndex, Space, Var};
use crate::numeric::{bracket, geometric, linspace, loglog_fit, par_argmax, PowerFit};

/// A (possibly complex) symbol in `(x', x_n, xi', xi_n)`.
#[derive(Clone, Debug)]
pub struct SymbolFn {
    pub space: Space,
    pub re: Expr,
    pub im: Option<Expr>,
    /// Declared class order `m`.
    pub order: f64,
    /// Degree of positive homogeneity in `xi`, when declared.
    pub homogeneous_degree: Option<f64>,
}

impl SymbolFn {
    pub fn new(space: Space, expr: Expr, order: f64) -> Self {
        SymbolFn { space, re: expr, im: None, order, homogeneous_degree: None }
    }

    pub fn homogeneous(space: Space, expr: Expr, degree: f64) -> Self {
        SymbolFn { space, re: expr, im: None, order: degree, homogeneous_degree: Some(degree) }
    }

    pub fn complex(space: Space, re: Expr, im: Expr, order: f64) -> Self {
        SymbolFn { space, re, im: Some(im), order, homogeneous_degree: None }
    }

    pub(crate) fn parts(&self) -> Vec<&Expr> {
        let mut v = vec![&self.re];
        if let Some(im) = &self.im {
            v.push(im);
        }
        v
    }

    /// Checks positive homogeneity of degree `d` on `rays` deterministic
    /// rays, comparing `a(x, lam xi)` with `lam^d a(x, xi)` for
    /// `lam in {2, 10, 100}`. Returns the worst relative error.
    pub fn homogeneity_residual(&self, d: f64, rays: usize, seed: u64) -> Result<f64> {
        self.homogeneity_defect(d, rays, seed, f64::MIN_POSITIVE)
    }

    /// Like [`SymbolFn::homogeneity_residual`], but the error is divided by
    /// `lam^d max(|a(x, xi)|, floor)`. With `floor = 1` small values on the
    /// unit sphere are compared absolutely, which keeps cancellation
    /// roundoff near zeros of `a` from dominating.
    pub fn homogeneity_defect(&self, d: f64, rays: usize, seed: u64, floor: f64) -> Result<f64> {
        let sp = self.space;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let tapes: Vec<Compiled> = self.parts().into_iter().map(|e| e.compile()).collect();
        for _ in 0..rays {
            let mut p = sp.zero_point();
            for v in sp.xs() {
                p[v.0 as usize] = rand::Rng::gen_range(&mut rng, -1.0..1.0);
            }
            let dir = unit_vector(&mut rng, sp.n);
            for (v, c) in sp.ks().into_iter().zip(&dir) {
                p[v.0 as usize] = *c;
            }
            for tape in &tapes {
                let base = tape.eval(&p)?;
                for lam in [2.0f64, 10.0, 100.0] {
                    let mut q = p.clone();
                    for v in sp.ks() {
                        q[v.0 as usize] *= lam;
                    }
                    let want = lam.powf(d) * base;
                    let got = tape.eval(&q)?;
                    if got != want {
                        worst = worst.max((got - want).abs() / (lam.powf(d) * base.abs().max(floor)));
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Deterministic sampling of `(x', x_n, xi)`.
///
/// Tangential base points form a tensor grid of `x_tangential` on every
/// axis; covariables are placed on spheres `|xi| = sqrt(r^2 - 1)` for every
/// bracket rung `r = <xi>` and every sampled direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_tangential: Vec<f64>,
    pub x_normal: Vec<f64>,
    /// Values of `<xi>`; all must be `>= 1`.
    pub rungs: Vec<f64>,
    /// Number of sampled directions on each sphere.
    pub directions: usize,
    pub seed: u64,
}

impl GridSpec {
    /// 9 x 9 base points on `[-1, 1]^2`, rungs `1, 2, ..., 256`, 32 directions.
    pub fn standard() -> Self {
        GridSpec {
            x_tangential: linspace(-1.0, 1.0, 9),
            x_normal: linspace(-1.0, 1.0, 9),
            rungs: geometric(1.0, 2.0, 256.0),
            directions: 32,
            seed: 7,
        }
    }

    /// Drops the rung `<xi> = 1` (the origin `xi = 0`).
    pub fn avoid_origin(mut self) -> Self {
        self.rungs.retain(|r| *r > 1.0);
        self
    }

    /// A superset grid: linear ranges subdivided `factor` times, geometric
    /// midpoints inserted between rungs, directions multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let sub = |v: &[f64]| {
            if v.len() < 2 {
                return v.to_vec();
            }
            let mut out = Vec::new();
            for w in v.windows(2) {
                for j in 0..factor {
                    out.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
                }
            }
            out.push(*v.last().unwrap());
            out
        };
        let mut rungs = Vec::new();
        for w in self.rungs.windows(2) {
            for j in 0..factor {
                rungs.push(w[0] * (w[1] / w[0]).powf(j as f64 / factor as f64));
            }
        }
        if let Some(last) = self.rungs.last() {
            rungs.push(*last);
        }
        GridSpec {
            x_tangential: sub(&self.x_tangential),
            x_normal: sub(&self.x_normal),
            rungs,
            directions: self.directions * factor,
            seed: self.seed,
        }
    }

    /// Unit directions in `R^n`. In dimension 2 these are equispaced angles
    /// (so refinement yields supersets); otherwise coordinate axes followed
    /// by seeded random directions.
    pub fn unit_directions(&self, n: usize) -> Vec<Vec<f64>> {
        match n {
            1 => vec![vec![1.0], vec![-1.0]],
            2 => (0..self.directions)
                .map(|j| {
                    let a = std::f64::consts::TAU * j as f64 / self.directions as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect(),
            _ => {
                let mut out = Vec::new();
                for i in 0..n {
                    for s in [1.0, -1.0] {
                        let mut v = vec![0.0; n];
                        v[i] = s;
                        out.push(v);
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                while out.len() < self.directions.max(2 * n) {
                    out.push(unit_vector(&mut rng, n));
                }
                out
            }
        }
    }

    fn tangential_points(&self, dims: usize) -> Vec<Vec<f64>> {
        let mut pts = vec![Vec::new()];
        for _ in 0..dims {
            let mut next = Vec::new();
            for p in &pts {
                for &x in &self.x_tangential {
                    let mut q: Vec<f64> = p.clone();
                    q.push(x);
                    next.push(q);
                }
            }
            pts = next;
        }
        pts
    }

    /// All sample points as slot vectors of `space`.
    pub fn points(&self, space: &Space) -> Vec<Vec<f64>> {
        let dirs = self.unit_directions(space.n);
        let mut out = Vec::new();
        for xt in self.tangential_points(space.tangential()) {
            for &xn in &self.x_normal {
                for &r in &self.rungs {
                    let rad = (r * r - 1.0).max(0.0).sqrt();
                    let dirs_here: &[Vec<f64>] = if rad == 0.0 { &dirs[..1] } else { &dirs };
                    for d in dirs_here {
                        let mut p = space.zero_point();
                        for (i, x) in xt.iter().enumerate() {
                            p[space.x(i).0 as usize] = *x;
                        }
                        p[space.xn().0 as usize] = xn;
                        for (v, c) in space.ks().into_iter().zip(d) {
                            p[v.0 as usize] = rad * c;
                        }
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

/// Grid estimate of one weighted seminorm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub constant: f64,
    pub worst_point: Vec<f64>,
    pub points: usize,
    pub budget: Option<f64>,
    pub pass: bool,
}

fn covariable_bracket(space: &Space, p: &[f64]) -> f64 {
    let s: f64 = space.ks().iter().map(|v| p[v.0 as usize].powi(2)).sum();
    (1.0 + s).sqrt()
}

fn modulus(vals: &[f64]) -> f64 {
    if vals.len() == 1 {
        vals[0].abs()
    } else {
        vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `sup |d_xi^alpha d_x^beta a| <xi>^{|alpha| - m}` over the grid.
///
/// `alpha` indexes the covariables `(xi', xi_n)` and `beta` the base
/// variables `(x', x_n)`, both of length `n`.
pub fn estimate_seminorm(a: &SymbolFn, alpha: &[u32], beta: &[u32], grid: &GridSpec, budget: Option<f64>) -> Result<SeminormReport> {
    let sp = a.space;
    if alpha.len() != sp.n || beta.len() != sp.n {
        return Err(Error::Validation("multi-index length must equal the dimension".into()));
    }
    let mut vars: Vec<Var> = Vec::new();
    for (v, k) in sp.ks().into_iter().zip(alpha).chain(sp.xs().into_iter().zip(beta)) {
        vars.extend(std::iter::repeat(v).take(*k as usize));
    }
    let parts: Vec<Expr> = a.parts().into_iter().map(|e| e.diff_many(&vars)).collect();
    for e in &parts {
        e.check_budget()?;
    }
    let tape = Compiled::many(&parts);
    let pts = grid.points(&sp);
    let order = alpha.iter().sum::<u32>() as f64;
    let (constant, idx) = par_argmax(pts.len(), |i| {
        let mut out = vec![0.0; parts.len()];
        tape.eval_raw(&pts[i], &mut Vec::new(), &mut out);
        modulus(&out) * covariable_bracket(&sp, &pts[i]).powf(order - a.order)
    });
    if pts.is_empty() {
        return Err(Error::Validation("empty grid".into()));
    }
    if !constant.is_finite() {
        return Err(Error::SingularLocus(format!("grid point {:?}", pts[idx])));
    }
    Ok(SeminormReport {
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        constant,
        worst_point: pts[idx].clone(),
        points: pts.len(),
        budget,
        pass: budget.map_or(true, |b| constant <= b),
    })
}

/// Derivative orders covered by [`check_transmission`]: `x_n`-order up to
/// `normal`, `|alpha| <= xi_tangential`, `|beta| <= x_tangential`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionOrders {
    pub normal: u32,
    pub xi_tangential: u32,
    pub x_tangential: u32,
}

impl TransmissionOrders {
    pub fn up_to(k: u32) -> Self {
        TransmissionOrders { normal: k, xi_tangential: k, x_tangential: k }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    pub degree: f64,
    pub max_residual: f64,
    /// `(k, alpha, beta)` attaining the residual, with `alpha`, `beta` over
    /// the tangential slots.
    pub worst_orders: (u32, Vec<u32>, Vec<u32>),
    pub worst_x_tangential: Vec<f64>,
    pub evaluations: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Symmetry condition for a symbol homogeneous of integer degree `m`:
///
/// `d_{x_n}^k d_{xi'}^alpha d_{x'}^beta a (x', 0, 0, +1)
///    = (-1)^{m - |alpha|} d_{x_n}^k d_{xi'}^alpha d_{x'}^beta a (x', 0, 0, -1)`
///
/// on the sampled tangential points `x_samples`.
pub fn check_transmission(a: &SymbolFn, orders: TransmissionOrders, x_samples: &[Vec<f64>], tol: f64) -> Result<TransmissionReport> {
    let sp = a.space;
    let m = a
        .homogeneous_degree
        .ok_or_else(|| Error::Validation("transmission check requires a declared homogeneity degree".into()))?;
    if m.fract() != 0.0 {
        return Err(Error::Validation(format!("transmission check needs an integer degree, got {m}")));
    }
    let nt = sp.tangential();
    let mut bound = MultiIndex::zeros(sp.len());
    bound.0[sp.xn().0 as usize] = orders.normal;
    for i in 0..nt {
        bound.0[sp.k(i).0 as usize] = orders.xi_tangential;
        bound.0[sp.x(i).0 as usize] = orders.x_tangential;
    }
    let mut keys = Vec::new();
    let mut exprs = Vec::new();
    for part in a.parts() {
        for (mi, e) in derivative_table(part, &bound) {
            let alpha: Vec<u32> = (0..nt).map(|i| mi.get(sp.k(i))).collect();
            let beta: Vec<u32> = (0..nt).map(|i| mi.get(sp.x(i))).collect();
            if alpha.iter().sum::<u32>() > orders.xi_tangential || beta.iter().sum::<u32>() > orders.x_tangential {
                continue;
            }
            e.check_budget()?;
            keys.push((mi.get(sp.xn()), alpha, beta));
            exprs.push(e);
        }
    }
    let tape = Compiled::many(&exprs);
    let mut plus = vec![0.0; exprs.len()];
    let mut minus = vec![0.0; exprs.len()];
    let mut scratch = Vec::new();
    let mut worst = (0.0f64, 0usize, 0usize);
    for (si, xt) in x_samples.iter().enumerate() {
        if xt.len() != nt {
            return Err(Error::Validation("tangential sample has wrong length".into()));
        }
        let mut p = sp.zero_point();
        for (i, x) in xt.iter().enumerate() {
            p[sp.x(i).0 as usize] = *x;
        }
        p[sp.kn().0 as usize] = 1.0;
        tape.eval_raw(&p, &mut scratch, &mut plus);
        p[sp.kn().0 as usize] = -1.0;
        tape.eval_raw(&p, &mut scratch, &mut minus);
        for (j, key) in keys.iter().enumerate() {
            if !plus[j].is_finite() || !minus[j].is_finite() {
                return Err(Error::SingularAtAxis(format!(
                    "derivative (k={}, alpha={:?}, beta={:?}) at x'={xt:?}",
                    key.0, key.1, key.2
                )));
            }
            let parity = m as i64 - key.1.iter().sum::<u32>() as i64;
            let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let r = (plus[j] - sign * minus[j]).abs();
            if r > worst.0 {
                worst = (r, j, si);
            }
        }
    }
    let (k, alpha, beta) = keys.get(worst.1).cloned().unwrap_or((0, vec![0; nt], vec![0; nt]));
    Ok(TransmissionReport {
        degree: m,
        max_residual: worst.0,
        worst_orders: (k, alpha, beta),
        worst_x_tangential: x_samples.get(worst.2).cloned().unwrap_or_default(),
        evaluations: keys.len() * x_samples.len(),
        tol,
        pass: worst.0 <= tol,
    })
}

/// Sampling for the collar-rescaled BS check. The rescaled normal variable
/// `x_n` ranges over `x_normal`, the normal covariable over `xi_normal`, and
/// the tangential covariable over spheres with `<xi'>` in `rungs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsGrid {
    pub x_tangential: Vec<f64>,
    pub x_normal: Vec<f64>,
    pub xi_normal: Vec<f64>,
    pub rungs: Vec<f64>,
    pub directions: usize,
    pub seed: u64,
}

impl BsGrid {
    pub fn standard() -> Self {
        let mut xi_normal: Vec<f64> = geometric(0.25, 2.0, 256.0).iter().rev().map(|v| -v).collect();
        xi_normal.push(0.0);
        xi_normal.extend(geometric(0.25, 2.0, 256.0));
        BsGrid {
            x_tangential: linspace(-1.0, 1.0, 5),
            x_normal: linspace(-2.0, 2.0, 17),
            xi_normal,
            rungs: geometric(1.0, 2.0, 256.0),
            directions: 2,
            seed: 7,
        }
    }

    /// Normal samples subdivided `factor` times (a superset).
    pub fn refined_normal(&self, factor: usize) -> Self {
        let sub = |v: &[f64], geometric_mid: bool| {
            let mut out = Vec::new();
            for w in v.windows(2) {
                for j in 0..factor {
                    let f = j as f64 / factor as f64;
                    let mid = if geometric_mid && w[0] * w[1] > 0.0 {
                        w[0] * (w[1] / w[0]).powf(f)
                    } else {
                        w[0] + (w[1] - w[0]) * f
                    };
                    out.push(mid);
                }
            }
            out.extend(v.last());
            out
        };
        BsGrid { x_normal: sub(&self.x_normal, false), xi_normal: sub(&self.xi_normal, true), ..self.clone() }
    }
}

/// Orders covered by the BS check: `|alpha| <= xi_tangential` (on `xi'`),
/// `|beta| <= x_tangential` (on `x'`), `gamma <= xi_normal`,
/// `delta <= x_normal`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsOrders {
    pub xi_tangential: u32,
    pub x_tangential: u32,
    pub xi_normal: u32,
    pub x_normal: u32,
}

impl BsOrders {
    pub fn up_to(k: u32) -> Self {
        BsOrders { xi_tangential: k, x_tangential: k, xi_normal: k, x_normal: k }
    }
}

/// One fitted row of the BS check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsRow {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub gamma: u32,
    pub delta: u32,
    /// Per-rung sup of `|d^gamma_{xi_n} d^delta_{x_n} (rescaled d^alpha d^beta a)| <xi_n>^{gamma - l}`.
    pub sups: Vec<f64>,
    pub fit: PowerFit,
    /// `m - |alpha|`.
    pub target: f64,
    /// Fitted growth in `<xi_n>` of `sup |...| <xi_n>^gamma <xi'>^{|alpha| - m}`.
    pub normal_fit: PowerFit,
    /// `l`.
    pub normal_target: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsReport {
    pub m: f64,
    pub l: f64,
    pub tol: f64,
    pub rungs: Vec<f64>,
    pub rows: Vec<BsRow>,
    /// Largest `slope - target` over rows with a slope.
    pub worst_excess: f64,
    pub worst_normal_excess: f64,
    pub pass: bool,
}

impl BsReport {
    /// Fitted `<xi'>` exponent of the undifferentiated symbol (`None` if it
    /// vanishes on the grid).
    pub fn exponent(&self) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.gamma == 0 && r.delta == 0 && r.alpha.iter().chain(&r.beta).all(|&k| k == 0))
            .and_then(|r| r.fit.slope)
    }
}

/// Collar-rescaled BS membership by log-log regression.
///
/// For every `(alpha, beta, gamma, delta)` within `orders` and every rung
/// `<xi'>`, the rescaled symbol `b(x', x_n, xi', xi_n) = (d^alpha d^beta a)(x',
/// x_n / <xi'>, xi', xi_n <xi'>)` is differentiated `gamma` times in `xi_n`
/// and `delta` times in `x_n`; its weighted sup over `(x', x_n, xi_n)` is
/// fitted against `<xi'>`. Passes when every slope is at most
/// `m - |alpha| + tol` and every `<xi_n>` growth exponent at most `l + tol`.
pub fn check_bs_membership(a: &SymbolFn, m: f64, l: f64, grid: &BsGrid, orders: BsOrders, tol: f64) -> Result<BsReport> {
    let sp = a.space;
    if grid.rungs.len() < 4 {
        return Err(Error::RegressionIllConditioned(format!("{} rungs, need at least 4", grid.rungs.len())));
    }
    let nt = sp.tangential();
    let mut bound = MultiIndex::zeros(sp.len());
    bound.0[sp.xn().0 as usize] = orders.x_normal;
    bound.0[sp.kn().0 as usize] = orders.xi_normal;
    for i in 0..nt {
        bound.0[sp.k(i).0 as usize] = orders.xi_tangential;
        bound.0[sp.x(i).0 as usize] = orders.x_tangential;
    }
    let parts = a.parts();
    let tables: Vec<_> = parts.iter().map(|e| derivative_table(e, &bound)).collect();
    let mut keys = Vec::new();
    let mut exprs = Vec::new();
    for mi in tables[0].keys() {
        let alpha: Vec<u32> = (0..nt).map(|i| mi.get(sp.k(i))).collect();
        let beta: Vec<u32> = (0..nt).map(|i| mi.get(sp.x(i))).collect();
        if alpha.iter().sum::<u32>() > orders.xi_tangential || beta.iter().sum::<u32>() > orders.x_tangential {
            continue;
        }
        keys.push((alpha, beta, mi.get(sp.kn()), mi.get(sp.xn())));
        for t in &tables {
            t[mi].check_budget()?;
            exprs.push(t[mi].clone());
        }
    }
    let np = parts.len();
    let tape = Compiled::many(&exprs);

    let xt_pts = {
        let g = GridSpec {
            x_tangential: grid.x_tangential.clone(),
            x_normal: vec![0.0],
            rungs: vec![1.0],
            directions: 1,
            seed: grid.seed,
        };
        g.tangential_points(nt)
    };
    let dirs = GridSpec { directions: grid.directions.max(1), seed: grid.seed, ..GridSpec::standard() }.unit_directions(nt.max(1));

    // sups[key][rung] and normal_sups[key][xi_n index]
    let nkeys = keys.len();
    let mut sups = vec![vec![0.0f64; grid.rungs.len()]; nkeys];
    let mut normal_sups = vec![vec![0.0f64; grid.xi_normal.len()]; nkeys];
    let mut out = vec![0.0; exprs.len()];
    let mut scratch = Vec::new();
    for (ri, &r) in grid.rungs.iter().enumerate() {
        let rad = (r * r - 1.0).max(0.0).sqrt();
        let dirs_here: &[Vec<f64>] = if rad == 0.0 { &dirs[..1] } else { &dirs };
        for d in dirs_here {
            for xt in &xt_pts {
                for &xn in &grid.x_normal {
                    for (zi, &zn) in grid.xi_normal.iter().enumerate() {
                        let mut p = sp.zero_point();
                        for (i, x) in xt.iter().enumerate() {
                            p[sp.x(i).0 as usize] = *x;
                        }
                        for i in 0..nt {
                            p[sp.k(i).0 as usize] = rad * d[i];
                        }
                        p[sp.xn().0 as usize] = xn / r;
                        p[sp.kn().0 as usize] = zn * r;
                        tape.eval_raw(&p, &mut scratch, &mut out);
                        for (j, key) in keys.iter().enumerate() {
                            let v = modulus(&out[j * np..(j + 1) * np]);
                            if !v.is_finite() {
                                return Err(Error::SingularLocus(format!("rescaled point {p:?}")));
                            }
                            let (gamma, delta) = (key.2 as f64, key.3 as f64);
                            let val = v * r.powf(gamma - delta);
                            let w = val * bracket(zn).powf(gamma - l);
                            if w > sups[j][ri] {
                                sups[j][ri] = w;
                            }
                            let alpha_ord = key.0.iter().sum::<u32>() as f64;
                            let wn = val * bracket(zn).powf(gamma) * r.powf(alpha_ord - m);
                            if wn > normal_sups[j][zi] {
                                normal_sups[j][zi] = wn;
                            }
                        }
                    }
                }
            }
        }
    }

    // Growth in <xi_n> is read off the large-|xi_n| half of the ladder.
    let mut tail: Vec<(f64, usize)> =
        grid.xi_normal.iter().enumerate().filter(|(_, z)| z.abs() >= 1.0).map(|(i, z)| (bracket(*z), i)).collect();
    tail.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut rows = Vec::new();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_normal = f64::NEG_INFINITY;
    let mut pass = true;
    for (j, (alpha, beta, gamma, delta)) in keys.into_iter().enumerate() {
        let fit = loglog_fit(&grid.rungs, &sups[j], 4)?;
        let target = m - alpha.iter().sum::<u32>() as f64;
        // Pair both signs of each |xi_n| by taking the larger sup.
        let mut nx: Vec<f64> = Vec::new();
        let mut ny: Vec<f64> = Vec::new();
        for (b, i) in &tail {
            match nx.last() {
                Some(last) if (*last - *b).abs() < 1e-12 => {
                    let y: &mut f64 = ny.last_mut().unwrap();
                    *y = y.max(normal_sups[j][*i]);
                }
                _ => {
                    nx.push(*b);
                    ny.push(normal_sups[j][*i]);
                }
            }
        }
        let normal_fit = loglog_fit(&nx, &ny, 4)?;
        let ok_xi = fit.slope.map_or(true, |s| s <= target + tol);
        let ok_n = normal_fit.slope.map_or(true, |s| s <= l + tol);
        if let Some(s) = fit.slope {
            worst_excess = worst_excess.max(s - target);
        }
        if let Some(s) = normal_fit.slope {
            worst_normal = worst_normal.max(s - l);
        }
        pass &= ok_xi && ok_n;
        rows.push(BsRow {
            alpha,
            beta,
            gamma,
            delta,
            sups: sups[j].clone(),
            fit,
            target,
            normal_fit,
            normal_target: l,
            pass: ok_xi && ok_n,
        });
    }
    Ok(BsReport {
        m,
        l,
        tol,
        rungs: grid.rungs.clone(),
        rows,
        worst_excess,
        worst_normal_excess: worst_normal,
        pass,
    })
}

/// Uniform direction on the unit sphere of `R^n`.
fn unit_vector<R: rand::Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::sgphase::Cutoff;

    fn sp() -> Space {
        Space::new(2)
    }

    fn sym(src: &str, m: f64) -> SymbolFn {
        SymbolFn::new(sp(), parse(&sp(), src).unwrap(), m)
    }

    fn hom(src: &str, m: f64) -> SymbolFn {
        SymbolFn::homogeneous(sp(), parse(&sp(), src).unwrap(), m)
    }

    fn x_samples() -> Vec<Vec<f64>> {
        linspace(-1.0, 1.0, 21).into_iter().map(|x| vec![x]).collect()
    }

    fn collar_symbol() -> SymbolFn {
        let s = sp();
        let base = parse(&s, "kn*exp(sin(x1)/2)").unwrap();
        let cut = Cutoff::new(1.0).expr(&Expr::var(s.xn()));
        SymbolFn::new(s, base.mul(&cut), 1.0)
    }

    #[test]
    fn seminorm_of_normal_bracket_is_one() {
        let r = estimate_seminorm(&sym("bracket(kn)", 1.0), &[0, 0], &[0, 0], &GridSpec::standard(), Some(1.0 + 1e-12)).unwrap();
        assert!((r.constant - 1.0).abs() <= 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn derivatives_of_constant_vanish() {
        for alpha in [[1, 0], [0, 1], [2, 1]] {
            let r = estimate_seminorm(&sym("1", 0.0), &alpha, &[0, 0], &GridSpec::standard(), None).unwrap();
            assert_eq!(r.constant, 0.0);
        }
    }

    #[test]
    fn seminorm_matches_refined_grid() {
        let a = sym("kn^2/norm(k1, kn)", 1.0);
        let g = GridSpec::standard().avoid_origin();
        let coarse = estimate_seminorm(&a, &[0, 1], &[0, 0], &g, None).unwrap();
        let fine = estimate_seminorm(&a, &[0, 1], &[0, 0], &g.refined(4), None).unwrap();
        assert!(coarse.constant.is_finite());
        assert!((fine.constant - coarse.constant).abs() <= 0.02 * fine.constant);
        assert!(fine.constant >= coarse.constant);
    }

    #[test]
    fn origin_rung_is_rejected_for_norm() {
        let a = sym("norm(k1, kn)", 1.0);
        assert!(matches!(
            estimate_seminorm(&a, &[0, 0], &[0, 0], &GridSpec::standard(), None),
            Err(Error::SingularLocus(_))
        ));
    }

    #[test]
    fn refinement_is_monotone() {
        let a = collar_symbol();
        let g = GridSpec::standard();
        for (alpha, beta) in [([0, 0], [0, 0]), ([0, 1], [1, 0]), ([0, 0], [0, 2])] {
            let c0 = estimate_seminorm(&a, &alpha, &beta, &g, None).unwrap().constant;
            let c1 = estimate_seminorm(&a, &alpha, &beta, &g.refined(2), None).unwrap().constant;
            assert!(c1 >= c0);
        }
    }

    #[test]
    fn transmission_examples() {
        let r = check_transmission(&hom("kn", 1.0), TransmissionOrders::up_to(2), &x_samples(), 1e-12).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_residual, 0.0);

        let r = check_transmission(&hom("norm(k1, kn)", 1.0), TransmissionOrders::up_to(0), &x_samples(), 1e-12).unwrap();
        assert!(!r.pass);
        assert!((r.max_residual - 2.0).abs() < 1e-15);

        let r = check_transmission(&hom("kn*exp(sin(x1)/2)", 1.0), TransmissionOrders::up_to(2), &x_samples(), 1e-12).unwrap();
        assert!(r.pass && r.max_residual <= 1e-12);
    }

    #[test]
    fn transmission_requires_declared_integer_degree() {
        let mut a = hom("kn", 1.0);
        a.homogeneous_degree = None;
        assert!(check_transmission(&a, TransmissionOrders::up_to(1), &x_samples(), 1e-12).is_err());
        let a = hom("kn", 0.5);
        assert!(check_transmission(&a, TransmissionOrders::up_to(1), &x_samples(), 1e-12).is_err());
    }

    #[test]
    fn transmission_detects_axis_singularity() {
        let a = hom("k1^2/norm(k1)", 1.0);
        assert!(matches!(
            check_transmission(&a, TransmissionOrders::up_to(1), &x_samples(), 1e-12),
            Err(Error::SingularAtAxis(_))
        ));
    }

    #[test]
    fn homogeneous_polynomials_have_zero_residual() {
        let polys = [
            ("kn + x1*k1", 1.0),
            ("kn^2 + sin(x1)*k1*kn + cos(x1)*k1^2", 2.0),
            ("exp(x1)*kn^3 - k1^2*kn + x1^2*k1^3", 3.0),
            ("xn*kn^2 + (1 + xn^2)*k1*kn", 2.0),
            ("kn^4 + x1*xn*k1^3*kn", 4.0),
        ];
        for (src, m) in polys {
            let r = check_transmission(&hom(src, m), TransmissionOrders::up_to(2), &x_samples(), 0.0).unwrap();
            assert_eq!(r.max_residual, 0.0, "{src}");
        }
    }

    #[test]
    fn transmission_is_stable_under_tangential_differentiation() {
        let s = sp();
        for (src, m) in [("kn*exp(sin(x1)/2)", 1.0), ("norm(k1, kn)", 1.0), ("kn^2 + x1*k1*kn", 2.0), ("kn + 0.1*norm(k1, kn)", 1.0)] {
            let a = hom(src, m);
            let da = SymbolFn::homogeneous(s, a.re.diff(s.k(0)), m - 1.0);
            let orders = TransmissionOrders { normal: 2, xi_tangential: 1, x_tangential: 2 };
            let ra = check_transmission(&a, TransmissionOrders::up_to(2), &x_samples(), 1e-12).unwrap();
            let rd = check_transmission(&da, orders, &x_samples(), 1e-12).unwrap();
            assert_eq!(ra.pass, rd.pass, "{src}");
        }
    }

    #[test]
    fn homogeneity_detector() {
        assert!(hom("kn*exp(sin(x1)/2) + k1", 1.0).homogeneity_residual(1.0, 20, 3).unwrap() <= 1e-10);
        assert!(hom("kn^2/norm(k1, kn)", 1.0).homogeneity_residual(1.0, 20, 3).unwrap() <= 1e-10);
        assert!(hom("bracket(kn)", 1.0).homogeneity_residual(1.0, 20, 3).unwrap() > 1e-3);
    }

    #[test]
    fn bs_constant_and_normal_variable() {
        let g = BsGrid::standard();
        let r = check_bs_membership(&sym("1", 0.0), 0.0, 0.0, &g, BsOrders::up_to(1), 0.1).unwrap();
        assert_eq!(r.exponent(), Some(0.0));
        assert!(r.pass);

        let r = check_bs_membership(&sym("xn", -1.0), -1.0, 0.0, &g, BsOrders::up_to(1), 0.1).unwrap();
        assert!((r.exponent().unwrap() + 1.0).abs() <= 0.01);
        assert!(r.pass);
    }

    #[test]
    fn bs_collar_symbol_with_refined_oracle() {
        let a = collar_symbol();
        let g = BsGrid::standard();
        let r = check_bs_membership(&a, 1.0, 1.0, &g, BsOrders::up_to(1), 0.1).unwrap();
        assert!(r.exponent().unwrap() <= 1.05);
        assert!(r.pass, "{:?}", r.worst_excess);
        let fine = check_bs_membership(&a, 1.0, 1.0, &g.refined_normal(2), BsOrders::up_to(0), 0.1).unwrap();
        for (c, f) in r.rows[0].sups.iter().zip(&fine.rows[0].sups) {
            assert!((f - c).abs() <= 0.02 * f);
        }
    }

    #[test]
    fn bs_needs_four_rungs() {
        let mut g = BsGrid::standard();
        g.rungs.truncate(3);
        assert!(matches!(
            check_bs_membership(&sym("1", 0.0), 0.0, 0.0, &g, BsOrders::up_to(0), 0.1),
            Err(Error::RegressionIllConditioned(_))
        ));
    }

    #[test]
    fn bs_product_law() {
        let s = sp();
        let g = BsGrid::standard();
        let pairs = [
            (collar_symbol(), sym("bracket(k1)", 1.0)),
            (sym("xn", -1.0), sym("kn", 1.0)),
            (sym("xn*cos(x1)", -1.0), sym("kn*exp(x1) + k1", 1.0)),
        ];
        for (a, b) in pairs {
            let fit = |x: &SymbolFn| check_bs_membership(x, x.order, 1.0, &g, BsOrders::up_to(0), 0.1).unwrap().exponent().unwrap();
            let ab = SymbolFn::new(s, a.re.mul(&b.re), a.order + b.order);
            let (fab, fa, fb) = (fit(&ab), fit(&a), fit(&b));
            assert!(fab <= fa + fb + 0.05, "{fab} {fa} {fb}");
        }
    }
}
