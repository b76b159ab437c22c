use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Relative rounding level of a panel sum, as a multiple of `int |f|`.
pub const ROUNDOFF: f64 = 50.0 * f64::EPSILON;

/// Tolerances and budget of the adaptive rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    /// Maximum number of integrand evaluations.
    pub max_evals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-10, rel: 1e-10, max_evals: 4_000_000 }
    }
}

impl Tolerance {
    pub fn halved(&self) -> Self {
        Tolerance { abs: self.abs / 2.0, rel: self.rel / 2.0, max_evals: self.max_evals * 2 }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Tolerance { abs: self.abs * factor, rel: self.rel * factor, ..*self }
    }

    /// Accepted error for an integral of size `value` whose integrand has
    /// `int |f| = resabs`; never below the rounding level of the sum.
    pub fn target(&self, value: f64, resabs: f64) -> f64 {
        self.abs.max(self.rel * value).max(ROUNDOFF * resabs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: Complex64,
    /// Sum of the panel estimates `|K15 - G7|`.
    pub error: f64,
    pub evals: usize,
    pub panels: usize,
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    /// `int |f|` on the panel, the scale of rounding errors.
    resabs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

fn kronrod<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut abs = fc.norm() * WGK[7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (l, r) = (f(c - dx), f(c + dx));
        let s = l + r;
        k += s * WGK[j];
        abs += (l.norm() + r.norm()) * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    Panel { a, b, value: k * h, error: ((k - g) * h).norm(), resabs: abs * h.abs() }
}

/// Globally adaptive Gauss-Kronrod (7, 15) integration of a complex
/// integrand over `[a, b]`. The panel with the largest error estimate is
/// bisected until the total estimate meets `max(abs, rel * |I|)`.
pub fn integrate<F: FnMut(f64) -> Complex64>(mut f: F, a: f64, b: f64, tol: &Tolerance) -> Result<QuadResult> {
    integrate_panels(&mut f, &[a, b], tol)
}

/// As [`integrate`], starting from the panels delimited by `breaks`.
pub fn integrate_panels<F: FnMut(f64) -> Complex64>(f: &mut F, breaks: &[f64], tol: &Tolerance) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(f, w[0], w[1]));
            evals += 15;
        }
    }
    let span = breaks.last().copied().unwrap_or(0.0) - breaks.first().copied().unwrap_or(0.0);
    let totals = |heap: &BinaryHeap<Panel>| {
        heap.iter().fold((Complex64::new(0.0, 0.0), 0.0, 0.0), |(v, e, r), p| (v + p.value, e + p.error, r + p.resabs))
    };
    let (mut value, mut error, mut resabs) = totals(&heap);
    loop {
        if error <= tol.target(value.norm(), resabs) || !error.is_finite() {
            // Running sums drift; confirm with exact sums before stopping.
            (value, error, resabs) = totals(&heap);
            if error <= tol.target(value.norm(), resabs) || !error.is_finite() {
                if !value.re.is_finite() || !value.im.is_finite() {
                    return Err(Error::QuadratureBudget("integrand is not finite".into()));
                }
                return Ok(QuadResult { value, error, evals, panels: heap.len() });
            }
        }
        if evals + 30 > tol.max_evals {
            return Err(Error::QuadratureBudget(format!("{evals} evaluations, error estimate {error:e}")));
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a) <= 1e-13 * span.abs().max(1.0) {
            return Err(Error::QuadratureBudget(format!("panel width underflow near {mid}")));
        }
        let (l, r) = (kronrod(f, worst.a, mid), kronrod(f, mid, worst.b));
        value += l.value + r.value - worst.value;
        error += l.error + r.error - worst.error;
        resabs += l.resabs + r.resabs - worst.resabs;
        heap.push(l);
        heap.push(r);
        evals += 30;
    }
}

/// Result of [`integrate_vec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VecQuadResult {
    pub values: Vec<Complex64>,
    /// Sum over panels of the largest component estimate `|K15 - G7|`.
    pub error: f64,
    pub evals: usize,
    pub panels: usize,
}

struct VecPanel {
    a: f64,
    b: f64,
    values: Vec<Complex64>,
    error: f64,
    resabs: f64,
}

impl PartialEq for VecPanel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for VecPanel {}

impl PartialOrd for VecPanel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VecPanel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

fn kronrod_vec<F: FnMut(f64, &mut [Complex64])>(f: &mut F, a: f64, b: f64, buf: &mut [Complex64]) -> VecPanel {
    let dim = buf.len();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![Complex64::new(0.0, 0.0); dim];
    let mut g = vec![Complex64::new(0.0, 0.0); dim];
    let mut abs = vec![0.0; dim];
    f(c, buf);
    for i in 0..dim {
        k[i] = buf[i] * WGK[7];
        g[i] = buf[i] * WG[3];
        abs[i] = buf[i].norm() * WGK[7];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        for x in [c - dx, c + dx] {
            f(x, buf);
            for i in 0..dim {
                k[i] += buf[i] * WGK[j];
                abs[i] += buf[i].norm() * WGK[j];
                if j % 2 == 1 {
                    g[i] += buf[i] * WG[j / 2];
                }
            }
        }
    }
    let error = k.iter().zip(&g).map(|(k, g)| ((k - g) * h).norm()).fold(0.0, f64::max);
    let resabs = abs.iter().cloned().fold(0.0, f64::max) * h.abs();
    VecPanel { a, b, values: k.into_iter().map(|v| v * h).collect(), error, resabs }
}

/// Adaptive integration of a vector of `dim` complex integrands sharing one
/// panel refinement; `f(x, out)` fills `out`. The tolerance applies to the
/// largest component.
pub fn integrate_vec<F: FnMut(f64, &mut [Complex64])>(f: &mut F, dim: usize, breaks: &[f64], tol: &Tolerance) -> Result<VecQuadResult> {
    let mut buf = vec![Complex64::new(0.0, 0.0); dim];
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod_vec(f, w[0], w[1], &mut buf));
            evals += 15;
        }
    }
    let span = breaks.last().copied().unwrap_or(0.0) - breaks.first().copied().unwrap_or(0.0);
    loop {
        let mut values = vec![Complex64::new(0.0, 0.0); dim];
        let (mut error, mut resabs) = (0.0, 0.0);
        for p in heap.iter() {
            for (v, pv) in values.iter_mut().zip(&p.values) {
                *v += pv;
            }
            error += p.error;
            resabs += p.resabs;
        }
        let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if error <= tol.target(scale, resabs) || !error.is_finite() {
            if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::QuadratureBudget("integrand is not finite".into()));
            }
            return Ok(VecQuadResult { values, error, evals, panels: heap.len() });
        }
        // Refine a batch of the worst panels before re-summing.
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            if evals + 30 > tol.max_evals {
                return Err(Error::QuadratureBudget(format!("{evals} evaluations, error estimate {error:e}")));
            }
            let worst = heap.pop().expect("at least one panel");
            let mid = 0.5 * (worst.a + worst.b);
            if (worst.b - worst.a) <= 1e-13 * span.abs().max(1.0) {
                return Err(Error::QuadratureBudget(format!("panel width underflow near {mid}")));
            }
            heap.push(kronrod_vec(f, worst.a, mid, &mut buf));
            heap.push(kronrod_vec(f, mid, worst.b, &mut buf));
            evals += 30;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| c(x.powi(13) - 3.0 * x.powi(7)), -1.0, 2.0, &Tolerance::default()).unwrap();
        let want = (2f64.powi(14) - 1.0) / 14.0 - 3.0 * (2f64.powi(8) - 1.0) / 8.0;
        assert!((r.value.re - want).abs() < 1e-9 * want.abs());
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn oscillatory_gaussian() {
        let xi = 7.0;
        let r = integrate(|t| Complex64::new(0.0, -t * xi).exp() * (-t * t / 2.0).exp(), -20.0, 20.0, &Tolerance::default()).unwrap();
        let want = (2.0 * std::f64::consts::PI).sqrt() * (-xi * xi / 2.0).exp();
        assert!((r.value - c(want)).norm() < 1e-12);
        assert!(r.error < 1e-10);
    }

    #[test]
    fn endpoint_singularity_and_budget() {
        let r = integrate(|x| c(x.sqrt()), 0.0, 1.0, &Tolerance::default()).unwrap();
        assert!((r.value.re - 2.0 / 3.0).abs() < 1e-9);
        let tight = Tolerance { max_evals: 100, ..Tolerance::default() };
        assert!(matches!(integrate(|x| c((1.0 / x).sin()), 1e-6, 1.0, &tight), Err(Error::QuadratureBudget(_))));
    }

    #[test]
    fn vector_matches_scalar() {
        let tol = Tolerance::default();
        let mut f = |x: f64, out: &mut [Complex64]| {
            out[0] = Complex64::new(0.0, 3.0 * x).exp() * (-x * x).exp();
            out[1] = c(x.powi(4) * (-x * x).exp());
        };
        let v = integrate_vec(&mut f, 2, &[-10.0, 0.0, 10.0], &tol).unwrap();
        let s0 = integrate(|x| Complex64::new(0.0, 3.0 * x).exp() * (-x * x).exp(), -10.0, 10.0, &tol).unwrap();
        assert!((v.values[0] - s0.value).norm() < 1e-12);
        assert!((v.values[1].re - 0.75 * std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }
}
