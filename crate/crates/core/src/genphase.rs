//! Generating phases `psi(x, xi)` of boundary-preserving symplectomorphisms:
//! the boundary phase `psi_d`, the normal part `phi = psi - psi_d`, graph
//! consistency with a map, nondegeneracy in the normal direction, the normal
//! coefficients `q^+-` and admissibility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse, Compiled, Expr, Node, Space, Var};
use crate::numeric::{bracket, linspace};
use crate::sgphase::Cutoff;
use crate::symbolcls::{check_transmission, SymbolFn, TransmissionOrders, TransmissionReport};
use crate::symplecto::{SampleSet, SymplectoMap};

/// Tolerance for the flatness and linearity identities of `psi_d`.
pub const FLAT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GeneratingPhase {
    pub space: Space,
    pub psi: Expr,
    pub half_width: f64,
    /// `psi(x', 0, xi', 1)`.
    pub psi_boundary: Expr,
    /// `psi - psi_boundary`.
    pub phi: Expr,
}

impl GeneratingPhase {
    pub fn new(space: Space, psi: Expr, half_width: f64) -> Self {
        let to_boundary = [(space.xn(), Expr::zero()), (space.kn(), Expr::one())];
        let psi_boundary = psi.subst(&to_boundary);
        // Summands free of (x_n, xi_n) cancel exactly and are left out of phi.
        let normal: Vec<Expr> = match psi.node() {
            Node::Sum(terms) => terms.iter().filter(|e| e.depends_on(space.xn()) || e.depends_on(space.kn())).cloned().collect(),
            _ => vec![psi.clone()],
        };
        let normal = Expr::sum(normal);
        let phi = normal.sub(&normal.subst(&to_boundary));
        GeneratingPhase { space, psi, half_width, psi_boundary, phi }
    }

    pub fn parse(space: Space, src: &str, half_width: f64) -> Result<Self> {
        Ok(GeneratingPhase::new(space, parse(&space, src)?, half_width))
    }

    /// Tangential base samples: `count` points per axis on `[-1, 1]`.
    pub fn tangential_samples(&self, count: usize) -> Vec<Vec<f64>> {
        let mut pts = vec![Vec::new()];
        for _ in 0..self.space.tangential() {
            let mut next = Vec::new();
            for p in &pts {
                for x in linspace(-1.0, 1.0, count) {
                    let mut q: Vec<f64> = p.clone();
                    q.push(x);
                    next.push(q);
                }
            }
            pts = next;
        }
        pts
    }

    fn point(&self, xt: &[f64], xn: f64, kt: &[f64], kn: f64) -> Vec<f64> {
        let sp = self.space;
        let mut p = sp.zero_point();
        for (i, v) in xt.iter().enumerate() {
            p[sp.x(i).0 as usize] = *v;
        }
        for (i, v) in kt.iter().enumerate() {
            p[sp.k(i).0 as usize] = *v;
        }
        p[sp.xn().0 as usize] = xn;
        p[sp.kn().0 as usize] = kn;
        p
    }

    fn tangential_covariables(&self) -> Vec<Vec<f64>> {
        let nt = self.space.tangential();
        let mut out = Vec::new();
        for v in [-2.0, -0.5, 0.7, 3.0] {
            for i in 0..nt {
                let mut k = vec![0.25; nt];
                k[i] = v;
                out.push(k);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPhaseReport {
    /// `max |psi(x', 0, xi', xi_n) - psi_d(x', xi')|` over `xi_n in {-3, -1, 2, 5}`.
    pub normal_residual: f64,
    /// `max |d^2_{xi'} psi_d|`.
    pub linearity_residual: f64,
    /// `max |phi(x', 0, xi', xi_n)|`.
    pub phi_residual: f64,
    pub pass: bool,
}

/// Extracts `psi_d` and verifies that it neither depends on `xi_n` nor is
/// nonlinear in `xi'`.
pub fn boundary_phase(psi: &GeneratingPhase, x_samples: &[Vec<f64>]) -> Result<BoundaryPhaseReport> {
    let sp = psi.space;
    let nt = sp.tangential();
    let full = psi.psi.compile();
    let bnd = psi.psi_boundary.compile();
    let phi = psi.phi.compile();
    let mut second = Vec::new();
    for i in 0..nt {
        for j in 0..nt {
            second.push(psi.psi_boundary.diff(sp.k(i)).diff(sp.k(j)));
        }
    }
    let second = Compiled::many(&second);
    let mut out = vec![0.0; second.n_outputs()];
    let mut scratch = Vec::new();
    let (mut nres, mut lres, mut pres) = (0.0f64, 0.0f64, 0.0f64);
    for xt in x_samples {
        for kt in psi.tangential_covariables() {
            let pb = psi.point(xt, 0.0, &kt, 1.0);
            let b = bnd.eval(&pb)?;
            for kn in [-3.0, -1.0, 2.0, 5.0] {
                let p = psi.point(xt, 0.0, &kt, kn);
                nres = nres.max((full.eval(&p)? - b).abs());
                pres = pres.max(phi.eval(&p)?.abs());
            }
            second.eval_all(&pb, &mut scratch, &mut out)?;
            lres = lres.max(out.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }
    if nres > FLAT_TOL {
        return Err(Error::NotBoundaryFlat(nres));
    }
    Ok(BoundaryPhaseReport {
        normal_residual: nres,
        linearity_residual: lres,
        phi_residual: pres,
        pass: lres <= FLAT_TOL && pres <= FLAT_TOL,
    })
}

/// How the phase parametrizes the map's graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// `chi(grad_xi psi(x, eta), eta) = (x, grad_x psi(x, eta))`.
    Direct,
    /// `psi` generates `chi^{-1}`: `chi(x, grad_x psi(x, eta)) = (grad_xi psi(x, eta), eta)`.
    Inverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratingReport {
    pub pairing: Pairing,
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Graph consistency between `psi` and `chi` on sampled `(x, eta)`.
pub fn check_generating(psi: &GeneratingPhase, chi: &SymplectoMap, pairing: Pairing, samples: &SampleSet, tol: f64) -> Result<GeneratingReport> {
    let sp = psi.space;
    let grads: Vec<Expr> = sp.ks().into_iter().chain(sp.xs()).map(|v| psi.psi.diff(v)).collect();
    let tape = Compiled::many(&grads);
    let n = sp.n;
    let mut g = vec![0.0; 2 * n];
    let mut scratch = Vec::new();
    let mut worst = (0.0f64, 0usize);
    for (idx, p) in samples.points.iter().enumerate() {
        tape.eval_all(p, &mut scratch, &mut g)?;
        let (grad_xi, grad_x) = g.split_at(n);
        let mut src = sp.zero_point();
        let mut want = sp.zero_point();
        for i in 0..n {
            let (xv, kv) = (sp.xs()[i].0 as usize, sp.ks()[i].0 as usize);
            match pairing {
                Pairing::Direct => {
                    src[xv] = grad_xi[i];
                    src[kv] = p[kv];
                    want[xv] = p[xv];
                    want[kv] = grad_x[i];
                }
                Pairing::Inverse => {
                    src[xv] = p[xv];
                    src[kv] = grad_x[i];
                    want[xv] = grad_xi[i];
                    want[kv] = p[kv];
                }
            }
        }
        let img = chi.apply_slots(&src)?;
        let r = sp
            .xs()
            .into_iter()
            .chain(sp.ks())
            .map(|v| (img[v.0 as usize] - want[v.0 as usize]).abs() / want[v.0 as usize].abs().max(1.0))
            .fold(0.0, f64::max);
        if r > worst.0 {
            worst = (r, idx);
        }
    }
    Ok(GeneratingReport {
        pairing,
        max_residual: worst.0,
        worst_point: samples.points.get(worst.1).cloned().unwrap_or_default(),
        samples: samples.len(),
        tol,
        pass: worst.0 <= tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    /// `min |d^2_{x_n xi_n} psi|` over the collar grid.
    pub min: f64,
    pub worst_point: Vec<f64>,
    /// Sign of the mixed derivative (`+1` or `-1`).
    pub sign: f64,
    pub delta: f64,
    pub pass: bool,
}

/// `min |d^2_{x_n xi_n} psi|` over `x' in x_samples`, `|x_n| <= half_width`
/// (`normal_count` points) and `directions` unit covariables.
pub fn check_nondegeneracy(
    psi: &GeneratingPhase,
    x_samples: &[Vec<f64>],
    normal_count: usize,
    directions: usize,
    delta: f64,
) -> Result<NondegeneracyReport> {
    let sp = psi.space;
    let mixed = psi.psi.diff(sp.xn()).diff(sp.kn()).compile();
    let dirs = crate::symbolcls::GridSpec { directions, ..crate::symbolcls::GridSpec::standard() }.unit_directions(sp.n);
    let (mut min, mut worst) = (f64::INFINITY, Vec::new());
    let (mut pos, mut neg) = (false, false);
    for xt in x_samples {
        for xn in linspace(-psi.half_width, psi.half_width, normal_count) {
            for d in &dirs {
                let p = psi.point(xt, xn, &d[..sp.tangential()], d[sp.tangential()]);
                let v = mixed.eval(&p)?;
                pos |= v > 0.0;
                neg |= v < 0.0;
                if v.abs() < min {
                    min = v.abs();
                    worst = p;
                }
            }
        }
    }
    if pos && neg {
        return Err(Error::SignChange);
    }
    Ok(NondegeneracyReport { min, worst_point: worst, sign: if neg { -1.0 } else { 1.0 }, delta, pass: min >= delta })
}

#[derive(Clone, Debug)]
pub struct NormalCoeffs {
    /// `q^+(x') = d_{x_n} psi(x', 0, 0, +1)`.
    pub q_plus: Expr,
    /// `q^-(x') = d_{x_n} psi(x', 0, 0, -1)`.
    pub q_minus: Expr,
    pub kappa: f64,
    /// `max |q^+ + q^-|`.
    pub sum_residual: f64,
    /// `max |q^+- -+ d^2_{x_n xi_n} psi(x', 0, 0, +-1)|` (Euler's relation).
    pub euler_residual: f64,
    /// Both `|q^+ + q^-|` and `|q^+ - q^-|` vanish: the sign convention is
    /// not observable.
    pub degenerate: bool,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalCoeffsSummary {
    pub kappa: f64,
    pub sum_residual: f64,
    pub euler_residual: f64,
    pub degenerate: bool,
    pub min_q_plus: f64,
    pub pass: bool,
}

impl NormalCoeffs {
    pub fn summary(&self) -> NormalCoeffsSummary {
        NormalCoeffsSummary {
            kappa: self.kappa,
            sum_residual: self.sum_residual,
            euler_residual: self.euler_residual,
            degenerate: self.degenerate,
            min_q_plus: 4.0 * self.kappa,
            pass: self.pass,
        }
    }
}

/// Normal coefficients along `xi = (0, +-1)` and `kappa = min |q^+| / 4`.
pub fn normal_coeffs(psi: &GeneratingPhase, x_samples: &[Vec<f64>], tol: f64) -> Result<NormalCoeffs> {
    let sp = psi.space;
    let nt = sp.tangential();
    let dxn = psi.psi.diff(sp.xn());
    let mixed = dxn.diff(sp.kn());
    let on_axis = |kn: f64| {
        let mut s: Vec<(Var, Expr)> = (0..nt).map(|i| (sp.k(i), Expr::zero())).collect();
        s.push((sp.xn(), Expr::zero()));
        s.push((sp.kn(), Expr::constant(kn)));
        s
    };
    let q_plus = dxn.subst(&on_axis(1.0));
    let q_minus = dxn.subst(&on_axis(-1.0));
    let m_plus = mixed.subst(&on_axis(1.0));
    let m_minus = mixed.subst(&on_axis(-1.0));
    let tape = Compiled::many(&[q_plus.clone(), q_minus.clone(), m_plus, m_minus]);
    let mut out = [0.0; 4];
    let mut scratch = Vec::new();
    let (mut min_q, mut sum_r, mut euler_r, mut diff_min) = (f64::INFINITY, 0.0f64, 0.0f64, f64::INFINITY);
    for xt in x_samples {
        let p = psi.point(xt, 0.0, &vec![0.0; nt], 0.0);
        tape.eval_raw(&p, &mut scratch, &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularAtAxis(format!("normal derivative at x' = {xt:?}")));
        }
        let [qp, qm, mp, mm] = out;
        min_q = min_q.min(qp.abs());
        sum_r = sum_r.max((qp + qm).abs());
        diff_min = diff_min.min((qp - qm).abs());
        euler_r = euler_r.max((qp - mp).abs()).max((qm + mm).abs());
    }
    let kappa = min_q / 4.0;
    let degenerate = sum_r <= tol && diff_min <= tol;
    Ok(NormalCoeffs {
        q_plus,
        q_minus,
        kappa,
        sum_residual: sum_r,
        euler_residual: euler_r,
        degenerate,
        tol,
        pass: sum_r <= tol && kappa > 0.0 && euler_r <= tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// One entry per first derivative, labelled `d/dx1`, `d/dxn`, `d/dk1`, ...
    pub components: Vec<(String, TransmissionReport)>,
    pub max_residual: f64,
    pub failing: Vec<String>,
    pub pass: bool,
}

/// Transmission condition for every first derivative of `psi`: the
/// `x`-derivatives are homogeneous of degree 1, the `xi`-derivatives of
/// degree 0. Orders up to 2.
pub fn check_admissibility(psi: &GeneratingPhase, x_samples: &[Vec<f64>], tol: f64) -> Result<AdmissibilityReport> {
    let sp = psi.space;
    let mut components = Vec::new();
    let mut failing = Vec::new();
    let mut max_residual: f64 = 0.0;
    for (v, degree) in sp.xs().into_iter().map(|v| (v, 1.0)).chain(sp.ks().into_iter().map(|v| (v, 0.0))) {
        let a = SymbolFn::homogeneous(sp, psi.psi.diff(v), degree);
        let r = check_transmission(&a, TransmissionOrders::up_to(2), x_samples, tol)?;
        let label = format!("d/d{}", sp.name(v));
        max_residual = max_residual.max(r.max_residual);
        if !r.pass {
            failing.push(label.clone());
        }
        components.push((label, r));
    }
    Ok(AdmissibilityReport { pass: failing.is_empty(), components, max_residual, failing })
}

/// Worst relative violation of `xi . grad_xi psi = psi` on the samples.
pub fn euler_residual(psi: &GeneratingPhase, samples: &SampleSet) -> Result<f64> {
    let sp = psi.space;
    let lhs = Expr::sum(sp.ks().into_iter().map(|v| Expr::var(v).mul(&psi.psi.diff(v))).collect());
    let (l, r) = (lhs.compile(), psi.psi.compile());
    let mut worst: f64 = 0.0;
    for p in &samples.points {
        let (a, b) = (l.eval(p)?, r.eval(p)?);
        worst = worst.max((a - b).abs() / b.abs().max(1.0));
    }
    Ok(worst)
}

/// `max |d^j_{xi_n} phi(x', 0, xi', xi_n)|` for `j <= 3` on the samples.
pub fn phi_boundary_residual(psi: &GeneratingPhase, samples: &SampleSet) -> Result<f64> {
    let sp = psi.space;
    let mut d = psi.phi.clone();
    let mut exprs = vec![d.clone()];
    for _ in 0..3 {
        d = d.diff(sp.kn());
        exprs.push(d.clone());
    }
    let tape = Compiled::many(&exprs);
    let mut out = vec![0.0; exprs.len()];
    let mut worst: f64 = 0.0;
    for p in &samples.points {
        let mut q = p.clone();
        q[sp.xn().0 as usize] = 0.0;
        tape.eval_all(&q, &mut Vec::new(), &mut out)?;
        worst = out.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    Ok(worst)
}

/// Per-rung constants of the rescaled normal phase: for each `<xi'>` in
/// `rungs`, `C_alpha = sup |d^alpha_tau phi(x', t/<xi'>, xi', tau <xi'>)| /
/// (<t> <tau>^{1 - alpha})` over `t, tau in ladder` with `|t| < k <xi'>`
/// (the support of `omega_k(t/<xi'>)`). Returns `C[alpha][rung]`.
pub fn rescaled_phi_constants(
    psi: &GeneratingPhase,
    x_tangential: &[f64],
    rungs: &[f64],
    ladder: &[f64],
    k: f64,
    max_alpha: u32,
) -> Result<Vec<Vec<f64>>> {
    let sp = psi.space;
    let nt = sp.tangential();
    let (t, tau) = (Expr::var(sp.t()), Expr::var(sp.tau()));
    let r = Expr::var(sp.lam());
    let mut e = psi.phi.subst(&[(sp.xn(), t.div(&r)), (sp.kn(), tau.mul(&r))]);
    let mut exprs = vec![e.clone()];
    for _ in 0..max_alpha {
        e = e.diff(sp.tau());
        exprs.push(e.clone());
    }
    let tape = Compiled::many(&exprs);
    let cut = Cutoff::new(k);
    let mut out = vec![0.0; exprs.len()];
    let mut scratch = Vec::new();
    let mut c = vec![vec![0.0f64; rungs.len()]; exprs.len()];
    for (ri, &rung) in rungs.iter().enumerate() {
        let mut p = sp.zero_point();
        for (i, x) in x_tangential.iter().enumerate() {
            p[sp.x(i).0 as usize] = *x;
        }
        // xi' = sqrt(<xi'>^2 - 1) along the first tangential axis.
        if nt > 0 {
            p[sp.k(0).0 as usize] = (rung * rung - 1.0).max(0.0).sqrt();
        }
        p[sp.lam().0 as usize] = rung;
        for &tv in ladder {
            if cut.value(tv / rung) == 0.0 {
                continue;
            }
            for &tauv in ladder {
                p[sp.t().0 as usize] = tv;
                p[sp.tau().0 as usize] = tauv;
                tape.eval_all(&p, &mut scratch, &mut out)?;
                for (a, v) in out.iter().enumerate() {
                    let w = v.abs() / (bracket(tv) * bracket(tauv).powi(1 - a as i32));
                    c[a][ri] = c[a][ri].max(w);
                }
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{geometric, signed_ladder};

    fn sp() -> Space {
        Space::new(2)
    }

    const IDENTITY: &str = "x1*k1 + xn*kn";
    const DILATION: &str = "x1*k1 + xn*kn*exp(sin(x1)/2)";
    const QUADRATIC: &str = "x1*k1 + xn*kn*(1 + xn*0.2*cos(x1))";
    const SHEAR: &str = "(x1 + 0.3*tanh(x1))*k1 + xn*kn";
    const BAD: &str = "x1*k1 + xn*kn + 0.1*xn*norm(k1, kn)";

    fn phase(src: &str, hw: f64) -> GeneratingPhase {
        GeneratingPhase::parse(sp(), src, hw).unwrap()
    }

    fn u_prime() -> Vec<Vec<f64>> {
        phase(IDENTITY, 1.0).tangential_samples(21)
    }

    fn dilation_map() -> SymplectoMap {
        SymplectoMap::parse(sp(), &["y1", "yn*exp(-sin(y1)/2)"], &["e1 + yn*en*cos(y1)/2", "en*exp(sin(y1)/2)"], 1.0).unwrap()
    }

    #[test]
    fn boundary_phases() {
        let s = sp();
        let pt = |x1: f64, k1: f64| {
            let mut p = s.zero_point();
            p[s.x(0).0 as usize] = x1;
            p[s.k(0).0 as usize] = k1;
            p
        };
        for src in [IDENTITY, DILATION, BAD] {
            let psi = phase(src, 1.0);
            let r = boundary_phase(&psi, &u_prime()).unwrap();
            assert!(r.pass && r.normal_residual == 0.0);
            assert_eq!(psi.psi_boundary.eval(&pt(0.3, 2.0)).unwrap(), 0.6);
        }
        let r = boundary_phase(&phase("x1*k1 + kn*x1^2", 1.0), &u_prime());
        assert!(matches!(r, Err(Error::NotBoundaryFlat(_))));
    }

    #[test]
    fn graph_pairing() {
        let s = sp();
        let samples = SampleSet::random(&s, 1.0, 200, 11, false);
        let id = SymplectoMap::parse(s, &["y1", "yn"], &["e1", "en"], 1.0).unwrap();
        let r = check_generating(&phase(IDENTITY, 1.0), &id, Pairing::Direct, &samples, 1e-8).unwrap();
        assert_eq!(r.max_residual, 0.0);
        let r = check_generating(&phase(DILATION, 1.0), &dilation_map(), Pairing::Direct, &samples, 1e-8).unwrap();
        assert!(r.max_residual <= 1e-9, "{}", r.max_residual);
        let r = check_generating(&phase(DILATION, 1.0), &id, Pairing::Direct, &samples, 1e-8).unwrap();
        assert!(!r.pass && r.max_residual >= 0.1);
    }

    #[test]
    fn nondegeneracy() {
        let r = check_nondegeneracy(&phase(IDENTITY, 1.0), &u_prime(), 11, 32, 1e-3).unwrap();
        assert_eq!(r.min, 1.0);
        let r = check_nondegeneracy(&phase(DILATION, 1.0), &u_prime(), 11, 32, 1e-3).unwrap();
        let oracle = u_prime().iter().map(|x| (x[0].sin() / 2.0).exp()).fold(f64::INFINITY, f64::min);
        assert!((r.min - oracle).abs() <= 1e-6);
        assert_eq!(r.sign, 1.0);
        let r = check_nondegeneracy(&phase(QUADRATIC, 0.5), &u_prime(), 11, 32, 1e-3).unwrap();
        assert!(r.min >= 0.8 - 1e-12);
        let r = check_nondegeneracy(&phase("x1*k1 + xn*kn*sin(3*x1)", 1.0), &u_prime(), 11, 32, 1e-3);
        assert!(matches!(r, Err(Error::SignChange)));
    }

    #[test]
    fn normal_coefficients() {
        let r = normal_coeffs(&phase(IDENTITY, 1.0), &u_prime(), 1e-10).unwrap();
        assert_eq!((r.kappa, r.sum_residual), (0.25, 0.0));
        assert!(r.pass && !r.degenerate);

        let r = normal_coeffs(&phase(DILATION, 1.0), &u_prime(), 1e-10).unwrap();
        let s = sp();
        let mut p = s.zero_point();
        p[s.x(0).0 as usize] = 0.4;
        assert_eq!(r.q_plus.eval(&p).unwrap(), (0.4f64.sin() / 2.0).exp());
        assert_eq!(r.q_minus.eval(&p).unwrap(), -(0.4f64.sin() / 2.0).exp());
        let oracle = ((-1.0f64).sin() / 2.0).exp() / 4.0;
        assert!((r.kappa - oracle).abs() < 1e-15);
        assert!(r.pass && r.sum_residual <= 1e-10);

        let r = normal_coeffs(&phase(BAD, 1.0), &u_prime(), 1e-10).unwrap();
        assert!(!r.pass);
        assert!((r.sum_residual - 0.2).abs() < 1e-12);

        let r = normal_coeffs(&phase("x1*k1 + xn*k1", 1.0), &u_prime(), 1e-10).unwrap();
        assert!(r.degenerate && !r.pass);
    }

    #[test]
    fn admissibility() {
        for src in [IDENTITY, DILATION, QUADRATIC, SHEAR] {
            let r = check_admissibility(&phase(src, 1.0), &u_prime(), 1e-12).unwrap();
            assert!(r.pass, "{src}: {:?}", r.failing);
        }
        let r = check_admissibility(&phase(BAD, 1.0), &u_prime(), 1e-12).unwrap();
        assert!(!r.pass);
        assert!(r.failing.contains(&"d/dxn".to_string()));
        assert!(r.max_residual >= 0.1);
    }

    #[test]
    fn euler_identity_and_boundary_vanishing() {
        let samples = SampleSet::random(&sp(), 1.0, 200, 12, false);
        for src in [IDENTITY, DILATION, QUADRATIC, SHEAR, BAD] {
            let psi = phase(src, 1.0);
            assert!(euler_residual(&psi, &samples).unwrap() <= 1e-10);
            assert!(phi_boundary_residual(&psi, &samples).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn kappa_only_decreases_under_refinement() {
        let psi = phase(DILATION, 1.0);
        let coarse = normal_coeffs(&psi, &psi.tangential_samples(11), 1e-10).unwrap().kappa;
        let fine = normal_coeffs(&psi, &psi.tangential_samples(41), 1e-10).unwrap().kappa;
        assert!(fine <= coarse);
    }

    #[test]
    fn rescaled_phase_constants_are_rung_independent() {
        let ladder = signed_ladder(0.25, 2.0, 50.0);
        let rungs = geometric(1.0, 2.0, 256.0);
        for src in [DILATION, QUADRATIC] {
            let psi = phase(src, 1.0);
            for x1 in [-1.0, 0.0, 0.6] {
                let c = rescaled_phi_constants(&psi, &[x1], &rungs, &ladder, 0.5, 3).unwrap();
                // Rungs whose localized region contains |t| = 1 in its interior.
                for row in &c {
                    let live: Vec<f64> = row.iter().zip(&rungs).filter(|(_, r)| 0.5 * **r > 1.0).map(|(v, _)| *v).collect();
                    let max = live.iter().cloned().fold(0.0, f64::max);
                    let min = live.iter().cloned().fold(f64::INFINITY, f64::min);
                    assert!(max.is_finite());
                    if max > 0.0 {
                        assert!(max <= 2.0 * min, "{src} {x1}: {row:?}");
                    }
                }
            }
        }
    }
}
