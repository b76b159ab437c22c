//! Boundary-preserving homogeneous symplectomorphisms in collar coordinates.
//!
//! A map `chi: (y', y_n, eta', eta_n) -> (x', x_n, xi', xi_n)` is given by
//! component expressions; the source variables occupy the `x`/`k` slots of
//! the [`Space`] (the grammar accepts `y*`/`e*` as aliases).
//!
//! Jacobians use the fixed ordering
//! rows `(x', xi', x_n, xi_n)` and columns `(y', eta', y_n, eta_n)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse, Compiled, Expr, Space, Var};

/// Tolerance for `x_n(y', 0, eta) = 0`.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Tolerance for structural zeros and fiber linearity.
pub const STRUCTURE_TOL: f64 = 1e-10;
/// Tolerance for determinant and normal-product identities.
pub const DET_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SymplectoMap {
    pub space: Space,
    /// `x_1 .. x_n` as functions of `(y, eta)`.
    pub x: Vec<Expr>,
    /// `xi_1 .. xi_n` as functions of `(y, eta)`.
    pub xi: Vec<Expr>,
    pub half_width: f64,
    jac: Compiled,
    values: Compiled,
}

/// Sample points `(y, eta)` as slot vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
}

impl SampleSet {
    /// Seeded samples with `y' in [-1, 1]^{n-1}`, `|y_n| <= half_width`
    /// (or `y_n = 0` when `boundary`), and `eta` of length in `[0.5, 4]`.
    pub fn random(space: &Space, half_width: f64, count: usize, seed: u64, boundary: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        for _ in 0..count {
            let mut p = space.zero_point();
            for i in 0..space.tangential() {
                p[space.x(i).0 as usize] = rng.gen_range(-1.0..=1.0);
            }
            if !boundary {
                p[space.xn().0 as usize] = rng.gen_range(-half_width..=half_width);
            }
            let dir: Vec<f64> = loop {
                let v: Vec<f64> = (0..space.n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if r > 0.1 && r <= 1.0 {
                    break v.into_iter().map(|c| c / r).collect();
                }
            };
            let radius = rng.gen_range(0.5..=4.0);
            for (v, c) in space.ks().into_iter().zip(dir) {
                p[v.0 as usize] = radius * c;
            }
            points.push(p);
        }
        SampleSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Source variables in Jacobian column order `(y', eta', y_n, eta_n)`.
pub fn column_vars(space: &Space) -> Vec<Var> {
    let nt = space.tangential();
    let mut v: Vec<Var> = (0..nt).map(|i| space.x(i)).collect();
    v.extend((0..nt).map(|i| space.k(i)));
    v.push(space.xn());
    v.push(space.kn());
    v
}

/// Standard symplectic matrix in the ordering `(q', p', q_n, p_n)`.
pub fn omega(n: usize) -> DMatrix<f64> {
    let nt = n - 1;
    let mut o = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..nt {
        o[(i, nt + i)] = 1.0;
        o[(nt + i, i)] = -1.0;
    }
    o[(2 * nt, 2 * nt + 1)] = 1.0;
    o[(2 * nt + 1, 2 * nt)] = -1.0;
    o
}

impl SymplectoMap {
    pub fn new(space: Space, x: Vec<Expr>, xi: Vec<Expr>, half_width: f64) -> Result<Self> {
        if x.len() != space.n || xi.len() != space.n {
            return Err(Error::Validation(format!("map needs {} base and {} fiber components", space.n, space.n)));
        }
        if half_width <= 0.0 {
            return Err(Error::Validation("collar half-width must be positive".into()));
        }
        let rows = Self::row_exprs(&space, &x, &xi);
        let cols = column_vars(&space);
        let mut entries = Vec::with_capacity(rows.len() * cols.len());
        for r in &rows {
            for &c in &cols {
                let d = r.diff(c);
                d.check_budget()?;
                entries.push(d);
            }
        }
        let jac = Compiled::many(&entries);
        let values = Compiled::many(&rows);
        Ok(SymplectoMap { space, x, xi, half_width, jac, values })
    }

    /// Parses components `x_1 .. x_n, xi_1 .. xi_n` written in `(y, e)`.
    pub fn parse(space: Space, x: &[&str], xi: &[&str], half_width: f64) -> Result<Self> {
        let px = x.iter().map(|s| parse(&space, s)).collect::<Result<Vec<_>>>()?;
        let pxi = xi.iter().map(|s| parse(&space, s)).collect::<Result<Vec<_>>>()?;
        SymplectoMap::new(space, px, pxi, half_width)
    }

    fn row_exprs(space: &Space, x: &[Expr], xi: &[Expr]) -> Vec<Expr> {
        let nt = space.tangential();
        let mut rows: Vec<Expr> = x[..nt].to_vec();
        rows.extend(xi[..nt].iter().cloned());
        rows.push(x[nt].clone());
        rows.push(xi[nt].clone());
        rows
    }

    /// Image of `p`, in row order `(x', xi', x_n, xi_n)`.
    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 2 * self.space.n];
        self.values.eval_all(p, &mut Vec::new(), &mut out)?;
        Ok(out)
    }

    /// Image of `p` as a slot vector `(x, xi)` of the space.
    pub fn apply_slots(&self, p: &[f64]) -> Result<Vec<f64>> {
        let sp = self.space;
        let nt = sp.tangential();
        let v = self.apply(p)?;
        let mut q = sp.zero_point();
        for i in 0..nt {
            q[sp.x(i).0 as usize] = v[i];
            q[sp.k(i).0 as usize] = v[nt + i];
        }
        q[sp.xn().0 as usize] = v[2 * nt];
        q[sp.kn().0 as usize] = v[2 * nt + 1];
        Ok(q)
    }

    /// Jacobian at `p`; rows `(x', xi', x_n, xi_n)`, columns `(y', eta', y_n, eta_n)`.
    pub fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let m = 2 * self.space.n;
        let mut out = vec![0.0; m * m];
        self.jac.eval_all(p, &mut Vec::new(), &mut out)?;
        Ok(DMatrix::from_row_slice(m, m, &out))
    }

    /// Worst relative deviation from positive homogeneity (degree 1 for the
    /// fiber components, 0 for the base components) over `samples` and
    /// `lam in {2, 10, 100}`.
    pub fn homogeneity_residual(&self, samples: &SampleSet) -> Result<f64> {
        let sp = self.space;
        let nt = sp.tangential();
        let mut worst: f64 = 0.0;
        for p in &samples.points {
            let base = self.apply(p)?;
            for lam in [2.0, 10.0, 100.0] {
                let mut q = p.clone();
                for v in sp.ks() {
                    q[v.0 as usize] *= lam;
                }
                let img = self.apply(&q)?;
                for (i, (a, b)) in base.iter().zip(&img).enumerate() {
                    let fiber = (nt..2 * nt).contains(&i) || i == 2 * nt + 1;
                    let want = if fiber { lam * a } else { *a };
                    worst = worst.max((b - want).abs() / want.abs().max(1.0));
                }
            }
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymplecticReport {
    /// `max ||J^T Omega J - Omega||_max` over the samples.
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    /// `max |det J - 1|` over the samples.
    pub max_det_residual: f64,
    pub samples: usize,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_symplectic(chi: &SymplectoMap, samples: &SampleSet, tol: f64) -> Result<SymplecticReport> {
    let o = omega(chi.space.n);
    let mut worst = (0.0f64, 0usize);
    let mut det_worst: f64 = 0.0;
    for (i, p) in samples.points.iter().enumerate() {
        let j = chi.jacobian(p)?;
        let r = (j.transpose() * &o * &j - &o).amax();
        if r > worst.0 {
            worst = (r, i);
        }
        det_worst = det_worst.max((j.determinant() - 1.0).abs());
    }
    Ok(SymplecticReport {
        max_residual: worst.0,
        worst_point: samples.points.get(worst.1).cloned().unwrap_or_default(),
        max_det_residual: det_worst,
        samples: samples.len(),
        tol,
        pass: worst.0 <= tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPreservingReport {
    /// `sup |x_n(y', 0, eta)|`.
    pub sup: f64,
    pub worst_point: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

/// `sup |x_n(y', 0, eta)|` over the samples (their `y_n` entries are forced
/// to zero).
pub fn check_boundary_preserving(chi: &SymplectoMap, samples: &SampleSet) -> Result<BoundaryPreservingReport> {
    let sp = chi.space;
    let tape = chi.x[sp.n - 1].compile();
    let mut worst = (0.0f64, 0usize);
    for (i, p) in samples.points.iter().enumerate() {
        let mut q = p.clone();
        q[sp.xn().0 as usize] = 0.0;
        let v = tape.eval(&q)?.abs();
        if v > worst.0 {
            worst = (v, i);
        }
    }
    let mut wp = samples.points.get(worst.1).cloned().unwrap_or_default();
    if !wp.is_empty() {
        wp[sp.xn().0 as usize] = 0.0;
    }
    Ok(BoundaryPreservingReport { sup: worst.0, worst_point: wp, tol: BOUNDARY_TOL, pass: worst.0 <= BOUNDARY_TOL })
}

/// Induced boundary map `chi_d(y', eta') = (b(y'), M(y') eta')`.
#[derive(Clone, Debug)]
pub struct BoundaryMap {
    pub space: Space,
    /// `b_i(y')`.
    pub b: Vec<Expr>,
    /// `M_{ij}(y') = d xi'_i / d eta'_j` at the boundary.
    pub cotangent: Vec<Vec<Expr>>,
    /// `max |d_{eta_n} x'|, |d_{eta_n} xi'|` at `y_n = 0`.
    pub normal_independence_residual: f64,
    /// `max |d_{eta'} x'|` at `y_n = 0`.
    pub base_fiber_residual: f64,
    /// `max |xi' - M eta'|` at `y_n = 0`.
    pub linearity_residual: f64,
    /// `max |det J(chi_d) - 1|`.
    pub det_residual: f64,
}

impl BoundaryMap {
    /// `(b(y'), M(y') eta')` for tangential `y'`, `eta'`.
    pub fn apply(&self, y: &[f64], eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let sp = self.space;
        let mut p = sp.zero_point();
        for (i, v) in y.iter().enumerate() {
            p[sp.x(i).0 as usize] = *v;
        }
        let b = self.b.iter().map(|e| e.eval(&p)).collect::<Result<Vec<_>>>()?;
        let mut xi = vec![0.0; eta.len()];
        for (i, row) in self.cotangent.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                xi[i] += e.eval(&p)? * eta[j];
            }
        }
        Ok((b, xi))
    }

    /// The cotangent matrix `M(y')`.
    pub fn matrix(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let sp = self.space;
        let nt = sp.tangential();
        let mut p = sp.zero_point();
        for (i, v) in y.iter().enumerate() {
            p[sp.x(i).0 as usize] = *v;
        }
        let mut m = DMatrix::zeros(nt, nt);
        for i in 0..nt {
            for j in 0..nt {
                m[(i, j)] = self.cotangent[i][j].eval(&p)?;
            }
        }
        Ok(m)
    }
}

/// Extracts `chi_d` from the boundary values of `chi`, verifying that it is
/// independent of `eta_n`, that `x'` does not depend on `eta'`, and that
/// `xi'` is linear in `eta'`.
pub fn induced_boundary_map(chi: &SymplectoMap, samples: &SampleSet) -> Result<BoundaryMap> {
    let bp = check_boundary_preserving(chi, samples)?;
    if !bp.pass {
        return Err(Error::NotBoundaryPreserving(bp.sup));
    }
    let sp = chi.space;
    let nt = sp.tangential();
    let at_boundary = [(sp.xn(), Expr::zero())];
    let xb: Vec<Expr> = chi.x[..nt].iter().map(|e| e.subst(&at_boundary)).collect();
    let xib: Vec<Expr> = chi.xi[..nt].iter().map(|e| e.subst(&at_boundary)).collect();
    // The base map and the cotangent matrix are read off at eta = (0, .., 0, 1).
    let mut frozen: Vec<(Var, Expr)> = (0..nt).map(|i| (sp.k(i), Expr::zero())).collect();
    frozen.push((sp.kn(), Expr::one()));
    let b: Vec<Expr> = xb.iter().map(|e| e.subst(&frozen)).collect();
    let m_full: Vec<Vec<Expr>> = xib.iter().map(|e| (0..nt).map(|j| e.diff(sp.k(j))).collect()).collect();
    let cotangent: Vec<Vec<Expr>> = m_full.iter().map(|row| row.iter().map(|e| e.subst(&frozen)).collect()).collect();

    let mut normal_res: f64 = 0.0;
    let mut base_res: f64 = 0.0;
    let mut lin_res: f64 = 0.0;
    let mut det_res: f64 = 0.0;
    for p in &samples.points {
        let mut q = p.clone();
        q[sp.xn().0 as usize] = 0.0;
        for e in xb.iter().chain(&xib) {
            normal_res = normal_res.max(e.diff(sp.kn()).eval(&q)?.abs());
        }
        for e in &xb {
            for j in 0..nt {
                base_res = base_res.max(e.diff(sp.k(j)).eval(&q)?.abs());
            }
        }
        let eta: Vec<f64> = (0..nt).map(|i| q[sp.k(i).0 as usize]).collect();
        for (i, e) in xib.iter().enumerate() {
            let mut lin = 0.0;
            for (j, eta_j) in eta.iter().enumerate() {
                lin += cotangent[i][j].eval(&q)? * eta_j;
            }
            lin_res = lin_res.max((e.eval(&q)? - lin).abs() / lin.abs().max(1.0));
        }
        // Jacobian of (b, M eta') with respect to (y', eta').
        let mut jm = DMatrix::zeros(2 * nt, 2 * nt);
        for i in 0..nt {
            for j in 0..nt {
                jm[(i, j)] = xb[i].diff(sp.x(j)).eval(&q)?;
                jm[(i, nt + j)] = xb[i].diff(sp.k(j)).eval(&q)?;
                jm[(nt + i, j)] = xib[i].diff(sp.x(j)).eval(&q)?;
                jm[(nt + i, nt + j)] = xib[i].diff(sp.k(j)).eval(&q)?;
            }
        }
        det_res = det_res.max((jm.determinant() - 1.0).abs());
    }
    if normal_res > STRUCTURE_TOL || base_res > STRUCTURE_TOL || lin_res > STRUCTURE_TOL {
        return Err(Error::NotFiberLinear(normal_res.max(base_res).max(lin_res)));
    }
    Ok(BoundaryMap {
        space: sp,
        b,
        cotangent,
        normal_independence_residual: normal_res,
        base_fiber_residual: base_res,
        linearity_residual: lin_res,
        det_residual: det_res,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianStructureReport {
    /// Largest structural-zero entry at `y_n = 0`.
    pub zero_block_max: f64,
    /// `max |det J(chi_d) - 1|`.
    pub boundary_det_residual: f64,
    /// `max |d_{y_n} x_n * d_{eta_n} xi_n - 1|` at `y_n = 0`.
    pub normal_product_residual: f64,
    /// `min |d_{y_n} x_n|` over the collar samples.
    pub min_normal_stretch: f64,
    pub pass: bool,
}

/// Structure of the Jacobian at the boundary: the zero entries in the
/// `eta_n` column (rows `x'`, `xi'`, `x_n`) and in the `x_n` row (columns
/// `y'`, `eta'`), unimodularity of the boundary block, and
/// `d_{y_n} x_n * d_{eta_n} xi_n = 1`.
pub fn check_jacobian_structure(chi: &SymplectoMap, boundary: &SampleSet, collar: &SampleSet) -> Result<JacobianStructureReport> {
    let bp = check_boundary_preserving(chi, boundary)?;
    if !bp.pass {
        return Err(Error::NotBoundaryPreserving(bp.sup));
    }
    let sp = chi.space;
    let nt = sp.tangential();
    let (row_xn, col_yn, col_etan) = (2 * nt, 2 * nt, 2 * nt + 1);
    let mut zero_max: f64 = 0.0;
    let mut det_res: f64 = 0.0;
    let mut prod_res: f64 = 0.0;
    for p in &boundary.points {
        let mut q = p.clone();
        q[sp.xn().0 as usize] = 0.0;
        let j = chi.jacobian(&q)?;
        for r in 0..=row_xn {
            zero_max = zero_max.max(j[(r, col_etan)].abs());
        }
        for c in 0..2 * nt {
            zero_max = zero_max.max(j[(row_xn, c)].abs());
        }
        let block = j.view((0, 0), (2 * nt, 2 * nt)).into_owned();
        let det = if nt == 0 { 1.0 } else { block.determinant() };
        det_res = det_res.max((det - 1.0).abs());
        prod_res = prod_res.max((j[(row_xn, col_yn)] * j[(row_xn + 1, col_etan)] - 1.0).abs());
    }
    let mut min_stretch = f64::INFINITY;
    for p in &collar.points {
        let j = chi.jacobian(p)?;
        min_stretch = min_stretch.min(j[(row_xn, col_yn)].abs());
    }
    Ok(JacobianStructureReport {
        zero_block_max: zero_max,
        boundary_det_residual: det_res,
        normal_product_residual: prod_res,
        min_normal_stretch: min_stretch,
        pass: zero_max <= STRUCTURE_TOL && det_res <= DET_TOL && prod_res <= DET_TOL,
    })
}
