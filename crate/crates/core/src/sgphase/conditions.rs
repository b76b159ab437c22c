use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phase::{build_star_phi, slot, RegularizedPhase, SgGrid, ORDER_BOUND};
use crate::error::{Error, Result};
use crate::genphase::GeneratingPhase;
use crate::numeric::{bracket, geometric, linspace};

/// Pass margins: lower constants must reach `lower`, upper constants must
/// stay below `upper`, and the uniformity spread below `ratio`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub lower: f64,
    pub upper: f64,
    pub ratio: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins { lower: 1e-2, upper: 1e4, ratio: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P1Entry {
    pub a: u32,
    pub alpha: u32,
    pub constant: f64,
    /// `(t, tau)` attaining the supremum.
    pub worst: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2Bounds {
    /// `inf <d_t Phi> / <tau>`.
    pub c_t: f64,
    /// `sup <d_t Phi> / <tau>`.
    pub big_c_t: f64,
    /// `inf <d_tau Phi> / <t>`.
    pub c_tau: f64,
    /// `sup <d_tau Phi> / <t>`.
    pub big_c_tau: f64,
    pub worst_lower: (f64, f64),
}

impl P2Bounds {
    pub fn lower(&self) -> f64 {
        self.c_t.min(self.c_tau)
    }

    pub fn upper(&self) -> f64 {
        self.big_c_t.max(self.big_c_tau)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P3Bound {
    /// `inf |d_t d_tau Phi|`.
    pub epsilon: f64,
    pub sign: f64,
    pub sign_change: bool,
    pub worst: (f64, f64),
}

/// Grid constants of one frozen phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConstants {
    pub x_tangential: Vec<f64>,
    pub xi_tangential: Vec<f64>,
    pub p1: Vec<P1Entry>,
    pub p2: P2Bounds,
    pub p3: P3Bound,
    pub grid_points: usize,
    pub grid_hash: String,
    pub pass: bool,
}

impl PhaseConstants {
    pub fn p1_max(&self) -> f64 {
        self.p1.iter().map(|e| e.constant).fold(0.0, f64::max)
    }

    /// Every constant by name, for spread comparisons.
    pub fn named(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> = self.p1.iter().map(|e| (format!("C{}{}", e.a, e.alpha), e.constant)).collect();
        m.insert("P2.c_t".into(), self.p2.c_t);
        m.insert("P2.C_t".into(), self.p2.big_c_t);
        m.insert("P2.c_tau".into(), self.p2.c_tau);
        m.insert("P2.C_tau".into(), self.p2.big_c_tau);
        m.insert("P3.eps".into(), self.p3.epsilon);
        m
    }
}

fn points(grid: &SgGrid) -> impl Iterator<Item = (f64, f64)> + '_ {
    grid.t.iter().flat_map(move |&t| grid.tau.iter().map(move |&tau| (t, tau)))
}

fn p1_from(rows: &[Vec<f64>], grid: &SgGrid) -> Vec<P1Entry> {
    let mut out = Vec::new();
    for a in 0..=ORDER_BOUND {
        for alpha in 0..=ORDER_BOUND {
            let mut e = P1Entry { a, alpha, constant: 0.0, worst: (0.0, 0.0) };
            for (row, (t, tau)) in rows.iter().zip(points(grid)) {
                let w = row[slot(a, alpha)].abs() * bracket(t).powi(a as i32 - 1) * bracket(tau).powi(alpha as i32 - 1);
                if w > e.constant {
                    e.constant = w;
                    e.worst = (t, tau);
                }
            }
            out.push(e);
        }
    }
    out
}

fn p2_from(rows: &[Vec<f64>], grid: &SgGrid) -> P2Bounds {
    let mut b = P2Bounds { c_t: f64::INFINITY, big_c_t: 0.0, c_tau: f64::INFINITY, big_c_tau: 0.0, worst_lower: (0.0, 0.0) };
    for (row, (t, tau)) in rows.iter().zip(points(grid)) {
        let qt = bracket(row[slot(1, 0)]) / bracket(tau);
        let qtau = bracket(row[slot(0, 1)]) / bracket(t);
        if qt.min(qtau) < b.lower() {
            b.worst_lower = (t, tau);
        }
        b.c_t = b.c_t.min(qt);
        b.big_c_t = b.big_c_t.max(qt);
        b.c_tau = b.c_tau.min(qtau);
        b.big_c_tau = b.big_c_tau.max(qtau);
    }
    b
}

fn p3_from(rows: &[Vec<f64>], grid: &SgGrid) -> P3Bound {
    let mut b = P3Bound { epsilon: f64::INFINITY, sign: 1.0, sign_change: false, worst: (0.0, 0.0) };
    let (mut pos, mut neg) = (false, false);
    for (row, (t, tau)) in rows.iter().zip(points(grid)) {
        let v = row[slot(1, 1)];
        pos |= v > 0.0;
        neg |= v < 0.0;
        if v.abs() < b.epsilon {
            b.epsilon = v.abs();
            b.worst = (t, tau);
        }
    }
    b.sign_change = pos && neg;
    b.sign = if neg && !pos { -1.0 } else { 1.0 };
    b
}

/// `C_{a alpha} = sup |d^a_t d^alpha_tau *Phi| <t>^{a-1} <tau>^{alpha-1}` for
/// `a, alpha <= 3`.
pub fn verify_p1(phase: &RegularizedPhase, grid: &SgGrid) -> Result<Vec<P1Entry>> {
    Ok(p1_from(&phase.sweep(grid)?, grid))
}

/// Two-sided bounds of `<d_t Phi>/<tau>` and `<d_tau Phi>/<t>`.
pub fn verify_p2(phase: &RegularizedPhase, grid: &SgGrid) -> Result<P2Bounds> {
    Ok(p2_from(&phase.sweep(grid)?, grid))
}

/// `eps = inf |d_t d_tau *Phi|`; a sign change is an error.
pub fn verify_p3(phase: &RegularizedPhase, grid: &SgGrid) -> Result<P3Bound> {
    let b = p3_from(&phase.sweep(grid)?, grid);
    if b.sign_change {
        return Err(Error::SignChange);
    }
    Ok(b)
}

/// All three conditions from one sweep.
pub fn phase_constants(phase: &RegularizedPhase, grid: &SgGrid, margins: &Margins) -> Result<PhaseConstants> {
    let rows = phase.sweep(grid)?;
    let p1 = p1_from(&rows, grid);
    let p2 = p2_from(&rows, grid);
    let p3 = p3_from(&rows, grid);
    let pass = p1.iter().all(|e| e.constant.is_finite() && e.constant <= margins.upper)
        && p2.lower() >= margins.lower
        && p2.upper() <= margins.upper
        && !p3.sign_change
        && p3.epsilon >= margins.lower;
    Ok(PhaseConstants {
        x_tangential: phase.x_tangential.clone(),
        xi_tangential: phase.xi_tangential.clone(),
        p1,
        p2,
        p3,
        grid_points: grid.len(),
        grid_hash: grid.hash(),
        pass,
    })
}

/// Base points `(x', xi')` for the uniformity sweep: `x_count` points per
/// tangential axis on `[-1, 1]` and `xi' = sqrt(<xi'>^2 - 1) e_1` for each
/// rung `<xi'>` in `rungs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseSamples {
    pub x_count: usize,
    pub rungs: Vec<f64>,
}

impl Default for BaseSamples {
    fn default() -> Self {
        BaseSamples { x_count: 9, rungs: geometric(1.0, 2.0, 256.0) }
    }
}

impl BaseSamples {
    pub fn points(&self, nt: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut xs = vec![Vec::new()];
        for _ in 0..nt {
            xs = xs
                .into_iter()
                .flat_map(|p: Vec<f64>| {
                    linspace(-1.0, 1.0, self.x_count).into_iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        let mut out = Vec::new();
        for x in &xs {
            for &r in &self.rungs {
                let mut xi = vec![0.0; nt];
                if nt > 0 {
                    xi[0] = (r * r - 1.0).max(0.0).sqrt();
                }
                out.push((x.clone(), xi));
            }
        }
        out
    }
}

/// Upper constants bound a quantity from above (`C_{a alpha}`, `C`); lower
/// constants from below (`c`, `eps`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Upper,
    Lower,
}

impl Bound {
    pub fn of(name: &str) -> Bound {
        match name {
            "P2.c_t" | "P2.c_tau" | "P3.eps" => Bound::Lower,
            _ => Bound::Upper,
        }
    }
}

/// How a constant varies over the base points.
///
/// Lower constants compare the extreme values over all base points,
/// `max / min`. Upper constants compare the worst value over all base
/// points with the worst value on the reference rungs (the lower half of the
/// ladder): the pinned `(t, tau)` grid only sees a truncated part of the
/// cutoff transition at large `<xi'>`, so smaller grid suprema there do not
/// indicate smaller constants, while any growth does.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub bound: Bound,
    pub min: f64,
    pub max: f64,
    /// Worst value on the reference rungs.
    pub base: f64,
    pub ratio: f64,
}

/// Values at or below this count as exact zeros when forming spreads.
pub const SPREAD_ZERO: f64 = 1e-12;

fn zero_safe_ratio(num: f64, den: f64) -> f64 {
    if num <= SPREAD_ZERO {
        1.0
    } else if den <= SPREAD_ZERO {
        f64::INFINITY
    } else {
        num / den
    }
}

impl Spread {
    fn of(bound: Bound, values: &[f64], on_base: &[bool]) -> Spread {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(0.0, f64::max);
        let base_vals = values.iter().zip(on_base).filter(|(_, b)| **b).map(|(v, _)| *v);
        let (base, ratio) = match bound {
            Bound::Lower => {
                let base = base_vals.fold(f64::INFINITY, f64::min);
                (base, zero_safe_ratio(max, min))
            }
            Bound::Upper => {
                let base = base_vals.fold(0.0, f64::max);
                (base, zero_safe_ratio(max, base))
            }
        };
        Spread { bound, min, max, base, ratio }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub k: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    pub samples: usize,
    pub spreads: BTreeMap<String, Spread>,
    pub max_ratio: f64,
    pub worst_constant: String,
    /// Base points whose own P1 to P3 check failed.
    pub failing_samples: Vec<(Vec<f64>, Vec<f64>)>,
    /// Worst case over all base points.
    pub p1_max: f64,
    pub p2_lower: f64,
    pub p2_upper: f64,
    pub p3_epsilon: f64,
    pub pass: bool,
}

/// Sweeps every base point, checks P1 to P3 there and compares each constant
/// across base points.
pub fn check_uniformity(
    psi: &GeneratingPhase,
    base: &BaseSamples,
    grid: &SgGrid,
    k: f64,
    big_k: f64,
    margins: &Margins,
) -> Result<(UniformityReport, Vec<PhaseConstants>)> {
    let nt = psi.space.tangential();
    let proto = build_star_phi(psi, &vec![0.0; nt], &vec![0.0; nt], k, big_k)?;
    let bases = base.points(nt);
    let consts: Vec<PhaseConstants> =
        bases.par_iter().map(|(x, xi)| phase_constants(&proto.at(x, xi)?, grid, margins)).collect::<Result<_>>()?;
    let mut by_name: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for c in &consts {
        for (name, v) in c.named() {
            by_name.entry(name).or_default().push(v);
        }
    }
    let reference = &base.rungs[..=base.rungs.len() / 2];
    let on_base: Vec<bool> = bases
        .iter()
        .map(|(_, xi)| {
            let r = bracket(xi.iter().map(|v| v * v).sum::<f64>().sqrt());
            reference.iter().any(|q| (r - q).abs() <= 1e-9 * q)
        })
        .collect();
    let spreads: BTreeMap<String, Spread> =
        by_name.iter().map(|(k, v)| (k.clone(), Spread::of(Bound::of(k), v, &on_base))).collect();
    let (worst_constant, max_ratio) =
        spreads.iter().fold((String::new(), 0.0f64), |acc, (k, s)| if s.ratio > acc.1 { (k.clone(), s.ratio) } else { acc });
    let failing_samples: Vec<_> = consts.iter().filter(|c| !c.pass).map(|c| (c.x_tangential.clone(), c.xi_tangential.clone())).collect();
    let report = UniformityReport {
        k,
        big_k,
        samples: consts.len(),
        max_ratio,
        worst_constant,
        p1_max: consts.iter().map(|c| c.p1_max()).fold(0.0, f64::max),
        p2_lower: consts.iter().map(|c| c.p2.lower()).fold(f64::INFINITY, f64::min),
        p2_upper: consts.iter().map(|c| c.p2.upper()).fold(0.0, f64::max),
        p3_epsilon: consts.iter().map(|c| c.p3.epsilon).fold(f64::INFINITY, f64::min),
        pass: failing_samples.is_empty() && max_ratio <= margins.ratio,
        failing_samples,
        spreads,
    };
    Ok((report, consts))
}

/// Outcome of the `(k, K)` search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub k: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    pub trials: usize,
    pub margins: Margins,
    pub grid_hash: String,
    pub uniformity: UniformityReport,
}

/// Maximum number of halvings of `k` and doublings of `K`.
pub const SEARCH_STEPS: usize = 12;

/// Searches `k = half_width/2, half_width/4, ...` and, for each `k`,
/// `K = 1, 2, 4, ...` for the first pair passing P1 to P3 and uniformity.
pub fn calibrate(psi: &GeneratingPhase, base: &BaseSamples, grid: &SgGrid, margins: &Margins) -> Result<Certificate> {
    let mut trials = 0;
    let mut k = psi.half_width / 2.0;
    for _ in 0..SEARCH_STEPS {
        let mut big_k = 1.0;
        for _ in 0..SEARCH_STEPS {
            trials += 1;
            match check_uniformity(psi, base, grid, k, big_k, margins) {
                Ok((u, _)) if u.pass => {
                    return Ok(Certificate { k, big_k, trials, margins: *margins, grid_hash: grid.hash(), uniformity: u });
                }
                Ok(_) | Err(Error::SingularLocus(_)) => {}
                Err(e) => return Err(e),
            }
            big_k *= 2.0;
        }
        k /= 2.0;
    }
    Err(Error::CalibrationExhausted(trials))
}
