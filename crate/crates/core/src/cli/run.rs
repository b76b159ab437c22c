use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::{margins_preset, CheckGroup, GridPreset, Prepared, Resolved, Scenario};
use crate::error::{Error, Result};
use crate::expr::{Compiled, Expr, Var};
use crate::genphase::{
    boundary_phase, check_admissibility, check_generating, check_nondegeneracy, euler_residual, normal_coeffs, phi_boundary_residual,
};
use crate::opsymb::{certify_symbol_orders, check_lemma_structure, transpose_check, ORDER_SLACK, LEMMA_SLACK};
use crate::oscint::{apply_normal_op, apply_truncated_op, NormalOperatorSpec, SampledFunction, SchwartzFn};
use crate::sgphase::{calibrate, check_uniformity, Certificate, Margins, UniformityReport};
use crate::symbolcls::{BsGrid, BsOrders, SymbolFn};
use crate::symplecto::{
    check_boundary_preserving, check_jacobian_structure, check_symplectic, SampleSet, BOUNDARY_TOL, DET_TOL, STRUCTURE_TOL,
};

pub const GENERATING_TOL: f64 = 1e-9;
pub const NONDEGENERACY_DELTA: f64 = 1e-3;
pub const TRANSMISSION_TOL: f64 = 1e-10;
pub const ADMISSIBILITY_TOL: f64 = 1e-12;
pub const HOMOGENEITY_TOL: f64 = 1e-12;
pub const APPLY_TOL: f64 = 1e-6;
pub const TRANSPOSE_TOL: f64 = 1e-6;
/// Calibration search budget: `K <= 16` and `k >= half_width / 32`.
pub const MAX_BIG_K: f64 = 16.0;
pub const MIN_K_FRACTION: f64 = 1.0 / 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    /// `None` for non-finite values.
    pub value: Option<f64>,
    pub target: String,
    pub pass: bool,
}

impl Metric {
    fn at_most(name: &str, value: f64, bound: f64) -> Metric {
        Metric { name: name.into(), value: finite(value), target: format!("<= {bound:e}"), pass: value <= bound }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Metric {
        Metric { name: name.into(), value: finite(value), target: format!(">= {bound:e}"), pass: value >= bound }
    }

    fn info(name: &str, value: f64) -> Metric {
        Metric { name: name.into(), value: finite(value), target: String::new(), pass: true }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// A CSV-shaped table; cells are already formatted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Table {
        Table { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }
}

pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

fn index(v: &[u32]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(":")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub group: CheckGroup,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub metrics: Vec<Metric>,
    pub tables: Vec<Table>,
    pub detail: serde_json::Value,
}

/// Build description recorded with every report. It carries no clock or
/// host data so that reports stay reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Environment {
        Environment {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenCheck {
    pub expected: String,
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub grid: String,
    pub grid_hash: String,
    pub margins: Margins,
    pub selected: Vec<CheckGroup>,
    pub expected_failures: Vec<String>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
    /// SHA-256 over everything above.
    pub report_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden: Option<GoldenCheck>,
    pub environment: Environment,
}

impl RunReport {
    /// 0 when every executed check passed (and the golden hash matched, if
    /// compared), 2 when any check hit an infrastructure error, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().any(|c| c.status == Status::Error) {
            2
        } else if self.pass {
            0
        } else {
            1
        }
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| matches!(c.status, Status::Failed | Status::Error)).map(|c| c.name.as_str()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(src: &str) -> Result<RunReport> {
        Ok(serde_json::from_str(src)?)
    }

    pub(crate) fn set_golden(&mut self, golden: Option<GoldenCheck>) {
        if let Some(g) = &golden {
            self.pass &= g.matched;
        }
        self.golden = golden;
    }
}

/// Overrides of the scenario's own settings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub groups: Option<Vec<CheckGroup>>,
    pub grid: Option<String>,
    pub margins: Option<String>,
    pub seed: Option<u64>,
}

struct Outcome {
    pass: bool,
    metrics: Vec<Metric>,
    tables: Vec<Table>,
    detail: serde_json::Value,
}

impl Outcome {
    fn new(metrics: Vec<Metric>, tables: Vec<Table>, detail: serde_json::Value) -> Outcome {
        Outcome { pass: metrics.iter().all(|m| m.pass), metrics, tables, detail }
    }
}

fn detail<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Errors that mean the object under test violates a hypothesis, as
/// opposed to the toolkit being unable to decide.
fn is_check_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NotBoundaryPreserving(_)
            | Error::NotFiberLinear(_)
            | Error::NotBoundaryFlat(_)
            | Error::SignChange
            | Error::CalibrationExhausted(_)
            | Error::SingularAtAxis(_)
            | Error::CollarExceeded { .. }
    )
}

struct Runner<'a> {
    prep: &'a Prepared,
    preset: GridPreset,
    margins: Margins,
    seed: u64,
    groups: Vec<CheckGroup>,
    results: Vec<CheckResult>,
    certificate: Option<Certificate>,
    sg_constants: Option<(f64, f64)>,
}

impl Runner<'_> {
    fn collar(&self) -> SampleSet {
        SampleSet::random(&self.prep.space, self.prep.psi.half_width, self.preset.samples, self.seed, false)
    }

    fn boundary(&self) -> SampleSet {
        SampleSet::random(&self.prep.space, self.prep.psi.half_width, self.preset.samples, self.seed.wrapping_add(1), true)
    }

    fn upstream(&self, groups: &[CheckGroup]) -> Vec<String> {
        self.results.iter().filter(|r| groups.contains(&r.group)).map(|r| r.name.clone()).collect()
    }

    fn record<F>(&mut self, name: &str, group: CheckGroup, prereqs: &[String], f: F)
    where
        F: FnOnce(&mut Self) -> Result<Outcome>,
    {
        let blocked =
            prereqs.iter().find(|p| self.results.iter().any(|r| &r.name == *p && r.status != Status::Passed)).cloned();
        let result = match blocked {
            Some(p) => CheckResult {
                name: name.into(),
                group,
                status: Status::Skipped,
                reason: Some(format!("prerequisite {p} did not pass")),
                metrics: Vec::new(),
                tables: Vec::new(),
                detail: serde_json::Value::Null,
            },
            None => match f(self) {
                Ok(o) => CheckResult {
                    name: name.into(),
                    group,
                    status: if o.pass { Status::Passed } else { Status::Failed },
                    reason: None,
                    metrics: o.metrics,
                    tables: o.tables,
                    detail: o.detail,
                },
                Err(e) => CheckResult {
                    name: name.into(),
                    group,
                    status: if is_check_failure(&e) { Status::Failed } else { Status::Error },
                    reason: Some(e.to_string()),
                    metrics: Vec::new(),
                    tables: Vec::new(),
                    detail: serde_json::Value::Null,
                },
            },
        };
        self.results.push(result);
    }

    fn has(&self, g: CheckGroup) -> bool {
        self.groups.contains(&g)
    }

    fn symplecto(&mut self) {
        let Some((chi, _)) = &self.prep.chi else { return };
        let g = CheckGroup::Symplecto;
        self.record("symplecto.symplectic", g, &[], |r| {
            let rep = check_symplectic(chi, &r.collar(), STRUCTURE_TOL)?;
            let m = vec![
                Metric::at_most("max_residual", rep.max_residual, STRUCTURE_TOL),
                Metric::at_most("max_det_residual", rep.max_det_residual, DET_TOL),
            ];
            Ok(Outcome::new(m, Vec::new(), detail(&rep)))
        });
        self.record("symplecto.boundary", g, &[], |r| {
            let rep = check_boundary_preserving(chi, &r.boundary())?;
            Ok(Outcome::new(vec![Metric::at_most("sup_boundary_xn", rep.sup, BOUNDARY_TOL)], Vec::new(), detail(&rep)))
        });
        let pre = vec!["symplecto.symplectic".to_string(), "symplecto.boundary".to_string()];
        self.record("symplecto.structure", g, &pre, |r| {
            let rep = check_jacobian_structure(chi, &r.boundary(), &r.collar())?;
            let m = vec![
                Metric::at_most("zero_block_max", rep.zero_block_max, STRUCTURE_TOL),
                Metric::at_most("boundary_det_residual", rep.boundary_det_residual, DET_TOL),
                Metric::at_most("normal_product_residual", rep.normal_product_residual, DET_TOL),
                Metric::info("min_normal_stretch", rep.min_normal_stretch),
            ];
            Ok(Outcome::new(m, Vec::new(), detail(&rep)))
        });
    }

    fn phase(&mut self) {
        let psi = &self.prep.psi;
        let g = CheckGroup::Phase;
        let xs = psi.tangential_samples(self.preset.tangential);
        self.record("genphase.boundary-phase", g, &[], |_| {
            let rep = boundary_phase(psi, &xs)?;
            let m = vec![
                Metric::at_most("normal_residual", rep.normal_residual, crate::genphase::FLAT_TOL),
                Metric::at_most("linearity_residual", rep.linearity_residual, crate::genphase::FLAT_TOL),
                Metric::at_most("phi_residual", rep.phi_residual, crate::genphase::FLAT_TOL),
            ];
            Ok(Outcome::new(m, Vec::new(), detail(&rep)))
        });
        if let Some((chi, pairing)) = &self.prep.chi {
            let pre = self.upstream(&[CheckGroup::Symplecto]);
            self.record("genphase.generating", g, &pre, |r| {
                let rep = check_generating(psi, chi, *pairing, &r.collar(), GENERATING_TOL)?;
                Ok(Outcome::new(vec![Metric::at_most("max_residual", rep.max_residual, GENERATING_TOL)], Vec::new(), detail(&rep)))
            });
        }
        let pre = vec!["genphase.boundary-phase".to_string()];
        self.record("genphase.nondegeneracy", g, &pre, |_| {
            let rep = check_nondegeneracy(psi, &xs, 11, 32, NONDEGENERACY_DELTA)?;
            Ok(Outcome::new(vec![Metric::at_least("min_mixed_derivative", rep.min, NONDEGENERACY_DELTA)], Vec::new(), detail(&rep)))
        });
        self.record("genphase.transmission", g, &pre, |r| {
            let q = normal_coeffs(psi, &xs, TRANSMISSION_TOL)?.summary();
            let adm = check_admissibility(psi, &xs, ADMISSIBILITY_TOL)?;
            let collar = r.collar();
            let mut m = vec![
                Metric::at_most("q_sum_residual", q.sum_residual, TRANSMISSION_TOL),
                Metric::at_most("q_euler_residual", q.euler_residual, TRANSMISSION_TOL),
                Metric::at_least("kappa", q.kappa, 0.0),
                Metric::at_most("admissibility_residual", adm.max_residual, ADMISSIBILITY_TOL),
                Metric::at_most("euler_residual", euler_residual(psi, &collar)?, TRANSMISSION_TOL),
                Metric::at_most("phi_boundary_residual", phi_boundary_residual(psi, &collar)?, TRANSMISSION_TOL),
            ];
            m[2].pass = !q.degenerate && q.kappa > 0.0;
            let mut t = Table::new("components", &["component", "degree", "max_residual", "pass"]);
            for (name, c) in &adm.components {
                t.push([name.clone(), num(c.degree), num(c.max_residual), c.pass.to_string()]);
            }
            Ok(Outcome::new(m, vec![t], serde_json::json!({ "normal_coeffs": q, "failing": adm.failing })))
        });
        self.record("genphase.homogeneity", g, &[], |r| {
            let sp = r.prep.space;
            let mut t = Table::new("derivatives", &["derivative", "degree", "residual"]);
            let mut worst: f64 = 0.0;
            let vars: Vec<(Var, bool)> = sp.xs().into_iter().map(|v| (v, false)).chain(sp.ks().into_iter().map(|v| (v, true))).collect();
            let mut jobs: Vec<(String, Expr, f64)> = vec![("psi".into(), psi.psi.clone(), 1.0)];
            for (i, (v, vk)) in vars.iter().enumerate() {
                let d1 = psi.psi.diff(*v);
                let deg1 = 1.0 - f64::from(u8::from(*vk));
                jobs.push((format!("d/d{}", sp.name(*v)), d1.clone(), deg1));
                for (w, wk) in &vars[i..] {
                    jobs.push((format!("d2/d{}d{}", sp.name(*v), sp.name(*w)), d1.diff(*w), deg1 - f64::from(u8::from(*wk))));
                }
            }
            for (name, e, deg) in jobs {
                let res = SymbolFn::new(sp, e, deg).homogeneity_defect(deg, 64, r.seed, 1.0)?;
                worst = worst.max(res);
                t.push([name, num(deg), num(res)]);
            }
            Ok(Outcome::new(vec![Metric::at_most("max_residual", worst, HOMOGENEITY_TOL)], vec![t], serde_json::Value::Null))
        });
    }

    fn p1_table(u: &UniformityReport) -> Table {
        let mut t = Table::new("p1", &["a", "alpha", "constant", "spread_ratio"]);
        for a in 0..=crate::sgphase::ORDER_BOUND {
            for alpha in 0..=crate::sgphase::ORDER_BOUND {
                if let Some(s) = u.spreads.get(&format!("C{a}{alpha}")) {
                    t.push([a.to_string(), alpha.to_string(), num(s.max), num(s.ratio)]);
                }
            }
        }
        t
    }

    fn spreads_table(u: &UniformityReport) -> Table {
        let mut t = Table::new("spreads", &["constant", "bound", "min", "max", "base", "ratio"]);
        for (name, s) in &u.spreads {
            t.push([name.clone(), format!("{:?}", s.bound).to_lowercase(), num(s.min), num(s.max), num(s.base), num(s.ratio)]);
        }
        t
    }

    fn uniformity_metrics(&self, u: &UniformityReport) -> Vec<Metric> {
        vec![
            Metric::at_most("p1_max", u.p1_max, self.margins.upper),
            Metric::at_least("p2_lower", u.p2_lower, self.margins.lower),
            Metric::at_most("p2_upper", u.p2_upper, self.margins.upper),
            Metric::at_least("p3_epsilon", u.p3_epsilon, self.margins.lower),
            Metric::at_most("uniformity_ratio", u.max_ratio, self.margins.ratio),
            Metric::at_most("failing_base_points", u.failing_samples.len() as f64, 0.0),
        ]
    }

    fn sgphase(&mut self) {
        let pre = self.upstream(&[CheckGroup::Symplecto, CheckGroup::Phase]);
        if self.has(CheckGroup::Calibrate) {
            self.record("sgphase.calibrate", CheckGroup::Calibrate, &pre, |r| {
                let psi = &r.prep.psi;
                let cert = calibrate(psi, &r.preset.base, &r.preset.sg, &r.margins)?;
                let mut m = vec![
                    Metric::at_least("k", cert.k, psi.half_width * MIN_K_FRACTION),
                    Metric::at_most("K", cert.big_k, MAX_BIG_K),
                    Metric::info("trials", cert.trials as f64),
                ];
                m.extend(r.uniformity_metrics(&cert.uniformity));
                let tables = vec![Self::p1_table(&cert.uniformity), Self::spreads_table(&cert.uniformity)];
                let out = Outcome::new(m, tables, detail(&cert));
                r.sg_constants = Some((cert.k, cert.big_k));
                r.certificate = Some(cert);
                Ok(out)
            });
        }
        if self.has(CheckGroup::VerifySg) {
            let mut pre = pre.clone();
            pre.extend(self.upstream(&[CheckGroup::Calibrate]));
            self.record("sgphase.verify", CheckGroup::VerifySg, &pre, |r| {
                let psi = &r.prep.psi;
                let (k, big_k) = match r.sg_constants {
                    Some(c) => c,
                    None => {
                        let cert = calibrate(psi, &r.preset.base, &r.preset.sg, &r.margins)?;
                        (cert.k, cert.big_k)
                    }
                };
                let (u, consts) = check_uniformity(psi, &r.preset.base, &r.preset.sg, k, big_k, &r.margins)?;
                let mut m = vec![Metric::info("k", k), Metric::info("K", big_k)];
                m.extend(r.uniformity_metrics(&u));
                let mut base = Table::new("base_points", &["x", "xi", "p1_max", "p2_lower", "p2_upper", "p3_epsilon", "pass"]);
                for c in &consts {
                    base.push([
                        c.x_tangential.iter().map(|v| num(*v)).collect::<Vec<_>>().join(":"),
                        c.xi_tangential.iter().map(|v| num(*v)).collect::<Vec<_>>().join(":"),
                        num(c.p1_max()),
                        num(c.p2.lower()),
                        num(c.p2.upper()),
                        num(c.p3.epsilon),
                        c.pass.to_string(),
                    ]);
                }
                let tables = vec![Self::p1_table(&u), Self::spreads_table(&u), base];
                Ok(Outcome::new(m, tables, detail(&u)))
            });
        }
    }

    fn schwartz(&self) -> Vec<SchwartzFn> {
        self.prep
            .functions
            .iter()
            .filter_map(|(_, f)| match f {
                Resolved::Schwartz(u) => Some(u.clone()),
                Resolved::HalfLine(_) => None,
            })
            .collect()
    }

    fn apply(&mut self) {
        let pre = self.upstream(&[CheckGroup::Symplecto, CheckGroup::Phase, CheckGroup::Calibrate, CheckGroup::VerifySg]);
        self.record("oscint.apply", CheckGroup::Apply, &pre, |r| {
            let op = &r.prep.operator;
            let oracle = composition_oracle(op)?;
            let mut tables = Vec::new();
            let (mut worst_dev, mut worst_err): (f64, f64) = (0.0, 0.0);
            for (name, f) in &r.prep.functions {
                let (out, dev): (SampledFunction, Option<f64>) = match f {
                    Resolved::Schwartz(u) => {
                        let out = apply_normal_op(op, u, &r.preset.apply_grid)?;
                        let dev = oracle.as_ref().map(|o| out.max_deviation(|x| u.value(o(x)).unwrap_or(f64::NAN)));
                        (out, dev)
                    }
                    Resolved::HalfLine(u) => {
                        let out = apply_truncated_op(op, u, &r.preset.half_line_grid)?;
                        let dev = oracle.as_ref().map(|o| out.max_deviation(|x| u.value(o(x)).unwrap_or(f64::NAN)));
                        (out, dev)
                    }
                };
                if let Some(d) = dev {
                    worst_dev = if d.is_nan() { f64::INFINITY } else { worst_dev.max(d) };
                }
                worst_err = worst_err.max(out.max_error());
                let mut t = Table::new(&format!("apply-{name}"), &["x_n", "re", "im", "err_est"]);
                for ((x, v), e) in out.x_normal.iter().zip(&out.values).zip(&out.errors) {
                    t.push([num(*x), num(v.re), num(v.im), num(*e)]);
                }
                tables.push(t);
            }
            let mut m = vec![Metric::at_most("max_error_estimate", worst_err, APPLY_TOL)];
            if oracle.is_some() {
                m.push(Metric::at_most("max_oracle_deviation", worst_dev, APPLY_TOL));
            }
            Ok(Outcome::new(m, tables, serde_json::json!({ "composition_oracle": oracle.is_some() })))
        });
    }

    fn opsymb(&mut self) {
        let pre = self.upstream(&[CheckGroup::Symplecto, CheckGroup::Phase, CheckGroup::Calibrate, CheckGroup::VerifySg, CheckGroup::Apply]);
        let g = CheckGroup::Opsymb;
        self.record("opsymb.orders", g, &pre, |r| {
            let fns = r.schwartz();
            let (sweep, fits) = certify_symbol_orders(&r.prep.operator, &fns, 2, &r.preset.family)?;
            let excess = fits.iter().filter_map(|f| f.slope().map(|s| s - f.target)).fold(f64::NEG_INFINITY, f64::max);
            let failing = fits.iter().filter(|f| !f.pass).count();
            let m = vec![
                Metric::info("fits", fits.len() as f64),
                Metric::at_most("worst_slope_excess", excess.max(-1e300), ORDER_SLACK),
                Metric::at_most("failing_fits", failing as f64, 0.0),
                Metric::info("max_quadrature_error", sweep.max_error()),
            ];
            let mut ft = Table::new("fits", &["alpha", "beta", "l", "s", "function", "slope", "target", "pass"]);
            let mut rt = Table::new("rungs", &["alpha", "beta", "l", "s", "function", "rung", "seminorm"]);
            for f in &fits {
                let slope = f.slope().map(num).unwrap_or_else(|| "vanishing".into());
                ft.push([index(&f.alpha), index(&f.beta), f.l.to_string(), f.s.to_string(), f.function.clone(), slope, num(f.target), f.pass.to_string()]);
                for (rung, v) in f.rungs.iter().zip(&f.seminorms) {
                    rt.push([index(&f.alpha), index(&f.beta), f.l.to_string(), f.s.to_string(), f.function.clone(), num(*rung), num(*v)]);
                }
            }
            Ok(Outcome::new(m, vec![ft, rt], detail(&fits)))
        });
        if let Some(structure) = &self.prep.structure {
            self.record("opsymb.structure", g, &pre, |_| {
                let rep = check_lemma_structure(structure, &BsGrid::standard(), BsOrders::up_to(1))?;
                let m = vec![
                    Metric::at_most("xi_derivative_excess", rep.xi_derivative.worst_excess, LEMMA_SLACK),
                    Metric::at_most("xi_derivative_normal_excess", rep.xi_derivative.worst_normal_excess, LEMMA_SLACK),
                    Metric::at_most("x_derivative_excess", rep.x_derivative.worst_excess, LEMMA_SLACK),
                    Metric::at_most("x_derivative_normal_excess", rep.x_derivative.worst_normal_excess, LEMMA_SLACK),
                ];
                let mut t = Table::new("rows", &["derivative", "alpha", "beta", "gamma", "delta", "slope", "target", "normal_slope", "normal_target", "pass"]);
                for (label, bs) in [("xi", &rep.xi_derivative), ("x", &rep.x_derivative)] {
                    for row in &bs.rows {
                        let s = |f: &crate::numeric::PowerFit| f.slope.map(num).unwrap_or_else(|| "vanishing".into());
                        t.push([
                            label.to_string(),
                            index(&row.alpha),
                            index(&row.beta),
                            row.gamma.to_string(),
                            row.delta.to_string(),
                            s(&row.fit),
                            num(row.target),
                            s(&row.normal_fit),
                            num(row.normal_target),
                            row.pass.to_string(),
                        ]);
                    }
                }
                Ok(Outcome::new(m, vec![t], serde_json::Value::Null))
            });
        }
        self.record("opsymb.transpose", g, &pre, |r| {
            let fns = r.schwartz();
            if fns.is_empty() {
                return Err(Error::Validation("transpose check needs a Schwartz test function".into()));
            }
            let (u, v) = (&fns[1 % fns.len()], &fns[3 % fns.len()]);
            let rep = transpose_check(&r.prep.operator, u, v, TRANSPOSE_TOL)?;
            Ok(Outcome::new(vec![Metric::at_most("residual", rep.residual, TRANSPOSE_TOL)], Vec::new(), detail(&rep)))
        });
    }
}

type Oracle = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// For a unit amplitude and a phase linear in `xi_n`, `A_n u = u o F` with
/// `F = d phi / d xi_n`. Returns `F` in that case.
fn composition_oracle(op: &NormalOperatorSpec) -> Result<Option<Oracle>> {
    let a = &op.amplitude;
    let unit = a.re.as_const() == Some(1.0) && a.im.as_ref().map_or(true, |e| e.is_zero());
    if !unit {
        return Ok(None);
    }
    let sp = op.psi.space;
    let mut base = sp.zero_point();
    for i in 0..sp.tangential() {
        base[sp.x(i).0 as usize] = op.x_tangential[i];
        base[sp.k(i).0 as usize] = op.xi_tangential[i];
    }
    let d1 = op.psi.phi.diff(sp.kn());
    let d2 = Compiled::new(&d1.diff(sp.kn()));
    let (xn, kn) = (sp.xn().0 as usize, sp.kn().0 as usize);
    for x in crate::numeric::linspace(-3.0, 3.0, 13) {
        for k in [-7.0, -1.0, 0.5, 3.0] {
            let mut p = base.clone();
            p[xn] = x;
            p[kn] = k;
            if d2.eval(&p)? != 0.0 {
                return Ok(None);
            }
        }
    }
    let tape = Compiled::new(&d1);
    Ok(Some(Box::new(move |x| {
        let mut p = base.clone();
        p[xn] = x;
        p[kn] = 1.0;
        tape.eval(&p).unwrap_or(f64::NAN)
    })))
}

#[derive(Serialize)]
struct Hashed<'a> {
    scenario: &'a str,
    seed: u64,
    grid: &'a str,
    grid_hash: &'a str,
    margins: &'a Margins,
    selected: &'a [CheckGroup],
    checks: &'a [CheckResult],
}

/// Runs the selected checks of `scenario` in dependency order.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let prep = scenario.prepare()?;
    let grid_name = opts.grid.clone().unwrap_or_else(|| scenario.grid.clone());
    let preset = GridPreset::named(&grid_name)?;
    let margins = margins_preset(opts.margins.as_deref().unwrap_or(&scenario.margins))?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let selected = match &opts.groups {
        Some(g) => g.clone(),
        None => scenario.groups()?,
    };
    let groups = CheckGroup::closure(&selected);
    let mut runner = Runner {
        prep: &prep,
        preset,
        margins,
        seed,
        groups,
        results: Vec::new(),
        certificate: None,
        sg_constants: scenario.sg_constants.map(|c| (c.k, c.big_k)),
    };
    if runner.has(CheckGroup::Symplecto) {
        runner.symplecto();
    }
    if runner.has(CheckGroup::Phase) {
        runner.phase();
    }
    runner.sgphase();
    if runner.has(CheckGroup::Apply) {
        runner.apply();
    }
    if runner.has(CheckGroup::Opsymb) {
        runner.opsymb();
    }
    let grid_hash = runner.preset.hash();
    let checks = runner.results;
    let groups = runner.groups;
    let pass = checks.iter().all(|c| matches!(c.status, Status::Passed | Status::Skipped))
        && checks.iter().any(|c| c.status == Status::Passed);
    let hashed = Hashed { scenario: &scenario.name, seed, grid: &grid_name, grid_hash: &grid_hash, margins: &margins, selected: &groups, checks: &checks };
    let report_hash = hex::encode(Sha256::digest(serde_json::to_string(&hashed)?.as_bytes()));
    Ok(RunReport {
        scenario: scenario.name.clone(),
        seed,
        grid: grid_name,
        grid_hash,
        margins,
        selected: groups,
        expected_failures: scenario.expected_failures.clone(),
        checks,
        pass,
        report_hash,
        golden: None,
        environment: Environment::current(),
    })
}
