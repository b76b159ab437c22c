//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fio_collar::cli::{catalog_scenario, run, CheckGroup, RunOptions, Scenario};
use fio_collar::expr::{fd_crosscheck, parse, Expr};
use fio_collar::genphase::normal_coeffs;
use fio_collar::numeric::linspace;
use fio_collar::opsymb::{certify_symbol_orders, check_lemma_structure, transpose_check, FamilyConfig, ORDER_SLACK};
use fio_collar::oscint::{
    apply_normal_op, apply_truncated_op, measure_decay, HalfLineFn, NormalOperatorSpec, QuadratureSpec, SchwartzFn, Tolerance,
};
use fio_collar::sgphase::{build_star_phi, calibrate, check_uniformity, phase_constants, BaseSamples, Margins, SgGrid};
use fio_collar::symbolcls::{BsGrid, BsOrders, SymbolFn};
use fio_collar::symplecto::{check_jacobian_structure, SampleSet, DET_TOL, STRUCTURE_TOL};

const POSITIVE: [&str; 4] = ["identity", "dilation", "quadratic-collar", "boundary-shear"];
const NEGATIVE: [&str; 3] = ["bad-boundary-shift", "bad-transmission", "bad-symplectic"];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str) -> Scenario {
    catalog_scenario(name).unwrap()
}

fn operator(name: &str) -> NormalOperatorSpec {
    scenario(name).prepare().unwrap().operator
}

fn with_amplitude(name: &str, amp: &str, order: f64) -> NormalOperatorSpec {
    let op = operator(name);
    let sp = op.psi.space;
    let a = SymbolFn::new(sp, parse(&sp, amp).unwrap(), order);
    NormalOperatorSpec::new(op.psi.clone(), a, &op.x_tangential, &op.xi_tangential).unwrap()
}

fn identity_exactness() -> Outcome {
    let psi = scenario("identity").prepare().unwrap().psi;
    let grid = SgGrid::standard();
    let ph = build_star_phi(&psi, &[0.4], &[(16.0f64 * 16.0 - 1.0).sqrt()], 0.5, 1.0).map_err(|e| e.to_string())?;
    let mut worst_ulps: f64 = 0.0;
    for &t in &grid.t {
        for &tau in &grid.tau {
            let v = ph.value(t, tau).map_err(|e| e.to_string())?;
            if t * tau != 0.0 {
                worst_ulps = worst_ulps.max((v - t * tau).abs() / (f64::EPSILON * (t * tau).abs()));
            } else {
                ensure(v == 0.0, || format!("*Phi({t}, {tau}) = {v}"))?;
            }
        }
    }
    ensure(worst_ulps <= 8.0, || format!("*Phi - t tau reaches {worst_ulps} ulps"))?;
    let c = phase_constants(&ph, &grid, &Margins::default()).map_err(|e| e.to_string())?;
    ensure(c.p1.iter().all(|e| e.constant <= 1.0 + 1e-12), || format!("P1 max {}", c.p1_max()))?;
    for (name, v) in [("c_t", c.p2.c_t), ("C_t", c.p2.big_c_t), ("c_tau", c.p2.c_tau), ("C_tau", c.p2.big_c_tau), ("eps", c.p3.epsilon)] {
        ensure((v - 1.0).abs() <= 1e-12, || format!("{name} = {v}"))?;
    }
    let (u, _) = check_uniformity(&psi, &BaseSamples::default(), &grid, 0.5, 1.0, &Margins::default()).map_err(|e| e.to_string())?;
    ensure(u.pass && (u.p2_lower - 1.0).abs() <= 1e-12 && (u.p3_epsilon - 1.0).abs() <= 1e-12, || format!("{u:?}"))?;
    Ok(format!("{}x{} points within {worst_ulps:.1} ulps, P1 max {:.15}", grid.t.len(), grid.tau.len(), c.p1_max()))
}

fn calibration() -> Outcome {
    let mut notes = Vec::new();
    for name in ["dilation", "quadratic-collar", "boundary-shear"] {
        let start = Instant::now();
        let psi = scenario(name).prepare().unwrap().psi;
        let cert = calibrate(&psi, &BaseSamples::default(), &SgGrid::standard(), &Margins::default()).map_err(|e| format!("{name}: {e}"))?;
        let u = &cert.uniformity;
        ensure(cert.big_k <= 16.0 && cert.k >= psi.half_width / 32.0, || format!("{name}: (k, K) = ({}, {})", cert.k, cert.big_k))?;
        ensure(u.samples == 81 && u.failing_samples.is_empty(), || format!("{name}: failing base points {:?}", u.failing_samples))?;
        ensure(u.max_ratio <= 3.0, || format!("{name}: uniformity ratio {}", u.max_ratio))?;
        ensure(u.p1_max.is_finite() && u.p2_lower > 0.0 && u.p3_epsilon > 0.0, || format!("{name}: {u:?}"))?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(60), || format!("{name}: {elapsed:?}"))?;
        notes.push(format!("{name} (k, K) = ({}, {}) ratio {:.3} in {:.1?}", cert.k, cert.big_k, u.max_ratio, elapsed));
    }
    Ok(notes.join("; "))
}

fn transmission() -> Outcome {
    let mut worst_q: f64 = 0.0;
    let mut worst_hom: f64 = 0.0;
    for name in POSITIVE {
        let psi = scenario(name).prepare().unwrap().psi;
        let q = normal_coeffs(&psi, &psi.tangential_samples(21), 1e-10).map_err(|e| e.to_string())?;
        worst_q = worst_q.max(q.sum_residual);
        let sp = psi.space;
        let vars: Vec<_> = sp.xs().into_iter().chain(sp.ks()).collect();
        let degree = |vs: &[_]| 1.0 - vs.iter().filter(|v| sp.ks().contains(v)).count() as f64;
        let mut jobs: Vec<(Expr, f64)> = vec![(psi.psi.clone(), 1.0)];
        for (i, &v) in vars.iter().enumerate() {
            let d1 = psi.psi.diff(v);
            jobs.push((d1.clone(), degree(&[v])));
            for &w in &vars[i..] {
                jobs.push((d1.diff(w), degree(&[v, w])));
            }
        }
        for (e, d) in jobs {
            worst_hom = worst_hom.max(SymbolFn::new(sp, e, d).homogeneity_residual(d, 64, 7).map_err(|e| e.to_string())?);
        }
    }
    ensure(worst_q <= 1e-10, || format!("q+ + q- residual {worst_q}"))?;
    ensure(worst_hom <= 1e-12, || format!("homogeneity residual {worst_hom}"))?;
    let bad = scenario("bad-transmission").prepare().unwrap().psi;
    let q = normal_coeffs(&bad, &bad.tangential_samples(21), 1e-10).map_err(|e| e.to_string())?;
    ensure(!q.pass && q.sum_residual >= 0.1, || format!("bad-transmission residual {}", q.sum_residual))?;
    Ok(format!("q residual {worst_q:e}, homogeneity {worst_hom:e}, bad-transmission {}", q.sum_residual))
}

fn structure() -> Outcome {
    let (mut z, mut d, mut p): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for name in POSITIVE {
        let prep = scenario(name).prepare().unwrap();
        let (chi, _) = prep.chi.as_ref().unwrap();
        let hw = prep.psi.half_width;
        let boundary = SampleSet::random(&prep.space, hw, 200, 21, true);
        let collar = SampleSet::random(&prep.space, hw, 200, 22, false);
        let r = check_jacobian_structure(chi, &boundary, &collar).map_err(|e| format!("{name}: {e}"))?;
        ensure(r.pass, || format!("{name}: {r:?}"))?;
        (z, d, p) = (z.max(r.zero_block_max), d.max(r.boundary_det_residual), p.max(r.normal_product_residual));
    }
    ensure(z <= STRUCTURE_TOL && d <= DET_TOL && p <= DET_TOL, || format!("{z} {d} {p}"))?;
    for name in NEGATIVE {
        let s = scenario(name);
        let r = run(&s, &RunOptions { groups: Some(vec![CheckGroup::Symplecto, CheckGroup::Phase]), ..RunOptions::default() })
            .map_err(|e| e.to_string())?;
        let failed: Vec<String> = r.failed().iter().map(|s| s.to_string()).collect();
        ensure(failed == s.expected_failures, || format!("{name} failed {failed:?}"))?;
    }
    Ok(format!("zero blocks {z:e}, det {d:e}, normal product {p:e}; negatives fail only their own check"))
}

fn operator_identity() -> Outcome {
    let grid = linspace(-3.0, 3.0, 61);
    let mut worst: f64 = 0.0;
    let id = operator("identity");
    let dil = operator("dilation");
    let eg = (0.4f64.sin() / 2.0).exp();
    for u in SchwartzFn::catalog() {
        let r = apply_normal_op(&id, &u, &grid).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_deviation(|x| u.value(x).unwrap()));
        let r = apply_normal_op(&dil, &u, &grid).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_deviation(|x| u.value(eg * x).unwrap()));
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst}"))?;
    Ok(format!("max abs error {worst:e} over h0..h4, identity and dilation"))
}

fn symbol_orders() -> Outcome {
    let mut notes = Vec::new();
    let fns = SchwartzFn::catalog();
    for name in POSITIVE {
        let (_, fits) = certify_symbol_orders(&operator(name), &fns, 2, &FamilyConfig::default()).map_err(|e| format!("{name}: {e}"))?;
        let bad: Vec<_> = fits.iter().filter(|f| !f.pass).collect();
        ensure(fits.len() == 405 && bad.is_empty(), || format!("{name}: {} of {} fits fail", bad.len(), fits.len()))?;
        let excess = fits.iter().filter_map(|f| f.slope().map(|s| s - f.target)).fold(f64::NEG_INFINITY, f64::max);
        ensure(excess <= ORDER_SLACK, || format!("{name}: excess {excess}"))?;
        notes.push(format!("{name} {excess:.3}"));
    }
    let mut control: f64 = 0.0;
    for name in ["identity", "dilation"] {
        let spec = with_amplitude(name, "bracket(k1)", 1.0);
        let (_, fits) = certify_symbol_orders(&spec, &fns, 2, &FamilyConfig::default()).map_err(|e| e.to_string())?;
        for f in fits.iter().filter(|f| f.alpha == [0] && f.beta == [0]) {
            let s = f.slope().ok_or_else(|| format!("control {name} {} has no slope", f.function))?;
            control = control.max((s - 1.0).abs());
        }
        ensure(fits.iter().all(|f| f.pass), || format!("control {name} fails its targets"))?;
    }
    ensure(control <= 0.02, || format!("control slope off by {control}"))?;
    Ok(format!("worst excess per spec [{}], control |slope - 1| <= {control:.2e}", notes.join(", ")))
}

fn lemma_structure() -> Outcome {
    let mut notes = Vec::new();
    for name in POSITIVE {
        let prep = scenario(name).prepare().unwrap();
        let spec = prep.structure.as_ref().unwrap();
        let r = check_lemma_structure(spec, &BsGrid::standard(), BsOrders::up_to(1)).map_err(|e| e.to_string())?;
        ensure(r.pass, || format!("{name}: xi {} / {}, x {} / {}", r.xi_derivative.worst_excess, r.xi_derivative.worst_normal_excess, r.x_derivative.worst_excess, r.x_derivative.worst_normal_excess))?;
        notes.push(format!("{name} {:.3}", r.xi_derivative.worst_excess.max(r.x_derivative.worst_excess)));
    }
    Ok(format!("worst exponent excess [{}]", notes.join(", ")))
}

fn duality() -> Outcome {
    let (u, v) = (SchwartzFn::hermite(1), SchwartzFn::hermite(3));
    let mut worst: f64 = 0.0;
    for name in ["dilation", "quadratic-collar", "boundary-shear"] {
        let r = transpose_check(&operator(name), &u, &v, 1e-6).map_err(|e| e.to_string())?;
        ensure(r.pass, || format!("{name}: {}", r.residual))?;
        worst = worst.max(r.residual);
    }
    Ok(format!("transpose residual {worst:e} on dilation, quadratic-collar, boundary-shear"))
}

fn hygiene() -> Outcome {
    let mut worst_fd: f64 = 0.0;
    let mut count = 0;
    for name in POSITIVE.iter().chain(&NEGATIVE) {
        let s = scenario(name);
        let prep = s.prepare().unwrap();
        let sp = prep.space;
        let mut exprs = vec![prep.psi.psi.clone()];
        if let Some((chi, _)) = &prep.chi {
            exprs.extend(chi.x.iter().cloned());
            exprs.extend(chi.xi.iter().cloned());
        }
        let vars: Vec<_> = sp.xs().into_iter().chain(sp.ks()).collect();
        let points = SampleSet::random(&sp, prep.psi.half_width, 100, 31, false).points;
        for e in &exprs {
            let mut family = vec![e.clone()];
            family.extend(vars.iter().map(|v| e.diff(*v)));
            for f in &family {
                for p in &points {
                    for v in &vars {
                        worst_fd = worst_fd.max(fd_crosscheck(f, p, *v, 1e-5).map_err(|e| e.to_string())?);
                        count += 1;
                    }
                }
            }
        }
    }
    ensure(worst_fd <= 1e-6, || format!("fd discrepancy {worst_fd}"))?;

    let tight = QuadratureSpec { tol: Tolerance { abs: 1e-7, rel: 1e-7, ..Tolerance::default() }, ..QuadratureSpec::default() };
    let (mut within, mut total) = (0usize, 0usize);
    let grid = linspace(-3.0, 3.0, 41);
    for name in POSITIVE {
        let s = operator(name).with_quad(tight.clone());
        let u = SchwartzFn::hermite(3);
        let coarse = apply_normal_op(&s, &u, &grid).map_err(|e| e.to_string())?;
        let fine = apply_normal_op(&s.clone().with_quad(s.quad.halved()), &u, &grid).map_err(|e| e.to_string())?;
        within += coarse.values.iter().zip(&fine.values).zip(&coarse.errors).filter(|((a, b), e)| (*a - *b).norm() <= **e).count();
        total += grid.len();
        let s = operator(name);
        let h = HalfLineFn::exp_decay();
        let hl = linspace(0.2, 3.0, 20);
        let coarse = apply_truncated_op(&s, &h, &hl).map_err(|e| e.to_string())?;
        let fine = apply_truncated_op(&s.clone().with_quad(s.quad.halved()), &h, &hl).map_err(|e| e.to_string())?;
        within += coarse.values.iter().zip(&fine.values).zip(&coarse.errors).filter(|((a, b), e)| (*a - *b).norm() <= **e).count();
        total += hl.len();
    }
    let share = within as f64 / total as f64;
    ensure(share >= 0.95, || format!("halving consistency {within}/{total}"))?;

    let s = scenario("quadratic-collar");
    let opts = RunOptions { groups: Some(vec![CheckGroup::Calibrate, CheckGroup::Apply]), ..RunOptions::default() };
    let a = run(&s, &opts).map_err(|e| e.to_string())?;
    let b = run(&s, &opts).map_err(|e| e.to_string())?;
    ensure(a.to_json() == b.to_json(), || "repeated runs differ".into())?;
    Ok(format!("fd {worst_fd:e} over {count} checks, halving {within}/{total}, repeated reports byte-identical"))
}

fn half_line_decay() -> Outcome {
    let d = measure_decay(&HalfLineFn::exp_decay(), 10.0, 1000.0, 9, &Tolerance::default()).map_err(|e| e.to_string())?;
    let k = d.exponent.ok_or("no exponent")?;
    ensure((k + 1.0).abs() <= 0.05, || format!("exponent {k}"))?;
    Ok(format!("exponent {k:.4} on |xi| in [10, 1000]"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("identity exactness", identity_exactness, 5),
        ("calibration of the positive catalog", calibration, 180),
        ("transmission and homogeneity", transmission, 10),
        ("Jacobian structure and negatives", structure, 10),
        ("operator identity", operator_identity, 30),
        ("operator-valued symbol orders", symbol_orders, 120),
        ("differentiated amplitude structure", lemma_structure, 60),
        ("transpose duality", duality, 60),
        ("numerical hygiene", hygiene, 120),
        ("half-line decay", half_line_decay, 30),
    ];
    let mut failures = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|m| {
            if elapsed <= Duration::from_secs(*budget) {
                Ok(m)
            } else {
                Err(format!("{m}; runtime {elapsed:.1?} over the {budget} s budget"))
            }
        });
        match outcome {
            Ok(m) => println!("criterion {:>2} PASS {name} ({elapsed:.1?}): {m}", i + 1),
            Err(m) => {
                failures += 1;
                println!("criterion {:>2} FAIL {name} ({elapsed:.1?}): {m}", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
