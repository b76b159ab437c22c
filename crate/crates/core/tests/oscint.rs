use fio_collar::expr::{parse, Space};
use fio_collar::genphase::GeneratingPhase;
use fio_collar::numeric::linspace;
use fio_collar::oscint::*;
use fio_collar::symbolcls::SymbolFn;
use proptest::prelude::*;

const IDENTITY: &str = "x1*k1 + xn*kn";
const DILATION: &str = "x1*k1 + xn*kn*exp(sin(x1)/2)";
const X1: f64 = 0.4;

fn spec(psi: &str, amp: &str, order: f64) -> NormalOperatorSpec {
    let sp = Space::new(2);
    let psi = GeneratingPhase::parse(sp, psi, 1.0).unwrap();
    let a = SymbolFn::new(sp, parse(&sp, amp).unwrap(), order);
    NormalOperatorSpec::new(psi, a, &[X1], &[1.5]).unwrap()
}

fn eg() -> f64 {
    (X1.sin() / 2.0).exp()
}

fn l2(values: &[f64], h: f64) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * h).sqrt()
}

#[test]
fn truncated_dilation_composed_with_smoothing() {
    let u = HalfLineFn::exp_decay();
    let grid = linspace(0.2, 3.0, 15);
    let r = apply_truncated_op(&spec(DILATION, "1/(1 + kn^2)", -2.0), &u, &grid).unwrap();
    assert_eq!(r.mode, Mode::Direct);
    let kernel = |y: f64| 0.5 * (y + 0.5) * (-y).exp();
    let dev = r.max_deviation(|x| kernel(x * eg()));
    assert!(dev <= 1e-5, "{dev}");
}

#[test]
fn truncated_dilation_identity_amplitude() {
    let u = HalfLineFn::exp_decay();
    let grid = linspace(0.2, 3.0, 15);
    let r = apply_truncated_op(&spec(DILATION, "1", 0.0), &u, &grid).unwrap();
    assert_eq!(r.mode, Mode::CutoffExtrapolate);
    assert!(r.max_deviation(|x| (-x * eg()).exp()) <= 1e-5);
}

#[test]
fn halving_the_tolerance_stays_within_the_estimate() {
    let grid = linspace(-3.0, 3.0, 41);
    for (psi, u) in [(IDENTITY, SchwartzFn::hermite(3)), (DILATION, SchwartzFn::hermite(4))] {
        let s = spec(psi, "1", 0.0).with_quad(QuadratureSpec { tol: Tolerance { abs: 1e-7, rel: 1e-7, ..Tolerance::default() }, ..QuadratureSpec::default() });
        let coarse = apply_normal_op(&s, &u, &grid).unwrap();
        let fine = apply_normal_op(&s.clone().with_quad(s.quad.halved()), &u, &grid).unwrap();
        let within = coarse.values.iter().zip(&fine.values).zip(&coarse.errors).filter(|((a, b), e)| (*a - *b).norm() <= **e).count();
        assert!(within as f64 >= 0.95 * grid.len() as f64, "{within}/{}", grid.len());
    }
    let u = HalfLineFn::exp_decay();
    let grid = linspace(0.2, 3.0, 20);
    let s = spec(IDENTITY, "1", 0.0);
    let coarse = apply_truncated_op(&s, &u, &grid).unwrap();
    let fine = apply_truncated_op(&s.clone().with_quad(s.quad.halved()), &u, &grid).unwrap();
    let within = coarse.values.iter().zip(&fine.values).zip(&coarse.errors).filter(|((a, b), e)| (*a - *b).norm() <= **e).count();
    assert!(within as f64 >= 0.95 * grid.len() as f64, "{within}/{}", grid.len());
}

#[test]
fn order_zero_amplitudes_are_l2_bounded() {
    let n = 241;
    let grid = linspace(-6.0, 6.0, n);
    let h = 12.0 / (n - 1) as f64;
    for (psi, jacobian) in [(IDENTITY, 1.0), (DILATION, eg().powf(-0.5))] {
        let s = spec(psi, "1", 0.0);
        for u in SchwartzFn::catalog() {
            let r = apply_normal_op(&s, &u, &grid).unwrap();
            let out: Vec<f64> = r.values.iter().map(|v| v.norm()).collect();
            let fine = linspace(-40.0, 40.0, 16001);
            let norm_u = l2(&fine.iter().map(|t| u.value(*t).unwrap()).collect::<Vec<_>>(), 80.0 / 16000.0);
            assert!(l2(&out, h) <= 1.05 * norm_u * jacobian, "{psi} {}", u.name);
        }
    }
}

#[test]
fn error_follows_the_tolerance() {
    let u = SchwartzFn::hermite(2);
    let grid = linspace(-3.0, 3.0, 13);
    let s = spec(DILATION, "1", 0.0);
    let err = |tol: f64| {
        let q = QuadratureSpec { tol: Tolerance { abs: tol, rel: tol, ..Tolerance::default() }, ..QuadratureSpec::default() };
        let r = apply_normal_op(&s.clone().with_quad(q), &u, &grid).unwrap();
        (r.max_deviation(|x| u.value(x * eg()).unwrap()), r.max_error())
    };
    let (loose, loose_est) = err(1e-4);
    let (tight, tight_est) = err(1e-4 / 16.0);
    assert!(loose <= loose_est.max(1e-4) && tight <= tight_est.max(1e-4 / 16.0));
    assert!(tight <= loose.max(1e-13), "{loose} -> {tight}");
    assert!(tight_est <= loose_est);
}

#[test]
fn numeric_transform_path_matches_analytic() {
    let s = spec(IDENTITY, "1", 0.0);
    let analytic = SchwartzFn::hermite(1);
    let numeric = SchwartzFn::new("h1-numeric", analytic.expr.clone());
    let grid = [-1.0, 0.5, 2.0];
    let a = apply_normal_op(&s, &analytic, &grid).unwrap();
    let b = apply_normal_op(&s, &numeric, &grid).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).norm() <= 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn linearity(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, i in 0u32..5, j in 0u32..5) {
        let s = spec(DILATION, "1/(1 + kn^2)", -2.0);
        let (u, v) = (SchwartzFn::hermite(i), SchwartzFn::hermite(j));
        let w = SchwartzFn::combination("w", &[(alpha, &u), (beta, &v)]);
        let grid = linspace(-2.0, 2.0, 9);
        let (au, av, aw) = (
            apply_normal_op(&s, &u, &grid).unwrap(),
            apply_normal_op(&s, &v, &grid).unwrap(),
            apply_normal_op(&s, &w, &grid).unwrap(),
        );
        for k in 0..grid.len() {
            let lin = au.values[k] * alpha + av.values[k] * beta;
            prop_assert!((aw.values[k] - lin).norm() <= 1e-9);
        }
    }
}
