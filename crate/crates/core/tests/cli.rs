use std::process::Command;

use fio_collar::cli::*;
use fio_collar::genphase::check_generating;
use fio_collar::symplecto::SampleSet;

fn main_out(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["fio-collar"];
    full.extend_from_slice(args);
    let code = main_from(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("fio-collar-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn catalog_lists_and_emits() {
    let (code, out, _) = main_out(&["catalog", "list"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 7);
    assert_eq!(out.lines().collect::<Vec<_>>(), CATALOG.to_vec());

    let (code, out, _) = main_out(&["catalog", "emit", "identity"]);
    assert_eq!(code, 0);
    let s = Scenario::from_json(&out).unwrap();
    assert_eq!((s.psi.as_str(), s.n), ("x1*k1 + xn*kn", 2));

    let (code, _, err) = main_out(&["catalog", "emit", "no-such"]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown scenario"));
}

#[test]
fn emitted_dilation_is_a_generating_pair() {
    let (_, out, _) = main_out(&["catalog", "emit", "dilation"]);
    let s = Scenario::from_json(&out).unwrap();
    let p = s.prepare().unwrap();
    let (chi, pairing) = p.chi.as_ref().unwrap();
    let samples = SampleSet::random(&p.space, 1.0, 500, 3, false);
    let r = check_generating(&p.psi, chi, *pairing, &samples, 1e-9).unwrap();
    assert!(r.max_residual <= 1e-9, "{}", r.max_residual);
}

#[test]
fn negatives_fail_exactly_their_intended_check() {
    for name in ["bad-boundary-shift", "bad-transmission", "bad-symplectic"] {
        let s = catalog_scenario(name).unwrap();
        let r = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(r.exit_code(), 1, "{name}");
        assert_eq!(r.failed(), s.expected_failures.iter().map(String::as_str).collect::<Vec<_>>(), "{name}");
        assert!(r.checks.iter().any(|c| c.status == Status::Skipped), "{name}");
        assert!(r.check("sgphase.calibrate").is_some_and(|c| c.status == Status::Skipped), "{name}");
        let text = render(&r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], format!("failing: {}", s.expected_failures[0]));
        let first_check = lines.iter().find(|l| l.starts_with('[')).unwrap();
        assert!(first_check.starts_with(&format!("[FAILED] {}", s.expected_failures[0])), "{first_check}");
    }
    let (code, out, _) = main_out(&["run", "--scenario", "bad-boundary-shift"]);
    assert_eq!(code, 1);
    assert!(out.contains("failing: symplecto.boundary\n"));
}

#[test]
fn gating_reports_skipped_not_passed() {
    let s = catalog_scenario("bad-transmission").unwrap();
    let r = run(&s, &RunOptions::default()).unwrap();
    for c in r.checks.iter().filter(|c| c.name.starts_with("sgphase") || c.name.starts_with("opsymb") || c.name.starts_with("oscint")) {
        assert_eq!(c.status, Status::Skipped, "{}", c.name);
        assert!(c.metrics.is_empty());
    }
}

#[test]
fn identity_passes_with_fixed_summary_shape() {
    let s = catalog_scenario("identity").unwrap();
    let a = run(&s, &RunOptions { groups: Some(vec![CheckGroup::Symplecto, CheckGroup::Phase, CheckGroup::Calibrate]), ..RunOptions::default() }).unwrap();
    assert_eq!(a.exit_code(), 0);
    let b = run(&s, &RunOptions { groups: Some(vec![CheckGroup::Calibrate]), seed: Some(99), ..RunOptions::default() }).unwrap();
    assert_eq!(b.exit_code(), 0);
    let lines = |r: &RunReport| render(r).lines().count();
    assert_eq!(lines(&a), lines(&b));
    assert_eq!(lines(&a), 58);
    for c in &a.checks {
        assert!(c.metrics.iter().all(|m| m.pass), "{}", c.name);
    }
}

#[test]
fn dilation_full_suite_matches_golden_and_is_deterministic() {
    let d1 = tempdir("d1");
    let d2 = tempdir("d2");
    let (code, out, err) = main_out(&["run", "--scenario", "dilation", "--out", d1.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("(matched)"), "{out}");
    let report = RunReport::from_json(&std::fs::read_to_string(d1.join("report.json")).unwrap()).unwrap();
    assert!(report.golden.as_ref().is_some_and(|g| g.matched));
    let p1 = report.check("sgphase.calibrate").unwrap().tables.iter().find(|t| t.name == "p1").unwrap();
    assert_eq!(p1.rows.len(), 16);
    assert!(out.contains("P1 constants"));
    let csv = std::fs::read_to_string(d1.join("sgphase.calibrate.p1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 17);

    let (code, _, _) = main_out(&["run", "--scenario", "dilation", "--out", d2.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut names: Vec<_> = std::fs::read_dir(&d1).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for n in names {
        assert_eq!(std::fs::read(d1.join(&n)).unwrap(), std::fs::read(d2.join(&n)).unwrap(), "{n:?}");
    }

    let (code, rendered, _) = main_out(&["report", d1.join("report.json").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(rendered, std::fs::read_to_string(d1.join("summary.txt")).unwrap());
}

#[test]
fn golden_mismatch_and_update() {
    let dir = tempdir("golden");
    let s = catalog_scenario("identity").unwrap();
    let opts = RunOptions { groups: Some(vec![CheckGroup::Phase]), ..RunOptions::default() };
    let mut r = run(&s, &opts).unwrap();
    update_golden(&r, &dir).unwrap();
    compare_golden(&mut r, &dir).unwrap();
    assert!(r.golden.as_ref().unwrap().matched && r.exit_code() == 0);
    let mut other = run(&s, &RunOptions { seed: Some(8), ..opts }).unwrap();
    compare_golden(&mut other, &dir).unwrap();
    assert!(!other.golden.as_ref().unwrap().matched);
    assert_eq!(other.exit_code(), 1);
}

#[test]
fn scenario_files_and_infrastructure_errors() {
    let dir = tempdir("files");
    std::fs::create_dir_all(&dir).unwrap();
    let (code, _, _) = main_out(&["catalog", "emit", "bad-symplectic", "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    let file = dir.join("bad-symplectic.json");
    let (code, out, _) = main_out(&["check-symplecto", "--scenario", file.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.starts_with("scenario bad-symplectic: FAIL (exit 1)\nfailing: symplecto.symplectic\n"));

    let broken = dir.join("broken.json");
    std::fs::write(&broken, std::fs::read_to_string(&file).unwrap().replace("x1*k1", "x1*k1 + (")).unwrap();
    let (code, _, err) = main_out(&["run", "--scenario", broken.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("parse error"), "{err}");
    let (code, _, _) = main_out(&["run", "--scenario", "missing-file.json"]);
    assert_eq!(code, 2);
    let (code, _, _) = main_out(&["check-phase", "--scenario", "identity", "--grid", "enormous"]);
    assert_eq!(code, 2);
    let (code, _, _) = main_out(&["run", "--scenario", "identity", "--checks", "bogus"]);
    assert_eq!(code, 2);
    let (code, _, _) = main_out(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fio-collar");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap();
    let o = status(&["catalog", "list"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 7);
    assert_eq!(status(&["check-phase", "--scenario", "bad-transmission"]).status.code(), Some(1));
    assert_eq!(status(&["check-phase", "--scenario", "identity", "--margin", "strict"]).status.code(), Some(0));
    assert_eq!(status(&["apply", "--scenario", "nowhere.json"]).status.code(), Some(2));
}

#[test]
fn subcommands_select_their_groups() {
    let s = catalog_scenario("boundary-shear").unwrap();
    let r = run(&s, &RunOptions { groups: Some(vec![CheckGroup::Apply]), grid: Some("coarse".into()), ..RunOptions::default() }).unwrap();
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    assert!(names.contains(&"oscint.apply") && names.contains(&"genphase.generating"));
    assert!(!names.iter().any(|n| n.starts_with("sgphase") || n.starts_with("opsymb")));
    assert_eq!(r.exit_code(), 0);
    let apply = r.check("oscint.apply").unwrap();
    let h0 = apply.tables.iter().find(|t| t.name == "apply-h0").unwrap();
    assert_eq!(h0.header, ["x_n", "re", "im", "err_est"]);
    assert_eq!(h0.rows.len(), 21);
}

#[test]
fn verify_sg_uses_pinned_constants() {
    let mut s = catalog_scenario("dilation").unwrap();
    s.sg_constants = Some(SgConstants { k: 0.5, big_k: 2.0 });
    let r = run(&s, &RunOptions { groups: Some(vec![CheckGroup::VerifySg]), ..RunOptions::default() }).unwrap();
    let v = r.check("sgphase.verify").unwrap();
    assert_eq!(v.status, Status::Passed);
    assert_eq!(v.tables.iter().find(|t| t.name == "base_points").unwrap().rows.len(), 81);
    s.sg_constants = Some(SgConstants { k: 0.5, big_k: 0.5 });
    let r = run(&s, &RunOptions { groups: Some(vec![CheckGroup::VerifySg]), ..RunOptions::default() }).unwrap();
    assert_eq!(r.failed(), ["sgphase.verify"]);
}
