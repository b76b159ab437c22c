use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{CheckResult, GoldenCheck, RunReport, Status};
use crate::error::{Error, Result};

/// Human-readable summary. Failing checks come first, then the remaining
/// checks in execution order; each check prints a status line, one line
/// per metric and, for calibration, its P1 table.
pub fn render(report: &RunReport) -> String {
    let mut out = String::new();
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "scenario {}: {verdict} (exit {})", report.scenario, report.exit_code());
    let failed = report.failed();
    let _ = writeln!(out, "failing: {}", if failed.is_empty() { "none".to_string() } else { failed.join(", ") });
    let _ = writeln!(out, "grid {} {} seed {}", report.grid, report.grid_hash, report.seed);
    let _ = writeln!(out, "report hash {}", report.report_hash);
    if let Some(g) = &report.golden {
        let _ = writeln!(out, "golden {} ({})", g.expected, if g.matched { "matched" } else { "MISMATCH" });
    }
    let (bad, good): (Vec<&CheckResult>, Vec<&CheckResult>) =
        report.checks.iter().partition(|c| matches!(c.status, Status::Failed | Status::Error));
    for c in bad.into_iter().chain(good) {
        render_check(&mut out, c);
    }
    out
}

fn status(s: Status) -> &'static str {
    match s {
        Status::Passed => "passed",
        Status::Failed => "FAILED",
        Status::Skipped => "skipped",
        Status::Error => "ERROR",
    }
}

fn render_check(out: &mut String, c: &CheckResult) {
    let _ = write!(out, "[{}] {}", status(c.status), c.name);
    if let Some(r) = &c.reason {
        let _ = write!(out, ": {r}");
    }
    out.push('\n');
    for m in &c.metrics {
        let v = m.value.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into());
        let mark = if m.target.is_empty() { "" } else if m.pass { " ok" } else { " VIOLATED" };
        let _ = writeln!(out, "    {:<28} {v:>14} {}{mark}", m.name, m.target);
    }
    if let Some(t) = c.tables.iter().find(|t| t.name == "p1") {
        let _ = writeln!(out, "    P1 constants C_(a,alpha), (a, alpha) <= 3:");
        for row in &t.rows {
            let _ = writeln!(out, "      a={} alpha={} C={} spread={}", row[0], row[1], row[2], row[3]);
        }
    }
}

/// Writes `report.json`, `summary.txt` and one CSV per table
/// (`<check>.<table>.csv`) into `dir`. Returns the written paths.
pub fn write_bundle(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    std::fs::write(&json, report.to_json())?;
    written.push(json);
    let summary = dir.join("summary.txt");
    std::fs::write(&summary, render(report))?;
    written.push(summary);
    for c in &report.checks {
        for t in &c.tables {
            let path = dir.join(format!("{}.{}.csv", c.name, t.name));
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io(e.to_string()))?;
            w.write_record(&t.header).map_err(|e| Error::Io(e.to_string()))?;
            for row in &t.rows {
                w.write_record(row).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

/// A pinned report hash for one scenario on one grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Golden {
    pub scenario: String,
    pub grid: String,
    pub grid_hash: String,
    pub report_hash: String,
}

/// Directory holding the pinned golden hashes shipped with the crate.
pub fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden")
}

fn golden_path(dir: &Path, scenario: &str, grid: &str) -> PathBuf {
    dir.join(format!("{scenario}.{grid}.json"))
}

/// Compares the report against its golden file, if one exists. A golden
/// pinned on a different grid hash never matches.
pub fn compare_golden(report: &mut RunReport, dir: &Path) -> Result<()> {
    let path = golden_path(dir, &report.scenario, &report.grid);
    let golden = match std::fs::read_to_string(&path) {
        Ok(src) => serde_json::from_str::<Golden>(&src)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    let matched = golden.grid_hash == report.grid_hash && golden.report_hash == report.report_hash;
    report.set_golden(Some(GoldenCheck { expected: golden.report_hash, matched }));
    Ok(())
}

/// Pins the report's hash as the new golden.
pub fn update_golden(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let g = Golden {
        scenario: report.scenario.clone(),
        grid: report.grid.clone(),
        grid_hash: report.grid_hash.clone(),
        report_hash: report.report_hash.clone(),
    };
    let path = golden_path(dir, &report.scenario, &report.grid);
    std::fs::write(&path, serde_json::to_string_pretty(&g)? + "\n")?;
    Ok(path)
}
