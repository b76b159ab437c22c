use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::report::{compare_golden, default_golden_dir, render, update_golden, write_bundle};
use super::run::{run, RunOptions, RunReport};
use super::scenario::{catalog_scenario, CheckGroup, Scenario, CATALOG};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "fio-collar", version, about = "Verification runner for boundary-preserving Fourier integral operator phases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario JSON file, or the name of a catalog scenario.
    #[arg(long)]
    pub scenario: String,
    /// Grid preset: coarse, standard or fine.
    #[arg(long)]
    pub grid: Option<String>,
    /// Margin preset: default, loose or strict.
    #[arg(long)]
    pub margin: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving report.json, summary.txt and the CSV tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Symplecticity, boundary preservation and Jacobian structure of the map.
    CheckSymplecto(Common),
    /// Boundary form, graph pairing, nondegeneracy, transmission and homogeneity of the phase.
    CheckPhase(Common),
    /// Search the cutoff constants (k, K) and certify P1 to P3 uniformly.
    Calibrate(Common),
    /// Check P1 to P3 and uniformity at the scenario's (k, K), calibrating if none are given.
    VerifySg(Common),
    /// Apply the normal operator to the scenario's test functions.
    Apply(Common),
    /// Fit the operator-valued symbol orders, the differentiated amplitudes and the transpose pairing.
    VerifyOpsymb(Common),
    /// Run the scenario's check list (or `--checks`), comparing against the golden hash.
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated check groups overriding the scenario's list.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Pin this run's hash as the new golden instead of comparing.
        #[arg(long)]
        golden_update: bool,
        /// Directory of golden files.
        #[arg(long)]
        golden_dir: Option<PathBuf>,
    },
    /// List or emit the built-in scenarios.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Render a saved report.json and optionally rewrite its CSV bundle.
    Report {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogAction {
    List,
    Emit {
        name: String,
        /// Write `<name>.json` into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn options(c: &Common, groups: Option<Vec<CheckGroup>>) -> RunOptions {
    RunOptions { groups, grid: c.grid.clone(), margins: c.margin.clone(), seed: c.seed }
}

fn finish(report: &RunReport, out: &Option<PathBuf>, stdout: &mut dyn Write) -> Result<i32> {
    write!(stdout, "{}", render(report))?;
    if let Some(dir) = out {
        write_bundle(report, dir)?;
    }
    Ok(report.exit_code())
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let single = |c: &Common, g: CheckGroup, stdout: &mut dyn Write| -> Result<i32> {
        let s = Scenario::load(&c.scenario)?;
        let r = run(&s, &options(c, Some(vec![g])))?;
        finish(&r, &c.out, stdout)
    };
    match cli.command {
        Command::CheckSymplecto(c) => single(&c, CheckGroup::Symplecto, stdout),
        Command::CheckPhase(c) => single(&c, CheckGroup::Phase, stdout),
        Command::Calibrate(c) => single(&c, CheckGroup::Calibrate, stdout),
        Command::VerifySg(c) => single(&c, CheckGroup::VerifySg, stdout),
        Command::Apply(c) => single(&c, CheckGroup::Apply, stdout),
        Command::VerifyOpsymb(c) => single(&c, CheckGroup::Opsymb, stdout),
        Command::Run { common, checks, golden_update, golden_dir } => {
            let s = Scenario::load(&common.scenario)?;
            let groups = match checks {
                Some(list) => {
                    let mut g = Vec::new();
                    for name in &list {
                        g.extend(CheckGroup::parse(name)?);
                    }
                    Some(g)
                }
                None => None,
            };
            let mut r = run(&s, &options(&common, groups))?;
            let dir = golden_dir.unwrap_or_else(default_golden_dir);
            if golden_update {
                let path = update_golden(&r, &dir)?;
                writeln!(stdout, "golden written to {}", path.display())?;
            } else {
                compare_golden(&mut r, &dir)?;
            }
            finish(&r, &common.out, stdout)
        }
        Command::Catalog { action: CatalogAction::List } => {
            for name in CATALOG {
                writeln!(stdout, "{name}")?;
            }
            Ok(0)
        }
        Command::Catalog { action: CatalogAction::Emit { name, out } } => {
            let json = catalog_scenario(&name)?.to_json();
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join(format!("{name}.json")), json + "\n")?;
                }
                None => writeln!(stdout, "{json}")?,
            }
            Ok(0)
        }
        Command::Report { path, out } => {
            let r = RunReport::from_json(&std::fs::read_to_string(&path)?)?;
            finish(&r, &out, stdout)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 all checks passed, 1 a check failed, 2 the run
/// could not be carried out (bad arguments, unreadable or invalid scenario,
/// numerical infrastructure error).
pub fn main_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return 2;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}
