//! Scenario-driven runner behind the `fio-collar` binary.
//!
//! A [`Scenario`] names a phase, optionally a symplectomorphism, an
//! amplitude and sampling presets. [`run`] executes the selected check
//! groups in dependency order, skipping checks whose prerequisites did not
//! pass, and returns a [`RunReport`] whose hash covers every result.
//! [`write_bundle`] turns a report into JSON, a text summary and CSV tables.

mod app;
mod report;
mod run;
mod scenario;

pub use app::{main_from, CatalogAction, Cli, Command, Common};
pub use report::{compare_golden, default_golden_dir, render, update_golden, write_bundle, Golden};
pub use run::{
    run, CheckResult, Environment, GoldenCheck, Metric, RunOptions, RunReport, Status, Table, ADMISSIBILITY_TOL, APPLY_TOL,
    GENERATING_TOL, HOMOGENEITY_TOL, MAX_BIG_K, MIN_K_FRACTION, NONDEGENERACY_DELTA, TRANSMISSION_TOL, TRANSPOSE_TOL,
};
pub use scenario::{
    catalog_scenario, margins_preset, AmplitudeSpec, BasePoint, CheckGroup, GridPreset, MapSpec, Scenario, SgConstants, TestFunction,
    CATALOG, MARGIN_PRESETS,
};
