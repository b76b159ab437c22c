//! Runs the phase checks of every catalog scenario and prints the verdicts.

use fio_collar::cli::{catalog_scenario, run, CheckGroup, RunOptions, CATALOG};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = RunOptions { groups: Some(vec![CheckGroup::Phase]), grid: Some("coarse".into()), ..RunOptions::default() };
    for name in CATALOG {
        let r = run(&catalog_scenario(name)?, &opts)?;
        let failed = r.failed();
        println!("{name:<20} exit {}  failing: {}", r.exit_code(), if failed.is_empty() { "none".into() } else { failed.join(", ") });
    }
    Ok(())
}
