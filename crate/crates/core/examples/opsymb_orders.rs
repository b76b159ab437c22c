//! Fits the growth exponents of the conjugated operator family for the
//! quadratic collar phase and reports the worst excess over the target order.

use fio_collar::cli::catalog_scenario;
use fio_collar::opsymb::{certify_symbol_orders, FamilyConfig};
use fio_collar::oscint::SchwartzFn;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let op = catalog_scenario("quadratic-collar")?.prepare()?.operator;
    let (sweep, fits) = certify_symbol_orders(&op, &SchwartzFn::catalog(), 2, &FamilyConfig::default())?;
    let worst = fits.iter().filter_map(|f| f.slope().map(|s| s - f.target)).fold(f64::NEG_INFINITY, f64::max);
    let passed = fits.iter().filter(|f| f.pass).count();
    println!("{passed}/{} fits within their order, worst excess {worst:.4}, {} evaluations", fits.len(), sweep.evals);
    Ok(())
}
