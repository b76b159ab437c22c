//! Compares the normal coefficients of a phase that has the transmission
//! property with one that does not.

use fio_collar::cli::catalog_scenario;
use fio_collar::genphase::normal_coeffs;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["quadratic-collar", "bad-transmission"] {
        let psi = catalog_scenario(name)?.prepare()?.psi;
        let q = normal_coeffs(&psi, &psi.tangential_samples(21), 1e-10)?;
        println!("{name:<18} q+ + q- residual {:.3e} pass {}", q.sum_residual, q.pass);
    }
    Ok(())
}
