//! Calibrates the SG constants (k, K) of the dilation phase and prints the
//! resulting uniformity summary.

use fio_collar::cli::catalog_scenario;
use fio_collar::sgphase::{calibrate, BaseSamples, Margins, SgGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let psi = catalog_scenario("dilation")?.prepare()?.psi;
    let cert = calibrate(&psi, &BaseSamples::default(), &SgGrid::standard(), &Margins::default())?;
    let u = &cert.uniformity;
    println!("k = {}, K = {}", cert.k, cert.big_k);
    println!("P1 max {:.4}, P2 lower {:.4}, P3 epsilon {:.4}", u.p1_max, u.p2_lower, u.p3_epsilon);
    println!("spread ratio {:.3} over {} base points", u.max_ratio, u.samples);
    Ok(())
}
