//! Applies the normal operator of the dilation phase to a Hermite function
//! and compares with the exact composition u(e^g x).

use fio_collar::cli::catalog_scenario;
use fio_collar::numeric::linspace;
use fio_collar::oscint::{apply_normal_op, SchwartzFn};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let op = catalog_scenario("dilation")?.prepare()?.operator;
    let u = SchwartzFn::hermite(2);
    let grid = linspace(-3.0, 3.0, 13);
    let r = apply_normal_op(&op, &u, &grid)?;
    let scale = (0.4f64.sin() / 2.0).exp();
    for (x, v) in grid.iter().zip(&r.values) {
        println!("x_n = {x:+.2}  Au = {:+.10}  u(e^g x) = {:+.10}", v.re, u.value(scale * x)?);
    }
    println!("max deviation {:e}", r.max_deviation(|x| u.value(scale * x).unwrap()));
    Ok(())
}
