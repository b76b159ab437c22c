//! Checks that a collar shear is symplectic, boundary preserving and has the
//! block structure expected of a boundary-preserving map.

use fio_collar::cli::catalog_scenario;
use fio_collar::symplecto::{check_jacobian_structure, SampleSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prep = catalog_scenario("boundary-shear")?.prepare()?;
    let (chi, _) = prep.chi.as_ref().expect("scenario defines a map");
    let hw = prep.psi.half_width;
    let boundary = SampleSet::random(&prep.space, hw, 200, 1, true);
    let collar = SampleSet::random(&prep.space, hw, 200, 2, false);
    let r = check_jacobian_structure(chi, &boundary, &collar)?;
    println!("zero blocks {:e}", r.zero_block_max);
    println!("boundary determinant residual {:e}", r.boundary_det_residual);
    println!("normal product residual {:e}", r.normal_product_residual);
    println!("pass: {}", r.pass);
    Ok(())
}
