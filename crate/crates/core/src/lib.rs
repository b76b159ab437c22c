//! Numerical verification toolkit for Fourier integral operators with
//! transmission-type phase functions near a boundary.

pub mod cli;
pub mod error;
pub mod expr;
pub mod genphase;
pub mod numeric;
pub mod opsymb;
pub mod oscint;
pub mod sgphase;
pub mod symbolcls;
pub mod symplecto;

pub use error::{Error, Result};
