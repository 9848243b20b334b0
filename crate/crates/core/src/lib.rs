//! Right large-deviation rate functions for the top eigenvalue (or singular
//! value) of sums and products of invariant random matrices, with hard walls.

pub mod cli;
pub mod error;
pub mod freeconv;
pub mod freenergy;
pub mod mcvalidate;
pub mod numeric;
pub mod rankone;
pub mod ratefn;
pub mod spectra;
pub mod transforms;

pub use error::{Error, Result};
