//! Two-phase Stokes flow in 2D with a parametric interface, P2 velocities,
//! and an optional single-function pressure enrichment.

pub mod assembly;
pub mod bulk;
pub mod config;
pub mod error;
pub mod fe;
pub mod geometry;
pub mod interface;
pub mod io;
pub mod selftest;
pub mod solver;
pub mod stepper;
pub mod verification;

pub use error::{Error, Result};
pub use geometry::Point;
