pub mod cache;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub(crate) mod linalg;
pub mod galerkin;
pub mod physics;
pub mod plate_basis;
pub mod stokes_basis;

pub use error::{FsiError, Result};
pub mod pullback_lab;
