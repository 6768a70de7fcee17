//! Staggered cavity grid, beam grid on the lid, and the discrete operators built on them.

mod grid;
mod operators;

pub use grid::{CavityGrid, Face, FaceKind};
pub use operators::{assemble_operators, spmv, spmv_t, to_dense, DiscreteOperators};

/// Convenience: build a grid and assemble its operators in one call.
pub fn build(nx: usize, nz: usize) -> crate::error::Result<DiscreteOperators> {
    let grid = CavityGrid::new(nx, nz)?;
    Ok(assemble_operators(&grid))
}
