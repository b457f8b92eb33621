//! Log-concave densities on boxes: potentials, tensor grids, conditional
//! slices, moments, sampling and Moreau smoothing.

mod domain;
pub mod format;
mod grid;
mod law1d;
mod measure;
mod moreau;
mod potential;
mod sample;

pub use domain::{Axis, BoxDomain};
pub use grid::{GridDensity, MAX_GRID_NODES, MIN_AXIS_NODES};
pub use law1d::Law1D;
pub use measure::Measure;
pub use moreau::{moreau_smooth, MoreauEnvelope};
pub use potential::{Potential, PotentialFn, Smoothness, AUDIT_PAIRS, AUDIT_TOL};
pub use sample::{sample, SampleSet};

/// Evaluates `exp(-V)` on a tensor grid and normalizes it.
pub fn build_grid_density<T: crate::Real>(potential: &Potential<T>, shape: &[usize]) -> crate::Result<GridDensity<T>> {
    GridDensity::build(potential, shape)
}

/// Row-major multi-index of a prefix row.
pub(crate) fn unravel_prefix(row: usize, shape: &[usize], idx: &mut [usize]) {
    grid::unravel(row, shape, idx)
}
