//! Interval certification of the barrier's Lie condition on a grid.

pub mod bounds;
pub mod grid;
pub mod interval;

pub use bounds::{dynamics_bounds, grad_bounds, lie_lower_bound, output_bounds, propagated_bounds, DynamicsBoundConfig};
pub use grid::{certify_grid, value_bounds, CellStatus, CertReport, CertifyConfig, GridCell, GridSpec};
pub use interval::{Hyperbox, Interval};
