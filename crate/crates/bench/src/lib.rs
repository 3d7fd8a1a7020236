//! Fixtures shared by the benchmarks.

use crossed_fields_core::{Grid2D, OperatorContext, OperatorParams, PotentialSpec};

/// Default bump, unit fields, box `[-l, l]^2` at the given spacing.
pub fn default_context(l: f64, spacing: f64) -> OperatorContext {
    let grid = Grid2D::square_with_spacing(l, spacing).expect("valid grid");
    OperatorContext::new(grid, OperatorParams::unit(), PotentialSpec::default_bump())
}
