//! The entry problem as an obstacle problem in `(t, η)`.
//!
//! Before entry the investor observes the drift directly, so the state is
//! `(t, μ_t)` and the reward of entering is the interior value at wealth
//! `x0 − κt`. The value of waiting optimally is the smallest function above
//! the reward that is a supermartingale along the drift.

mod boundary;
mod grid;
mod obstacle;
mod rule;
mod solver;

pub use boundary::{extract_boundary, BoundaryRecord, Region};
pub use grid::{truncation_half_width, Grid2D};
pub use obstacle::{
    auto_grid, build_obstacle, build_obstacle_with, required_half_width, Obstacle, EDGE_RATIO,
};
pub use rule::{entry_rule, StoppingRule, SurfaceRule};
pub use solver::{solve_vi, Scheme, SliceDiagnostics, VISolution};
