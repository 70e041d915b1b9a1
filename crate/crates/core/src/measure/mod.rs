//! Piecewise-constant and piecewise-polynomial measure arithmetic: transfer
//! operator pushforward, total variation, Ulam discretisation and the vSSV
//! closed-form invariant density.

mod closed_form;
mod piecewise;
mod poly;
mod pushforward;
mod ulam;

pub use closed_form::{
    closed_form_vssv_density, vssv_branch_density, vssv_branch_mass, VssvDensity,
};
pub use piecewise::{PieceValue, Piecewise, PiecewiseDensity, PiecewisePoly};
pub use poly::Poly;
pub use pushforward::{
    pushforward, transfer, transfer_step, PushOptions, PushReport, DEFAULT_BREAKPOINT_CAP,
    DEFAULT_GRID_BINS,
};
pub use ulam::{ulam_matrix, Stationary, UlamMatrix, UlamPartition};
