//! Deterministic numerics: periodic Laplacian, the frozen-occupancy voltage
//! integrator, the mean-field compartment ODEs and the heat semigroup on the
//! circle.

pub mod heat;
pub mod integrate;
pub mod laplacian;
pub mod mean_field;

pub use heat::{apply_heat_semigroup, heat_kernel};
pub use integrate::{integrate_frozen, FrozenIntegrator};
pub use laplacian::{discrete_laplacian, CirculantSolver};
pub use mean_field::{
    solve_mean_field, solve_mean_field_with, MeanFieldOptions, MeanFieldState, MeanFieldTrajectory,
};
