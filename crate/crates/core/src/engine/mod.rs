//! Field, density, probability and moment evaluation.

pub mod density;
pub mod field;
pub mod grid;
pub mod momentum;

pub use density::{
    coordinate_moments, cross_density, density, probability, tau_matrix, DensityField, MomentReport, ProbabilityReport,
    TauMatrix,
};
pub use field::{evaluate_field, oracle_direct_field, IntertwinedField};
pub use grid::{EventBox, EventRegion, SpacetimeGrid, SphereQuadrature, UniformAxis};
pub use momentum::{momentum_space_total, MomentumTotal};
