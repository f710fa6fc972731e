//! Forward solver and coefficient reconstruction for the reaction-subdiffusion equation
//!
//! ```text
//! ∂ₜᵅu − Δu + q(x) f(u) = r   in (0, L) × (0, T),   ∂_ν u + γ u = 0 on the boundary,
//! ```
//!
//! with the unknown pair `(q, f)` recovered from boundary time traces, final-time profiles
//! or a mix of both. Every numerical type is generic over [`Real`] (`f32` or `f64`);
//! the `*64` aliases fix the scalar to `f64`.

pub mod analysis;
pub mod caputo;
pub mod coeffs;
pub mod error;
pub mod fixedpoint;
pub mod forward;
pub mod linalg;
pub mod mesh;
pub mod newton;
pub mod observe;
pub mod scalar;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid1D64 = mesh::Grid1D<f64>;
pub type TimeGrid64 = mesh::TimeGrid<f64>;
pub type Field64 = mesh::Field<f64>;
pub type BoundarySpec64 = mesh::BoundarySpec<f64>;
pub type SpaceTimeField64 = caputo::SpaceTimeField<f64>;
pub type CaputoWeights64 = caputo::CaputoWeights<f64>;
pub type HatBasis64 = coeffs::HatBasis<f64>;
pub type Potential64 = coeffs::Potential<f64>;
pub type Nonlinearity64 = coeffs::Nonlinearity<f64>;
pub type ProblemSpec64 = forward::ProblemSpec<f64>;
pub type ObservationData64 = observe::ObservationData<f64>;
pub type IterationTrace64 = trace::IterationTrace<f64>;
