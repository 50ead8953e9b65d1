//! Minimizers and almost minimizers of the vector-valued energy
//! `∫ |∇u|^2 + 2|u|`, together with numerical tools for analysing their
//! free boundaries: Weiss-type monotonicity, blowups, classification of
//! free-boundary points, non-degeneracy and an epiperimetric test.

pub mod energy;
pub mod error;
pub mod freeboundary;
pub mod grid;
pub mod homogeneity;
pub mod quadrature;
pub mod sampler;
pub mod solver;
pub mod verify;
pub mod weiss;

pub use error::{Error, Result};
pub use grid::{gradient, interpolate, make_field, BallFrame, BoundaryMask, GridSpec, VectorField};
pub use sampler::{FieldSampler, FnField, HalfSpace};
