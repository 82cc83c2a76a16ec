//! Symbolic scalar and tensor fields on a single coordinate chart, with
//! Cartan calculus and Levi-Civita data.

pub mod calculus;
pub mod chart;
pub mod expr;
pub mod tensor;

pub use calculus::{
    christoffel, exterior_derivative, interior_product, lie_derivative, Christoffel,
    ChristoffelValues,
};
pub use chart::{Chart, Sampling, ScalarField};
pub use tensor::{TensorField, Valence};
