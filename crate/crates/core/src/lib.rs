//! Chart-local verification engine for generalized geometry: split exact
//! Courant algebroids, small Dirac structures, transverse generalized
//! metrics and the compatibility connections that certify gaugeability of
//! the associated 2d sigma model, quotient (Riemannian-submersion) data for
//! projectable foliations, and a discretized loop phase space where the
//! reduced Hamiltonian story can be checked numerically.
//!
//! Everything is symbolic-first (exact differentiation on expression ASTs)
//! with numeric linear algebra at seeded sample points deciding the
//! subbundle statements.

pub mod courant;
pub mod dirac;
pub mod error;
pub mod fields;
pub mod loopspace;
pub mod transverse;

pub use error::{Error, Result};
pub use fields::{Chart, Sampling, ScalarField, TensorField, Valence};

/// Residual thresholds used by the pass/fail verdicts. `pass` and `fail`
/// are scenario-configurable; the gap between them must stay empty (a
/// residual landing in between makes a check inconclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Max |<e_a, e_b>| for isotropy.
    pub isotropy: f64,
    /// Max bracket-membership residual for involutivity.
    pub involutivity: f64,
    /// Min singular value of the frame matrix for regularity.
    pub regularity_sigma: f64,
    /// Pass bound for the transverse residuals (lemma solve, bracket oracle).
    pub pass: f64,
    /// Fail floor: residuals at or above this mean a definite failure.
    pub fail: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            isotropy: 1e-10,
            involutivity: 1e-9,
            regularity_sigma: 1e-8,
            pass: 1e-9,
            fail: 1e-6,
        }
    }
}
