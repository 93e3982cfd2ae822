//! Simulation of qubit-wise measurement of infinite qubit states.
//!
//! A *state* is a coherent sequence of density matrices `ρ_k` on `k` qubits.
//! Measuring it qubit by qubit in a sequence of orthonormal bases of `ℂ²`
//! induces a probability measure on infinite bit sequences. This crate builds
//! such states (notably the block state `ρ = ⊗_{n≥5} d_n` together with a
//! parameterised family of generalisations), evaluates the induced measure on
//! cylinders through a dense oracle path and a fast factored path, samples
//! measurement outcomes, constructs classical and quantum Martin-Löf tests, and
//! numerically checks the identities and bounds the constructions rely on.
//!
//! Index convention: in every Kronecker product the *first* factor varies
//! fastest, so qubit 0 is the least significant bit of a basis index and the
//! "last" qubit of a `k`-qubit register is its most significant bit.

pub mod bits;
pub mod error;
pub mod matrixcore;
pub mod measurement;
pub mod qmlt;
pub mod randlab;
pub mod states;
pub mod verify;

pub use bits::BitString;
pub use error::{Error, Result};
pub use matrixcore::{ComplexMatrix, DenseCap, QubitVector, C64};
pub use measurement::{BitSample, MeasurementSystem};
pub use qmlt::{ClassicalMlt, QuantumMlt, QuantumSigmaClass, StagedSigmaClass};
pub use states::{DenseChain, DenseStatePrefix, DensityBlock, FactoredState, State};

/// Numerical tolerances shared across modules.
pub mod tol {
    /// Hermiticity check.
    pub const HERMITIAN: f64 = 1e-9;
    /// Unit norm and orthogonality checks.
    pub const NORM: f64 = 1e-9;
    /// Eigenpair residuals `‖Mv − λv‖`.
    pub const EIGEN: f64 = 1e-8;
    /// Pure-arithmetic identities.
    pub const EXACT: f64 = 1e-12;
}
