//! Numerical laboratory for fully nonlinear uniformly elliptic equations
//!
//! ```text
//! F(x, D²u) + H(x, Du) − |u|^{s−1}u = f(x)
//! ```
//!
//! with superlinear gradient terms `|Du|^m`, `m ≤ 2 < ...`, `s > m`.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the double precision instances used by the
//! command line runner.

pub mod barrier;
pub mod check;
pub mod entire;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod scalar;
pub mod solver;
pub mod uniqueness;

pub use check::{CheckReport, VIOLATION_TOL};
pub use error::{Error, Result};
pub use scalar::{Real, Vector};

pub type BallGrid = grid::BallGrid<f64>;
pub type ScalarField = grid::ScalarField<f64>;
pub type SymMatrix = linalg::SymMatrix<f64>;
pub type EllipticityPair = operators::EllipticityPair<f64>;
pub type OperatorF = operators::OperatorF<f64>;
pub type HamiltonianH = operators::HamiltonianH<f64>;
pub type BarrierSpec = barrier::BarrierSpec<f64>;
pub type Report = check::CheckReport<f64>;

/// Single precision instances.
pub mod f32 {
    pub type BallGrid = crate::grid::BallGrid<f32>;
    pub type ScalarField = crate::grid::ScalarField<f32>;
    pub type SymMatrix = crate::linalg::SymMatrix<f32>;
    pub type EllipticityPair = crate::operators::EllipticityPair<f32>;
    pub type OperatorF = crate::operators::OperatorF<f32>;
    pub type HamiltonianH = crate::operators::HamiltonianH<f32>;
    pub type BarrierSpec = crate::barrier::BarrierSpec<f32>;
}
