//! Periodic homogenization of elliptic operators with lower-order terms.
//!
//! The pipeline: a [`lattice::Lattice`] and coefficient [`fields::PeriodicField`]s
//! define a problem; [`cell`] solves the cell problems and assembles the effective
//! symbol; [`operator`] discretizes B_ε and B⁰ in plane waves on the unit torus;
//! [`propagate`] evolves wave and Schrödinger problems by spectral calculus;
//! [`homog`] builds correctors and first-order approximations; [`harness`] runs
//! convergence sweeps and the Trotter–Kato matrix oracle.

pub mod benchmarks;
pub mod cell;
pub mod error;
pub mod fields;
pub mod harness;
pub mod homog;
pub mod lattice;
pub mod linalg;
pub mod operator;
pub mod problem;
pub mod propagate;
pub mod quadrature;

pub use error::{Error, Result};
pub use fields::{multiply, ModeBox, PeriodicField, TorusFunction};
pub use lattice::{Lattice, Mode};
pub use linalg::{CMat, CVec, C64};
pub use cell::{CellSolution, SymbolSpec};
pub use operator::{DiscreteOperator, FloquetLayout, SpectralFn};
pub use problem::{PrincipalRule, Problem};
pub use propagate::{SourceTerm, WaveState};
pub use homog::{CorrectorKit, NormTag};
