//! Metaplectic time-frequency analysis on finite grids.
//!
//! The library discretizes the metaplectic Wigner calculus: symplectic
//! matrix algebra and factorizations (`symplin`), centered grids and discrete
//! signals (`sigrid`), numeric metaplectic operators (`metop`), metaplectic
//! Wigner distributions and atoms (`mwd`), metaplectic Gabor frames
//! (`frames`) and mixed-norm / modulation-space reports (`tfspaces`).
//!
//! Everything is generic over the floating-point scalar through
//! [`num::Scalar`]; the `*64` aliases below fix `f64`, which is what the
//! command-line tool and the acceptance suite use.

pub mod frames;
pub mod io;
pub mod metop;
pub mod mwd;
pub mod num;
pub mod sigrid;
pub mod symplin;
pub mod tfspaces;
pub mod verify;

pub use num::{Scalar, C};

/// `f64` aliases for the main domain types.
pub type Mat64 = symplin::Mat<f64>;
pub type SymplecticMatrix64 = symplin::SymplecticMatrix<f64>;
pub type BlockSymplectic64 = symplin::BlockSymplectic<f64>;
pub type DerivedPack64 = symplin::DerivedPack<f64>;
pub type GeneratorFactor64 = symplin::GeneratorFactor<f64>;
pub type Factorization64 = symplin::Factorization<f64>;
pub type Grid64 = sigrid::Grid<f64>;
pub type Signal64 = sigrid::Signal<f64>;
pub type PhasePoint64 = sigrid::PhasePoint<f64>;
pub type WignerField64 = mwd::WignerField<f64>;
pub type LatticeSpec64 = frames::LatticeSpec<f64>;
pub type FrameReport64 = frames::FrameReport<f64>;
