//! Bipartite unitary matrices whose Stinespring channels preserve a matrix
//! subalgebra.
//!
//! The crate is organised bottom-up:
//!
//! - [`matcore`]: dense complex linear algebra (Haar sampling, polar factor,
//!   partial transpose/trace, block views, JSON interchange).
//! - [`isometry`]: partial-isometry analysis and the (C1)-(C4) type flags.
//! - [`channels`]: the Heisenberg map `S_{U,β}`, the Schrödinger map `T_{U,β}`,
//!   algebra projections and the brute-force invariance oracle.
//! - [`generators`]: samplers for every structured family together with the
//!   explicit counterexample fixtures.
//! - [`scaling`]: the three Sinkhorn-type iterations.
//! - [`experiment`]: batch runs producing histogram / ε-sweep data files.

// Index loops mirror the block formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod channels;
pub mod experiment;
pub mod generators;
pub mod isometry;
pub mod matcore;
pub mod scaling;

pub use matcore::{CMat, MatError, RngStream, Subspace, Tolerances, C64};
