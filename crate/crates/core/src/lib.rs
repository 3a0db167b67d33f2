//! Polynomial feedback synthesis for polynomial control-affine systems.
//!
//! Given dynamics `ẋ = A x + Σ F_p x^⊗p + (B + Σ G_p (x^⊗p ⊗ I_m)) u` and a running
//! cost `½(xᵀQx + uᵀRu + Σ q_pᵀ x^⊗p)`, this crate computes the Taylor
//! coefficients `v_2, …, v_d` of the value function in Kronecker form, extracts
//! the associated polynomial feedback law, and provides the simulation and
//! residual machinery needed to validate it.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the CLI and
//! anything else touching the operating system live in the companion `ppr` crate.
//!
//! Module map:
//! - [`kronalg`]: Kronecker powers, perfect shuffles, symmetrization, k-way Lyapunov products.
//! - [`lyapunov`]: Riccati solver and the structured k-way Lyapunov solver.
//! - [`synthesis`]: the degree-by-degree assembly and solve of the value coefficients.
//! - [`control`]: value/gradient evaluation, gain extraction, HJB residuals.
//! - [`models`]: the aircraft stall and Allen-Cahn benchmark problems.
//! - [`sim`]: adaptive explicit and Rosenbrock integrators with cost quadrature.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod control;
pub mod error;
pub mod kronalg;
pub mod lyapunov;
pub mod models;
pub mod poly;
pub mod sim;
pub mod synthesis;

pub use control::{PolyController, ValueFunction};
pub use error::{Error, Result};
pub use kronalg::{KronVector, ShuffleSpec};
pub use lyapunov::{AreSolution, KwaySolver};
pub use poly::{CoeffMatrix, PolyCost, PolyDynamics, SparseCoeff};
pub use sim::{SimOptions, Trajectory};
pub use synthesis::{synthesize, SynthesisOptions, Synthesizer};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
