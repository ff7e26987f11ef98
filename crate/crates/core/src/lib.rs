//! Simulation toolkit for photon-pair condensates stabilised by engineered
//! dissipation on a 1D bosonic lattice.
//!
//! The crate is layered bottom-up:
//!
//! * [`sparse`], [`basis`] and [`fock`] build truncated-Fock operators,
//! * [`darkstate`] constructs and checks the exact pair-condensate dark states,
//! * [`lindblad`] integrates the master equation densely (the reference
//!   backend), [`trajectory`] unravels it into quantum jumps, and [`mps`]
//!   runs the same trajectories on matrix product states,
//! * [`glauber`] simulates the classical defect kinetics,
//! * [`cqed`] checks the circuit-QED reduction to the pair jump.

pub mod basis;
pub mod cqed;
pub mod darkstate;
pub mod error;
pub mod fock;
pub mod glauber;
pub mod linalg;
pub mod lindblad;
pub mod mps;
pub mod ode;
pub mod sparse;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
