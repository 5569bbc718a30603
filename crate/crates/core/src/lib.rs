//! Fidelity/time trade-off toolkit for coupled-spin quantum gates.
//!
//! The crate is `no_std` (it needs `alloc`). It covers:
//!
//! - [`spinsys`]: Heisenberg-coupled spin systems, drift and control
//!   Hamiltonians, and the target-gate library.
//! - [`dynamics`]: time meshes, piecewise-constant control fields and
//!   Schrödinger propagation with cached propagators.
//! - [`objective`]: gate distances and their exact gradients with respect to
//!   every control knob.
//! - [`dmorph`]: gradient-flow optimization with adaptive Runge–Kutta stepping
//!   and landscape metrics.
//! - [`pft`]: Pareto front tracking in the control time and critical-time
//!   estimation.
//! - [`noise`]: additive white noise error prediction and Monte-Carlo checks.
//! - [`phase`]: global-phase classification of phase-independent searches.
//!
//! File formats, the command-line front end and parallel orchestration live
//! in the companion `qpareto` crate.

#![no_std]

extern crate alloc;

pub mod dmorph;
pub mod dynamics;
mod error;
pub mod integrator;
pub mod linalg;
pub mod noise;
pub mod objective;
pub mod pft;
pub mod phase;
pub mod spinsys;

pub use error::{Error, Result};

pub use dmorph::{dmorph_run, DmorphSettings, GradientMode, OptimizationTrace, Termination};
pub use dynamics::{make_grid, ControlFieldSet, PropagationCache, TimeGrid};
pub use objective::ObjectiveKind;
pub use spinsys::{make_gate, GateKind, SpinSystem, TargetGate};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex operator on the `N = 2^n` dimensional Hilbert space.
pub type Operator = nalgebra::DMatrix<C64>;
