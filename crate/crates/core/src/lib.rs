//! Robust joint active/passive beamforming for an IRS-aided multi-user MISO
//! downlink under statistical channel-estimation error.
//!
//! The library is organised in four layers:
//!
//! - [`channel`] — channel generation: Rayleigh links with configurable
//!   large-scale gains, statistical estimation errors, cascaded BS-IRS-user
//!   matrices and the aggregated error variance σ_g².
//! - [`rate`] — rate evaluation: the robust per-user achievable rate, the
//!   WMMSE surrogate (receive scalars u, MSE weights w) and the augmented
//!   Lagrangian objective in both its summation and trace forms.
//! - [`solver`] — the optimizer: BSUM inner sweeps with closed-form block
//!   updates for the precoder, its power-feasible copy, the auxiliary gain
//!   matrix and the IRS phases, wrapped in a penalty dual decomposition
//!   outer loop with dual ascent and penalty decay.
//! - [`sim`] — the Monte Carlo harness: scenario files, seeded per-trial
//!   streams, the robust / non-robust / perfect-CSI design schemes, and
//!   CSV/JSON result emission.
//!
//! The `irsbeam` binary exposes `run`, `validate` and `bench` subcommands on
//! top of [`sim`].

pub mod channel;
pub mod rate;
pub mod rng;
pub mod sim;
pub mod solver;

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

/// Dense complex matrix used throughout (column-major, f64 components).
pub type CMat = DMatrix<Complex64>;
/// Complex column vector.
pub type CVec = DVector<Complex64>;
/// Complex row vector (channel rows, IRS phase vectors).
pub type CRow = RowDVector<Complex64>;

/// Entrywise max-modulus norm of a complex matrix.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
