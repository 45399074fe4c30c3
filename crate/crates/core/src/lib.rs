//! Radiation from an oscillating two-charge dipole, worked in k-space.
//!
//! Mode amplitudes are time integrals over the charge trajectory; potentials
//! and fields are rebuilt from them by quadrature over a spherical k-grid.
//! Energy and momentum functionals, a truncated ladder-operator algebra and
//! a set of identity checks sit on top.

// `!(x > 0.0)` style checks are there to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod conjugacy;
pub mod error;
pub mod fields;
pub mod identities;
pub mod kspace;
pub mod observables;
pub mod quadrature;
pub mod quantum;
pub mod trajectory;
pub mod units;

pub use error::{Error, Result};
pub use kspace::{AmplitudeGrid, GridParams, KGrid, KPoint, ModeAmplitude, TimeQuadrature};
pub use trajectory::{step_theta0, DipoleSpec, Envelope, Vec3};
pub use units::{Constants, UnitsMode};
