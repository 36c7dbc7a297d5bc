//! Construction and numerical certification of the free-boundary minimal
//! Möbius band in a spherical cap of the 4-sphere.
//!
//! The band is generated by the profile system for `(y, z)` with the lifted
//! coordinate `x = √(1 - y² - z²)`. Everything downstream is built from a
//! calibrated [`ode::Trace`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod dop853_tableau;

pub mod calibrate;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod integrator;
pub mod mesh;
pub mod ode;
pub mod report;
pub mod roots;
pub mod spectral;
pub mod stability;

pub use calibrate::{calibrate, CapParams};
pub use error::{Error, Result};
pub use integrator::IntegratorConfig;
pub use ode::{OdeState, Trace};
