//! Modeling, planning, and control of planar handed-shearing-auxetic (HSA)
//! parallel robots.
//!
//! The crate covers the full pipeline: closed-form constant-strain kinematics
//! of the virtual backbone, Euler-Lagrange dynamics with twist-dependent rod
//! stiffness, the collocated coordinate transform, steady-state planning,
//! P-satI-D feedback control, a dual-rate closed-loop simulator, and
//! least-squares identification of the elongation and stiffness coefficients.

pub mod collocated;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod params;
pub mod planning;
pub mod quadrature;
pub(crate) mod series;
pub mod sim;
pub mod sysid;
pub mod verify;

pub use error::{HsaError, Result};
pub use kinematics::{BackboneGeometry, Configuration, PlanarPose};
pub use params::HsaParams;
