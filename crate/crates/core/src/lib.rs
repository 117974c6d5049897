//! Numerical laboratory for two-phase heat conductors.
//!
//! * [`radial`]: concentric two-phase elliptic problems and the per-mode
//!   linearized profiles.
//! * [`shape`]: planar finite elements, the overdetermined residual and the
//!   quasi-Newton shape solve.
//! * [`parabolic`]: two-phase heat flow and its short-time diagnostics.
//! * [`laplace`]: Laplace transforms, transformed elliptic problems, barriers
//!   and large-parameter flux asymptotics.
//! * [`geometry`]: curvature, distance and exterior-set integrals.

pub mod error;
pub mod fv1d;
pub mod geometry;
pub mod fem;
pub mod laplace;
pub mod linalg;
pub mod parabolic;
pub mod radial;
pub mod shape;
pub mod special;

pub use error::{Error, Result};
pub use radial::{Conductivity, EllipticParams};
