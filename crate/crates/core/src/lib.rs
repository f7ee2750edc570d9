//! Data-driven predictive planning for aerial inspection.
//!
//! A quadrotor LTI plant ([`lti`]) generates offline data whose Hankel
//! matrices ([`excitation`]) stand in for a model. The [`planner`] compiles one
//! receding-horizon step into a mixed-integer QP that couples motion, gimbal
//! orientation and facet inspection, using the FOV and back-face geometry in
//! [`geometry`]. [`mission`] closes the loop.

pub mod assets;
pub mod error;
pub mod excitation;
pub mod geometry;
pub mod lti;
pub mod mission;
pub mod planner;

pub use error::{Error, Result};
