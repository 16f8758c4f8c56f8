//! Small rigid body in a two-dimensional perfect fluid with vorticity.
//!
//! Boundary-integral potentials and added mass, vortex-blob transport, the
//! coupled body/fluid system at body size ε, the limiting vortex-wave system
//! and the normal-form diagnostics connecting the two.

pub mod biotsavart;
pub mod contour;
pub mod coupled_system;
pub mod geometry;
pub mod limit_system;
pub mod normal_form;
pub mod potential;
