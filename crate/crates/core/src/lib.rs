//! Spectral laboratory for the Möbius-invariant Willmore flow of tori written
//! as normal graphs over the Clifford torus in `S³`.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod linearize;
pub mod moebius;
pub mod perturb;
pub mod spectral;

pub use error::{Error, Result};
