//! Temporally consistent depth refinement for generated RGB-DN video.
//!
//! Generated depth and normals are fused per frame by perspective normal
//! integration with bilateral weights, coupled across frames through
//! flow-gated consistency and regularization terms in log-depth.

pub mod cli;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod integration;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
