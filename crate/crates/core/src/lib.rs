//! Digital predistortion laboratory.
//!
//! A simulated memoryful power amplifier, three families of postinverse
//! compensators (least-squares memory polynomial, an attention-gated ensemble
//! of amplitude-offset memory polynomials, and a real-valued time-delay MLP),
//! and an indirect-learning harness that fits, deploys and sweeps them.
//!
//! Data-parallel inner loops (per-segment gradients, architecture-search grid
//! points, sweep cells) go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and plain iteration otherwise. Reductions are
//! always performed sequentially in index order, so results are bit-identical
//! in both modes.

pub mod agmpnn;
pub mod config;
pub mod error;
pub mod exec;
pub mod ila;
mod linalg;
pub mod mpm;
pub mod pa_sim;
pub mod persist;
pub mod rvftdnn;
pub mod signal;
pub mod training;

pub use error::{DpdError, Result};
pub use num_complex::Complex64;
