//! Deterministic diffusion bridges between point distributions.
//!
//! Two denoising diffusion models that share a noise schedule induce a
//! bridge between their data distributions: the probability-flow ODE of the
//! source model maps source points into a common Gaussian latent space, and
//! the reverse ODE of the target model maps those latents into target points.
//! Both legs are deterministic, so the translation is a well-defined map and
//! can be audited point by point.
//!
//! The crate provides the pieces of that pipeline plus classical
//! optimal-transport baselines to compare against:
//!
//! - [`schedule`]: variance-preserving noise schedules,
//! - [`cloud`]: tagged point clouds, standardization, CSV I/O,
//! - [`datasets`]: synthetic 2D distributions (moons, checkerboards, rings, squares),
//! - [`scorenet`]: small MLP noise predictors, training, and an analytic
//!   Gaussian oracle for validation,
//! - [`odesolve`]: deterministic DDIM-style probability-flow integration,
//! - [`bridge`]: domain translation and cycle-consistency checks,
//! - [`ot`]: exact EMD, entropic Sinkhorn, linear map estimation, and
//!   barycentric color transfer,
//! - [`image`]: binary PPM raster I/O and pixel/point-cloud conversion,
//! - [`model_io`]: versioned model serialization.

pub mod bridge;
pub mod cloud;
pub mod datasets;
mod error;
pub mod image;
pub mod model_io;
pub mod odesolve;
pub mod ot;
pub mod schedule;
pub mod scorenet;

pub use error::{Error, Result};
