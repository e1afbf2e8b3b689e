//! Noise-robust color edge detection.
//!
//! The detector converts RGB input to XYZ, denoises it with a hard-threshold
//! collaborative filter, builds an edge strength map from the color vector
//! gradient and two-scale anisotropic directional derivatives, and refines
//! that map into a thin binary edge map. Evaluation metrics, classical
//! baselines and a dataset harness live alongside.

pub mod baselines;
pub mod cbm3d;
pub mod colorspace;
pub mod config;
pub mod error;
pub mod esm;
pub mod harness;
pub mod imaging;
pub mod kernels;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod synthetic;

pub use error::{Error, Result};
pub use imaging::{ColorSpace, Field, NoiseParams, PlanarImage};
