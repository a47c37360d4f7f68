//! Saccadic step-length statistics.
//!
//! Eye-tracker traces are split into fixation and saccadic samples, the
//! lengths of consecutive saccadic steps are measured in euclidean or
//! Poincaré-disc geometry, and the pooled step lengths are modelled by a
//! generalized Pareto distribution (GPD). Repeating the fit over random image
//! subsets gives a per-observer cloud of GPD parameters, which is summarised
//! by a Gaussian mixture and, after a square-root-density embedding, used to
//! train one-vs-rest linear SVMs that identify observers.
//!
//! Module map:
//!
//! - [`ingest`]: trace CSV parsing and I-DT fixation segmentation
//! - [`geometry`]: pixel to disc mapping, euclidean and hyperbolic steps
//! - [`gpd`]: density, sampling, shift-then-fit MLE, adjusted R²
//! - [`trials`]: the random image-subset experiment and its parameter database
//! - [`gmm`]: EM for 2-D Gaussian mixtures over (k, σ)
//! - [`features`]: √pdf embedding on a common grid and variance selection
//! - [`classify`]: Pegasos-style linear SVM and the recognition-rate protocol
//! - [`synth`]: seeded saccade-and-fixate trace generator

pub mod classify;
pub mod error;
pub mod features;
pub mod geometry;
pub mod gmm;
pub mod gpd;
pub mod ingest;
pub mod json;
mod optim;
pub mod synth;
pub mod trials;

pub use error::{Error, Result};
