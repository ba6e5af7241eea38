//! Mitochondrial boundary segmentation for electron tomography slice stacks.
//!
//! The crate runs in three phases: per-slice preprocessing, ridge detection
//! and curve fitting; seeding, snake growth and validation per block of
//! slices; and overlay, mesh and model export.

pub mod binio;
pub mod config;
pub mod curves;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod meshout;
pub mod pipeline;
pub mod plane;
pub mod ridges;
pub mod snakes;
#[doc(hidden)]
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
