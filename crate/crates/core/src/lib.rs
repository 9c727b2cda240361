//! Face identification and avatar synthesis.
//!
//! The pipeline runs left to right:
//!
//! ```text
//! imaging -> normalize -> features -> matcher -> eval
//!                      \-> avatar (attributes -> params -> mesh -> OBJ)
//! ```
//!
//! `dataset` supplies manifests, the frontal-gallery split and a procedural
//! face generator used for desk-scale evaluation.

pub mod avatar;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod gallery_file;
pub mod imaging;
pub mod matcher;
pub mod normalize;
pub mod pipeline;

pub use error::{Error, Result};
