//! Dasymetric disaggregation of census counts onto a regular tile grid.
//!
//! The pipeline excludes non-residential tiles around dense clusters of
//! points of interest, then splits each admin unit's population over its
//! remaining tiles in proportion to built-up pixel counts.

pub mod disaggregate;
pub mod error;
pub mod evaluate;
pub mod geo;
pub mod io;
pub mod pipeline;
pub mod poi_filter;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
