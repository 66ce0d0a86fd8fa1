//! Places formal-employment counts on street faces.
//!
//! Establishments (postal code, sector, job count) are matched to the street
//! faces that carry addresses under the same postal code, and their jobs are
//! split across those faces in proportion to the number of non-residential
//! addresses of a compatible species. Results come out as one row per
//! (face, postal code) with a representative point on the face.

pub mod allocator;
pub mod error;
pub mod export;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
