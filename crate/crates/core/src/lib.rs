//! Body-parts tracking: background modeling, silhouette refinement, person
//! tracking, Gaussian part blobs and activity recognition.

pub mod activity;
pub mod baseline;
pub mod blob;
pub mod bodyparts;
pub mod error;
pub mod geometry;
pub mod hist;
pub mod imageio;
pub mod maskops;
pub mod scene;
pub mod synthgen;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{ForegroundMask, Mask, Point, Rect};
