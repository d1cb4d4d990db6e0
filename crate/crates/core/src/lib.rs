//! Saliency-guided hierarchical visual tracking.
//!
//! The pipeline runs in two phases per frame. A global phase builds a
//! 19-map feature stack, combines it with online-learnt weights into a
//! top-down saliency map and extracts candidate target locations. An
//! integration mechanism scores those candidates with a ridge-coded
//! appearance model and decides whether to trust them outright, use them to
//! seed a local search, or fall back to the previous estimate. The local
//! phase samples affine particles, fuses appearance and superpixel HSV
//! histogram cues into a joint likelihood, and refines the top candidates
//! with a constrained alternating least-squares solver.

pub mod appearance;
pub mod config;
pub mod error;
pub mod features;
pub mod image;
pub mod particle;
pub mod refine;
pub mod saliency;
pub mod superpixel;
pub mod tracker;
pub mod warp;

pub use config::TrackerConfig;
pub use error::{Error, Result};
pub use image::{ColorPatch, GrayPatch, HsvPatch, RgbFrame, ScalarMap};
pub use particle::{AffineState, MotionCovariance, Particle, TEMPLATE_SIDE};
pub use tracker::{Diagnostics, SearchMode, Tracker};
pub use warp::BoundingBox;
