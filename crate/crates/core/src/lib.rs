//! Pose estimation of known object models by alignment against volumetric
//! density fields.
//!
//! The pipeline: sample a model's surface ([`object_model`]), initialize pose
//! hypotheses from a segmented view ([`init`]), refine every hypothesis by
//! gradient ascent on an occupancy fitness over a [`density_field`]
//! ([`fitting`]), and score estimates with symmetry-aware relative pose errors
//! ([`evaluation`]). [`scene_synth`] produces synthetic density fields with
//! known ground truth for testing the whole chain.

pub mod density_field;
pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod geometry;
pub mod init;
pub mod object_model;
pub mod pipeline;
pub mod scene_synth;

pub use error::{Error, Result};
