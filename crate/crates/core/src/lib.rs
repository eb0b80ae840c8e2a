//! Core of a surface-anchored phone display: planar inertial tracking,
//! automatic background capture, and camouflage rendering of the surface
//! patch the phone covers.

// `!(a > b)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod io;
pub mod motion_events;
pub mod noise;
pub mod pattern_synth;
pub mod pipeline;
pub mod renderer;
pub mod simulator;
pub mod tracker;

pub use error::{Error, Result};
