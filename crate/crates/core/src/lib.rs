//! Hierarchical two-agent camera control on a simulated sensor.
//!
//! An exposure agent picks the sensor integration time from a 146-entry
//! table; once the frame histogram is usable, a focus agent drives the lens
//! until a detector finds the object. Both agents are trained with a clipped
//! surrogate policy-gradient learner written from scratch in [`rl`].

pub mod bench;
pub mod detect;
pub mod encoder;
pub mod env;
pub mod error;
pub mod harness;
pub mod image;
pub mod iqa;
pub mod optics;
pub mod rl;
pub mod scenes;
pub mod stats;

pub use error::{Error, Result};
