//! Surrogate-assisted inverse design of pixelated capacitive-coupling plates.
//!
//! A plate is encoded as a 147-bit genome ([`geometry`]), labeled with its
//! main resonance ([`sparams`], [`oracle`]), learned by a residual CNN
//! ([`surrogate`]) and optimized with binary PSO ([`bpso`]). [`workbench`]
//! ties the steps into datasets and design runs.

pub mod bpso;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod sparams;
pub mod stats;
pub mod surrogate;
pub mod workbench;

pub use error::{Error, Result};
