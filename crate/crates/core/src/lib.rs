//! Peak detection for ChIP-Seq style count data.
//!
//! Aligned tag counts are smoothed with a matched filter (the estimated peak
//! shape), every local maximum of the smoothed track is tested against a
//! Monte Carlo null for smoothed Poisson noise at the local background rate,
//! and the resulting p-values go through Benjamini-Hochberg FDR control. The
//! background rate comes from a two-window regression on the Control sample.

pub mod align;
pub mod background;
pub mod error;
pub mod kernel;
pub mod multitest;
pub mod pipeline;
pub mod seed;
pub mod smooth;
pub mod spikein;
pub mod spline;
pub mod survival;
pub mod tags;
pub mod track;

pub use error::{Error, Result};
pub use kernel::Kernel;
pub use track::{ChromCounts, ChromSizes, CountTrack};
