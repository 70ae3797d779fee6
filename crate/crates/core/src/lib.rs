//! Multi-modal spiking network for time-series classification and forecasting.
//!
//! A sample carries a series window and an image (a GASF rendering of the
//! window). Both are optionally wavelet-decomposed, encoded into spike trains
//! by LIF encoders, moved to the frequency domain, projected into a joint
//! space and fused with similarity-derived weights before a small head.

pub mod data;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod lif;
pub mod model;
pub mod numerics;
pub mod param;
pub mod train;
pub mod wavelet;

pub use error::{Error, ErrorKind, Result};
