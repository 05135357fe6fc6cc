//! Acoustic echo cancellation engine: a multidelay block frequency-domain
//! adaptive filter with a double-talk robust learning-rate controller,
//! followed by a small recurrent network that estimates Bark-band
//! suppression gains for the residual echo.
//!
//! The crate also carries the simulation-data factory used to build
//! training sets and the evaluation metrics (ERLE, LSD, response time).

pub mod datagen;
pub mod dsp;
mod error;
pub mod features;
pub mod mdf;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod suppression;

pub use dsp::{AudioClock, BandLayout, FrameBuffer, SpectrumBlock, BINS, FFT_SIZE, HOP, NUM_BANDS, SAMPLE_RATE, WINDOW};
pub use error::{AecError, Result};
pub use features::{FeatureExtractor, FeatureVector, FEATURE_DIM};
pub use mdf::{FilterConfig, FilterOutput, LeakageEstimator, MdfFilter, StepControl};
pub use nn::{NetOutput, NetState, NetworkWeights};
pub use pipeline::{AecSession, FrameResult, RunReport, SessionOptions};
pub use suppression::{BandGains, BinGains};
