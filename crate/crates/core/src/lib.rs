//! Human presence and out-of-distribution detection on 60 GHz FMCW radar.
//!
//! The crate covers the whole chain:
//!
//! ```text
//! radar    synthetic frame cubes (N_rx x N_c x N_s) for parameterized scenes
//!   |
//! dsp      macro RDI (range FFT, Rx mean, MTI, Doppler FFT)
//!          micro RDI (8-frame stacking, mean removal, sinc low-pass, Doppler FFT)
//!          E-RESPD sliding-window accumulation, min-max normalization
//!   |
//! model    2 encoders / 4 decoders trained on summed per-category MSE
//!   |
//! detector per-category thresholds, Presence / NoPresence verdicts
//! metrics  AUROC, AUPR_IN, AUPR_OUT, FPR95
//! ```
//!
//! `nn` is the small tensor engine behind the model, `dataio` owns the binary
//! dataset and checkpoint formats, and `pipeline` wires everything into the
//! seeded synthetic benchmark.

pub mod dataio;
pub mod detector;
pub mod dsp;
mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod radar;

pub use error::{HoodError, Result};
