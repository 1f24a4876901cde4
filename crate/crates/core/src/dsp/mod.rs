//! Frame cubes to normalized macro / micro range-Doppler images.

mod erespd;
pub mod fft;
mod pipeline;
mod rdi;

use serde::{Deserialize, Serialize};

use crate::{HoodError, Result};

pub use erespd::{erespd, ErespdStream};
pub use pipeline::{PairedRdi, RdiPipeline};
pub use rdi::{compute_macro_rdi, compute_micro_rdi, RdiProcessor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdiKind {
    Macro,
    Micro,
}

/// Slow-time clutter filter of the macro chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Mti {
    /// Current frame minus the previous frame, chirp by chirp.
    FrameDifference,
    /// Current frame minus an exponential running average of past frames.
    ExponentialAverage { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub erespd_window: usize,
    /// Frames stacked along slow time for one micro RDI.
    pub micro_stack: usize,
    /// Micro-chain low-pass cutoff as a fraction of slow-time Nyquist.
    pub sinc_cutoff: f64,
    pub sinc_taps: usize,
    pub mti: Mti,
    /// `ln(1 + |X|)` instead of `|X|`.
    pub log_magnitude: bool,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            erespd_window: 200,
            micro_stack: 8,
            sinc_cutoff: 0.1,
            sinc_taps: 33,
            mti: Mti::FrameDifference,
            log_magnitude: false,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HoodError::InvalidConfig(m));
        if self.erespd_window == 0 {
            return bad("erespd_window must be >= 1".into());
        }
        if self.micro_stack == 0 {
            return bad("micro_stack must be >= 1".into());
        }
        if !(self.sinc_cutoff > 0.0 && self.sinc_cutoff <= 1.0) {
            return bad(format!("sinc_cutoff must be in (0, 1], got {}", self.sinc_cutoff));
        }
        if self.sinc_taps == 0 || self.sinc_taps.is_multiple_of(2) {
            return bad(format!("sinc_taps must be odd, got {}", self.sinc_taps));
        }
        if let Mti::ExponentialAverage { alpha } = self.mti {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return bad(format!("MTI alpha must be in (0, 1], got {alpha}"));
            }
        }
        Ok(())
    }

    /// Raw frames consumed before the first normalized pair comes out.
    pub fn warmup_frames(&self) -> usize {
        self.erespd_window + self.micro_stack - 1
    }
}

/// One range-Doppler image, row-major `[doppler][range]`, zero Doppler at
/// row `n_doppler / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RdiFrame {
    pub n_doppler: usize,
    pub n_range: usize,
    pub data: Vec<f64>,
    pub kind: RdiKind,
    pub frame_index: usize,
}

impl RdiFrame {
    pub fn zeros(n_doppler: usize, n_range: usize, kind: RdiKind, frame_index: usize) -> Self {
        Self { n_doppler, n_range, data: vec![0.0; n_doppler * n_range], kind, frame_index }
    }

    pub fn at(&self, doppler: usize, range: usize) -> f64 {
        self.data[doppler * self.n_range + range]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_doppler, self.n_range)
    }

    /// `(doppler, range)` of the largest pixel.
    pub fn argmax(&self) -> (usize, usize) {
        let i = self.data.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        (i / self.n_range, i % self.n_range)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Time-ordered images of a single kind and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RdiSequence {
    frames: Vec<RdiFrame>,
}

impl RdiSequence {
    pub fn new(frames: Vec<RdiFrame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            for w in frames.windows(2) {
                if w[1].kind != first.kind || w[1].dims() != first.dims() {
                    return Err(HoodError::Shape(format!(
                        "frame {} is {:?} {:?}, sequence is {:?} {:?}",
                        w[1].frame_index,
                        w[1].kind,
                        w[1].dims(),
                        first.kind,
                        first.dims()
                    )));
                }
                if w[1].frame_index <= w[0].frame_index {
                    return Err(HoodError::InvalidConfig(format!(
                        "frame indices must increase strictly ({} after {})",
                        w[1].frame_index, w[0].frame_index
                    )));
                }
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[RdiFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<RdiFrame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn kind(&self) -> Option<RdiKind> {
        self.frames.first().map(|f| f.kind)
    }
}

/// Min-max scaling of one image to `[0, 1]`; a constant image maps to zeros.
pub fn normalize_rdi(frame: &RdiFrame) -> Result<RdiFrame> {
    let mut out = frame.clone();
    normalize_in_place(&mut out.data)?;
    Ok(out)
}

pub(crate) fn normalize_in_place(data: &mut [f64]) -> Result<()> {
    if data.iter().any(|v| v.is_nan()) {
        return Err(HoodError::NonFinite("NaN pixel in RDI".into()));
    }
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(HoodError::NonFinite("infinite pixel in RDI".into()));
    }
    let span = hi - lo;
    if span == 0.0 {
        data.iter_mut().for_each(|v| *v = 0.0);
    } else {
        data.iter_mut().for_each(|v| *v = ((*v - lo) / span).clamp(0.0, 1.0));
    }
    Ok(())
}
