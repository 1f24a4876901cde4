//! E-RESPD: element-wise sum of every `W` consecutive images.
//!
//! Output `i` covers input frames `i ..= i + W - 1` and keeps the index of
//! the first of them.

use std::collections::VecDeque;

use super::{RdiFrame, RdiSequence};
use crate::{HoodError, Result};

pub fn erespd(seq: &RdiSequence, window: usize) -> Result<RdiSequence> {
    if window == 0 {
        return Err(HoodError::InvalidConfig("E-RESPD window must be >= 1".into()));
    }
    let frames = seq.frames();
    if frames.len() < window {
        return Err(HoodError::InsufficientData(format!(
            "E-RESPD window {window} exceeds sequence length {}",
            frames.len()
        )));
    }
    let mut stream = ErespdStream::new(window);
    let mut out = Vec::with_capacity(frames.len() - window + 1);
    for f in frames {
        if let Some(summed) = stream.push(f)? {
            out.push(summed);
        }
    }
    RdiSequence::new(out)
}

/// Running-sum E-RESPD over a frame stream.
#[derive(Debug, Clone)]
pub struct ErespdStream {
    window: usize,
    buffer: VecDeque<RdiFrame>,
    sum: Vec<f64>,
}

impl ErespdStream {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "E-RESPD window must be >= 1");
        Self { window, buffer: VecDeque::with_capacity(window), sum: Vec::new() }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
        self.sum.clear();
    }

    /// Adds `frame`; once `window` frames are held, returns their sum and
    /// drops the oldest.
    pub fn push(&mut self, frame: &RdiFrame) -> Result<Option<RdiFrame>> {
        if let Some(first) = self.buffer.front() {
            if first.dims() != frame.dims() || first.kind != frame.kind {
                return Err(HoodError::Shape(format!(
                    "stream changed from {:?} {:?} to {:?} {:?}",
                    first.kind,
                    first.dims(),
                    frame.kind,
                    frame.dims()
                )));
            }
        } else if self.sum.len() != frame.data.len() {
            self.sum = vec![0.0; frame.data.len()];
        }
        self.sum.iter_mut().zip(&frame.data).for_each(|(s, v)| *s += v);
        self.buffer.push_back(frame.clone());
        if self.buffer.len() < self.window {
            return Ok(None);
        }
        let oldest = self.buffer.pop_front().expect("window >= 1");
        let out = RdiFrame { data: self.sum.clone(), frame_index: oldest.frame_index, ..oldest.clone() };
        self.sum.iter_mut().zip(&oldest.data).for_each(|(s, v)| *s -= v);
        if self.buffer.is_empty() {
            // W = 1: start the next window from an exact zero.
            self.sum.iter_mut().for_each(|s| *s = 0.0);
        }
        Ok(Some(out))
    }
}
