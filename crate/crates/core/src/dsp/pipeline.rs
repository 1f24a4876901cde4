use std::collections::VecDeque;

use rustfft::num_complex::Complex64;

use super::erespd::ErespdStream;
use super::rdi::{RangeProfile, RdiProcessor};
use super::{normalize_in_place, DspConfig, Mti, RdiFrame};
use crate::radar::{FrameCube, RadarConfig};
use crate::{HoodError, Result};

/// Normalized macro and micro images ending at the same raw frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRdi {
    pub macro_rdi: RdiFrame,
    pub micro_rdi: RdiFrame,
    /// Index of the newest raw frame that contributed.
    pub frame_index: usize,
}

/// Streaming frame-cube to normalized E-RESPD pair converter.
///
/// Macro and micro images enter their accumulators only once both exist
/// for a frame, so every output pair covers the same `erespd_window` raw
/// frame endings. The first pair appears after
/// [`DspConfig::warmup_frames`] frames.
#[derive(Debug, Clone)]
pub struct RdiPipeline {
    processor: RdiProcessor,
    mti_memory: Option<RangeProfile>,
    micro_ring: VecDeque<RangeProfile>,
    macro_sum: ErespdStream,
    micro_sum: ErespdStream,
    last_index: Option<usize>,
}

impl RdiPipeline {
    pub fn new(radar: &RadarConfig, dsp: &DspConfig) -> Result<Self> {
        let processor = RdiProcessor::new(radar, dsp)?;
        Ok(Self {
            mti_memory: None,
            micro_ring: VecDeque::with_capacity(dsp.micro_stack),
            macro_sum: ErespdStream::new(dsp.erespd_window),
            micro_sum: ErespdStream::new(dsp.erespd_window),
            last_index: None,
            processor,
        })
    }

    pub fn processor(&self) -> &RdiProcessor {
        &self.processor
    }

    pub fn warmup_frames(&self) -> usize {
        self.processor.dsp().warmup_frames()
    }

    pub fn push(&mut self, frame: &FrameCube) -> Result<Option<PairedRdi>> {
        if let Some(last) = self.last_index {
            if frame.frame_index <= last {
                return Err(HoodError::InvalidConfig(format!(
                    "frame index {} does not follow {last}",
                    frame.frame_index
                )));
            }
        }
        let p = &self.processor;
        let macro_profile = p.range_profile(frame, false)?;
        let micro_profile = p.range_profile(frame, true)?;
        self.last_index = Some(frame.frame_index);

        let filtered: Option<Vec<Complex64>> =
            self.mti_memory.as_ref().map(|memory| macro_profile.iter().zip(memory).map(|(a, b)| a - b).collect());
        self.mti_memory = Some(match (p.dsp().mti, self.mti_memory.take()) {
            (Mti::ExponentialAverage { alpha }, Some(mut clutter)) => {
                clutter.iter_mut().zip(&macro_profile).for_each(|(c, x)| *c = *x * alpha + *c * (1.0 - alpha));
                clutter
            }
            _ => macro_profile,
        });

        let stack = p.dsp().micro_stack;
        if self.micro_ring.len() == stack {
            self.micro_ring.pop_front();
        }
        self.micro_ring.push_back(micro_profile);

        let Some(filtered) = filtered else { return Ok(None) };
        if self.micro_ring.len() < stack {
            return Ok(None);
        }
        let macro_rdi = p.macro_from_filtered(&filtered, frame.frame_index);
        let refs: Vec<&RangeProfile> = self.micro_ring.iter().collect();
        let micro_rdi = p.micro_from_profiles(&refs, frame.frame_index)?;

        let summed_macro = self.macro_sum.push(&macro_rdi)?;
        let summed_micro = self.micro_sum.push(&micro_rdi)?;
        match (summed_macro, summed_micro) {
            (Some(mut macro_rdi), Some(mut micro_rdi)) => {
                normalize_in_place(&mut macro_rdi.data)?;
                normalize_in_place(&mut micro_rdi.data)?;
                Ok(Some(PairedRdi { macro_rdi, micro_rdi, frame_index: frame.frame_index }))
            }
            (None, None) => Ok(None),
            _ => unreachable!("macro and micro accumulators advance together"),
        }
    }

    /// Runs a whole recording; fails if it is too short to produce output.
    pub fn process_all<I>(radar: &RadarConfig, dsp: &DspConfig, frames: I) -> Result<Vec<PairedRdi>>
    where
        I: IntoIterator<Item = Result<FrameCube>>,
    {
        let mut pipeline = Self::new(radar, dsp)?;
        let mut seen = 0usize;
        let mut out = Vec::new();
        for frame in frames {
            seen += 1;
            if let Some(pair) = pipeline.push(&frame?)? {
                out.push(pair);
            }
        }
        let min = pipeline.warmup_frames();
        if seen < min {
            return Err(HoodError::InsufficientData(format!("preprocessing needs at least {min} frames, got {seen}")));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{erespd, normalize_rdi, RdiSequence};
    use crate::radar::{simulate_frame, simulate_recording, Scene, TargetSpec};

    fn small_dsp() -> DspConfig {
        DspConfig { erespd_window: 5, micro_stack: 3, ..Default::default() }
    }

    fn human_scene(duration: f64) -> Scene {
        Scene {
            targets: vec![TargetSpec::breathing_human(2.0, 0.3, 0.004, 1.0), TargetSpec::static_reflector(3.0, 1.0)],
            noise_std: 0.02,
            duration,
            seed: 8,
        }
    }

    #[test]
    fn output_count_matches_window_arithmetic() {
        let radar = RadarConfig::default();
        let dsp = small_dsp();
        let scene = human_scene(1.0);
        let pairs = RdiPipeline::process_all(&radar, &dsp, simulate_recording(&radar, &scene).unwrap()).unwrap();
        // 20 frames - W + 1 - (stack - 1)
        assert_eq!(pairs.len(), 20 - 5 + 1 - 2);
        assert_eq!(pairs[0].frame_index, 6);
        assert_eq!(pairs.last().unwrap().frame_index, 19);
        for p in &pairs {
            assert_eq!(p.macro_rdi.dims(), (64, 64));
            assert_eq!(p.micro_rdi.dims(), (64, 64));
            assert!(p.macro_rdi.data.iter().chain(&p.micro_rdi.data).all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn too_short_recording_names_minimum() {
        let radar = RadarConfig::default();
        let scene = human_scene(0.3);
        let err =
            RdiPipeline::process_all(&radar, &small_dsp(), simulate_recording(&radar, &scene).unwrap()).unwrap_err();
        assert!(err.to_string().contains("at least 7 frames"), "{err}");
    }

    #[test]
    fn streaming_pairs_equal_batch_composition() {
        let radar = RadarConfig::default();
        let dsp = small_dsp();
        let scene = human_scene(1.0);
        let frames: Vec<FrameCube> = (0..20).map(|i| simulate_frame(&radar, &scene, i).unwrap()).collect();
        let pairs = RdiPipeline::process_all(&radar, &dsp, frames.iter().cloned().map(Ok)).unwrap();

        let p = RdiProcessor::new(&radar, &dsp).unwrap();
        let macros: Vec<RdiFrame> = (2..20).map(|e| p.macro_rdi(&frames[e - 1..=e]).unwrap()).collect();
        let micros: Vec<RdiFrame> = (2..20).map(|e| p.micro_rdi(&frames[e - 2..=e]).unwrap()).collect();
        let m = erespd(&RdiSequence::new(macros).unwrap(), 5).unwrap();
        let u = erespd(&RdiSequence::new(micros).unwrap(), 5).unwrap();
        assert_eq!(m.len(), pairs.len());
        for ((pair, a), b) in pairs.iter().zip(m.frames()).zip(u.frames()) {
            let (a, b) = (normalize_rdi(a).unwrap(), normalize_rdi(b).unwrap());
            for (x, y) in pair.macro_rdi.data.iter().zip(&a.data).chain(pair.micro_rdi.data.iter().zip(&b.data)) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let radar = RadarConfig::default();
        let scene = human_scene(1.0);
        let mut pipe = RdiPipeline::new(&radar, &small_dsp()).unwrap();
        pipe.push(&simulate_frame(&radar, &scene, 3).unwrap()).unwrap();
        assert!(pipe.push(&simulate_frame(&radar, &scene, 3).unwrap()).is_err());
    }
}
