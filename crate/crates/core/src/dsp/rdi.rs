use rustfft::num_complex::Complex64;

use super::fft::{fftshift, hann, sinc_lowpass, Fft};
use super::{DspConfig, Mti, RdiFrame, RdiKind};
use crate::radar::{FrameCube, RadarConfig};
use crate::{HoodError, Result};

/// Range-time map of one frame: `[chirp][range_bin]`, averaged over Rx.
pub type RangeProfile = Vec<Complex64>;

/// FFT plans, windows and filter taps for one radar configuration.
#[derive(Debug, Clone)]
pub struct RdiProcessor {
    radar: RadarConfig,
    dsp: DspConfig,
    range_fft: Fft,
    macro_fft: Fft,
    micro_fft: Fft,
    fast_window: Vec<f64>,
    macro_window: Vec<f64>,
    micro_window: Vec<f64>,
    sinc: Vec<f64>,
}

impl RdiProcessor {
    pub fn new(radar: &RadarConfig, dsp: &DspConfig) -> Result<Self> {
        radar.validate()?;
        dsp.validate()?;
        let slow = radar.n_chirps * dsp.micro_stack;
        Ok(Self {
            radar: radar.clone(),
            dsp: dsp.clone(),
            range_fft: Fft::new(radar.n_samples),
            macro_fft: Fft::new(radar.n_chirps),
            micro_fft: Fft::new(slow),
            fast_window: hann(radar.n_samples),
            macro_window: hann(radar.n_chirps),
            micro_window: hann(slow),
            sinc: sinc_lowpass(dsp.sinc_taps, dsp.sinc_cutoff),
        })
    }

    pub fn radar(&self) -> &RadarConfig {
        &self.radar
    }

    pub fn dsp(&self) -> &DspConfig {
        &self.dsp
    }

    /// One-sided range bins per image.
    pub fn n_range(&self) -> usize {
        self.radar.n_samples / 2
    }

    /// Doppler rows per image, shared by macro and micro.
    pub fn n_doppler(&self) -> usize {
        self.radar.n_chirps
    }

    /// Hann-windowed range FFT of every chirp, averaged over the receive
    /// channels. `remove_fast_mean` subtracts each chirp's mean first.
    pub fn range_profile(&self, frame: &FrameCube, remove_fast_mean: bool) -> Result<RangeProfile> {
        frame.check_shape(&self.radar)?;
        let (n_c, n_s, n_r) = (self.radar.n_chirps, self.radar.n_samples, self.n_range());
        let inv_rx = 1.0 / self.radar.n_rx as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n_c * n_r];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_s];
        for rx in 0..self.radar.n_rx {
            for chirp in 0..n_c {
                let samples = frame.chirp(rx, chirp);
                let mean =
                    if remove_fast_mean { samples.iter().map(|&v| v as f64).sum::<f64>() / n_s as f64 } else { 0.0 };
                for ((b, &x), &w) in buf.iter_mut().zip(samples).zip(&self.fast_window) {
                    *b = Complex64::new((x as f64 - mean) * w, 0.0);
                }
                self.range_fft.process(&mut buf);
                let row = &mut out[chirp * n_r..(chirp + 1) * n_r];
                for (o, b) in row.iter_mut().zip(&buf[..n_r]) {
                    *o += b * inv_rx;
                }
            }
        }
        Ok(out)
    }

    fn magnitude(&self, c: Complex64) -> f64 {
        if self.dsp.log_magnitude {
            c.norm().ln_1p()
        } else {
            c.norm()
        }
    }

    /// Doppler FFT of an MTI-filtered range profile.
    pub fn macro_from_filtered(&self, filtered: &[Complex64], frame_index: usize) -> RdiFrame {
        let (n_c, n_r) = (self.radar.n_chirps, self.n_range());
        let mut rdi = RdiFrame::zeros(n_c, n_r, RdiKind::Macro, frame_index);
        let mut col = vec![Complex64::new(0.0, 0.0); n_c];
        for r in 0..n_r {
            for (m, c) in col.iter_mut().enumerate() {
                *c = filtered[m * n_r + r] * self.macro_window[m];
            }
            self.macro_fft.process(&mut col);
            fftshift(&mut col);
            for (m, c) in col.iter().enumerate() {
                rdi.data[m * n_r + r] = self.magnitude(*c);
            }
        }
        rdi
    }

    /// Micro RDI from `micro_stack` consecutive fast-time-demeaned range
    /// profiles, oldest first.
    pub fn micro_from_profiles(&self, stack: &[&RangeProfile], frame_index: usize) -> Result<RdiFrame> {
        if stack.len() != self.dsp.micro_stack {
            return Err(HoodError::InsufficientData(format!(
                "micro RDI needs exactly {} frames, got {}",
                self.dsp.micro_stack,
                stack.len()
            )));
        }
        let (n_c, n_r) = (self.radar.n_chirps, self.n_range());
        let slow = n_c * self.dsp.micro_stack;
        let half_taps = self.sinc.len() / 2;
        let crop_start = slow / 2 - n_c / 2;

        let mut rdi = RdiFrame::zeros(n_c, n_r, RdiKind::Micro, frame_index);
        let mut col = vec![Complex64::new(0.0, 0.0); slow];
        let mut filtered = vec![Complex64::new(0.0, 0.0); slow];
        for r in 0..n_r {
            for (f, profile) in stack.iter().enumerate() {
                for m in 0..n_c {
                    col[f * n_c + m] = profile[m * n_r + r];
                }
            }
            let mean = col.iter().sum::<Complex64>() / slow as f64;
            col.iter_mut().for_each(|c| *c -= mean);

            // Zero-padded 'same' convolution with the symmetric low-pass.
            for (i, out) in filtered.iter_mut().enumerate() {
                let lo = i.saturating_sub(half_taps);
                let hi = (i + half_taps).min(slow - 1);
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &c) in col.iter().enumerate().take(hi + 1).skip(lo) {
                    acc += c * self.sinc[j + half_taps - i];
                }
                *out = acc * self.micro_window[i];
            }
            self.micro_fft.process(&mut filtered);
            fftshift(&mut filtered);
            for m in 0..n_c {
                rdi.data[m * n_r + r] = self.magnitude(filtered[crop_start + m]);
            }
        }
        Ok(rdi)
    }

    /// Macro RDI of the last frame of `frames`, using the earlier frames as
    /// MTI memory.
    pub fn macro_rdi(&self, frames: &[FrameCube]) -> Result<RdiFrame> {
        if frames.len() < 2 {
            return Err(HoodError::InsufficientData(format!(
                "macro RDI needs at least 2 frames for MTI, got {}",
                frames.len()
            )));
        }
        let profiles = frames.iter().map(|f| self.range_profile(f, false)).collect::<Result<Vec<_>>>()?;
        let last = profiles.len() - 1;
        let filtered: Vec<Complex64> = match self.dsp.mti {
            Mti::FrameDifference => profiles[last].iter().zip(&profiles[last - 1]).map(|(a, b)| a - b).collect(),
            Mti::ExponentialAverage { alpha } => {
                let mut clutter = profiles[0].clone();
                for p in &profiles[1..last] {
                    clutter.iter_mut().zip(p).for_each(|(c, x)| *c = *x * alpha + *c * (1.0 - alpha));
                }
                profiles[last].iter().zip(&clutter).map(|(a, b)| a - b).collect()
            }
        };
        Ok(self.macro_from_filtered(&filtered, frames[last].frame_index))
    }

    /// Micro RDI of exactly `micro_stack` consecutive frames.
    pub fn micro_rdi(&self, frames: &[FrameCube]) -> Result<RdiFrame> {
        if frames.len() != self.dsp.micro_stack {
            return Err(HoodError::InsufficientData(format!(
                "micro RDI needs exactly {} frames, got {}",
                self.dsp.micro_stack,
                frames.len()
            )));
        }
        let profiles = frames.iter().map(|f| self.range_profile(f, true)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&RangeProfile> = profiles.iter().collect();
        self.micro_from_profiles(&refs, frames[frames.len() - 1].frame_index)
    }
}

pub fn compute_macro_rdi(radar: &RadarConfig, dsp: &DspConfig, frames: &[FrameCube]) -> Result<RdiFrame> {
    RdiProcessor::new(radar, dsp)?.macro_rdi(frames)
}

pub fn compute_micro_rdi(radar: &RadarConfig, dsp: &DspConfig, frames: &[FrameCube]) -> Result<RdiFrame> {
    RdiProcessor::new(radar, dsp)?.micro_rdi(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::{simulate_frame, Scene, TargetSpec};

    fn frames(scene: &Scene, range: std::ops::Range<usize>) -> Vec<FrameCube> {
        let c = RadarConfig::default();
        range.map(|i| simulate_frame(&c, scene, i).unwrap()).collect()
    }

    fn scene(targets: Vec<TargetSpec>) -> Scene {
        Scene { targets, noise_std: 0.0, duration: 20.0, seed: 1 }
    }

    fn processor() -> RdiProcessor {
        RdiProcessor::new(&RadarConfig::default(), &DspConfig::default()).unwrap()
    }

    #[test]
    fn macro_rdi_suppresses_static_reflector() {
        let p = processor();
        let fr =
            frames(&scene(vec![TargetSpec::static_reflector(1.5, 1.0), TargetSpec::static_reflector(3.3, 2.0)]), 0..2);
        let pre: f64 = p.range_profile(&fr[1], false).unwrap().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let pre_energy: f64 = p.range_profile(&fr[1], false).unwrap().iter().map(|c| c.norm_sqr()).sum();
        let rdi = p.macro_rdi(&fr).unwrap();
        assert_eq!(rdi.dims(), (64, 64));
        assert!(rdi.max() <= 1e-9 * pre);
        assert!(rdi.energy() <= 1e-12 * pre_energy);
    }

    #[test]
    fn macro_rdi_places_moving_point() {
        let p = processor();
        let fr = frames(&scene(vec![TargetSpec::moving_point(1.5, 1.0, 1.0)]), 0..2);
        let (row, col) = p.macro_rdi(&fr).unwrap().argmax();
        assert!((row as i64 - 42).abs() <= 1, "row {row}");
        assert_eq!(col, 10);
    }

    #[test]
    fn macro_rdi_exponential_mti_also_cancels_clutter() {
        let dsp = DspConfig { mti: Mti::ExponentialAverage { alpha: 0.2 }, ..Default::default() };
        let p = RdiProcessor::new(&RadarConfig::default(), &dsp).unwrap();
        let fr = frames(&scene(vec![TargetSpec::static_reflector(2.0, 1.0)]), 0..5);
        assert!(p.macro_rdi(&fr).unwrap().max() < 1e-9);
    }

    #[test]
    fn zero_frames_give_zero_images() {
        let p = processor();
        let fr = frames(&scene(vec![]), 0..8);
        assert!(p.macro_rdi(&fr[..2]).unwrap().data.iter().all(|&v| v == 0.0));
        assert!(p.micro_rdi(&fr).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_length_errors() {
        let p = processor();
        let fr = frames(&scene(vec![]), 0..9);
        assert!(matches!(p.macro_rdi(&fr[..1]), Err(HoodError::InsufficientData(_))));
        assert!(matches!(p.micro_rdi(&fr[..7]), Err(HoodError::InsufficientData(_))));
        assert!(p.micro_rdi(&fr).is_err());
        let mut bad = fr[0].clone();
        bad.n_samples = 64;
        bad.data.truncate(3 * 64 * 64);
        assert!(matches!(p.range_profile(&bad, false), Err(HoodError::Shape(_))));
    }

    #[test]
    fn micro_rdi_static_reflector_residual() {
        let p = processor();
        let targets = vec![TargetSpec::static_reflector(2.4, 1.0)];
        let fr = frames(&scene(targets), 0..8);
        let pre: f64 = p.range_profile(&fr[0], true).unwrap().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let rdi = p.micro_rdi(&fr).unwrap();
        assert!(rdi.max() <= 1e-9 * pre, "{} vs {pre}", rdi.max());
    }

    #[test]
    fn micro_rdi_breathing_energy_is_near_zero_doppler() {
        let c = RadarConfig::default();
        let p = processor();
        let human = TargetSpec::breathing_human(2.1, 0.25, 0.003, 1.0);
        // Mid-inhale, where the chest moves fastest.
        let fr = frames(&scene(vec![human]), 36..44);
        let rdi = p.micro_rdi(&fr).unwrap();
        let col = (c.beat_frequency(2.1) / (c.adc_rate / c.n_samples as f64)).round() as usize;
        let (row, peak_col) = rdi.argmax();
        assert!((peak_col as i64 - col as i64).abs() <= 1, "col {peak_col} vs {col}");
        assert!((row as i64 - 32).abs() <= 4, "row {row}");
        let column: Vec<f64> = (0..64).map(|m| rdi.at(m, peak_col).powi(2)).collect();
        let near: f64 = column[28..=36].iter().sum();
        assert!(near > 0.9 * column.iter().sum::<f64>());
    }
}
