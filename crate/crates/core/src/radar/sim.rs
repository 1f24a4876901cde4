use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{FrameCube, RadarConfig, Scene, TargetKind, TargetSpec};
use crate::{HoodError, Result};

/// Relative amplitude of each fan micro-Doppler sideband.
const FAN_SIDEBAND_RATIO: f64 = 0.5;

/// IF samples of one chirp on receive antenna 0.
pub fn simulate_if_chirp<R: Rng + ?Sized>(
    config: &RadarConfig,
    targets: &[TargetSpec],
    t0: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    simulate_rx_chirp(config, targets, t0, 0, noise_std, rng)
}

/// IF samples of one chirp starting at `t0` on receive antenna `rx`.
pub fn simulate_rx_chirp<R: Rng + ?Sized>(
    config: &RadarConfig,
    targets: &[TargetSpec],
    t0: f64,
    rx: usize,
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; config.n_samples];
    let mut rows = [out.as_mut_slice()];
    accumulate_chirp(config, targets, t0, &[rx], &mut rows)?;
    if noise_std > 0.0 {
        for v in out.iter_mut() {
            *v += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(out)
}

/// Adds the noiseless contribution of every target to one chirp on each of
/// the antennas in `rx`, writing into the matching row of `out`.
fn accumulate_chirp(
    config: &RadarConfig,
    targets: &[TargetSpec],
    t0: f64,
    rx: &[usize],
    out: &mut [&mut [f64]],
) -> Result<()> {
    let max_range = config.max_unambiguous_range();
    let wavelength = config.wavelength();
    for target in targets {
        let range = target.range_at(t0);
        if !(range > 0.0 && range < max_range) {
            return Err(HoodError::RangeOutOfSpan { range, max: max_range });
        }
        let omega = TAU * config.beat_frequency(range) / config.adc_rate;
        let phase = 4.0 * PI * range / wavelength;
        // Half-wavelength element spacing.
        let steer = PI * target.azimuth.sin();

        let mut tones = [(target.rcs_amplitude, phase), (0.0, 0.0), (0.0, 0.0)];
        if target.kind == TargetKind::Fan {
            let offset = TAU * target.blade_rate * t0;
            let side = FAN_SIDEBAND_RATIO * target.rcs_amplitude;
            tones[1] = (side, phase + offset);
            tones[2] = (side, phase - offset);
        }
        for &(amp, phi) in tones.iter().filter(|(a, _)| *a != 0.0) {
            for (row, &k) in out.iter_mut().zip(rx) {
                add_tone(row, amp, omega, phi + steer * k as f64);
            }
        }
    }
    Ok(())
}

/// `row[n] += amp * cos(omega * n + phi)`, evaluated with a unit-phasor
/// recurrence that is renormalized every few steps.
fn add_tone(row: &mut [f64], amp: f64, omega: f64, phi: f64) {
    let (step_im, step_re) = omega.sin_cos();
    let (mut im, mut re) = phi.sin_cos();
    for (n, v) in row.iter_mut().enumerate() {
        *v += amp * re;
        let next_re = re * step_re - im * step_im;
        im = re * step_im + im * step_re;
        re = next_re;
        if n % 32 == 31 {
            let (s, c) = (omega * (n + 1) as f64 + phi).sin_cos();
            re = c;
            im = s;
        }
    }
}

fn frame_rng(seed: u64, frame_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index as u64);
    rng
}

fn quantize(v: f64, config: &RadarConfig) -> f64 {
    let levels = (1u64 << (config.adc_bits - 1)) as f64;
    let fs = config.adc_full_scale;
    ((v / fs * levels).round().clamp(-levels, levels - 1.0)) * fs / levels
}

/// Synthesizes frame `frame_index` of `scene`.
///
/// Noise is drawn from a generator keyed by `(scene.seed, frame_index)`, so
/// frames can be produced in any order or in parallel with identical output.
pub fn simulate_frame(config: &RadarConfig, scene: &Scene, frame_index: usize) -> Result<FrameCube> {
    let frames = scene.n_frames(config);
    if frame_index >= frames {
        return Err(HoodError::FrameOutOfRange { index: frame_index, frames });
    }
    let mut cube = FrameCube::zeros(config, frame_index);
    let rx_ids: Vec<usize> = (0..config.n_rx).collect();
    let mut rng = frame_rng(scene.seed, frame_index);
    let mut chirp_buf = vec![0.0f64; config.n_rx * config.n_samples];

    for chirp in 0..config.n_chirps {
        let t0 = cube.timestamp + chirp as f64 * config.chirp_spacing;
        chirp_buf.iter_mut().for_each(|v| *v = 0.0);
        {
            let mut rows: Vec<&mut [f64]> = chirp_buf.chunks_mut(config.n_samples).collect();
            accumulate_chirp(config, &scene.targets, t0, &rx_ids, &mut rows)?;
        }
        for rx in 0..config.n_rx {
            let src = &chirp_buf[rx * config.n_samples..(rx + 1) * config.n_samples];
            let start = (rx * config.n_chirps + chirp) * config.n_samples;
            let dst = &mut cube.data[start..start + config.n_samples];
            for (d, &s) in dst.iter_mut().zip(src) {
                let mut v = s;
                if scene.noise_std > 0.0 {
                    v += scene.noise_std * rng.sample::<f64, _>(StandardNormal);
                }
                if config.quantize {
                    v = quantize(v, config);
                }
                *d = v as f32;
            }
        }
    }
    Ok(cube)
}

/// Lazily produced frames of a whole scene, in order.
pub struct Recording<'a> {
    config: &'a RadarConfig,
    scene: &'a Scene,
    next: usize,
    total: usize,
}

impl Recording<'_> {
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

impl Iterator for Recording<'_> {
    type Item = Result<FrameCube>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.total {
            return None;
        }
        let frame = simulate_frame(self.config, self.scene, self.next);
        self.next += 1;
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.next;
        (left, Some(left))
    }
}

/// `floor(duration / frame_period)` frames of `scene`.
pub fn simulate_recording<'a>(config: &'a RadarConfig, scene: &'a Scene) -> Result<Recording<'a>> {
    config.validate()?;
    scene.validate()?;
    Ok(Recording { config, scene, next: 0, total: scene.n_frames(config) })
}

#[cfg(test)]
mod tests {
    use rustfft::{num_complex::Complex64, FftPlanner};

    use super::*;

    fn no_rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn spectrum(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        buf.iter().map(|c| c.norm()).collect()
    }

    fn argmax(x: &[f64]) -> usize {
        x.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
    }

    #[test]
    fn static_reflector_is_pure_tone_on_bin_10() {
        let c = RadarConfig::default();
        // f_b = 2 * 1.5 * 1.5625e13 / 3e8 = 156_250 Hz = bin 10 * 15_625 Hz.
        assert!((c.beat_frequency(1.5) - 156_250.0).abs() < 1e-6);
        let target = [TargetSpec::static_reflector(1.5, 1.0)];
        let x = simulate_if_chirp(&c, &target, 0.0, 0.0, &mut no_rng()).unwrap();
        let phase = 4.0 * PI * 1.5 / c.wavelength();
        for (n, v) in x.iter().enumerate() {
            let want = (TAU * 156_250.0 * n as f64 / 2e6 + phase).cos();
            assert!((v - want).abs() < 1e-12, "sample {n}: {v} vs {want}");
        }
        let s = spectrum(&x);
        assert_eq!(argmax(&s[..64]), 10);
        // Exactly on-bin: every other one-sided bin is numerically empty.
        for (k, m) in s[..64].iter().enumerate().filter(|(k, _)| *k != 10) {
            assert!(*m < 1e-9, "leakage at bin {k}: {m}");
        }
    }

    #[test]
    fn empty_scene_without_noise_is_zero() {
        let c = RadarConfig::default();
        let x = simulate_if_chirp(&c, &[], 0.3, 0.0, &mut no_rng()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reflectors_30cm_apart_are_resolved() {
        let c = RadarConfig::default();
        let targets = [TargetSpec::static_reflector(1.5, 1.0), TargetSpec::static_reflector(1.8, 1.0)];
        let s = spectrum(&simulate_if_chirp(&c, &targets, 0.0, 0.0, &mut no_rng()).unwrap());
        let top = s[..64].iter().cloned().fold(0.0, f64::max);
        let mut peaks: Vec<usize> =
            (1..63).filter(|&k| s[k] > s[k - 1] && s[k] > s[k + 1] && s[k] > 0.1 * top).collect();
        peaks.sort_unstable();
        assert_eq!(peaks, vec![10, 12]);
    }

    #[test]
    fn out_of_span_range_is_an_error() {
        let c = RadarConfig { f_max: 62.1e9, bandwidth: 2e9, ..Default::default() };
        // Doubling the sweep halves the unambiguous span to 4.8 m.
        c.validate().unwrap();
        let far = [TargetSpec::static_reflector(6.0, 1.0)];
        let err = simulate_if_chirp(&c, &far, 0.0, 0.0, &mut no_rng()).unwrap_err();
        assert!(matches!(err, HoodError::RangeOutOfSpan { .. }));
    }

    #[test]
    fn moving_point_phase_advance_between_chirps() {
        let c = RadarConfig::default();
        let scene =
            Scene { targets: vec![TargetSpec::moving_point(1.5, 1.0, 1.0)], noise_std: 0.0, duration: 1.0, seed: 3 };
        let cube = simulate_frame(&c, &scene, 0).unwrap();
        // Hand evaluation: 4 pi * 1.0 m/s * 391.55e-6 s / 4.950495e-3 m.
        let expected = 0.993_913_2;
        let lambda = c.wavelength();
        assert!((4.0 * PI * c.chirp_spacing / lambda - expected).abs() < 1e-6);
        let phase0 = 4.0 * PI * 1.5 / lambda;
        for m in 0..c.n_chirps {
            let want = (phase0 + m as f64 * expected).cos();
            let got = cube.chirp(0, m)[0] as f64;
            assert!((got - want).abs() < 1e-5, "chirp {m}: {got} vs {want}");
        }
    }

    #[test]
    fn static_reflector_chirps_identical() {
        let c = RadarConfig::default();
        let scene =
            Scene { targets: vec![TargetSpec::static_reflector(2.1, 1.0)], noise_std: 0.0, duration: 1.0, seed: 3 };
        let cube = simulate_frame(&c, &scene, 4).unwrap();
        for rx in 0..3 {
            for m in 1..c.n_chirps {
                assert_eq!(cube.chirp(rx, m), cube.chirp(rx, 0));
            }
        }
    }

    #[test]
    fn frames_are_deterministic_and_order_free() {
        let c = RadarConfig::default();
        let scene = Scene {
            targets: vec![TargetSpec::breathing_human(2.0, 0.3, 0.003, 1.0)],
            noise_std: 0.1,
            duration: 1.0,
            seed: 99,
        };
        let a = simulate_frame(&c, &scene, 7).unwrap();
        let _ = simulate_frame(&c, &scene, 3).unwrap();
        let b = simulate_frame(&c, &scene, 7).unwrap();
        assert_eq!(a, b);
        let other = Scene { seed: 100, ..scene.clone() };
        assert_ne!(simulate_frame(&c, &other, 7).unwrap().data, a.data);
    }

    #[test]
    fn frame_index_past_duration_errors() {
        let c = RadarConfig::default();
        let scene = Scene { targets: vec![], noise_std: 0.0, duration: 0.5, seed: 1 };
        assert!(simulate_frame(&c, &scene, 9).is_ok());
        assert!(matches!(simulate_frame(&c, &scene, 10), Err(HoodError::FrameOutOfRange { .. })));
    }

    #[test]
    fn recording_lengths() {
        let c = RadarConfig::default();
        let mut scene = Scene { targets: vec![], noise_std: 0.0, duration: 10.0, seed: 1 };
        assert_eq!(simulate_recording(&c, &scene).unwrap().count(), 200);
        scene.duration = 0.049;
        assert_eq!(simulate_recording(&c, &scene).unwrap().count(), 0);
    }

    #[test]
    fn breathing_completes_two_and_a_half_cycles_in_ten_seconds() {
        let c = RadarConfig::default();
        let amp = 0.003;
        let human = TargetSpec::breathing_human(1.5, 0.25, amp, 1.0);
        let scene = Scene { targets: vec![human], noise_std: 0.0, duration: 10.0, seed: 5 };
        // Oracle: the sampled chest sinusoid, mapped to round-trip phase.
        let chest = |t: f64| 4.0 * PI * amp * (TAU * 0.25 * t).sin() / c.wavelength();
        let fft = FftPlanner::new().plan_fft_forward(128);
        let mut phases = Vec::new();
        for frame in simulate_recording(&c, &scene).unwrap() {
            let frame = frame.unwrap();
            let mut buf: Vec<Complex64> = frame.chirp(0, 0).iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
            fft.process(&mut buf);
            phases.push(buf[10].arg());
        }
        assert_eq!(phases.len(), 200);
        let mut unwrapped = vec![0.0];
        for w in phases.windows(2) {
            let d = (w[1] - w[0] + PI).rem_euclid(TAU) - PI;
            unwrapped.push(unwrapped.last().unwrap() + d);
        }
        for (i, u) in unwrapped.iter().enumerate() {
            let want = chest(i as f64 * c.frame_period);
            assert!((u - want).abs() < 0.1, "frame {i}: {u} vs {want}");
        }
        // 2.5 cycles: back at the start after 4 s and 8 s, at the opposite
        // extreme at 3 s, back at the 1 s crest at 9 s.
        assert!(unwrapped[80].abs() < 0.1 && unwrapped[160].abs() < 0.1);
        assert!((unwrapped[180] - unwrapped[20]).abs() < 0.1);
        assert!((unwrapped[60] + unwrapped[20]).abs() < 0.1);
    }
}
