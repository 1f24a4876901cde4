//! Synthetic FMCW front end.
//!
//! A frame is `n_rx x n_chirps x n_samples` real IF samples. Each target
//! contributes one beat tone per chirp whose frequency encodes range
//! (`f_b = 2 R S / c`) and whose phase encodes the round-trip distance
//! (`4 pi R / lambda`) plus a per-antenna offset from the azimuth. Motion
//! models are evaluated at the start of every chirp, so slow-time phase
//! progression carries velocity, breathing and blade micro-Doppler.

mod presets;
mod sim;

use serde::{Deserialize, Serialize};

use crate::{HoodError, Result};

pub use presets::{preset_scene, PresetName};
pub use sim::{simulate_frame, simulate_if_chirp, simulate_recording, simulate_rx_chirp, Recording};

/// Propagation speed used throughout the simulator and the bin oracles.
///
/// The rounded value keeps the range grid at exactly `c / 2B = 0.15 m`.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Lowest and highest range a scene target may be placed at.
pub const MIN_TARGET_RANGE: f64 = 0.3;
pub const MAX_TARGET_RANGE: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_chirps: usize,
    pub n_samples: usize,
    /// Frame period in seconds.
    pub frame_period: f64,
    /// Chirp-to-chirp time in seconds.
    pub chirp_spacing: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub bandwidth: f64,
    pub adc_rate: f64,
    pub adc_bits: u32,
    /// Apply `adc_bits` quantization after synthesis.
    pub quantize: bool,
    /// Full-scale amplitude of the quantizer.
    pub adc_full_scale: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            n_tx: 1,
            n_rx: 3,
            n_chirps: 64,
            n_samples: 128,
            frame_period: 0.050,
            chirp_spacing: 391.55e-6,
            f_min: 60.1e9,
            f_max: 61.1e9,
            bandwidth: 1.0e9,
            adc_rate: 2.0e6,
            adc_bits: 12,
            quantize: false,
            adc_full_scale: 8.0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HoodError::InvalidConfig(msg));
        if self.n_tx == 0 || self.n_rx == 0 || self.n_chirps == 0 || self.n_samples == 0 {
            return bad("antenna, chirp and sample counts must be >= 1".into());
        }
        if !self.n_samples.is_multiple_of(2) {
            return bad(format!("n_samples must be even, got {}", self.n_samples));
        }
        for (name, v) in [
            ("frame_period", self.frame_period),
            ("chirp_spacing", self.chirp_spacing),
            ("f_min", self.f_min),
            ("bandwidth", self.bandwidth),
            ("adc_rate", self.adc_rate),
            ("adc_full_scale", self.adc_full_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if ((self.f_max - self.f_min) - self.bandwidth).abs() > 1e-9 * self.bandwidth {
            return bad(format!("bandwidth {} != f_max - f_min = {}", self.bandwidth, self.f_max - self.f_min));
        }
        if self.chirp_duration() > self.chirp_spacing * (1.0 + 1e-12) {
            return bad(format!(
                "chirp duration {} s exceeds chirp spacing {} s",
                self.chirp_duration(),
                self.chirp_spacing
            ));
        }
        if self.chirp_spacing * self.n_chirps as f64 > self.frame_period * (1.0 + 1e-12) {
            return bad("chirps of one frame do not fit in the frame period".into());
        }
        if self.quantize && !(2..=24).contains(&self.adc_bits) {
            return bad(format!("adc_bits must be in 2..=24, got {}", self.adc_bits));
        }
        Ok(())
    }

    /// `T_c = N_s / adc_rate`.
    pub fn chirp_duration(&self) -> f64 {
        self.n_samples as f64 / self.adc_rate
    }

    /// Chirp slope `S = B / T_c` in Hz/s.
    pub fn slope(&self) -> f64 {
        self.bandwidth / self.chirp_duration()
    }

    pub fn center_frequency(&self) -> f64 {
        0.5 * (self.f_min + self.f_max)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * range * self.slope() / SPEED_OF_LIGHT
    }

    /// `c / 2B`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    /// Range whose beat tone sits at the Nyquist frequency of the ADC.
    pub fn max_unambiguous_range(&self) -> f64 {
        SPEED_OF_LIGHT * self.adc_rate / (4.0 * self.slope())
    }

    /// Velocity of one Doppler bin for an `n_chirps`-point slow-time FFT.
    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.n_chirps as f64 * self.chirp_spacing)
    }

    pub fn max_unambiguous_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.chirp_spacing)
    }

    pub fn frame_len(&self) -> usize {
        self.n_rx * self.n_chirps * self.n_samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    BreathingHuman,
    StandingMicroMotion,
    Fan,
    MovingPoint,
    StaticReflector,
}

impl TargetKind {
    pub fn is_human(self) -> bool {
        matches!(self, Self::BreathingHuman | Self::StandingMicroMotion)
    }
}

/// One scatterer. Motion fields that do not apply to `kind` stay zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    /// Nominal range in meters.
    pub range: f64,
    /// Azimuth in radians, boresight = 0.
    #[serde(default)]
    pub azimuth: f64,
    pub rcs_amplitude: f64,
    #[serde(default)]
    pub breath_rate: f64,
    #[serde(default)]
    pub chest_amplitude: f64,
    /// Radial speed in m/s, positive = receding.
    #[serde(default)]
    pub velocity: f64,
    /// Micro-Doppler sideband offset of a fan in Hz.
    #[serde(default)]
    pub blade_rate: f64,
    /// Body sway of a standing person, peak displacement in meters.
    #[serde(default)]
    pub sway_amplitude: f64,
    #[serde(default)]
    pub sway_rate: f64,
    /// Initial phase of the periodic motion, radians.
    #[serde(default)]
    pub motion_phase: f64,
}

impl TargetSpec {
    fn base(kind: TargetKind, range: f64, rcs_amplitude: f64) -> Self {
        Self {
            kind,
            range,
            azimuth: 0.0,
            rcs_amplitude,
            breath_rate: 0.0,
            chest_amplitude: 0.0,
            velocity: 0.0,
            blade_rate: 0.0,
            sway_amplitude: 0.0,
            sway_rate: 0.0,
            motion_phase: 0.0,
        }
    }

    pub fn static_reflector(range: f64, rcs_amplitude: f64) -> Self {
        Self::base(TargetKind::StaticReflector, range, rcs_amplitude)
    }

    pub fn moving_point(range: f64, velocity: f64, rcs_amplitude: f64) -> Self {
        Self { velocity, ..Self::base(TargetKind::MovingPoint, range, rcs_amplitude) }
    }

    pub fn breathing_human(range: f64, breath_rate: f64, chest_amplitude: f64, rcs_amplitude: f64) -> Self {
        Self { breath_rate, chest_amplitude, ..Self::base(TargetKind::BreathingHuman, range, rcs_amplitude) }
    }

    pub fn fan(range: f64, blade_rate: f64, rcs_amplitude: f64) -> Self {
        Self { blade_rate, ..Self::base(TargetKind::Fan, range, rcs_amplitude) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HoodError::InvalidConfig(msg));
        if !(MIN_TARGET_RANGE..=MAX_TARGET_RANGE).contains(&self.range) {
            return bad(format!("target range {} m outside [{MIN_TARGET_RANGE}, {MAX_TARGET_RANGE}]", self.range));
        }
        if !(self.rcs_amplitude.is_finite() && self.rcs_amplitude > 0.0) {
            return bad(format!("rcs_amplitude must be > 0, got {}", self.rcs_amplitude));
        }
        let fields = [
            self.azimuth,
            self.breath_rate,
            self.chest_amplitude,
            self.velocity,
            self.blade_rate,
            self.sway_amplitude,
            self.sway_rate,
            self.motion_phase,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return bad("target motion parameters must be finite".into());
        }
        if self.kind == TargetKind::BreathingHuman && !(0.1..=1.0).contains(&self.breath_rate) {
            return bad(format!("breath_rate {} Hz outside [0.1, 1.0]", self.breath_rate));
        }
        Ok(())
    }

    /// Radial distance at time `t`.
    ///
    /// A moving point travels at `|velocity|` and reflects off the allowed
    /// range interval, so long recordings stay inside the room.
    pub fn range_at(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        match self.kind {
            TargetKind::StaticReflector | TargetKind::Fan => self.range,
            TargetKind::BreathingHuman => {
                self.range + self.chest_amplitude * (TAU * self.breath_rate * t + self.motion_phase).sin()
            }
            TargetKind::StandingMicroMotion => {
                self.range
                    + self.chest_amplitude * (TAU * self.breath_rate * t + self.motion_phase).sin()
                    + self.sway_amplitude * (TAU * self.sway_rate * t + 1.7 * self.motion_phase).sin()
            }
            TargetKind::MovingPoint => reflect(self.range + self.velocity * t, MIN_TARGET_RANGE, MAX_TARGET_RANGE),
        }
    }
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let period = 2.0 * span;
    let u = (x - lo).rem_euclid(period);
    if u <= span {
        lo + u
    } else {
        hi - (u - span)
    }
}

/// Ground-truth scene class used to label recordings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneClass {
    Static,
    VeryStatic,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    pub noise_std: f64,
    /// Recording length in seconds.
    pub duration: f64,
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(HoodError::InvalidConfig(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(HoodError::InvalidConfig(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        self.targets.iter().try_for_each(TargetSpec::validate)
    }

    /// Static if anyone is standing, very-static if only breathing people are
    /// present, OOD otherwise.
    pub fn class(&self) -> SceneClass {
        let kinds = || self.targets.iter().map(|t| t.kind);
        if kinds().any(|k| k == TargetKind::StandingMicroMotion) {
            SceneClass::Static
        } else if kinds().any(|k| k == TargetKind::BreathingHuman) {
            SceneClass::VeryStatic
        } else {
            SceneClass::Ood
        }
    }

    pub fn n_frames(&self, config: &RadarConfig) -> usize {
        // Guard against 10.0 / 0.05 = 199.99999999999997.
        ((self.duration / config.frame_period) * (1.0 + 1e-12)).floor() as usize
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text).map_err(|e| HoodError::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scene serializes")
    }
}

/// One digitized frame, row-major `[rx][chirp][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCube {
    pub n_rx: usize,
    pub n_chirps: usize,
    pub n_samples: usize,
    pub data: Vec<f32>,
    pub frame_index: usize,
    pub timestamp: f64,
}

impl FrameCube {
    pub fn zeros(config: &RadarConfig, frame_index: usize) -> Self {
        Self {
            n_rx: config.n_rx,
            n_chirps: config.n_chirps,
            n_samples: config.n_samples,
            data: vec![0.0; config.frame_len()],
            frame_index,
            timestamp: frame_index as f64 * config.frame_period,
        }
    }

    pub fn chirp(&self, rx: usize, chirp: usize) -> &[f32] {
        let start = (rx * self.n_chirps + chirp) * self.n_samples;
        &self.data[start..start + self.n_samples]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n_rx, self.n_chirps, self.n_samples]
    }

    pub fn check_shape(&self, config: &RadarConfig) -> Result<()> {
        let want = [config.n_rx, config.n_chirps, config.n_samples];
        if self.dims() != want || self.data.len() != config.frame_len() {
            return Err(HoodError::Shape(format!(
                "frame {} has dims {:?}, radar config expects {:?}",
                self.frame_index,
                self.dims(),
                want
            )));
        }
        Ok(())
    }
}
