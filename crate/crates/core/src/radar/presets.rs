//! Scene catalogue for the synthetic benchmark.
//!
//! Every numeric range below is invented: it aims at plausible desk-scale
//! indoor scenes (people 1 to 4 m from the sensor, a fan or a small toy
//! robot as disturber, a few pieces of furniture) and is not calibrated
//! against any measured data.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Scene, TargetKind, TargetSpec};
use crate::{HoodError, Result};

pub const DEFAULT_PRESET_DURATION: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    IdStatic,
    IdVeryStatic,
    IdStaticWithDisturber,
    IdVeryStaticWithDisturber,
    OodFan,
    OodMovingToy,
    EmptyRoom,
}

impl PresetName {
    pub const ALL: [PresetName; 7] = [
        Self::IdStatic,
        Self::IdVeryStatic,
        Self::IdStaticWithDisturber,
        Self::IdVeryStaticWithDisturber,
        Self::OodFan,
        Self::OodMovingToy,
        Self::EmptyRoom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IdStatic => "id_static",
            Self::IdVeryStatic => "id_very_static",
            Self::IdStaticWithDisturber => "id_static_with_disturber",
            Self::IdVeryStaticWithDisturber => "id_very_static_with_disturber",
            Self::OodFan => "ood_fan",
            Self::OodMovingToy => "ood_moving_toy",
            Self::EmptyRoom => "empty_room",
        }
    }

    pub fn is_id(self) -> bool {
        !matches!(self, Self::OodFan | Self::OodMovingToy | Self::EmptyRoom)
    }

    fn salt(self) -> u64 {
        Self::ALL.iter().position(|&p| p == self).unwrap() as u64 + 1
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = HoodError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| HoodError::UnknownPreset(s.to_string()))
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn person_range(rng: &mut ChaCha8Rng) -> f64 {
    uniform(rng, 1.0, 4.0)
}

fn furniture(rng: &mut ChaCha8Rng) -> Vec<TargetSpec> {
    let n = rng.random_range(1..=3);
    (0..n)
        .map(|_| TargetSpec {
            azimuth: uniform(rng, -0.8, 0.8),
            ..TargetSpec::static_reflector(uniform(rng, 0.5, 6.5), uniform(rng, 0.5, 2.0))
        })
        .collect()
}

fn sitting_person(rng: &mut ChaCha8Rng) -> TargetSpec {
    TargetSpec {
        azimuth: uniform(rng, -0.5, 0.5),
        motion_phase: uniform(rng, 0.0, std::f64::consts::TAU),
        ..TargetSpec::breathing_human(
            person_range(rng),
            uniform(rng, 0.15, 0.5),
            uniform(rng, 0.002, 0.006),
            uniform(rng, 0.6, 1.2),
        )
    }
}

fn standing_person(rng: &mut ChaCha8Rng) -> TargetSpec {
    let breathing = sitting_person(rng);
    TargetSpec {
        kind: TargetKind::StandingMicroMotion,
        sway_amplitude: uniform(rng, 0.005, 0.015),
        sway_rate: uniform(rng, 0.1, 0.4),
        ..breathing
    }
}

fn fan(rng: &mut ChaCha8Rng) -> TargetSpec {
    TargetSpec {
        azimuth: uniform(rng, -0.6, 0.6),
        ..TargetSpec::fan(person_range(rng), uniform(rng, 150.0, 500.0), uniform(rng, 0.4, 1.0))
    }
}

fn toy(rng: &mut ChaCha8Rng) -> TargetSpec {
    let speed = uniform(rng, 0.2, 0.6);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    TargetSpec {
        azimuth: uniform(rng, -0.6, 0.6),
        ..TargetSpec::moving_point(person_range(rng), sign * speed, uniform(rng, 0.3, 0.8))
    }
}

fn disturber(rng: &mut ChaCha8Rng) -> TargetSpec {
    if rng.random_bool(0.5) {
        fan(rng)
    } else {
        toy(rng)
    }
}

/// A fully populated scene for `name`, randomized within the preset's bounds.
pub fn preset_scene(name: PresetName, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ name.salt());
    let mut targets = furniture(&mut rng);
    match name {
        PresetName::IdStatic => targets.push(standing_person(&mut rng)),
        PresetName::IdVeryStatic => targets.push(sitting_person(&mut rng)),
        PresetName::IdStaticWithDisturber => {
            targets.push(standing_person(&mut rng));
            targets.push(disturber(&mut rng));
        }
        PresetName::IdVeryStaticWithDisturber => {
            targets.push(sitting_person(&mut rng));
            targets.push(disturber(&mut rng));
        }
        PresetName::OodFan => {
            let n = rng.random_range(1..=2);
            targets.extend((0..n).map(|_| fan(&mut rng)));
        }
        PresetName::OodMovingToy => targets.push(toy(&mut rng)),
        PresetName::EmptyRoom => {}
    }
    Scene { targets, noise_std: uniform(&mut rng, 0.03, 0.08), duration: DEFAULT_PRESET_DURATION, seed: rng.random() }
}
