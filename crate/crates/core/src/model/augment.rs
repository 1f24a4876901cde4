//! Random affine warps and flips, drawn once per sample and applied to its
//! macro and micro images alike.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainingSample;
use crate::dsp::RdiFrame;
use crate::{HoodError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Rotation drawn from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f64,
    /// Shift per axis as a fraction of the image side.
    pub translate: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Probability of mirroring the range axis.
    pub hflip_prob: f64,
    /// Probability of mirroring the Doppler axis.
    pub vflip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rotation_deg: 10.0,
            translate: 0.1,
            scale_min: 0.9,
            scale_max: 1.1,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HoodError::InvalidConfig(m));
        for (name, p) in [("hflip_prob", self.hflip_prob), ("vflip_prob", self.vflip_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.rotation_deg >= 0.0 && self.translate >= 0.0 && self.translate < 1.0) {
            return bad("rotation_deg must be >= 0 and translate in [0, 1)".into());
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return bad(format!("scale range [{}, {}] is invalid", self.scale_min, self.scale_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Warp {
    angle: f64,
    shift_rows: f64,
    shift_cols: f64,
    scale: f64,
    flip_cols: bool,
    flip_rows: bool,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

impl Warp {
    fn draw(cfg: &AugmentConfig, side: f64, rng: &mut impl Rng) -> Self {
        let r = cfg.rotation_deg.to_radians();
        let t = cfg.translate * side;
        Self {
            angle: uniform(rng, -r, r),
            shift_rows: uniform(rng, -t, t),
            shift_cols: uniform(rng, -t, t),
            scale: uniform(rng, cfg.scale_min, cfg.scale_max),
            flip_cols: rng.random_bool(cfg.hflip_prob),
            flip_rows: rng.random_bool(cfg.vflip_prob),
        }
    }

    fn is_identity_affine(&self) -> bool {
        self.angle == 0.0 && self.shift_rows == 0.0 && self.shift_cols == 0.0 && self.scale == 1.0
    }

    fn apply(&self, frame: &RdiFrame) -> RdiFrame {
        let (rows, cols) = frame.dims();
        let mut out = frame.clone();
        if !self.is_identity_affine() {
            let (cr, cc) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
            let (sin, cos) = self.angle.sin_cos();
            for i in 0..rows {
                for j in 0..cols {
                    // Inverse map: undo shift, rotation and scale.
                    let y = (i as f64 - cr - self.shift_rows) / self.scale;
                    let x = (j as f64 - cc - self.shift_cols) / self.scale;
                    let sy = cos * y + sin * x + cr;
                    let sx = -sin * y + cos * x + cc;
                    out.data[i * cols + j] = bilinear(frame, sy, sx).clamp(0.0, 1.0);
                }
            }
        }
        if self.flip_cols {
            out.data.chunks_mut(cols).for_each(|row| row.reverse());
        }
        if self.flip_rows {
            let mut flipped = Vec::with_capacity(out.data.len());
            for row in out.data.chunks(cols).rev() {
                flipped.extend_from_slice(row);
            }
            out.data = flipped;
        }
        out
    }
}

/// Zero outside the image.
fn bilinear(f: &RdiFrame, y: f64, x: f64) -> f64 {
    let (rows, cols) = f.dims();
    let (y0, x0) = (y.floor(), x.floor());
    let (dy, dx) = (y - y0, x - x0);
    let px = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= rows as f64 || c >= cols as f64 {
            0.0
        } else {
            f.data[r as usize * cols + c as usize]
        }
    };
    px(y0, x0) * (1.0 - dy) * (1.0 - dx)
        + px(y0, x0 + 1.0) * (1.0 - dy) * dx
        + px(y0 + 1.0, x0) * dy * (1.0 - dx)
        + px(y0 + 1.0, x0 + 1.0) * dy * dx
}

pub fn augment(sample: &TrainingSample, rng: &mut impl Rng, config: &AugmentConfig) -> TrainingSample {
    if !config.enabled {
        return sample.clone();
    }
    let warp = Warp::draw(config, sample.macro_rdi.n_range as f64, rng);
    TrainingSample {
        macro_rdi: warp.apply(&sample.macro_rdi),
        micro_rdi: warp.apply(&sample.micro_rdi),
        category: sample.category,
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dsp::RdiKind;
    use crate::model::Category;

    fn sample() -> TrainingSample {
        let img = |k: usize, kind| RdiFrame {
            data: (0..64).map(|i| ((i * k) % 17) as f64 / 16.0).collect(),
            ..RdiFrame::zeros(8, 8, kind, 3)
        };
        TrainingSample {
            macro_rdi: img(3, RdiKind::Macro),
            micro_rdi: img(5, RdiKind::Micro),
            category: Category::Static,
        }
    }

    fn only_flips(h: f64, v: f64) -> AugmentConfig {
        AugmentConfig {
            rotation_deg: 0.0,
            translate: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            hflip_prob: h,
            vflip_prob: v,
            enabled: true,
        }
    }

    #[test]
    fn disabled_is_identity() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment(&s, &mut rng, &AugmentConfig::disabled()), s);
        assert_eq!(augment(&s, &mut rng, &only_flips(0.0, 0.0)), s);
    }

    #[test]
    fn flip_is_an_involution() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for cfg in [only_flips(1.0, 0.0), only_flips(0.0, 1.0), only_flips(1.0, 1.0)] {
            let once = augment(&s, &mut rng, &cfg);
            assert_ne!(once, s);
            assert_eq!(augment(&once, &mut rng, &cfg), s);
        }
        let h = augment(&s, &mut rng, &only_flips(1.0, 0.0));
        assert_eq!(h.macro_rdi.at(2, 0), s.macro_rdi.at(2, 7));
        let v = augment(&s, &mut rng, &only_flips(0.0, 1.0));
        assert_eq!(v.micro_rdi.at(0, 2), s.micro_rdi.at(7, 2));
    }

    #[test]
    fn seeded_output_is_deterministic_and_bounded() {
        let s = sample();
        let cfg = AugmentConfig::default();
        let a = augment(&s, &mut ChaCha8Rng::seed_from_u64(7), &cfg);
        let b = augment(&s, &mut ChaCha8Rng::seed_from_u64(7), &cfg);
        assert_eq!(a, b);
        assert!(a.macro_rdi.data.iter().chain(&a.micro_rdi.data).all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.macro_rdi.frame_index, 3);
    }

    #[test]
    fn macro_and_micro_share_one_warp() {
        let mut s = sample();
        s.micro_rdi.data = s.macro_rdi.data.clone();
        let a = augment(&s, &mut ChaCha8Rng::seed_from_u64(11), &AugmentConfig::default());
        assert_eq!(a.macro_rdi.data, a.micro_rdi.data);
    }

    #[test]
    fn validation() {
        assert!(AugmentConfig { hflip_prob: 1.5, ..Default::default() }.validate().is_err());
        assert!(AugmentConfig { scale_min: 1.2, ..Default::default() }.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }
}
