//! Per-category thresholds and the presence rule: a sample is "no
//! presence" only when both combined errors exceed their thresholds.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsp::{DspConfig, PairedRdi, RdiFrame, RdiPipeline};
use crate::model::{images_to_tensor, Category, HoodModel, TrainingSample};
use crate::nn::Real;
use crate::radar::{FrameCube, RadarConfig};
use crate::{HoodError, Result};

pub const DEFAULT_QUANTILE: f64 = 0.90;

/// Samples per model call when scoring many pairs.
const SCORE_CHUNK: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Provenance {
    pub dataset_id: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub quantile: f64,
    pub threshold_s: f64,
    pub threshold_vs: f64,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Thresholds {
    pub fn new(threshold_s: f64, threshold_vs: f64) -> Self {
        Self { quantile: DEFAULT_QUANTILE, threshold_s, threshold_vs, provenance: Provenance::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(HoodError::InvalidConfig(format!("quantile must be in (0, 1), got {}", self.quantile)));
        }
        for (name, t) in [("threshold_s", self.threshold_s), ("threshold_vs", self.threshold_vs)] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(HoodError::InvalidConfig(format!("{name} must be finite and >= 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("thresholds serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| HoodError::Parse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Presence,
    NoPresence,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Presence => "Presence",
            Verdict::NoPresence => "NoPresence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub frame_index: usize,
    pub err_s: f64,
    pub err_vs: f64,
    pub verdict: Verdict,
}

impl fmt::Display for DetectionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{:.6e},{:.6e},{}", self.frame_index, self.err_s, self.err_vs, self.verdict)
    }
}

/// Ties at a threshold count as presence.
pub fn infer(err_s: f64, err_vs: f64, thresholds: &Thresholds) -> Verdict {
    if err_s > thresholds.threshold_s && err_vs > thresholds.threshold_vs {
        Verdict::NoPresence
    } else {
        Verdict::Presence
    }
}

/// `sorted[ceil(q n) - 1]`: the smallest value with at least a `q`
/// fraction of samples at or below it.
pub fn nearest_rank(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(HoodError::InsufficientData("quantile of an empty set".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(HoodError::InvalidConfig(format!("quantile must be in (0, 1], got {q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(HoodError::NonFinite("NaN reconstruction error".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Guard against q n landing a hair above an integer.
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

pub fn calibrate_from_errors(static_errs: &[f64], very_static_errs: &[f64], q: f64) -> Result<Thresholds> {
    if static_errs.is_empty() {
        return Err(HoodError::EmptyCategory("static"));
    }
    if very_static_errs.is_empty() {
        return Err(HoodError::EmptyCategory("very_static"));
    }
    let t = Thresholds {
        quantile: q,
        threshold_s: nearest_rank(static_errs, q)?,
        threshold_vs: nearest_rank(very_static_errs, q)?,
        provenance: Provenance::default(),
    };
    t.validate()?;
    Ok(t)
}

/// `(err_s, err_vs)` of one macro / micro pair.
pub fn combined_errors<T: Real>(
    model: &HoodModel<T>,
    macro_rdi: &RdiFrame,
    micro_rdi: &RdiFrame,
) -> Result<(f64, f64)> {
    Ok(score_pairs(model, &[(macro_rdi, micro_rdi)])?[0])
}

/// `(err_s, err_vs)` for many pairs, in order.
pub fn score_pairs<T: Real>(model: &HoodModel<T>, pairs: &[(&RdiFrame, &RdiFrame)]) -> Result<Vec<(f64, f64)>> {
    let hw = model.config.input_hw;
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(SCORE_CHUNK) {
        let macros: Vec<&RdiFrame> = chunk.iter().map(|p| p.0).collect();
        let micros: Vec<&RdiFrame> = chunk.iter().map(|p| p.1).collect();
        let xm = images_to_tensor(&macros, hw)?;
        let xu = images_to_tensor(&micros, hw)?;
        out.extend(model.combined_errors(&xm, &xu)?);
    }
    Ok(out)
}

pub fn score_samples<T: Real>(model: &HoodModel<T>, samples: &[TrainingSample]) -> Result<Vec<(f64, f64)>> {
    let pairs: Vec<(&RdiFrame, &RdiFrame)> = samples.iter().map(|s| (&s.macro_rdi, &s.micro_rdi)).collect();
    score_pairs(model, &pairs)
}

/// Thresholds from ID samples: `err_s` of static samples, `err_vs` of
/// very-static samples.
pub fn calibrate<T: Real>(model: &HoodModel<T>, id_samples: &[TrainingSample], q: f64) -> Result<Thresholds> {
    let scores = score_samples(model, id_samples)?;
    let pick = |c: Category, f: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        id_samples.iter().zip(&scores).filter(|(s, _)| s.category == c).map(|(_, e)| f(e)).collect()
    };
    calibrate_from_errors(&pick(Category::Static, |e| e.0), &pick(Category::VeryStatic, |e| e.1), q)
}

/// Streaming frame cubes to verdicts, one per frame after warm-up.
pub struct PresenceDetector<'m, T> {
    model: &'m HoodModel<T>,
    thresholds: Thresholds,
    pipeline: RdiPipeline,
    vote: Option<(usize, VecDeque<Verdict>)>,
}

impl<'m, T: Real> PresenceDetector<'m, T> {
    pub fn new(model: &'m HoodModel<T>, thresholds: Thresholds, radar: &RadarConfig, dsp: &DspConfig) -> Result<Self> {
        thresholds.validate()?;
        let pipeline = RdiPipeline::new(radar, dsp)?;
        let n = pipeline.processor().n_range();
        if n != model.config.input_hw || pipeline.processor().n_doppler() != model.config.input_hw {
            return Err(HoodError::Shape(format!(
                "pipeline produces {}x{} images, model expects {}x{}",
                pipeline.processor().n_doppler(),
                n,
                model.config.input_hw,
                model.config.input_hw
            )));
        }
        Ok(Self { model, thresholds, pipeline, vote: None })
    }

    /// Replaces each verdict by the majority over the last `k` raw verdicts;
    /// a tie counts as presence.
    pub fn with_majority_vote(mut self, k: usize) -> Self {
        self.vote = (k > 1).then(|| (k, VecDeque::with_capacity(k)));
        self
    }

    pub fn warmup_frames(&self) -> usize {
        self.pipeline.warmup_frames()
    }

    pub fn push(&mut self, frame: &FrameCube) -> Result<Option<DetectionResult>> {
        let Some(pair) = self.pipeline.push(frame)? else { return Ok(None) };
        Ok(Some(self.classify(&pair)?))
    }

    fn classify(&mut self, pair: &PairedRdi) -> Result<DetectionResult> {
        let (err_s, err_vs) = combined_errors(self.model, &pair.macro_rdi, &pair.micro_rdi)?;
        let mut verdict = infer(err_s, err_vs, &self.thresholds);
        if let Some((k, history)) = &mut self.vote {
            if history.len() == *k {
                history.pop_front();
            }
            history.push_back(verdict);
            let absent = history.iter().filter(|&&v| v == Verdict::NoPresence).count();
            verdict = if 2 * absent > history.len() { Verdict::NoPresence } else { Verdict::Presence };
        }
        Ok(DetectionResult { frame_index: pair.frame_index, err_s, err_vs, verdict })
    }
}

/// Runs a whole frame sequence through a fresh [`PresenceDetector`].
pub fn detect_stream<T: Real, I>(
    model: &HoodModel<T>,
    thresholds: &Thresholds,
    radar: &RadarConfig,
    dsp: &DspConfig,
    frames: I,
) -> Result<Vec<DetectionResult>>
where
    I: IntoIterator<Item = Result<FrameCube>>,
{
    let mut det = PresenceDetector::new(model, thresholds.clone(), radar, dsp)?;
    let mut out = Vec::new();
    for frame in frames {
        if let Some(r) = det.push(&frame?)? {
            out.push(r);
        }
    }
    Ok(out)
}
