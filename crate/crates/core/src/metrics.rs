//! Threshold-free separability metrics with in-distribution as the
//! positive class and higher scores meaning "more in-distribution".

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::detector::score_pairs;
use crate::dsp::RdiFrame;
use crate::model::{Category, HoodModel};
use crate::nn::Real;
use crate::{HoodError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Id,
    Ood,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    /// Negated combined reconstruction error.
    pub score: f64,
    pub label: Label,
}

impl ScoredSample {
    pub fn new(score: f64, label: Label) -> Self {
        Self { score, label }
    }
}

fn counts(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    if let Some(s) = samples.iter().find(|s| !s.score.is_finite()) {
        return Err(HoodError::NonFinite(format!("score {}", s.score)));
    }
    let n_id = samples.iter().filter(|s| s.label == Label::Id).count();
    Ok((n_id, samples.len() - n_id))
}

fn need_both(n_id: usize, n_ood: usize) -> Result<()> {
    if n_id == 0 || n_ood == 0 {
        return Err(HoodError::InsufficientData(format!("need ID and OOD samples, got {n_id} ID and {n_ood} OOD")));
    }
    Ok(())
}

/// Samples grouped by equal score, highest score first, as
/// `(positives, negatives)` per group.
fn tie_groups(samples: &[ScoredSample], positive: Label, descending: bool) -> Vec<(usize, usize)> {
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| if descending { b.score.total_cmp(&a.score) } else { a.score.total_cmp(&b.score) });
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last: Option<f64> = None;
    for s in sorted {
        if last != Some(s.score) {
            groups.push((0, 0));
            last = Some(s.score);
        }
        let g = groups.last_mut().expect("pushed above");
        if s.label == positive {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random ID sample outscores a random OOD sample, ties
/// counting one half.
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let (n_id, n_ood) = counts(samples)?;
    need_both(n_id, n_ood)?;
    let (mut ood_below, mut u) = (0usize, 0.0f64);
    for (id, ood) in tie_groups(samples, Label::Id, false) {
        u += id as f64 * (ood_below as f64 + 0.5 * ood as f64);
        ood_below += ood;
    }
    Ok(u / (n_id as f64 * n_ood as f64))
}

/// Step-curve average precision: `sum_k (R_k - R_{k-1}) P_k` over distinct
/// thresholds. With `Label::Ood` positive the sweep runs from the lowest
/// score up.
pub fn aupr(samples: &[ScoredSample], positive: Label) -> Result<f64> {
    let (n_id, n_ood) = counts(samples)?;
    let n_pos = if positive == Label::Id { n_id } else { n_ood };
    if n_pos == 0 {
        return Err(HoodError::InsufficientData("no positive samples".into()));
    }
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    for (p, n) in tie_groups(samples, positive, positive == Label::Id) {
        tp += p;
        fp += n;
        area += (p as f64 / n_pos as f64) * (tp as f64 / (tp + fp) as f64);
    }
    Ok(area)
}

/// False-positive rate at the highest score threshold whose true-positive
/// rate reaches `tpr_target`.
pub fn fpr_at_tpr(samples: &[ScoredSample], tpr_target: f64) -> Result<f64> {
    let (n_id, n_ood) = counts(samples)?;
    need_both(n_id, n_ood)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (p, n) in tie_groups(samples, Label::Id, true) {
        tp += p;
        fp += n;
        if tp as f64 >= tpr_target * n_id as f64 - 1e-12 {
            break;
        }
    }
    Ok(fp as f64 / n_ood as f64)
}

pub const FPR_TPR_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub fpr95: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl CategoryMetrics {
    pub fn from_scores(samples: &[ScoredSample]) -> Result<Self> {
        let (n_id, n_ood) = counts(samples)?;
        Ok(Self {
            auroc: auroc(samples)?,
            aupr_in: aupr(samples, Label::Id)?,
            aupr_out: aupr(samples, Label::Ood)?,
            fpr95: fpr_at_tpr(samples, FPR_TPR_TARGET)?,
            n_id,
            n_ood,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "static")]
    pub static_: CategoryMetrics,
    pub very_static: CategoryMetrics,
    pub test_time_s: f64,
}

/// Test-set label: OOD, or ID of a given category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalLabel {
    Id(Category),
    Ood,
}

impl MetricsReport {
    /// Scores each category's ID samples against every OOD sample, using
    /// that category's combined error.
    pub fn from_errors(errors: &[(f64, f64)], labels: &[EvalLabel], test_time_s: f64) -> Result<Self> {
        if errors.len() != labels.len() {
            return Err(HoodError::Shape(format!("{} errors for {} labels", errors.len(), labels.len())));
        }
        if errors.is_empty() {
            return Err(HoodError::InsufficientData("empty test set".into()));
        }
        let column = |cat: Category, pick: fn(&(f64, f64)) -> f64| -> Result<CategoryMetrics> {
            let samples: Vec<ScoredSample> = errors
                .iter()
                .zip(labels)
                .filter_map(|(e, l)| match l {
                    EvalLabel::Id(c) if *c == cat => Some(ScoredSample::new(-pick(e), Label::Id)),
                    EvalLabel::Ood => Some(ScoredSample::new(-pick(e), Label::Ood)),
                    EvalLabel::Id(_) => None,
                })
                .collect();
            CategoryMetrics::from_scores(&samples)
        };
        Ok(Self {
            static_: column(Category::Static, |e| e.0)?,
            very_static: column(Category::VeryStatic, |e| e.1)?,
            test_time_s,
        })
    }

    pub fn csv_header() -> &'static str {
        "static_auroc,static_aupr_in,static_aupr_out,static_fpr95,\
         very_static_auroc,very_static_aupr_in,very_static_aupr_out,very_static_fpr95,test_time_s"
    }

    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        for m in [&self.static_, &self.very_static] {
            write!(row, "{:.6},{:.6},{:.6},{:.6},", m.auroc, m.aupr_in, m.aupr_out, m.fpr95).unwrap();
        }
        write!(row, "{:.3}", self.test_time_s).unwrap();
        row
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HoodError::Parse(e.to_string()))
    }
}

/// Scores a labeled paired-RDI dataset. `deterministic` records a test time
/// of zero so repeated reports are byte-identical.
pub fn evaluate<T: Real>(model: &HoodModel<T>, dataset: &Dataset, deterministic: bool) -> Result<MetricsReport> {
    let hw = model.config.input_hw;
    if !dataset.is_empty() && dataset.sample_dims != [2, hw, hw] {
        return Err(HoodError::Shape(format!(
            "dataset samples are {:?}, model expects [2, {hw}, {hw}]",
            dataset.sample_dims
        )));
    }
    let (macros, micros) = dataset.paired_frames()?;
    if macros.is_empty() {
        return Err(HoodError::InsufficientData("empty test set".into()));
    }
    let labels: Vec<EvalLabel> = dataset
        .labels
        .iter()
        .map(|l| match (l.ood, l.category) {
            (true, _) => Ok(EvalLabel::Ood),
            (false, Some(c)) => Ok(EvalLabel::Id(c)),
            (false, None) => Err(HoodError::InvalidConfig(format!(
                "ID sample at frame {} of scene {} has no category",
                l.frame_index, l.scene_id
            ))),
        })
        .collect::<Result<_>>()?;
    let start = Instant::now();
    let pairs: Vec<(&RdiFrame, &RdiFrame)> = macros.iter().zip(&micros).collect();
    let errors = score_pairs(model, &pairs)?;
    let elapsed = if deterministic { 0.0 } else { start.elapsed().as_secs_f64() };
    MetricsReport::from_errors(&errors, &labels, elapsed)
}
