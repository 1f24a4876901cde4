//! Seeded synthetic benchmark: simulate preset scenes, preprocess, train,
//! calibrate on the training ID data and evaluate on held-out scenes.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, SampleLabel};
use crate::detector::{calibrate, Provenance, Thresholds, DEFAULT_QUANTILE};
use crate::dsp::{DspConfig, RdiPipeline};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{train, Category, EpochRecord, HoodModel, ModelConfig, TrainConfig};
use crate::radar::{preset_scene, simulate_recording, PresetName, RadarConfig, Scene};
use crate::{HoodError, Result};

/// The four presets with a person in them.
pub const ID_PRESETS: [PresetName; 4] = [
    PresetName::IdStatic,
    PresetName::IdVeryStatic,
    PresetName::IdStaticWithDisturber,
    PresetName::IdVeryStaticWithDisturber,
];

pub const OOD_PRESETS: [PresetName; 3] = [PresetName::OodFan, PresetName::OodMovingToy, PresetName::EmptyRoom];

/// Label every sample of a `preset` recording carries.
pub fn preset_label(preset: PresetName, scene_id: u32) -> SampleLabel {
    let category = match preset {
        PresetName::IdStatic | PresetName::IdStaticWithDisturber => Some(Category::Static),
        PresetName::IdVeryStatic | PresetName::IdVeryStaticWithDisturber => Some(Category::VeryStatic),
        PresetName::OodFan | PresetName::OodMovingToy | PresetName::EmptyRoom => None,
    };
    SampleLabel { category, ood: !preset.is_id(), scene_id, frame_index: 0 }
}

/// Simulates `scene`, preprocesses it and keeps every `stride`-th pair.
pub fn record_scene(
    radar: &RadarConfig,
    dsp: &DspConfig,
    scene: &Scene,
    label: SampleLabel,
    stride: usize,
) -> Result<Dataset> {
    if stride == 0 {
        return Err(HoodError::InvalidConfig("stride must be >= 1".into()));
    }
    let pairs = RdiPipeline::process_all(radar, dsp, simulate_recording(radar, scene)?)?;
    let kept: Vec<_> = pairs.into_iter().step_by(stride).collect();
    Dataset::from_pairs(&kept, label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub master_seed: u64,
    /// Recording length of every scene, seconds.
    pub duration: f64,
    pub train_scenes_per_preset: usize,
    pub test_scenes_per_preset: usize,
    pub train_stride: usize,
    pub test_stride: usize,
    pub quantile: f64,
    pub radar: RadarConfig,
    pub dsp: DspConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            master_seed: 2024,
            duration: 20.0,
            train_scenes_per_preset: 3,
            test_scenes_per_preset: 2,
            train_stride: 4,
            test_stride: 2,
            quantile: DEFAULT_QUANTILE,
            radar: RadarConfig::default(),
            dsp: DspConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig { epochs: 25, batch_size: 32, patience: 0, ..TrainConfig::default() },
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.dsp.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.train_scenes_per_preset == 0 || self.test_scenes_per_preset == 0 {
            return Err(HoodError::InvalidConfig("every preset needs >= 1 train and test scene".into()));
        }
        if self.train_stride == 0 || self.test_stride == 0 {
            return Err(HoodError::InvalidConfig("strides must be >= 1".into()));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(HoodError::InvalidConfig(format!("quantile must be in (0, 1), got {}", self.quantile)));
        }
        let frames = (self.duration / self.radar.frame_period).round();
        if frames.is_nan() || frames < self.dsp.warmup_frames() as f64 {
            return Err(HoodError::InvalidConfig(format!(
                "duration {} s gives {frames} frames, preprocessing needs {}",
                self.duration,
                self.dsp.warmup_frames()
            )));
        }
        Ok(())
    }
}

/// One simulated scene of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneRef {
    pub preset: PresetName,
    pub seed: u64,
    pub scene_id: u32,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub model: HoodModel<f32>,
    pub thresholds: Thresholds,
    pub report: MetricsReport,
    pub epochs: Vec<EpochRecord>,
    pub train_scenes: Vec<SceneRef>,
    pub test_scenes: Vec<SceneRef>,
    pub train_set: Dataset,
    pub test_set: Dataset,
}

impl BenchmarkOutcome {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Scene seeds and ids for both splits; ids are unique across the run, so
/// the two splits are scene-disjoint by construction.
pub fn benchmark_scenes(config: &BenchmarkConfig) -> (Vec<SceneRef>, Vec<SceneRef>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    let mut next_id = 0u32;
    let mut scene = |preset| {
        next_id += 1;
        SceneRef { preset, seed: rng.random(), scene_id: next_id }
    };
    let mut train = Vec::new();
    for p in ID_PRESETS {
        train.extend((0..config.train_scenes_per_preset).map(|_| scene(p)));
    }
    let mut test = Vec::new();
    for p in ID_PRESETS.into_iter().chain(OOD_PRESETS) {
        test.extend((0..config.test_scenes_per_preset).map(|_| scene(p)));
    }
    (train, test)
}

fn record_all(config: &BenchmarkConfig, scenes: &[SceneRef], stride: usize) -> Result<Dataset> {
    let parts = scenes
        .iter()
        .map(|s| {
            let scene = Scene { duration: config.duration, ..preset_scene(s.preset, s.seed) };
            log::debug!("recording {} (scene {})", s.preset, s.scene_id);
            record_scene(&config.radar, &config.dsp, &scene, preset_label(s.preset, s.scene_id), stride)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::concat(&parts)
}

/// Runs the whole benchmark. `on_epoch` sees every training epoch.
pub fn run_benchmark(
    config: &BenchmarkConfig,
    deterministic: bool,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<BenchmarkOutcome> {
    config.validate()?;
    let start = Instant::now();
    let (train_scenes, test_scenes) = benchmark_scenes(config);
    let train_set = record_all(config, &train_scenes, config.train_stride)?;
    let test_set = record_all(config, &test_scenes, config.test_stride)?;
    log::info!(
        "benchmark data: {} train / {} test samples ({:.1} s)",
        train_set.len(),
        test_set.len(),
        start.elapsed().as_secs_f64()
    );

    let samples = train_set.training_samples()?;
    let mut model = HoodModel::<f32>::new(config.model, config.master_seed)?;
    let train_cfg = TrainConfig { seed: config.master_seed, ..config.train.clone() };
    let report = train(&mut model, &samples, &train_cfg, None, on_epoch)?;

    let mut thresholds = calibrate(&model, &samples, config.quantile)?;
    thresholds.provenance = Provenance { dataset_id: train_set.content_id(), model_id: String::new() };
    let metrics = evaluate(&model, &test_set, deterministic)?;
    log::info!("benchmark finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(BenchmarkOutcome {
        model,
        thresholds,
        report: metrics,
        epochs: report.epochs,
        train_scenes,
        test_scenes,
        train_set,
        test_set,
    })
}
