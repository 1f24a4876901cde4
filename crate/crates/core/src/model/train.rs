use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{augment, AugmentConfig, Category, HoodModel, TrainingSample};
use crate::nn::{AdamaxConfig, AdamaxState, Param, Real, Tensor};
use crate::{HoodError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Epochs without a 0.01% improvement before stopping; 0 disables.
    pub patience: usize,
    /// Fail on a batch missing a category instead of skipping its terms.
    pub strict_batches: bool,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            shuffle: true,
            patience: 10,
            strict_batches: false,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(HoodError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(HoodError::InvalidConfig(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(HoodError::InvalidConfig(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub optimizer: AdamaxState<T>,
}

impl<T> TrainReport<T> {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Splits every category into `n_batches` near-equal chunks, so each batch
/// keeps the dataset's category mix.
fn stratified_batches(
    data: &[TrainingSample],
    batch_size: usize,
    shuffle: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = [Category::Static, Category::VeryStatic]
        .iter()
        .map(|&c| (0..data.len()).filter(|&i| data[i].category == c).collect())
        .collect();
    if shuffle {
        groups.iter_mut().for_each(|g| g.shuffle(rng));
    }
    let n_batches = data.len().div_ceil(batch_size);
    let mut batches = vec![Vec::new(); n_batches];
    for g in &groups {
        let chunk = g.len().div_ceil(n_batches).max(1);
        for (b, part) in g.chunks(chunk).enumerate() {
            batches[b].extend_from_slice(part);
        }
    }
    batches.retain(|b| !b.is_empty());
    batches
}

/// Trains in place with Adamax, optionally resuming from `optimizer`.
/// `on_epoch` sees every finished epoch.
pub fn train<T: Real>(
    model: &mut HoodModel<T>,
    data: &[TrainingSample],
    config: &TrainConfig,
    optimizer: Option<AdamaxState<T>>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport<T>> {
    config.validate()?;
    for (c, name) in [(Category::Static, "static"), (Category::VeryStatic, "very_static")] {
        if !data.iter().any(|s| s.category == c) {
            return Err(HoodError::EmptyCategory(name));
        }
    }
    let shapes = model.param_shapes();
    let mut opt = match optimizer {
        Some(state) => {
            if state.m.len() != shapes.len() || state.m.iter().zip(&shapes).any(|(m, s)| m.shape() != s.as_slice()) {
                return Err(HoodError::Shape("optimizer state does not match the model".into()));
            }
            AdamaxState { config: AdamaxConfig { lr: config.learning_rate, ..state.config }, ..state }
        }
        None => {
            let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
            AdamaxState::new(AdamaxConfig { lr: config.learning_rate, ..Default::default() }, &refs)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut epochs = Vec::new();
    let (mut best, mut stale, mut stopped_early) = (f64::INFINITY, 0usize, false);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let batches = stratified_batches(data, config.batch_size, config.shuffle, &mut rng);
        let (mut sum, mut used) = (0.0, 0usize);
        for (step, idx) in batches.iter().enumerate() {
            let augmented: Vec<TrainingSample> =
                idx.iter().map(|&i| augment(&data[i], &mut rng, &config.augment)).collect();
            let refs: Vec<&TrainingSample> = augmented.iter().collect();
            model.zero_grad();
            let terms = match model.loss_eq1(&refs, config.strict_batches) {
                Err(HoodError::InsufficientData(_)) if !config.strict_batches => continue,
                other => other?,
            };
            let loss = terms.total();
            if !loss.is_finite() {
                return Err(HoodError::Divergence { epoch, step, loss });
            }
            let mut values: Vec<&mut Tensor<T>> = Vec::new();
            let mut grads: Vec<&Tensor<T>> = Vec::new();
            for Param { value, grad } in model.params_mut() {
                values.push(value);
                grads.push(grad);
            }
            opt.step(&mut values, &grads)?;
            sum += loss;
            used += 1;
        }
        if used == 0 {
            return Err(HoodError::InsufficientData("no batch had two samples of any category".into()));
        }
        let record = EpochRecord { epoch, loss: sum / used as f64, wall_time_s: start.elapsed().as_secs_f64() };
        log::info!("epoch {epoch}: loss {:.6} ({:.1} s)", record.loss, record.wall_time_s);
        on_epoch(&record);
        epochs.push(record);

        if record.loss < best * (1.0 - 1e-4) {
            best = record.loss;
            stale = 0;
        } else {
            stale += 1;
        }
        if config.patience > 0 && stale >= config.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainReport { epochs, stopped_early, optimizer: opt })
}
