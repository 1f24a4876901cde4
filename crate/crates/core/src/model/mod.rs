//! Two encoders (macro, micro) and four decoders (macro / micro for each of
//! the static and very-static categories), trained on the sum of the four
//! per-category reconstruction MSEs.

mod augment;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::RdiFrame;
use crate::nn::activation::LEAKY_SLOPE;
use crate::nn::loss::{mse, mse_backward, mse_per_item};
use crate::nn::{BatchNorm, Conv2d, ConvGeom, ConvTranspose2d, Dense, Layer, Param, Real, Sequential, Tensor};
use crate::{HoodError, Result};

pub use augment::{augment, AugmentConfig};
pub use train::{train, EpochRecord, TrainConfig, TrainReport};

pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_INPUT_HW: usize = 64;

/// Human activity category of an in-distribution sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Static,
    VeryStatic,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Static => "static",
            Category::VeryStatic => "very_static",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub macro_rdi: RdiFrame,
    pub micro_rdi: RdiFrame,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    /// Side of the square input images; a multiple of 4.
    pub input_hw: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { latent_dim: DEFAULT_LATENT_DIM, input_hw: DEFAULT_INPUT_HW }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(HoodError::InvalidConfig("latent_dim must be >= 1".into()));
        }
        if self.input_hw < 4 || !self.input_hw.is_multiple_of(4) {
            return Err(HoodError::InvalidConfig(format!(
                "input size must be a positive multiple of 4, got {}",
                self.input_hw
            )));
        }
        Ok(())
    }

    fn bottleneck_hw(&self) -> usize {
        self.input_hw / 4
    }
}

/// Per-term values of the training objective; an absent term is 0.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub macro_s: f64,
    pub micro_s: f64,
    pub macro_vs: f64,
    pub micro_vs: f64,
    pub n_static: usize,
    pub n_very_static: usize,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.macro_s + self.micro_s + self.macro_vs + self.micro_vs
    }
}

/// Decoder outputs for one batch, all four branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructions<T> {
    pub macro_s: Tensor<T>,
    pub macro_vs: Tensor<T>,
    pub micro_s: Tensor<T>,
    pub micro_vs: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoodModel<T> {
    pub config: ModelConfig,
    pub enc_macro: Sequential<T>,
    pub enc_micro: Sequential<T>,
    pub dec_macro_s: Sequential<T>,
    pub dec_macro_vs: Sequential<T>,
    pub dec_micro_s: Sequential<T>,
    pub dec_micro_vs: Sequential<T>,
}

/// Fixed network order for naming, checkpoints and the optimizer.
pub const NETWORK_NAMES: [&str; 6] =
    ["enc_macro", "enc_micro", "dec_macro_s", "dec_macro_vs", "dec_micro_s", "dec_micro_vs"];

fn encoder<T: Real>(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential<T> {
    let down = ConvGeom::new(3, 2, 1);
    let b = cfg.bottleneck_hw();
    Sequential::new(vec![
        Layer::Conv(Conv2d::new(1, 16, down, rng)),
        Layer::BatchNorm(BatchNorm::new(16)),
        Layer::leaky_relu(LEAKY_SLOPE),
        Layer::Conv(Conv2d::new(16, 64, down, rng)),
        Layer::BatchNorm(BatchNorm::new(64)),
        Layer::leaky_relu(LEAKY_SLOPE),
        Layer::flatten(),
        Layer::Dense(Dense::new(64 * b * b, cfg.latent_dim, rng)),
        Layer::BatchNorm(BatchNorm::new(cfg.latent_dim)),
    ])
}

fn decoder<T: Real>(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Sequential<T> {
    let up = ConvGeom::new(3, 2, 1);
    let b = cfg.bottleneck_hw();
    Sequential::new(vec![
        Layer::Dense(Dense::new(cfg.latent_dim, 64 * b * b, rng)),
        Layer::BatchNorm(BatchNorm::new(64 * b * b)),
        Layer::Unflatten { dims: vec![64, b, b] },
        Layer::ConvTranspose(ConvTranspose2d::new(64, 64, up, 1, rng)),
        Layer::BatchNorm(BatchNorm::new(64)),
        Layer::leaky_relu(LEAKY_SLOPE),
        Layer::ConvTranspose(ConvTranspose2d::new(64, 16, up, 1, rng)),
        Layer::BatchNorm(BatchNorm::new(16)),
        Layer::leaky_relu(LEAKY_SLOPE),
        Layer::Conv(Conv2d::new(16, 1, ConvGeom::new(3, 1, 1), rng)),
        Layer::sigmoid(),
    ])
}

/// 64x64 single-precision model with seeded fan-in uniform weights.
pub fn build_model(latent_dim: usize, seed: u64) -> Result<HoodModel<f32>> {
    HoodModel::new(ModelConfig { latent_dim, input_hw: DEFAULT_INPUT_HW }, seed)
}

/// Stacks images into `[N, 1, H, W]`.
pub fn images_to_tensor<T: Real>(frames: &[&RdiFrame], hw: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(frames.len() * hw * hw);
    for f in frames {
        if f.dims() != (hw, hw) {
            return Err(HoodError::Shape(format!("model expects {hw}x{hw} images, got {:?}", f.dims())));
        }
        data.extend(f.data.iter().map(|&v| T::from_f64_lossy(v)));
    }
    Tensor::from_vec(&[frames.len(), 1, hw, hw], data)
}

impl<T: Real> HoodModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            enc_macro: encoder(&config, &mut rng),
            enc_micro: encoder(&config, &mut rng),
            dec_macro_s: decoder(&config, &mut rng),
            dec_macro_vs: decoder(&config, &mut rng),
            dec_micro_s: decoder(&config, &mut rng),
            dec_micro_vs: decoder(&config, &mut rng),
            config,
        })
    }

    pub fn networks(&self) -> [(&'static str, &Sequential<T>); 6] {
        let n = NETWORK_NAMES;
        [
            (n[0], &self.enc_macro),
            (n[1], &self.enc_micro),
            (n[2], &self.dec_macro_s),
            (n[3], &self.dec_macro_vs),
            (n[4], &self.dec_micro_s),
            (n[5], &self.dec_micro_vs),
        ]
    }

    pub fn networks_mut(&mut self) -> [(&'static str, &mut Sequential<T>); 6] {
        let n = NETWORK_NAMES;
        [
            (n[0], &mut self.enc_macro),
            (n[1], &mut self.enc_micro),
            (n[2], &mut self.dec_macro_s),
            (n[3], &mut self.dec_macro_vs),
            (n[4], &mut self.dec_micro_s),
            (n[5], &mut self.dec_micro_vs),
        ]
    }

    /// `"<network>.<layer>.<tensor>"` for every persistent tensor.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        self.networks()
            .into_iter()
            .flat_map(|(net, seq)| seq.named_state().into_iter().map(move |(n, t)| (format!("{net}.{n}"), t)))
            .collect()
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.networks_mut()
            .into_iter()
            .flat_map(|(net, seq)| seq.named_state_mut().into_iter().map(move |(n, t)| (format!("{net}.{n}"), t)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.networks_mut().into_iter().flat_map(|(_, s)| s.params_mut()).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.networks().iter().flat_map(|(_, s)| s.params()).map(|p| p.value.shape().to_vec()).collect()
    }

    pub fn zero_grad(&mut self) {
        for (_, net) in self.networks_mut() {
            net.zero_grad();
        }
    }

    pub fn cast<U: Real>(&self) -> HoodModel<U> {
        let mut out = HoodModel::<U>::new(self.config, 0).expect("config already validated");
        for ((_, dst), (_, src)) in out.named_state_mut().into_iter().zip(self.named_state()) {
            *dst = src.cast();
        }
        out
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let hw = self.config.input_hw;
        match x.shape() {
            [_, 1, h, w] if *h == hw && *w == hw => Ok(()),
            s => Err(HoodError::Shape(format!("model expects [N, 1, {hw}, {hw}], got {s:?}"))),
        }
    }

    /// Eval-mode reconstructions of `[N, 1, H, W]` macro and micro batches
    /// by all four decoders.
    pub fn reconstruct(&self, macro_x: &Tensor<T>, micro_x: &Tensor<T>) -> Result<Reconstructions<T>> {
        self.check_input(macro_x)?;
        self.check_input(micro_x)?;
        if macro_x.batch() != micro_x.batch() {
            return Err(HoodError::Shape("macro and micro batches differ in size".into()));
        }
        let zm = self.enc_macro.infer(macro_x)?;
        let zu = self.enc_micro.infer(micro_x)?;
        Ok(Reconstructions {
            macro_s: self.dec_macro_s.infer(&zm)?,
            macro_vs: self.dec_macro_vs.infer(&zm)?,
            micro_s: self.dec_micro_s.infer(&zu)?,
            micro_vs: self.dec_micro_vs.infer(&zu)?,
        })
    }

    /// Per-item `(err_s, err_vs)`: macro + micro reconstruction MSE through
    /// each category's decoder pair.
    pub fn combined_errors(&self, macro_x: &Tensor<T>, micro_x: &Tensor<T>) -> Result<Vec<(f64, f64)>> {
        let r = self.reconstruct(macro_x, micro_x)?;
        let ms = mse_per_item(&r.macro_s, macro_x)?;
        let us = mse_per_item(&r.micro_s, micro_x)?;
        let mv = mse_per_item(&r.macro_vs, macro_x)?;
        let uv = mse_per_item(&r.micro_vs, micro_x)?;
        Ok((0..ms.len()).map(|i| (ms[i] + us[i], mv[i] + uv[i])).collect())
    }

    /// Train-mode objective on one batch; gradients accumulate into every
    /// parameter touched.
    ///
    /// Both encoders see the whole batch. Each category's latent rows go to
    /// that category's decoder pair; a category with fewer than two samples
    /// contributes nothing (train-mode batch norm needs two), unless `strict`
    /// is set, in which case it is an error.
    pub fn loss_eq1(&mut self, batch: &[&TrainingSample], strict: bool) -> Result<LossTerms> {
        let hw = self.config.input_hw;
        let macros: Vec<&RdiFrame> = batch.iter().map(|s| &s.macro_rdi).collect();
        let micros: Vec<&RdiFrame> = batch.iter().map(|s| &s.micro_rdi).collect();
        let xm: Tensor<T> = images_to_tensor(&macros, hw)?;
        let xu: Tensor<T> = images_to_tensor(&micros, hw)?;
        let idx = |c: Category| -> Vec<usize> { (0..batch.len()).filter(|&i| batch[i].category == c).collect() };
        let (is, iv) = (idx(Category::Static), idx(Category::VeryStatic));
        if strict {
            if is.is_empty() {
                return Err(HoodError::EmptyCategory("static"));
            }
            if iv.is_empty() {
                return Err(HoodError::EmptyCategory("very_static"));
            }
        }
        let active = |v: &Vec<usize>| v.len() >= 2;
        if !active(&is) && !active(&iv) {
            return Err(HoodError::InsufficientData(format!(
                "batch has {} static and {} very-static samples; a category needs two",
                is.len(),
                iv.len()
            )));
        }

        let zm = self.enc_macro.forward(xm.clone())?;
        let zu = self.enc_micro.forward(xu.clone())?;
        let mut dzm = Tensor::zeros(zm.shape());
        let mut dzu = Tensor::zeros(zu.shape());
        let mut terms = LossTerms { n_static: is.len(), n_very_static: iv.len(), ..Default::default() };

        let branches: [(&Vec<usize>, bool, &mut Sequential<T>, &mut f64); 4] = [
            (&is, true, &mut self.dec_macro_s, &mut terms.macro_s),
            (&is, false, &mut self.dec_micro_s, &mut terms.micro_s),
            (&iv, true, &mut self.dec_macro_vs, &mut terms.macro_vs),
            (&iv, false, &mut self.dec_micro_vs, &mut terms.micro_vs),
        ];
        for (rows, is_macro, dec, term) in branches {
            if !active(rows) {
                continue;
            }
            let (z, x, dz) = if is_macro { (&zm, &xm, &mut dzm) } else { (&zu, &xu, &mut dzu) };
            let target = x.slice_batch(rows);
            let recon = dec.forward(z.slice_batch(rows))?;
            *term = mse(&recon, &target)?;
            let dlatent = dec.backward(mse_backward(&recon, &target)?)?;
            let width = dlatent.len() / rows.len();
            for (k, &r) in rows.iter().enumerate() {
                dz.data_mut()[r * width..(r + 1) * width].copy_from_slice(&dlatent.data()[k * width..(k + 1) * width]);
            }
        }
        self.enc_macro.backward(dzm)?;
        self.enc_micro.backward(dzu)?;
        Ok(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::RdiKind;

    fn tiny() -> ModelConfig {
        ModelConfig { latent_dim: 4, input_hw: 8 }
    }

    fn sample(seed: u64, category: Category, hw: usize) -> TrainingSample {
        let img = |salt: u64, kind| {
            let t = crate::nn::testutil::random_tensor(&[hw * hw], seed * 7 + salt);
            RdiFrame { data: t.data().iter().map(|v| (v + 1.0) / 2.0).collect(), ..RdiFrame::zeros(hw, hw, kind, 0) }
        };
        TrainingSample { macro_rdi: img(1, RdiKind::Macro), micro_rdi: img(2, RdiKind::Micro), category }
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { latent_dim: 0, input_hw: 64 }.validate().is_err());
        assert!(ModelConfig { latent_dim: 4, input_hw: 10 }.validate().is_err());
        assert!(tiny().validate().is_ok());
    }

    #[test]
    fn full_size_shapes_and_sigmoid_range() {
        let model = build_model(DEFAULT_LATENT_DIM, 3).unwrap();
        let x: Tensor<f32> = crate::nn::testutil::random_tensor(&[4, 1, 64, 64], 1).map(f64::abs).cast();
        let z = model.enc_macro.infer(&x).unwrap();
        assert_eq!(z.shape(), &[4, 64]);
        let y = model.dec_macro_s.infer(&z).unwrap();
        assert_eq!(y.shape(), &[4, 1, 64, 64]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = HoodModel::<f32>::new(tiny(), 9).unwrap();
        assert_eq!(a, HoodModel::new(tiny(), 9).unwrap());
        assert_ne!(a, HoodModel::new(tiny(), 10).unwrap());
    }

    #[test]
    fn single_category_batch_leaves_other_decoders_untouched() {
        let mut model = HoodModel::<f64>::new(tiny(), 1).unwrap();
        let batch: Vec<TrainingSample> = (0..4).map(|i| sample(i, Category::Static, 8)).collect();
        let refs: Vec<&TrainingSample> = batch.iter().collect();
        let terms = model.loss_eq1(&refs, false).unwrap();
        assert_eq!((terms.macro_vs, terms.micro_vs), (0.0, 0.0));
        assert!(terms.macro_s > 0.0 && terms.micro_s > 0.0);
        assert_eq!(model.dec_macro_vs.grad_norm_sq(), 0.0);
        assert_eq!(model.dec_micro_vs.grad_norm_sq(), 0.0);
        assert!(model.dec_macro_s.grad_norm_sq() > 0.0);
        assert!(matches!(model.loss_eq1(&refs, true), Err(HoodError::EmptyCategory("very_static"))));
    }

    #[test]
    fn cast_round_trip_preserves_state() {
        let a = HoodModel::<f32>::new(tiny(), 4).unwrap();
        assert_eq!(a.cast::<f64>().cast::<f32>(), a);
    }
}
