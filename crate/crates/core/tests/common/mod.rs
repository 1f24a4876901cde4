//! Independent oracles shared by the integration suites and the acceptance
//! runner. Nothing here calls the code path it checks.

#![allow(dead_code)]

use hood::dsp::{RdiFrame, RdiKind};
use hood::model::{images_to_tensor, Category, HoodModel, ModelConfig, TrainingSample};
use hood::nn::{BatchNorm, Conv2d, ConvGeom, ConvTranspose2d, Dense, Layer, Sequential, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const TOL_CONV: f64 = 1e-4;
pub const TOL_SMOOTH: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `|a - n| / max(|a|, |n|)` over whole gradient vectors.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn central_diff(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + FD_STEP) - f(x0 - FD_STEP)) / (2.0 * FD_STEP)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// A layer under test, its input shape and the tolerance of its class.
pub struct LayerCase {
    pub name: &'static str,
    pub layer: Layer<f64>,
    pub input_shape: Vec<usize>,
    pub tol: f64,
}

/// Every trainable or elementwise layer kind the model uses, at small sizes.
pub fn layer_cases(rng: &mut ChaCha8Rng) -> Vec<LayerCase> {
    let mut bn2 = BatchNorm::new(3);
    bn2.gamma.value = uniform_tensor(&[3], rng);
    bn2.beta.value = uniform_tensor(&[3], rng);
    let mut bn1 = BatchNorm::new(5);
    bn1.gamma.value = uniform_tensor(&[5], rng);
    vec![
        LayerCase {
            name: "conv s2 p1",
            layer: Layer::Conv(Conv2d::new(2, 4, ConvGeom::new(3, 2, 1), rng)),
            input_shape: vec![2, 2, 6, 6],
            tol: TOL_CONV,
        },
        LayerCase {
            name: "conv s1 p1 single filter",
            layer: Layer::Conv(Conv2d::new(3, 1, ConvGeom::new(3, 1, 1), rng)),
            input_shape: vec![2, 3, 5, 5],
            tol: TOL_CONV,
        },
        LayerCase {
            name: "conv transpose s2 p1 op1",
            layer: Layer::ConvTranspose(ConvTranspose2d::new(3, 2, ConvGeom::new(3, 2, 1), 1, rng)),
            input_shape: vec![2, 3, 3, 3],
            tol: TOL_CONV,
        },
        LayerCase { name: "batchnorm 2d", layer: Layer::BatchNorm(bn2), input_shape: vec![4, 3, 3, 3], tol: TOL_CONV },
        LayerCase { name: "batchnorm 1d", layer: Layer::BatchNorm(bn1), input_shape: vec![6, 5], tol: TOL_CONV },
        LayerCase {
            name: "dense",
            layer: Layer::Dense(Dense::new(7, 4, rng)),
            input_shape: vec![3, 7],
            tol: TOL_SMOOTH,
        },
        LayerCase { name: "leaky relu", layer: Layer::leaky_relu(0.01), input_shape: vec![3, 10], tol: TOL_SMOOTH },
        LayerCase { name: "sigmoid", layer: Layer::sigmoid(), input_shape: vec![3, 10], tol: TOL_SMOOTH },
    ]
}

/// Largest relative error over the input gradient and every parameter
/// gradient of `L = sum(r * layer(x))` for random `x` and `r`.
pub fn layer_grad_error(case: &LayerCase, rng: &mut ChaCha8Rng) -> f64 {
    let mut x = uniform_tensor(&case.input_shape, rng);
    if matches!(case.layer, Layer::LeakyRelu { .. }) {
        // Keep away from the kink, where the central difference is wrong.
        x.data_mut().iter_mut().for_each(|v| {
            if v.abs() < 10.0 * FD_STEP {
                *v = 0.5;
            }
        });
    }
    let out_shape = case.layer.clone().forward(x.clone()).unwrap().shape().to_vec();
    let r = uniform_tensor(&out_shape, rng);
    let loss = |layer: &Layer<f64>, x: &Tensor<f64>| dot(&layer.clone().forward(x.clone()).unwrap(), &r);

    let mut analytic_layer = case.layer.clone();
    analytic_layer.forward(x.clone()).unwrap();
    let dx = analytic_layer.backward(r.clone()).unwrap();

    let mut worst = {
        let numeric: Vec<f64> = (0..x.len())
            .map(|i| {
                central_diff(
                    |v| {
                        let mut p = x.clone();
                        p.data_mut()[i] = v;
                        loss(&case.layer, &p)
                    },
                    x.data()[i],
                )
            })
            .collect();
        rel_error(dx.data(), &numeric)
    };
    let grads: Vec<Vec<f64>> = analytic_layer.params().iter().map(|(_, p)| p.grad.data().to_vec()).collect();
    for (k, analytic) in grads.iter().enumerate() {
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|j| {
                let base = case.layer.params()[k].1.value.data()[j];
                central_diff(
                    |v| {
                        let mut l = case.layer.clone();
                        l.params_mut()[k].value.data_mut()[j] = v;
                        loss(&l, &x)
                    },
                    base,
                )
            })
            .collect();
        worst = worst.max(rel_error(analytic, &numeric));
    }
    worst
}

/// Relative error of the MSE gradient with respect to the prediction.
pub fn mse_grad_error(rng: &mut ChaCha8Rng) -> f64 {
    let a = uniform_tensor(&[3, 1, 4, 4], rng);
    let b = uniform_tensor(&[3, 1, 4, 4], rng);
    let analytic = hood::nn::loss::mse_backward(&a, &b).unwrap();
    let numeric: Vec<f64> = (0..a.len())
        .map(|i| {
            central_diff(
                |v| {
                    let mut p = a.clone();
                    p.data_mut()[i] = v;
                    hood::nn::loss::mse(&p, &b).unwrap()
                },
                a.data()[i],
            )
        })
        .collect();
    rel_error(analytic.data(), &numeric)
}

pub fn random_frame(hw: usize, kind: RdiKind, rng: &mut ChaCha8Rng) -> RdiFrame {
    RdiFrame { data: (0..hw * hw).map(|_| rng.random_range(0.0..1.0)).collect(), ..RdiFrame::zeros(hw, hw, kind, 0) }
}

pub fn random_samples(hw: usize, n_static: usize, n_very_static: usize, rng: &mut ChaCha8Rng) -> Vec<TrainingSample> {
    let cats =
        std::iter::repeat_n(Category::Static, n_static).chain(std::iter::repeat_n(Category::VeryStatic, n_very_static));
    cats.map(|category| TrainingSample {
        macro_rdi: random_frame(hw, RdiKind::Macro, rng),
        micro_rdi: random_frame(hw, RdiKind::Micro, rng),
        category,
    })
    .collect()
}

/// Signs of every cached leaky-ReLU input, in network order.
/// Training objective from a plain train-mode forward pass, with each
/// decoder fed its own category's latent rows, plus the sign of every
/// leaky-ReLU input along the way.
fn forward_objective(mut m: HoodModel<f64>, batch: &[&TrainingSample]) -> (f64, Vec<bool>) {
    let hw = m.config.input_hw;
    let macros: Vec<&RdiFrame> = batch.iter().map(|s| &s.macro_rdi).collect();
    let micros: Vec<&RdiFrame> = batch.iter().map(|s| &s.micro_rdi).collect();
    let xm = images_to_tensor::<f64>(&macros, hw).unwrap();
    let xu = images_to_tensor::<f64>(&micros, hw).unwrap();
    let rows = |c: Category| -> Vec<usize> { (0..batch.len()).filter(|&i| batch[i].category == c).collect() };
    let (is, iv) = (rows(Category::Static), rows(Category::VeryStatic));
    let mut signs = Vec::new();
    let mut run = |seq: &mut Sequential<f64>, mut x: Tensor<f64>| {
        for layer in seq.layers.iter_mut() {
            if matches!(layer, Layer::LeakyRelu { .. }) {
                signs.extend(x.data().iter().map(|&v| v > 0.0));
            }
            x = layer.forward(x).unwrap();
        }
        x
    };
    let zm = run(&mut m.enc_macro, xm.clone());
    let zu = run(&mut m.enc_micro, xu.clone());
    let mse = |a: &Tensor<f64>, b: &Tensor<f64>| {
        a.data().iter().zip(b.data()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
    };
    let mut loss = 0.0;
    for (dec, z, x, r) in [
        (&mut m.dec_macro_s, &zm, &xm, &is),
        (&mut m.dec_micro_s, &zu, &xu, &is),
        (&mut m.dec_macro_vs, &zm, &xm, &iv),
        (&mut m.dec_micro_vs, &zu, &xu, &iv),
    ] {
        let recon = run(dec, z.slice_batch(r));
        loss += mse(&recon, &x.slice_batch(r));
    }
    (loss, signs)
}

/// Outcome of a finite-difference check on the training objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveCheck {
    pub rel_error: f64,
    pub checked: usize,
    /// Coordinates whose `+-h` probes put some leaky-ReLU input on
    /// different sides of zero at every tried step.
    pub skipped_kinks: usize,
}

/// Relative error of the full training objective's parameter gradient on a
/// tiny double-precision model, over `per_tensor` random coordinates of
/// every parameter tensor.
pub fn objective_grad_error(seed: u64, per_tensor: usize) -> ObjectiveCheck {
    let mut rng = rng(seed);
    let config = ModelConfig { latent_dim: 4, input_hw: 8 };
    let model = HoodModel::<f64>::new(config, seed).unwrap();
    let data = random_samples(8, 3, 3, &mut rng);
    let batch: Vec<&TrainingSample> = data.iter().collect();

    let mut analytic_model = model.clone();
    analytic_model.zero_grad();
    let total = analytic_model.loss_eq1(&batch, true).unwrap().total();
    let (reference, _) = forward_objective(model.clone(), &batch);
    assert!((total - reference).abs() <= 1e-12 * reference.abs(), "objective {total} vs reference {reference}");
    let grads: Vec<Vec<f64>> = analytic_model.params_mut().iter().map(|p| p.grad.data().to_vec()).collect();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut skipped = 0;
    for (k, g) in grads.iter().enumerate() {
        for _ in 0..per_tensor.min(g.len()) {
            let j = rng.random_range(0..g.len());
            let base = model.clone().params_mut()[k].value.data()[j];
            let probe = |v: f64| {
                let mut m = model.clone();
                m.params_mut()[k].value.data_mut()[j] = v;
                forward_objective(m, &batch)
            };
            // A probe pair that straddles a kink is retried with shorter steps.
            let estimate = [FD_STEP, FD_STEP / 10.0, FD_STEP / 100.0].into_iter().find_map(|h| {
                let (up, s_up) = probe(base + h);
                let (down, s_down) = probe(base - h);
                (s_up == s_down).then(|| (up - down) / (2.0 * h))
            });
            let Some(n) = estimate else {
                skipped += 1;
                continue;
            };
            numeric.push(n);
            analytic.push(g[j]);
        }
    }
    ObjectiveCheck { rel_error: rel_error(&analytic, &numeric), checked: analytic.len(), skipped_kinks: skipped }
}

/// Element-wise sums of every `w` consecutive frames, recomputed from scratch.
pub fn naive_erespd(frames: &[Vec<f64>], w: usize) -> Vec<Vec<f64>> {
    if frames.len() < w {
        return Vec::new();
    }
    (0..=frames.len() - w)
        .map(|i| {
            let mut acc = vec![0.0; frames[0].len()];
            for f in &frames[i..i + w] {
                for (a, v) in acc.iter_mut().zip(f) {
                    *a += v;
                }
            }
            acc
        })
        .collect()
}

/// ID and OOD error lists; a score is the negated error.
#[derive(Debug, Clone)]
pub struct ErrorInstance {
    pub id: Vec<f64>,
    pub ood: Vec<f64>,
}

impl ErrorInstance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(2..=50);
        let n_id = rng.random_range(1..n);
        // Half the instances draw from a coarse grid to force ties.
        let coarse = rng.random_bool(0.5);
        let mut draw = |shift: f64| -> f64 {
            let v: f64 = rng.random_range(0.0..1.0) + shift;
            if coarse {
                (v * 5.0).round() / 5.0
            } else {
                v
            }
        };
        let id = (0..n_id).map(|_| draw(0.0)).collect();
        let ood = (0..n - n_id).map(|_| draw(0.3)).collect();
        Self { id, ood }
    }

    pub fn scored(&self) -> Vec<hood::metrics::ScoredSample> {
        use hood::metrics::{Label, ScoredSample};
        self.id
            .iter()
            .map(|&e| ScoredSample::new(-e, Label::Id))
            .chain(self.ood.iter().map(|&e| ScoredSample::new(-e, Label::Ood)))
            .collect()
    }
}

/// Fraction of (ID, OOD) pairs where the ID error is lower, ties one half.
pub fn brute_auroc(inst: &ErrorInstance) -> f64 {
    let mut s = 0.0;
    for &a in &inst.id {
        for &b in &inst.ood {
            s += if a < b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (inst.id.len() * inst.ood.len()) as f64
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Average precision from an explicit sweep over every distinct error
/// threshold. With ID positive a sample is called positive when its error
/// is at most the threshold; with OOD positive, when it is at least it.
pub fn brute_aupr(inst: &ErrorInstance, id_positive: bool) -> f64 {
    let (pos, neg) = if id_positive { (&inst.id, &inst.ood) } else { (&inst.ood, &inst.id) };
    let mut thresholds = distinct(inst.id.iter().chain(&inst.ood).copied());
    if !id_positive {
        thresholds.reverse();
    }
    let called = |e: f64, t: f64| if id_positive { e <= t } else { e >= t };
    let (mut prev_recall, mut area) = (0.0, 0.0);
    for t in thresholds {
        let tp = pos.iter().filter(|&&e| called(e, t)).count() as f64;
        let fp = neg.iter().filter(|&&e| called(e, t)).count() as f64;
        let recall = tp / pos.len() as f64;
        if tp + fp > 0.0 {
            area += (recall - prev_recall) * tp / (tp + fp);
        }
        prev_recall = recall;
    }
    area
}

/// FPR at the smallest error threshold accepting at least `target` of the
/// ID samples.
pub fn brute_fpr_at_tpr(inst: &ErrorInstance, target: f64) -> f64 {
    for t in distinct(inst.id.iter().chain(&inst.ood).copied()) {
        let tpr = inst.id.iter().filter(|&&e| e <= t).count() as f64 / inst.id.len() as f64;
        if tpr >= target - 1e-12 {
            return inst.ood.iter().filter(|&&e| e <= t).count() as f64 / inst.ood.len() as f64;
        }
    }
    1.0
}

/// Error list of random size and shape for calibration checks.
pub fn random_errors(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(1..=300);
    match rng.random_range(0..3) {
        0 => (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        1 => (0..n).map(|_| -(1.0f64 - rng.random_range(0.0..1.0)).ln() * 0.01).collect(),
        _ => (0..n).map(|_| rng.random_range(0..6) as f64 * 0.1).collect(),
    }
}

/// `sorted[ceil(q n) - 1]`, computed with exact rational arithmetic on q = 9/10.
pub fn nearest_rank_q90(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (9 * v.len()).div_ceil(10);
    v[rank - 1]
}
