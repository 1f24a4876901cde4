//! Stateful layer wrappers: parameters, gradients and the forward caches
//! their backward passes need.

use rand::Rng;

use super::activation::{leaky_relu, leaky_relu_backward, sigmoid, sigmoid_backward};
use super::batchnorm::{batchnorm_backward, batchnorm_eval, batchnorm_train, update_running_stats, BatchNormCache};
use super::conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward, ConvGeom};
use super::dense::{dense, dense_backward};
use super::{Real, Tensor};
use crate::{HoodError, Result};

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-bound..bound))).collect();
        Self::new(Tensor::from_vec(shape, data).expect("shape matches length"))
    }
}

fn missing_cache(layer: &str) -> HoodError {
    HoodError::InvalidConfig(format!("{layer} backward called without a train-mode forward"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub geom: ConvGeom,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(c_in: usize, c_out: usize, geom: ConvGeom, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((c_in * geom.kernel * geom.kernel) as f64).sqrt();
        Self {
            weight: Param::uniform(&[c_out, c_in, geom.kernel, geom.kernel], bound, rng),
            bias: Param::uniform(&[c_out], bound, rng),
            geom,
            input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub geom: ConvGeom,
    pub output_padding: usize,
    input: Option<Tensor<T>>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new(c_in: usize, c_out: usize, geom: ConvGeom, output_padding: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((c_out * geom.kernel * geom.kernel) as f64).sqrt();
        Self {
            weight: Param::uniform(&[c_in, c_out, geom.kernel, geom.kernel], bound, rng),
            bias: Param::uniform(&[c_out], bound, rng),
            geom,
            output_padding,
            input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(f_in: usize, f_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (f_in as f64).sqrt();
        Self {
            weight: Param::uniform(&[f_out, f_in], bound, rng),
            bias: Param::uniform(&[f_out], bound, rng),
            input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    cache: Option<BatchNormCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    ConvTranspose(ConvTranspose2d<T>),
    Dense(Dense<T>),
    BatchNorm(BatchNorm<T>),
    LeakyRelu {
        slope: f64,
        input: Option<Tensor<T>>,
    },
    Sigmoid {
        output: Option<Tensor<T>>,
    },
    /// `[N, ...] -> [N, F]`.
    Flatten {
        in_shape: Option<Vec<usize>>,
    },
    /// `[N, F] -> [N, dims...]`.
    Unflatten {
        dims: Vec<usize>,
    },
}

impl<T: Real> Layer<T> {
    pub fn leaky_relu(slope: f64) -> Self {
        Layer::LeakyRelu { slope, input: None }
    }

    pub fn sigmoid() -> Self {
        Layer::Sigmoid { output: None }
    }

    pub fn flatten() -> Self {
        Layer::Flatten { in_shape: None }
    }

    /// Train-mode forward; caches what [`Layer::backward`] needs and
    /// advances batch-norm running statistics.
    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => {
                let y = conv2d(&x, &l.weight.value, &l.bias.value, l.geom)?;
                l.input = Some(x);
                Ok(y)
            }
            Layer::ConvTranspose(l) => {
                let y = conv_transpose2d(&x, &l.weight.value, &l.bias.value, l.geom, l.output_padding)?;
                l.input = Some(x);
                Ok(y)
            }
            Layer::Dense(l) => {
                let y = dense(&x, &l.weight.value, &l.bias.value)?;
                l.input = Some(x);
                Ok(y)
            }
            Layer::BatchNorm(l) => {
                let (y, cache) = batchnorm_train(&x, &l.gamma.value, &l.beta.value)?;
                let count = x.len() / l.gamma.value.len();
                update_running_stats(&cache, count, &mut l.running_mean, &mut l.running_var);
                l.cache = Some(cache);
                Ok(y)
            }
            Layer::LeakyRelu { slope, input } => {
                let y = leaky_relu(&x, T::from_f64_lossy(*slope));
                *input = Some(x);
                Ok(y)
            }
            Layer::Sigmoid { output } => {
                let y = sigmoid(&x);
                *output = Some(y.clone());
                Ok(y)
            }
            Layer::Flatten { in_shape } => {
                *in_shape = Some(x.shape().to_vec());
                super::dense::flatten(x)
            }
            Layer::Unflatten { dims } => super::dense::unflatten(x, dims),
        }
    }

    /// Eval-mode forward; leaves the layer untouched.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => conv2d(x, &l.weight.value, &l.bias.value, l.geom),
            Layer::ConvTranspose(l) => conv_transpose2d(x, &l.weight.value, &l.bias.value, l.geom, l.output_padding),
            Layer::Dense(l) => dense(x, &l.weight.value, &l.bias.value),
            Layer::BatchNorm(l) => batchnorm_eval(x, &l.gamma.value, &l.beta.value, &l.running_mean, &l.running_var),
            Layer::LeakyRelu { slope, .. } => Ok(leaky_relu(x, T::from_f64_lossy(*slope))),
            Layer::Sigmoid { .. } => Ok(sigmoid(x)),
            Layer::Flatten { .. } => super::dense::flatten(x.clone()),
            Layer::Unflatten { dims } => super::dense::unflatten(x.clone(), dims),
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => {
                let x = l.input.take().ok_or_else(|| missing_cache("conv2d"))?;
                let (dx, dw, db) = conv2d_backward(&x, &l.weight.value, &dy, l.geom)?;
                l.weight.grad.add_assign(&dw)?;
                l.bias.grad.add_assign(&db)?;
                Ok(dx)
            }
            Layer::ConvTranspose(l) => {
                let x = l.input.take().ok_or_else(|| missing_cache("conv_transpose2d"))?;
                let (dx, dw, db) = conv_transpose2d_backward(&x, &l.weight.value, &dy, l.geom)?;
                l.weight.grad.add_assign(&dw)?;
                l.bias.grad.add_assign(&db)?;
                Ok(dx)
            }
            Layer::Dense(l) => {
                let x = l.input.take().ok_or_else(|| missing_cache("dense"))?;
                let (dx, dw, db) = dense_backward(&x, &l.weight.value, &dy)?;
                l.weight.grad.add_assign(&dw)?;
                l.bias.grad.add_assign(&db)?;
                Ok(dx)
            }
            Layer::BatchNorm(l) => {
                let cache = l.cache.take().ok_or_else(|| missing_cache("batchnorm"))?;
                let (dx, dg, db) = batchnorm_backward(&dy, &l.gamma.value, &cache)?;
                l.gamma.grad.add_assign(&dg)?;
                l.beta.grad.add_assign(&db)?;
                Ok(dx)
            }
            Layer::LeakyRelu { slope, input } => {
                let x = input.take().ok_or_else(|| missing_cache("leaky_relu"))?;
                leaky_relu_backward(&x, &dy, T::from_f64_lossy(*slope))
            }
            Layer::Sigmoid { output } => {
                let y = output.take().ok_or_else(|| missing_cache("sigmoid"))?;
                sigmoid_backward(&y, &dy)
            }
            Layer::Flatten { in_shape } => {
                let shape = in_shape.take().ok_or_else(|| missing_cache("flatten"))?;
                dy.reshape(&shape)
            }
            Layer::Unflatten { .. } => super::dense::flatten(dy),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Param<T>)> {
        match self {
            Layer::Conv(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::ConvTranspose(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::BatchNorm(l) => vec![("gamma", &l.gamma), ("beta", &l.beta)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::ConvTranspose(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    /// Every persistent tensor: parameters, then running statistics.
    pub fn state(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut out: Vec<_> = self.params().into_iter().map(|(n, p)| (n, &p.value)).collect();
        if let Layer::BatchNorm(l) = self {
            out.push(("running_mean", &l.running_mean));
            out.push(("running_var", &l.running_var));
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv(l) => vec![("weight", &mut l.weight.value), ("bias", &mut l.bias.value)],
            Layer::ConvTranspose(l) => vec![("weight", &mut l.weight.value), ("bias", &mut l.bias.value)],
            Layer::Dense(l) => vec![("weight", &mut l.weight.value), ("bias", &mut l.bias.value)],
            Layer::BatchNorm(l) => vec![
                ("gamma", &mut l.gamma.value),
                ("beta", &mut l.beta.value),
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            _ => Vec::new(),
        }
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, mut x: Tensor<T>) -> Result<Tensor<T>> {
        for layer in &mut self.layers {
            x = layer.forward(x)?;
        }
        Ok(x)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut layers = self.layers.iter();
        let Some(first) = layers.next() else { return Ok(x.clone()) };
        let mut y = first.infer(x)?;
        for layer in layers {
            y = layer.infer(&y)?;
        }
        Ok(y)
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Result<Tensor<T>> {
        for layer in self.layers.iter_mut().rev() {
            dy = layer.backward(dy)?;
        }
        Ok(dy)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params().into_iter().map(|(_, p)| p)).collect()
    }

    /// `("<layer index>.<tensor>", tensor)` for every persistent tensor.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.state().into_iter().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| l.state_mut().into_iter().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.params().iter().map(|p| p.grad.sum_sq()).sum()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::testutil::{check_grad, random_tensor};

    fn tiny_net(rng: &mut ChaCha8Rng) -> Sequential<f64> {
        Sequential::new(vec![
            Layer::Conv(Conv2d::new(1, 2, ConvGeom::new(3, 2, 1), rng)),
            Layer::BatchNorm(BatchNorm::new(2)),
            Layer::leaky_relu(0.01),
            Layer::flatten(),
            Layer::Dense(Dense::new(2 * 4 * 4, 3, rng)),
            Layer::Unflatten { dims: vec![3, 1, 1] },
            Layer::ConvTranspose(ConvTranspose2d::new(3, 1, ConvGeom::new(3, 2, 1), 1, rng)),
            Layer::sigmoid(),
        ])
    }

    #[test]
    fn sequential_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = tiny_net(&mut rng);
        let x = random_tensor(&[3, 1, 8, 8], 2);
        let proj = random_tensor(&[3, 1, 2, 2], 3);
        let loss = |t: &Tensor<f64>| {
            let mut n = net.clone();
            n.forward(t.clone()).unwrap().data().iter().zip(proj.data()).map(|(a, p)| a * p).sum::<f64>()
        };
        let mut n = net.clone();
        n.forward(x.clone()).unwrap();
        let dx = n.backward(proj.clone()).unwrap();
        check_grad(loss, &x, &dx, 1e-4);
        assert!(n.grad_norm_sq() > 0.0);
    }

    #[test]
    fn infer_does_not_mutate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = tiny_net(&mut rng);
        let before = net.clone();
        let x = random_tensor(&[1, 1, 8, 8], 6);
        let a = net.infer(&x).unwrap();
        assert_eq!(a, net.infer(&x).unwrap());
        assert_eq!(net, before);
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = tiny_net(&mut rng);
        assert!(net.backward(Tensor::zeros(&[1, 1, 2, 2])).is_err());
    }

    #[test]
    fn named_state_lists_running_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = tiny_net(&mut rng);
        let names: Vec<String> = net.named_state().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"1.running_var".to_string()));
        assert_eq!(names.len(), 2 + 4 + 2 + 2);
    }
}
