//! Batch normalization over `[N, C]` (1-D) or `[N, C, H, W]` (2-D) inputs.
//!
//! Statistics are per channel over every batch item and spatial position.

use super::{Real, Tensor};
use crate::{HoodError, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Intermediate values a train-mode forward hands to its backward.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

/// `(N, C, spatial)` view of a 2-D or 4-D tensor.
fn layout<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [n, c] => Ok((*n, *c, 1)),
        [n, c, h, w] => Ok((*n, *c, h * w)),
        s => Err(HoodError::Shape(format!("batchnorm expects rank 2 or 4, got {s:?}"))),
    }
}

fn check_params<T: Real>(c: usize, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    gamma.expect_shape(&[c])?;
    beta.expect_shape(&[c])
}

/// Normalizes with batch statistics, then applies `gamma`, `beta`.
pub fn batchnorm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (n, c, s) = layout(x)?;
    check_params(c, gamma, beta)?;
    if n < 2 {
        return Err(HoodError::InsufficientData(format!("batchnorm train mode needs batch >= 2, got {n}")));
    }
    let m = T::from_usize(n * s).unwrap();
    let eps = T::from_f64_lossy(BN_EPS);
    let xd = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            mean[ch] += xd[(i * c + ch) * s..][..s].iter().copied().sum::<T>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for i in 0..n {
        for ch in 0..c {
            let mu = mean[ch];
            var[ch] += xd[(i * c + ch) * s..][..s].iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut normalized = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let (g, b) = (gamma.data(), beta.data());
    for (k, ((xs, ns), ys)) in
        xd.chunks(s).zip(normalized.data_mut().chunks_mut(s)).zip(y.data_mut().chunks_mut(s)).enumerate()
    {
        let ch = k % c;
        let (mu, is) = (mean[ch], inv_std[ch]);
        for ((&xv, nv), yv) in xs.iter().zip(ns.iter_mut()).zip(ys.iter_mut()) {
            let xh = (xv - mu) * is;
            *nv = xh;
            *yv = g[ch] * xh + b[ch];
        }
    }
    Ok((y, BatchNormCache { normalized, inv_std, mean, var }))
}

/// Normalizes with fixed running statistics; pure.
pub fn batchnorm_eval<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, c, s) = layout(x)?;
    check_params(c, gamma, beta)?;
    running_mean.expect_shape(&[c])?;
    running_var.expect_shape(&[c])?;
    let eps = T::from_f64_lossy(BN_EPS);
    let scale: Vec<T> = (0..c).map(|ch| gamma.data()[ch] / (running_var.data()[ch] + eps).sqrt()).collect();
    let shift: Vec<T> = (0..c).map(|ch| beta.data()[ch] - running_mean.data()[ch] * scale[ch]).collect();
    let mut y = x.clone();
    for i in 0..n {
        for ch in 0..c {
            y.data_mut()[(i * c + ch) * s..][..s].iter_mut().for_each(|v| *v = *v * scale[ch] + shift[ch]);
        }
    }
    Ok(y)
}

/// Blends batch statistics into the running estimates; the variance uses
/// the unbiased batch estimate.
pub fn update_running_stats<T: Real>(
    cache: &BatchNormCache<T>,
    count: usize,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
) {
    let mom = T::from_f64_lossy(BN_MOMENTUM);
    let bessel = T::from_usize(count).unwrap() / T::from_usize(count.saturating_sub(1).max(1)).unwrap();
    for (r, &m) in running_mean.data_mut().iter_mut().zip(&cache.mean) {
        *r = (T::one() - mom) * *r + mom * m;
    }
    for (r, &v) in running_var.data_mut().iter_mut().zip(&cache.var) {
        *r = (T::one() - mom) * *r + mom * v * bessel;
    }
}

/// Gradients of [`batchnorm_train`] with respect to `(x, gamma, beta)`.
pub fn batchnorm_backward<T: Real>(
    dy: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    dy.expect_shape(cache.normalized.shape())?;
    let (n, c, s) = layout(dy)?;
    let m = T::from_usize(n * s).unwrap();
    let (dyd, xh) = (dy.data(), cache.normalized.data());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for (k, (gs, xs)) in dyd.chunks(s).zip(xh.chunks(s)).enumerate() {
        let ch = k % c;
        dbeta.data_mut()[ch] += gs.iter().copied().sum::<T>();
        dgamma.data_mut()[ch] += gs.iter().zip(xs).map(|(&a, &b)| a * b).sum::<T>();
    }
    let mut dx = Tensor::zeros(dy.shape());
    for (k, ((gs, xs), ds)) in dyd.chunks(s).zip(xh.chunks(s)).zip(dx.data_mut().chunks_mut(s)).enumerate() {
        let ch = k % c;
        let scale = gamma.data()[ch] * cache.inv_std[ch] / m;
        let (sb, sg) = (dbeta.data()[ch], dgamma.data()[ch]);
        for ((d, &gv), &xv) in ds.iter_mut().zip(gs).zip(xs) {
            *d = scale * (m * gv - sb - xv * sg);
        }
    }
    Ok((dx, dgamma, dbeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{check_grad, random_tensor};

    fn channel_stats(y: &Tensor<f64>, ch: usize) -> (f64, f64) {
        let (n, c, s) = layout(y).unwrap();
        let vals: Vec<f64> = (0..n).flat_map(|i| y.data()[(i * c + ch) * s..][..s].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var)
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let x = random_tensor(&[6, 3, 4, 4], 9).map(|v| 5.0 * v + 2.0);
        let (y, _) = batchnorm_train(&x, &Tensor::full(&[3], 1.0), &Tensor::zeros(&[3])).unwrap();
        for ch in 0..3 {
            let (m, v) = channel_stats(&y, ch);
            assert!(m.abs() < 1e-6 && (v - 1.0).abs() < 1e-4, "mean {m}, var {v}");
        }
        let (y, _) = batchnorm_train(&x, &Tensor::full(&[3], 2.0), &Tensor::full(&[3], 3.0)).unwrap();
        for ch in 0..3 {
            let (m, v) = channel_stats(&y, ch);
            assert!((m - 3.0).abs() < 1e-6 && (v.sqrt() - 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_of_one_rejected_in_train_mode() {
        let x = random_tensor(&[1, 4], 1);
        let err = batchnorm_train(&x, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4])).unwrap_err();
        assert!(matches!(err, HoodError::InsufficientData(_)));
        // Eval mode is fine with one item.
        batchnorm_eval(
            &x,
            &Tensor::full(&[4], 1.0),
            &Tensor::zeros(&[4]),
            &Tensor::zeros(&[4]),
            &Tensor::full(&[4], 1.0),
        )
        .unwrap();
    }

    #[test]
    fn eval_uses_running_stats_and_is_pure() {
        let x = random_tensor(&[3, 2], 4);
        let rm = Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap();
        let rv = Tensor::from_vec(&[2], vec![4.0, 0.25]).unwrap();
        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        let y1 = batchnorm_eval(&x, &g, &b, &rm, &rv).unwrap();
        let y2 = batchnorm_eval(&x, &g, &b, &rm, &rv).unwrap();
        assert_eq!(y1, y2);
        let want = (x.data()[0] - 0.5) / (4.0 + BN_EPS).sqrt();
        assert!((y1.data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn running_stats_move_toward_batch() {
        let x = random_tensor(&[4, 2], 2);
        let (_, cache) = batchnorm_train(&x, &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2])).unwrap();
        let mut rm = Tensor::zeros(&[2]);
        let mut rv = Tensor::full(&[2], 1.0);
        update_running_stats(&cache, 4, &mut rm, &mut rv);
        assert!((rm.data()[0] - 0.1 * cache.mean[0]).abs() < 1e-12);
        assert!((rv.data()[1] - (0.9 + 0.1 * cache.var[1] * 4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, shape) in [(0u64, vec![3usize, 2, 3, 3]), (1, vec![5, 4]), (2, vec![2, 3, 2, 2])] {
            let x = random_tensor(&shape, seed);
            let c = shape[1];
            let gamma = random_tensor(&[c], seed + 10).map(|v| v + 1.5);
            let beta = random_tensor(&[c], seed + 20);
            let proj = random_tensor(&shape, seed + 30);
            let loss = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                let (y, _) = batchnorm_train(x, g, b).unwrap();
                y.data().iter().zip(proj.data()).map(|(a, p)| a * p).sum()
            };
            let (_, cache) = batchnorm_train(&x, &gamma, &beta).unwrap();
            let (dx, dg, db) = batchnorm_backward(&proj, &gamma, &cache).unwrap();
            check_grad(|t| loss(t, &gamma, &beta), &x, &dx, 1e-4);
            check_grad(|t| loss(&x, t, &beta), &gamma, &dg, 1e-4);
            check_grad(|t| loss(&x, &gamma, t), &beta, &db, 1e-4);
        }
    }
}
