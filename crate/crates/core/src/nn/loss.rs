use super::{Real, Tensor};
use crate::{HoodError, Result};

/// Mean of squared element differences over the whole batch.
pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    b.expect_shape(a.shape())?;
    if a.is_empty() {
        return Err(HoodError::Shape("mse of empty tensors".into()));
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).to_f64_lossy().powi(2)).sum();
    Ok(sum / a.len() as f64)
}

/// `d mse / d a = 2 (a - b) / n`.
pub fn mse_backward<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    b.expect_shape(a.shape())?;
    let k = T::from_f64_lossy(2.0 / a.len() as f64);
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| k * (x - y)).collect();
    Tensor::from_vec(a.shape(), data)
}

/// Per-item MSE of `[N, ...]` tensors.
pub fn mse_per_item<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<f64>> {
    b.expect_shape(a.shape())?;
    let n = a.batch();
    if n == 0 {
        return Ok(Vec::new());
    }
    let row = a.len() / n;
    Ok(a.data()
        .chunks(row)
        .zip(b.data().chunks(row))
        .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| (p - q).to_f64_lossy().powi(2)).sum::<f64>() / row as f64)
        .collect())
}
