use super::{Real, Tensor};
use crate::{HoodError, Result};

/// `x: [N, in]`, `w: [out, in]`, `b: [out]` -> `x w^T + b`.
pub fn dense<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, fin) = x.dims2()?;
    let (fout, win) = w.dims2()?;
    if win != fin {
        return Err(HoodError::Shape(format!("dense input has {fin} features, weight expects {win}")));
    }
    b.expect_shape(&[fout])?;
    let mut y = Tensor::zeros(&[n, fout]);
    T::gemm(n, fin, fout, T::one(), x.data(), fin, 1, w.data(), 1, fin, T::zero(), y.data_mut(), fout);
    for row in y.data_mut().chunks_mut(fout) {
        row.iter_mut().zip(b.data()).for_each(|(v, &bb)| *v += bb);
    }
    Ok(y)
}

/// Gradients of [`dense`] with respect to `(x, w, b)`.
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, fin) = x.dims2()?;
    let (fout, _) = w.dims2()?;
    dy.expect_shape(&[n, fout])?;
    let mut dx = Tensor::zeros(&[n, fin]);
    let mut dw = Tensor::zeros(&[fout, fin]);
    T::gemm(n, fout, fin, T::one(), dy.data(), fout, 1, w.data(), fin, 1, T::zero(), dx.data_mut(), fin);
    T::gemm(fout, n, fin, T::one(), dy.data(), 1, fout, x.data(), fin, 1, T::zero(), dw.data_mut(), fin);
    let mut db = Tensor::zeros(&[fout]);
    for row in dy.data().chunks(fout) {
        db.data_mut().iter_mut().zip(row).for_each(|(d, &g)| *d += g);
    }
    Ok((dx, dw, db))
}

/// `[N, ...] -> [N, prod(...)]`.
pub fn flatten<T: Real>(x: Tensor<T>) -> Result<Tensor<T>> {
    let n = x.batch();
    let rest = x.len().checked_div(n).unwrap_or(0);
    x.reshape(&[n, rest])
}

/// `[N, F] -> [N, dims...]`.
pub fn unflatten<T: Real>(x: Tensor<T>, dims: &[usize]) -> Result<Tensor<T>> {
    let mut shape = vec![x.batch()];
    shape.extend_from_slice(dims);
    x.reshape(&shape)
}
