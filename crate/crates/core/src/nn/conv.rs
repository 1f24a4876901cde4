//! 2-D convolution and transposed convolution via im2col + GEMM.

use super::{Real, Tensor};
use crate::{HoodError, Result};

/// Square-kernel geometry shared by both convolution flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self { kernel, stride, pad }
    }

    /// `floor((len + 2 pad - k) / stride) + 1`.
    pub fn conv_out(&self, len: usize) -> Result<usize> {
        if self.stride == 0 || self.kernel == 0 {
            return Err(HoodError::Shape("kernel and stride must be >= 1".into()));
        }
        if len + 2 * self.pad < self.kernel {
            return Err(HoodError::Shape(format!(
                "input extent {len} with padding {} is smaller than kernel {}",
                self.pad, self.kernel
            )));
        }
        Ok((len + 2 * self.pad - self.kernel) / self.stride + 1)
    }

    /// `(len - 1) stride - 2 pad + k + output_padding`.
    pub fn transpose_out(&self, len: usize, output_padding: usize) -> Result<usize> {
        if self.stride == 0 || self.kernel == 0 || len == 0 {
            return Err(HoodError::Shape("kernel, stride and input extent must be >= 1".into()));
        }
        if output_padding >= self.stride {
            return Err(HoodError::Shape(format!(
                "output_padding {output_padding} must be smaller than stride {}",
                self.stride
            )));
        }
        let full = (len - 1) * self.stride + self.kernel + output_padding;
        if full <= 2 * self.pad {
            return Err(HoodError::Shape(format!("padding {} consumes the whole output", self.pad)));
        }
        Ok(full - 2 * self.pad)
    }
}

/// Output positions `lo..hi` whose tap `offset` lands inside `0..in_len`.
fn valid_span(offset: usize, g: ConvGeom, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(offset).div_ceil(g.stride);
    if in_len + g.pad <= offset {
        return (0, 0);
    }
    let hi = ((in_len - 1 + g.pad - offset) / g.stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Unfolds `src` (`[channels, in_h, in_w]`) into `dst`
/// (`[channels * k * k, out_h * out_w]`).
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    src: &[T],
    channels: usize,
    in_h: usize,
    in_w: usize,
    g: ConvGeom,
    out_h: usize,
    out_w: usize,
    dst: &mut [T],
) {
    let k = g.kernel;
    let cols = out_h * out_w;
    for c in 0..channels {
        let plane = &src[c * in_h * in_w..(c + 1) * in_h * in_w];
        for ki in 0..k {
            let (y_lo, y_hi) = valid_span(ki, g, in_h, out_h);
            for kj in 0..k {
                let (x_lo, x_hi) = valid_span(kj, g, in_w, out_w);
                let row = &mut dst[((c * k + ki) * k + kj) * cols..][..cols];
                for oy in 0..out_h {
                    let out_row = &mut row[oy * out_w..(oy + 1) * out_w];
                    if oy < y_lo || oy >= y_hi || x_lo >= x_hi {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let iy = oy * g.stride + ki - g.pad;
                    let src_row = &plane[iy * in_w..(iy + 1) * in_w];
                    out_row[..x_lo].fill(T::zero());
                    out_row[x_hi..].fill(T::zero());
                    let ix0 = x_lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        out_row[x_lo..x_hi].copy_from_slice(&src_row[ix0..ix0 + x_hi - x_lo]);
                    } else {
                        for (v, &x) in out_row[x_lo..x_hi].iter_mut().zip(src_row[ix0..].iter().step_by(g.stride)) {
                            *v = x;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds `cols` back onto `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Real>(
    cols: &[T],
    channels: usize,
    in_h: usize,
    in_w: usize,
    g: ConvGeom,
    out_h: usize,
    out_w: usize,
    dst: &mut [T],
) {
    let k = g.kernel;
    let n_cols = out_h * out_w;
    for c in 0..channels {
        let plane = &mut dst[c * in_h * in_w..(c + 1) * in_h * in_w];
        for ki in 0..k {
            let (y_lo, y_hi) = valid_span(ki, g, in_h, out_h);
            for kj in 0..k {
                let (x_lo, x_hi) = valid_span(kj, g, in_w, out_w);
                if x_lo >= x_hi {
                    continue;
                }
                let row = &cols[((c * k + ki) * k + kj) * n_cols..][..n_cols];
                for oy in y_lo..y_hi {
                    let iy = oy * g.stride + ki - g.pad;
                    let ix0 = x_lo * g.stride + kj - g.pad;
                    let dst_row = &mut plane[iy * in_w..(iy + 1) * in_w];
                    let src = &row[oy * out_w + x_lo..oy * out_w + x_hi];
                    if g.stride == 1 {
                        dst_row[ix0..ix0 + src.len()].iter_mut().zip(src).for_each(|(d, &v)| *d += v);
                    } else {
                        dst_row[ix0..].iter_mut().step_by(g.stride).zip(src).for_each(|(d, &v)| *d += v);
                    }
                }
            }
        }
    }
}

/// Few-filter stride-1 convolution of one sample by shifted row updates;
/// GEMM degenerates to a slow matrix-vector product there.
#[allow(clippy::too_many_arguments)]
fn direct_conv<T: Real>(x: &[T], w: &[T], c: usize, h: usize, wd: usize, g: ConvGeom, o: usize, out: &mut [T]) {
    let k = g.kernel;
    let (ho, wo) = (h + 2 * g.pad + 1 - k, wd + 2 * g.pad + 1 - k);
    for oc in 0..o {
        let dst = &mut out[oc * ho * wo..(oc + 1) * ho * wo];
        for ci in 0..c {
            let plane = &x[ci * h * wd..(ci + 1) * h * wd];
            for ki in 0..k {
                let (y_lo, y_hi) = valid_span(ki, g, h, ho);
                for kj in 0..k {
                    let (x_lo, x_hi) = valid_span(kj, g, wd, wo);
                    let wv = w[((oc * c + ci) * k + ki) * k + kj];
                    for oy in y_lo..y_hi {
                        let iy = oy + ki - g.pad;
                        let ix0 = x_lo + kj - g.pad;
                        let src = &plane[iy * wd + ix0..iy * wd + ix0 + x_hi - x_lo];
                        dst[oy * wo + x_lo..oy * wo + x_hi].iter_mut().zip(src).for_each(|(d, &v)| *d += wv * v);
                    }
                }
            }
        }
    }
}

/// Input and weight gradients of [`direct_conv`] for one sample.
#[allow(clippy::too_many_arguments)]
fn direct_conv_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    c: usize,
    h: usize,
    wd: usize,
    g: ConvGeom,
    o: usize,
    dx: &mut [T],
    dw: &mut [T],
) {
    let k = g.kernel;
    let (ho, wo) = (h + 2 * g.pad + 1 - k, wd + 2 * g.pad + 1 - k);
    for oc in 0..o {
        let grad = &dy[oc * ho * wo..(oc + 1) * ho * wo];
        for ci in 0..c {
            let plane = &x[ci * h * wd..(ci + 1) * h * wd];
            let dplane = &mut dx[ci * h * wd..(ci + 1) * h * wd];
            for ki in 0..k {
                let (y_lo, y_hi) = valid_span(ki, g, h, ho);
                for kj in 0..k {
                    let (x_lo, x_hi) = valid_span(kj, g, wd, wo);
                    let wi = ((oc * c + ci) * k + ki) * k + kj;
                    let wv = w[wi];
                    let mut acc = T::zero();
                    for oy in y_lo..y_hi {
                        let iy = oy + ki - g.pad;
                        let ix0 = x_lo + kj - g.pad;
                        let span = x_hi - x_lo;
                        let gr = &grad[oy * wo + x_lo..oy * wo + x_hi];
                        acc +=
                            plane[iy * wd + ix0..iy * wd + ix0 + span].iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                        dplane[iy * wd + ix0..iy * wd + ix0 + span].iter_mut().zip(gr).for_each(|(d, &b)| *d += wv * b);
                    }
                    dw[wi] += acc;
                }
            }
        }
    }
}

fn use_direct(o: usize, g: ConvGeom) -> bool {
    o <= 2 && g.stride == 1
}

fn kernel_dims<T: Real>(w: &Tensor<T>, g: ConvGeom) -> Result<(usize, usize)> {
    let (a, b, kh, kw) = w.dims4()?;
    if kh != g.kernel || kw != g.kernel {
        return Err(HoodError::Shape(format!("weight {:?} does not match kernel size {}", w.shape(), g.kernel)));
    }
    Ok((a, b))
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<T: Real>(dy: &Tensor<T>, channels: usize) -> Tensor<T> {
    let plane = dy.len() / (dy.batch() * channels).max(1);
    let mut db = Tensor::zeros(&[channels]);
    for (i, chunk) in dy.data().chunks(plane).enumerate() {
        db.data_mut()[i % channels] += chunk.iter().copied().sum::<T>();
    }
    db
}

/// `x: [N, C, H, W]`, `w: [O, C, k, k]`, `b: [O]` -> `[N, O, Ho, Wo]`.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, g: ConvGeom) -> Result<Tensor<T>> {
    let (n, c, h, wd) = x.dims4()?;
    let (o, ci) = kernel_dims(w, g)?;
    if ci != c {
        return Err(HoodError::Shape(format!("input has {c} channels, weight expects {ci}")));
    }
    b.expect_shape(&[o])?;
    let (ho, wo) = (g.conv_out(h)?, g.conv_out(wd)?);
    let ckk = c * g.kernel * g.kernel;
    let hw = ho * wo;
    let mut out = Tensor::zeros(&[n, o, ho, wo]);
    if use_direct(o, g) {
        for s in 0..n {
            let dst = &mut out.data_mut()[s * o * hw..][..o * hw];
            direct_conv(&x.data()[s * c * h * wd..][..c * h * wd], w.data(), c, h, wd, g, o, dst);
            add_bias(dst, b.data(), hw);
        }
        return Ok(out);
    }
    let mut cols = vec![T::zero(); ckk * hw];
    for s in 0..n {
        im2col(&x.data()[s * c * h * wd..][..c * h * wd], c, h, wd, g, ho, wo, &mut cols);
        let dst = &mut out.data_mut()[s * o * hw..][..o * hw];
        T::gemm(o, ckk, hw, T::one(), w.data(), ckk, 1, &cols, hw, 1, T::zero(), dst, hw);
        add_bias(dst, b.data(), hw);
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to `(x, w, b)`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    g: ConvGeom,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, wd) = x.dims4()?;
    let (o, _) = kernel_dims(w, g)?;
    let (ho, wo) = (g.conv_out(h)?, g.conv_out(wd)?);
    dy.expect_shape(&[n, o, ho, wo])?;
    let ckk = c * g.kernel * g.kernel;
    let hw = ho * wo;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    if use_direct(o, g) {
        for s in 0..n {
            let (xs, dys) = (&x.data()[s * c * h * wd..][..c * h * wd], &dy.data()[s * o * hw..][..o * hw]);
            let dxs = &mut dx.data_mut()[s * c * h * wd..][..c * h * wd];
            direct_conv_backward(xs, w.data(), dys, c, h, wd, g, o, dxs, dw.data_mut());
        }
        return Ok((dx, dw, bias_grad(dy, o)));
    }
    let mut cols = vec![T::zero(); ckk * hw];
    let mut dcols = vec![T::zero(); ckk * hw];
    for s in 0..n {
        let dy_s = &dy.data()[s * o * hw..][..o * hw];
        im2col(&x.data()[s * c * h * wd..][..c * h * wd], c, h, wd, g, ho, wo, &mut cols);
        T::gemm(o, hw, ckk, T::one(), dy_s, hw, 1, &cols, 1, hw, T::one(), dw.data_mut(), ckk);
        T::gemm(ckk, o, hw, T::one(), w.data(), 1, ckk, dy_s, hw, 1, T::zero(), &mut dcols, hw);
        col2im(&dcols, c, h, wd, g, ho, wo, &mut dx.data_mut()[s * c * h * wd..][..c * h * wd]);
    }
    Ok((dx, dw, bias_grad(dy, o)))
}

/// `x: [N, Ci, H, W]`, `w: [Ci, Co, k, k]`, `b: [Co]` -> `[N, Co, Ho, Wo]`
/// with `Ho = (H - 1) stride - 2 pad + k + output_padding`.
pub fn conv_transpose2d<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    g: ConvGeom,
    output_padding: usize,
) -> Result<Tensor<T>> {
    let (n, ci, h, wd) = x.dims4()?;
    let (wi, co) = kernel_dims(w, g)?;
    if wi != ci {
        return Err(HoodError::Shape(format!("input has {ci} channels, weight expects {wi}")));
    }
    b.expect_shape(&[co])?;
    let (ho, wo) = (g.transpose_out(h, output_padding)?, g.transpose_out(wd, output_padding)?);
    let ckk = co * g.kernel * g.kernel;
    let hw = h * wd;
    let mut out = Tensor::zeros(&[n, co, ho, wo]);
    let mut cols = vec![T::zero(); ckk * hw];
    for s in 0..n {
        let x_s = &x.data()[s * ci * hw..][..ci * hw];
        T::gemm(ckk, ci, hw, T::one(), w.data(), 1, ckk, x_s, hw, 1, T::zero(), &mut cols, hw);
        let dst = &mut out.data_mut()[s * co * ho * wo..][..co * ho * wo];
        col2im(&cols, co, ho, wo, g, h, wd, dst);
        add_bias(dst, b.data(), ho * wo);
    }
    Ok(out)
}

/// Gradients of [`conv_transpose2d`] with respect to `(x, w, b)`.
pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    g: ConvGeom,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, ci, h, wd) = x.dims4()?;
    let (_, co) = kernel_dims(w, g)?;
    let (dn, dc, ho, wo) = dy.dims4()?;
    if dn != n || dc != co || g.conv_out(ho)? != h || g.conv_out(wo)? != wd {
        return Err(HoodError::Shape(format!(
            "gradient {:?} does not match transposed convolution of {:?}",
            dy.shape(),
            x.shape()
        )));
    }
    let ckk = co * g.kernel * g.kernel;
    let hw = h * wd;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut gcols = vec![T::zero(); ckk * hw];
    for s in 0..n {
        im2col(&dy.data()[s * co * ho * wo..][..co * ho * wo], co, ho, wo, g, h, wd, &mut gcols);
        let x_s = &x.data()[s * ci * hw..][..ci * hw];
        T::gemm(
            ci,
            ckk,
            hw,
            T::one(),
            w.data(),
            ckk,
            1,
            &gcols,
            hw,
            1,
            T::zero(),
            &mut dx.data_mut()[s * ci * hw..][..ci * hw],
            hw,
        );
        T::gemm(ci, hw, ckk, T::one(), x_s, hw, 1, &gcols, 1, hw, T::one(), dw.data_mut(), ckk);
    }
    Ok((dx, dw, bias_grad(dy, co)))
}
