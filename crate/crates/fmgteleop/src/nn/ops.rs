//! Forward and backward math for the layer set.
//!
//! Layouts are row-major with the batch dimension first:
//! dense `[N,I] x [O,I] -> [N,O]`, conv2d `[N,C,H,W]`, causal conv1d
//! `[N,C,T]`. Convolutions are cross-correlations (no kernel flip).
//! Every backward here is exercised against central finite differences by
//! the gradient checker, and the forwards against direct-summation oracles
//! in the test suite.

use super::tensor::{Scalar, Tensor};
use super::NnError;

#[inline]
fn axpy<T: Scalar>(y: &mut [T], x: &[T], a: T) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators combined in a fixed
/// order: pipelines well and stays bitwise deterministic.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (av, bv) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for lane in 0..8 {
            acc[lane] += av[lane] * bv[lane];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) + tail
}

/// `out += a * b` for row-major `a [m,k]`, `b [k,n]`.
pub fn mm_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row_out = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(row_out, &b[p * n..(p + 1) * n], a[i * k + p]);
        }
    }
}

/// `out += a * b^T` for row-major `a [m,k]`, `b [n,k]`.
pub fn mm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row_a = &a[i * k..(i + 1) * k];
        for j in 0..n {
            out[i * n + j] += dot(row_a, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `out += a^T * b` for row-major `a [k,m]`, `b [k,n]`.
pub fn mm_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let row_b = &b[p * n..(p + 1) * n];
        for i in 0..m {
            axpy(&mut out[i * n..(i + 1) * n], row_b, a[p * m + i]);
        }
    }
}

fn dims2(t: &Tensor<impl Scalar>, what: &str) -> Result<(usize, usize), NnError> {
    match t.shape() {
        &[a, b] => Ok((a, b)),
        s => Err(NnError::Shape(format!("{what}: expected rank 2, got {s:?}"))),
    }
}

fn dims3(t: &Tensor<impl Scalar>, what: &str) -> Result<(usize, usize, usize), NnError> {
    match t.shape() {
        &[a, b, c] => Ok((a, b, c)),
        s => Err(NnError::Shape(format!("{what}: expected rank 3, got {s:?}"))),
    }
}

fn dims4(t: &Tensor<impl Scalar>, what: &str) -> Result<(usize, usize, usize, usize), NnError> {
    match t.shape() {
        &[a, b, c, d] => Ok((a, b, c, d)),
        s => Err(NnError::Shape(format!("{what}: expected rank 4, got {s:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// `y[n,o] = sum_i w[o,i] x[n,i] (+ b[o])`.
pub fn dense_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>, NnError> {
    let (n, i) = dims2(x, "dense input")?;
    let (o, wi) = dims2(w, "dense weight")?;
    if wi != i {
        return Err(NnError::Shape(format!(
            "dense: input width {i} vs weight fan-in {wi}"
        )));
    }
    if let Some(b) = b {
        if b.shape() != [o] {
            return Err(NnError::Shape(format!(
                "dense: bias shape {:?}, expected [{o}]",
                b.shape()
            )));
        }
    }
    let mut y = Tensor::zeros(&[n, o]);
    if let Some(b) = b {
        for row in 0..n {
            y.data_mut()[row * o..(row + 1) * o].copy_from_slice(b.data());
        }
    }
    // y += x * W^T computed through a transposed weight copy, so the inner
    // loop is a contiguous axpy over the output row.
    let mut wt = vec![T::zero(); i * o];
    for r in 0..o {
        for c in 0..i {
            wt[c * o + r] = w.data()[r * i + c];
        }
    }
    mm_nn(x.data(), &wt, n, i, o, y.data_mut());
    Ok(y)
}

/// Returns `(dx, dw, db)` given upstream `dy [N,O]`.
pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = w.shape()[0];
    let mut dx = Tensor::zeros(&[n, i]);
    let mut dw = Tensor::zeros(&[o, i]);
    let mut db = Tensor::zeros(&[o]);
    mm_nn(dy.data(), w.data(), n, o, i, dx.data_mut());
    mm_tn(dy.data(), x.data(), o, n, i, dw.data_mut());
    for row in 0..n {
        axpy(db.data_mut(), &dy.data()[row * o..(row + 1) * o], T::one());
    }
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// 2D convolution (cross-correlation, zero padding)
// ---------------------------------------------------------------------------

pub fn conv2d_out_extent(
    input: usize,
    pad: usize,
    kernel: usize,
    stride: usize,
) -> Result<usize, NnError> {
    if kernel > input + 2 * pad {
        return Err(NnError::Shape(format!(
            "kernel {kernel} exceeds padded extent {}",
            input + 2 * pad
        )));
    }
    let span = input + 2 * pad - kernel;
    if span % stride != 0 {
        return Err(NnError::Shape(format!(
            "non-integral output extent: ({input}+2*{pad}-{kernel}) not divisible by stride {stride}"
        )));
    }
    Ok(span / stride + 1)
}

/// Images per im2col tile, sized so the unrolled buffer stays cache-friendly.
fn conv2d_tile(oh: usize, ow: usize) -> usize {
    (2048 / (oh * ow)).max(1)
}

/// Unrolls `imgs` of `x` into `col[(ci*kh+dh)*kw+dw, (t*oh+r)*ow+c]`,
/// overwriting exactly the first `ckk * len(imgs)*oh*ow` entries.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    xs: &[T],
    imgs: std::ops::Range<usize>,
    ci: usize,
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    pad: (usize, usize),
    stride: (usize, usize),
    (oh, ow): (usize, usize),
    col: &mut [T],
) {
    let tile = imgs.len();
    let p = tile * oh * ow;
    for c in 0..ci {
        for dh in 0..kh {
            for dw in 0..kw {
                let row = &mut col[((c * kh + dh) * kw + dw) * p..((c * kh + dh) * kw + dw + 1) * p];
                for (t, img) in imgs.clone().enumerate() {
                    let x_base = (img * ci + c) * h * w;
                    for r in 0..oh {
                        let seg = &mut row[(t * oh + r) * ow..(t * oh + r + 1) * ow];
                        let ih = (r * stride.0 + dh) as isize - pad.0 as isize;
                        if ih < 0 || ih as usize >= h {
                            seg.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let xrow = x_base + ih as usize * w;
                        if stride.1 == 1 {
                            // valid output columns: 0 <= c + dw - pw < w
                            let lo = pad.1.saturating_sub(dw);
                            let hi = (w + pad.1 - dw).min(ow);
                            seg[..lo.min(ow)].iter_mut().for_each(|v| *v = T::zero());
                            if lo < hi {
                                let iw0 = lo + dw - pad.1;
                                seg[lo..hi].copy_from_slice(&xs[xrow + iw0..xrow + iw0 + hi - lo]);
                            }
                            seg[hi.max(lo.min(ow))..].iter_mut().for_each(|v| *v = T::zero());
                        } else {
                            for (ccol, v) in seg.iter_mut().enumerate() {
                                let iw = (ccol * stride.1 + dw) as isize - pad.1 as isize;
                                *v = if iw >= 0 && (iw as usize) < w {
                                    xs[xrow + iw as usize]
                                } else {
                                    T::zero()
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add inverse of [`im2col`].
#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Scalar>(
    col: &[T],
    imgs: std::ops::Range<usize>,
    ci: usize,
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    pad: (usize, usize),
    stride: (usize, usize),
    (oh, ow): (usize, usize),
    dx: &mut [T],
) {
    let tile = imgs.len();
    let p = tile * oh * ow;
    for c in 0..ci {
        for dh in 0..kh {
            for dw in 0..kw {
                let row = &col[((c * kh + dh) * kw + dw) * p..((c * kh + dh) * kw + dw + 1) * p];
                for (t, img) in imgs.clone().enumerate() {
                    let x_base = (img * ci + c) * h * w;
                    for r in 0..oh {
                        let ih = (r * stride.0 + dh) as isize - pad.0 as isize;
                        if ih < 0 || ih as usize >= h {
                            continue;
                        }
                        let seg = &row[(t * oh + r) * ow..(t * oh + r + 1) * ow];
                        let xrow = x_base + ih as usize * w;
                        if stride.1 == 1 {
                            let lo = pad.1.saturating_sub(dw);
                            let hi = (w + pad.1 - dw).min(ow);
                            if lo < hi {
                                let iw0 = lo + dw - pad.1;
                                axpy(&mut dx[xrow + iw0..xrow + iw0 + hi - lo], &seg[lo..hi], T::one());
                            }
                        } else {
                            for (ccol, &v) in seg.iter().enumerate() {
                                let iw = (ccol * stride.1 + dw) as isize - pad.1 as isize;
                                if iw >= 0 && (iw as usize) < w {
                                    dx[xrow + iw as usize] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `y[n,co,oh,ow] = b[co] + sum_{ci,kh,kw} k[co,ci,kh,kw] x[n,ci,oh*sh+kh-ph,ow*sw+kw-pw]`,
/// computed tile-wise as `K x im2col(x)`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    b: &Tensor<T>,
    pad: (usize, usize),
    stride: (usize, usize),
) -> Result<Tensor<T>, NnError> {
    let (n, ci, h, w) = dims4(x, "conv2d input")?;
    let (co, kci, kh, kw) = dims4(k, "conv2d kernel")?;
    if kci != ci {
        return Err(NnError::Shape(format!(
            "conv2d: input channels {ci} vs kernel channels {kci}"
        )));
    }
    if b.shape() != [co] {
        return Err(NnError::Shape(format!(
            "conv2d: bias shape {:?}, expected [{co}]",
            b.shape()
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(NnError::Shape("conv2d: zero stride".into()));
    }
    let oh = conv2d_out_extent(h, pad.0, kh, stride.0)?;
    let ow = conv2d_out_extent(w, pad.1, kw, stride.1)?;

    let mut y = Tensor::zeros(&[n, co, oh, ow]);
    let yd = y.data_mut();
    let ckk = ci * kh * kw;
    let ohw = oh * ow;
    let tile = conv2d_tile(oh, ow);
    let mut col = vec![T::zero(); ckk * tile * ohw];
    let mut ytile = vec![T::zero(); co * tile * ohw];

    let mut start = 0;
    while start < n {
        let end = (start + tile).min(n);
        let p = (end - start) * ohw;
        im2col(
            x.data(),
            start..end,
            ci,
            (h, w),
            (kh, kw),
            pad,
            stride,
            (oh, ow),
            &mut col[..ckk * p],
        );
        ytile[..co * p].iter_mut().for_each(|v| *v = T::zero());
        mm_nn(k.data(), &col[..ckk * p], co, ckk, p, &mut ytile[..co * p]);
        for (t, img) in (start..end).enumerate() {
            for c_out in 0..co {
                let src = &ytile[c_out * p + t * ohw..c_out * p + (t + 1) * ohw];
                let dst = &mut yd[(img * co + c_out) * ohw..(img * co + c_out + 1) * ohw];
                let bias = b.data()[c_out];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bias;
                }
            }
        }
        start = end;
    }
    Ok(y)
}

/// Returns `(dx, dk, db)`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    dy: &Tensor<T>,
    pad: (usize, usize),
    stride: (usize, usize),
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, _, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let (oh, ow) = (dy.shape()[2], dy.shape()[3]);
    let mut dx = Tensor::zeros(x.shape());
    let mut dk = Tensor::zeros(k.shape());
    let mut db = Tensor::zeros(&[co]);
    let (dys, ohw, ckk) = (dy.data(), oh * ow, ci * kh * kw);

    for img in 0..n {
        for c_out in 0..co {
            let base = (img * co + c_out) * ohw;
            db.data_mut()[c_out] += dys[base..base + ohw].iter().copied().sum();
        }
    }

    let tile = conv2d_tile(oh, ow);
    let mut col = vec![T::zero(); ckk * tile * ohw];
    let mut dy_tile = vec![T::zero(); co * tile * ohw];
    let mut dcol = vec![T::zero(); ckk * tile * ohw];

    let mut start = 0;
    while start < n {
        let end = (start + tile).min(n);
        let p = (end - start) * ohw;
        im2col(
            x.data(),
            start..end,
            ci,
            (h, w),
            (kh, kw),
            pad,
            stride,
            (oh, ow),
            &mut col[..ckk * p],
        );
        for (t, img) in (start..end).enumerate() {
            for c_out in 0..co {
                let src = &dys[(img * co + c_out) * ohw..(img * co + c_out + 1) * ohw];
                dy_tile[c_out * p + t * ohw..c_out * p + (t + 1) * ohw].copy_from_slice(src);
            }
        }
        // dK += dY * col^T ; dcol = K^T * dY ; dx += col2im(dcol)
        mm_nt(&dy_tile[..co * p], &col[..ckk * p], co, p, ckk, dk.data_mut());
        dcol[..ckk * p].iter_mut().for_each(|v| *v = T::zero());
        mm_tn(k.data(), &dy_tile[..co * p], ckk, co, p, &mut dcol[..ckk * p]);
        col2im_add(
            &dcol[..ckk * p],
            start..end,
            ci,
            (h, w),
            (kh, kw),
            pad,
            stride,
            (oh, ow),
            dx.data_mut(),
        );
        start = end;
    }
    (dx, dk, db)
}

// ---------------------------------------------------------------------------
// Transposed 2D convolution
// ---------------------------------------------------------------------------

pub fn conv2d_transposed_out_extent(
    input: usize,
    stride: usize,
    pad: usize,
    kernel: usize,
) -> Result<usize, NnError> {
    let full = (input - 1) * stride + kernel;
    if full < 2 * pad + 1 {
        return Err(NnError::Shape(format!(
            "transposed conv output collapsed: (({input}-1)*{stride}+{kernel}) <= 2*{pad}"
        )));
    }
    Ok(full - 2 * pad)
}

/// Adjoint of [`conv2d_forward`]; kernel layout `[C_in, C_out, kh, kw]`.
///
/// `y[n,co, ih*sh+kh-ph, iw*sw+kw-pw] += x[n,ci,ih,iw] * k[ci,co,kh,kw]`, plus bias.
pub fn conv2d_transposed_forward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    b: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor<T>, NnError> {
    let (n, ci, h, w) = dims4(x, "conv2d_transposed input")?;
    let (kci, co, kh, kw) = dims4(k, "conv2d_transposed kernel")?;
    if kci != ci {
        return Err(NnError::Shape(format!(
            "conv2d_transposed: input channels {ci} vs kernel channels {kci}"
        )));
    }
    if b.shape() != [co] {
        return Err(NnError::Shape(format!(
            "conv2d_transposed: bias shape {:?}, expected [{co}]",
            b.shape()
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(NnError::Shape("conv2d_transposed: zero stride".into()));
    }
    let oh = conv2d_transposed_out_extent(h, stride.0, pad.0, kh)?;
    let ow = conv2d_transposed_out_extent(w, stride.1, pad.1, kw)?;

    let mut y = Tensor::zeros(&[n, co, oh, ow]);
    let (xs, ks, bs) = (x.data(), k.data(), b.data());
    let yd = y.data_mut();
    for img in 0..n {
        for c_out in 0..co {
            let y_base = (img * co + c_out) * oh * ow;
            let bias = bs[c_out];
            yd[y_base..y_base + oh * ow].iter_mut().for_each(|v| *v = bias);
            for c_in in 0..ci {
                let x_base = (img * ci + c_in) * h * w;
                for dh in 0..kh {
                    for dw in 0..kw {
                        let wk = ks[((c_in * co + c_out) * kh + dh) * kw + dw];
                        for ih in 0..h {
                            let orow = ih * stride.0 + dh;
                            if orow < pad.0 || orow - pad.0 >= oh {
                                continue;
                            }
                            let yrow = y_base + (orow - pad.0) * ow;
                            let xrow = x_base + ih * w;
                            for iw in 0..w {
                                let ocol = iw * stride.1 + dw;
                                if ocol < pad.1 || ocol - pad.1 >= ow {
                                    continue;
                                }
                                yd[yrow + (ocol - pad.1)] += wk * xs[xrow + iw];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Returns `(dx, dk, db)`.
pub fn conv2d_transposed_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    dy: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (_, co, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let (oh, ow) = (dy.shape()[2], dy.shape()[3]);
    let mut dx = Tensor::zeros(x.shape());
    let mut dk = Tensor::zeros(k.shape());
    let mut db = Tensor::zeros(&[co]);
    let (xs, ks, dys) = (x.data(), k.data(), dy.data());
    let dxd = dx.data_mut();
    let dkd = dk.data_mut();
    let dbd = db.data_mut();
    for img in 0..n {
        for c_out in 0..co {
            let dy_base = (img * co + c_out) * oh * ow;
            dbd[c_out] += dys[dy_base..dy_base + oh * ow].iter().copied().sum();
            for c_in in 0..ci {
                let x_base = (img * ci + c_in) * h * w;
                for dh in 0..kh {
                    for dw in 0..kw {
                        let kidx = ((c_in * co + c_out) * kh + dh) * kw + dw;
                        let wk = ks[kidx];
                        let mut wgrad = T::zero();
                        for ih in 0..h {
                            let orow = ih * stride.0 + dh;
                            if orow < pad.0 || orow - pad.0 >= oh {
                                continue;
                            }
                            let dyrow = dy_base + (orow - pad.0) * ow;
                            let xrow = x_base + ih * w;
                            for iw in 0..w {
                                let ocol = iw * stride.1 + dw;
                                if ocol < pad.1 || ocol - pad.1 >= ow {
                                    continue;
                                }
                                let g = dys[dyrow + (ocol - pad.1)];
                                wgrad += g * xs[xrow + iw];
                                dxd[xrow + iw] += wk * g;
                            }
                        }
                        dkd[kidx] += wgrad;
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

// ---------------------------------------------------------------------------
// Dilated causal 1D convolution
// ---------------------------------------------------------------------------

/// `y[n,o,t] = b[o] + sum_{c,j} k[o,c,j] x[n,c,t-(kk-1-j)*d]`, implicit left
/// zero padding so the output length equals the input length. Taps never
/// read past `t`.
pub fn conv1d_causal_forward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    b: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>, NnError> {
    let (n, ci, t) = dims3(x, "conv1d input")?;
    let (co, kci, kk) = dims3(k, "conv1d kernel")?;
    if kci != ci {
        return Err(NnError::Shape(format!(
            "conv1d: input channels {ci} vs kernel channels {kci}"
        )));
    }
    if b.shape() != [co] {
        return Err(NnError::Shape(format!(
            "conv1d: bias shape {:?}, expected [{co}]",
            b.shape()
        )));
    }
    if dilation == 0 || kk == 0 {
        return Err(NnError::Shape("conv1d: kernel size and dilation must be >= 1".into()));
    }
    let mut y = Tensor::zeros(&[n, co, t]);
    let (xs, ks, bs) = (x.data(), k.data(), b.data());
    let yd = y.data_mut();
    for img in 0..n {
        for c_out in 0..co {
            let y_base = (img * co + c_out) * t;
            let bias = bs[c_out];
            yd[y_base..y_base + t].iter_mut().for_each(|v| *v = bias);
            for c_in in 0..ci {
                let x_base = (img * ci + c_in) * t;
                for j in 0..kk {
                    let shift = (kk - 1 - j) * dilation;
                    if shift >= t {
                        continue;
                    }
                    let wk = ks[(c_out * ci + c_in) * kk + j];
                    axpy(
                        &mut yd[y_base + shift..y_base + t],
                        &xs[x_base..x_base + t - shift],
                        wk,
                    );
                }
            }
        }
    }
    Ok(y)
}

/// Returns `(dx, dk, db)`.
pub fn conv1d_causal_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    dy: &Tensor<T>,
    dilation: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, ci, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, _, kk) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let mut dx = Tensor::zeros(x.shape());
    let mut dk = Tensor::zeros(k.shape());
    let mut db = Tensor::zeros(&[co]);
    let (xs, ks, dys) = (x.data(), k.data(), dy.data());
    let dxd = dx.data_mut();
    let dkd = dk.data_mut();
    let dbd = db.data_mut();
    for img in 0..n {
        for c_out in 0..co {
            let dy_base = (img * co + c_out) * t;
            dbd[c_out] += dys[dy_base..dy_base + t].iter().copied().sum();
            for c_in in 0..ci {
                let x_base = (img * ci + c_in) * t;
                for j in 0..kk {
                    let shift = (kk - 1 - j) * dilation;
                    if shift >= t {
                        continue;
                    }
                    let kidx = (c_out * ci + c_in) * kk + j;
                    let wk = ks[kidx];
                    let dyseg = &dys[dy_base + shift..dy_base + t];
                    let xseg = &xs[x_base..x_base + t - shift];
                    dkd[kidx] += dot(dyseg, xseg);
                    axpy(&mut dxd[x_base..x_base + t - shift], dyseg, wk);
                }
            }
        }
    }
    (dx, dk, db)
}

// ---------------------------------------------------------------------------
// Batch normalization (channel dimension 1)
// ---------------------------------------------------------------------------

/// Per-channel element count for a `[N, C, ...]` tensor.
pub fn bn_count_per_channel(shape: &[usize]) -> usize {
    let spatial: usize = shape[2..].iter().product();
    shape[0] * spatial
}

/// Batch statistics over all axes except channel. Returns `(mean, biased var)`.
pub fn bn_batch_stats<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let c = x.shape()[1];
    let n = x.shape()[0];
    let spatial: usize = x.shape()[2..].iter().product();
    let count = T::from_f64((n * spatial) as f64);
    let mut mean = Tensor::zeros(&[c]);
    let mut var = Tensor::zeros(&[c]);
    let xs = x.data();
    for ch in 0..c {
        let mut acc = T::zero();
        for img in 0..n {
            let base = (img * c + ch) * spatial;
            acc += xs[base..base + spatial].iter().copied().sum();
        }
        mean.data_mut()[ch] = acc / count;
    }
    for ch in 0..c {
        let mu = mean.data()[ch];
        let mut acc = T::zero();
        for img in 0..n {
            let base = (img * c + ch) * spatial;
            for &v in &xs[base..base + spatial] {
                let d = v - mu;
                acc += d * d;
            }
        }
        var.data_mut()[ch] = acc / count;
    }
    (mean, var)
}

/// Train-mode forward. Returns `(y, mean, inv_std)` with batch statistics.
pub fn bn_train_forward<T: Scalar>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let c = bn_check(x, scale, shift)?;
    if bn_count_per_channel(x.shape()) < 2 {
        return Err(NnError::Shape(
            "batchnorm train mode requires at least 2 elements per channel".into(),
        ));
    }
    let (mean, var) = bn_batch_stats(x);
    let inv_std: Tensor<T> = {
        let mut t = Tensor::zeros(&[c]);
        for ch in 0..c {
            t.data_mut()[ch] = T::one() / (var.data()[ch] + eps).sqrt();
        }
        t
    };
    let y = bn_apply(x, &mean, &inv_std, scale, shift);
    Ok((y, mean, inv_std))
}

/// Inference-mode forward using running statistics.
pub fn bn_infer_forward<T: Scalar>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>, NnError> {
    let c = bn_check(x, scale, shift)?;
    let mut inv_std = Tensor::zeros(&[c]);
    for ch in 0..c {
        inv_std.data_mut()[ch] = T::one() / (running_var.data()[ch] + eps).sqrt();
    }
    Ok(bn_apply(x, running_mean, &inv_std, scale, shift))
}

fn bn_check<T: Scalar>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
) -> Result<usize, NnError> {
    if x.rank() < 2 {
        return Err(NnError::Shape(format!(
            "batchnorm input must be [N,C,...], got {:?}",
            x.shape()
        )));
    }
    let c = x.shape()[1];
    if scale.shape() != [c] || shift.shape() != [c] {
        return Err(NnError::Shape(format!(
            "batchnorm scale/shift must be [{c}], got {:?}/{:?}",
            scale.shape(),
            shift.shape()
        )));
    }
    Ok(c)
}

fn bn_apply<T: Scalar>(
    x: &Tensor<T>,
    mean: &Tensor<T>,
    inv_std: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
) -> Tensor<T> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let spatial: usize = x.shape()[2..].iter().product();
    let mut y = Tensor::zeros(x.shape());
    let xs = x.data();
    let yd = y.data_mut();
    for img in 0..n {
        for ch in 0..c {
            let a = scale.data()[ch] * inv_std.data()[ch];
            let b = shift.data()[ch] - a * mean.data()[ch];
            let base = (img * c + ch) * spatial;
            for idx in base..base + spatial {
                yd[idx] = a * xs[idx] + b;
            }
        }
    }
    y
}

/// Train-mode backward. Returns `(dx, dscale, dshift)`.
pub fn bn_train_backward<T: Scalar>(
    x: &Tensor<T>,
    mean: &Tensor<T>,
    inv_std: &Tensor<T>,
    scale: &Tensor<T>,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let spatial: usize = x.shape()[2..].iter().product();
    let count = T::from_f64((n * spatial) as f64);
    let mut dx = Tensor::zeros(x.shape());
    let mut dscale = Tensor::zeros(&[c]);
    let mut dshift = Tensor::zeros(&[c]);
    let (xs, dys) = (x.data(), dy.data());
    for ch in 0..c {
        let mu = mean.data()[ch];
        let istd = inv_std.data()[ch];
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for img in 0..n {
            let base = (img * c + ch) * spatial;
            for idx in base..base + spatial {
                let xhat = (xs[idx] - mu) * istd;
                sum_dy += dys[idx];
                sum_dy_xhat += dys[idx] * xhat;
            }
        }
        dscale.data_mut()[ch] = sum_dy_xhat;
        dshift.data_mut()[ch] = sum_dy;
        let g = scale.data()[ch] * istd;
        let mean_dy = sum_dy / count;
        let mean_dy_xhat = sum_dy_xhat / count;
        let dxd = dx.data_mut();
        for img in 0..n {
            let base = (img * c + ch) * spatial;
            for idx in base..base + spatial {
                let xhat = (xs[idx] - mu) * istd;
                dxd[idx] = g * (dys[idx] - mean_dy - xhat * mean_dy_xhat);
            }
        }
    }
    (dx, dscale, dshift)
}

/// Inference-mode backward (running statistics are constants).
pub fn bn_infer_backward<T: Scalar>(
    x: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    scale: &Tensor<T>,
    eps: T,
    dy: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let spatial: usize = x.shape()[2..].iter().product();
    let mut dx = Tensor::zeros(x.shape());
    let mut dscale = Tensor::zeros(&[c]);
    let mut dshift = Tensor::zeros(&[c]);
    let (xs, dys) = (x.data(), dy.data());
    for ch in 0..c {
        let istd = T::one() / (running_var.data()[ch] + eps).sqrt();
        let mu = running_mean.data()[ch];
        let g = scale.data()[ch] * istd;
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        let dxd = dx.data_mut();
        for img in 0..n {
            let base = (img * c + ch) * spatial;
            for idx in base..base + spatial {
                sum_dy += dys[idx];
                sum_dy_xhat += dys[idx] * (xs[idx] - mu) * istd;
                dxd[idx] = g * dys[idx];
            }
        }
        dscale.data_mut()[ch] = sum_dy_xhat;
        dshift.data_mut()[ch] = sum_dy;
    }
    (dx, dscale, dshift)
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean of squared componentwise differences over all elements.
pub fn mse_forward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T, NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "mse: prediction shape {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = T::from_f64(pred.numel() as f64);
    let mut acc = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data().iter()) {
        let d = p - t;
        acc += d * d;
    }
    Ok(acc / n)
}

/// `d/dpred mse = 2 (pred - target) / numel`, scaled by upstream `dl`.
pub fn mse_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, dl: T) -> Tensor<T> {
    let n = T::from_f64(pred.numel() as f64);
    let two = T::from_f64(2.0);
    let mut d = Tensor::zeros(pred.shape());
    for (out, (&p, &t)) in d
        .data_mut()
        .iter_mut()
        .zip(pred.data().iter().zip(target.data().iter()))
    {
        *out = two * (p - t) / n * dl;
    }
    d
}
