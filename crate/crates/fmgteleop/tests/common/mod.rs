//! Naive direct-summation references shared by the oracle and acceptance
//! suites. Deliberately written as plain nested loops, independent of the
//! kernel's implementation strategy.

use fmgteleop::nn::Tensor;

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn naive_dense(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = w.shape()[0];
    let mut y = Tensor::zeros(&[n, o]);
    for row in 0..n {
        for out in 0..o {
            let mut acc = b.data()[out];
            for col in 0..i {
                acc += w.data()[out * i + col] * x.data()[row * i + col];
            }
            y.data_mut()[row * o + out] = acc;
        }
    }
    y
}

pub fn naive_conv2d(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    b: &Tensor<f64>,
    pad: (usize, usize),
    stride: (usize, usize),
) -> Tensor<f64> {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, _, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad.0 - kh) / stride.0 + 1;
    let ow = (w + 2 * pad.1 - kw) / stride.1 + 1;
    let mut y = Tensor::zeros(&[n, co, oh, ow]);
    for img in 0..n {
        for c_out in 0..co {
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = b.data()[c_out];
                    for c_in in 0..ci {
                        for dh in 0..kh {
                            for dw in 0..kw {
                                let ih = (r * stride.0 + dh) as isize - pad.0 as isize;
                                let iw = (c * stride.1 + dw) as isize - pad.1 as isize;
                                if ih < 0 || iw < 0 || ih as usize >= h || iw as usize >= w {
                                    continue;
                                }
                                acc += k.data()[((c_out * ci + c_in) * kh + dh) * kw + dw]
                                    * x.data()
                                        [((img * ci + c_in) * h + ih as usize) * w + iw as usize];
                            }
                        }
                    }
                    y.data_mut()[((img * co + c_out) * oh + r) * ow + c] = acc;
                }
            }
        }
    }
    y
}

pub fn naive_conv2d_transposed(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Tensor<f64> {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (_, co, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
    let oh = (h - 1) * stride.0 + kh - 2 * pad.0;
    let ow = (w - 1) * stride.1 + kw - 2 * pad.1;
    let mut y = Tensor::zeros(&[n, co, oh, ow]);
    for img in 0..n {
        for c_out in 0..co {
            let base = (img * co + c_out) * oh * ow;
            for v in y.data_mut()[base..base + oh * ow].iter_mut() {
                *v = b.data()[c_out];
            }
        }
    }
    for img in 0..n {
        for c_in in 0..ci {
            for c_out in 0..co {
                for ih in 0..h {
                    for iw in 0..w {
                        for dh in 0..kh {
                            for dw in 0..kw {
                                let orow = (ih * stride.0 + dh) as isize - pad.0 as isize;
                                let ocol = (iw * stride.1 + dw) as isize - pad.1 as isize;
                                if orow < 0
                                    || ocol < 0
                                    || orow as usize >= oh
                                    || ocol as usize >= ow
                                {
                                    continue;
                                }
                                y.data_mut()[((img * co + c_out) * oh + orow as usize) * ow
                                    + ocol as usize] += k.data()
                                    [((c_in * co + c_out) * kh + dh) * kw + dw]
                                    * x.data()[((img * ci + c_in) * h + ih) * w + iw];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// `y[t] = b + sum_j w[j] x[t - (k-1-j) d]` with implicit left zero padding.
pub fn naive_conv1d_causal(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    b: &Tensor<f64>,
    d: usize,
) -> Tensor<f64> {
    let (n, ci, t_len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, _, kk) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let mut y = Tensor::zeros(&[n, co, t_len]);
    for img in 0..n {
        for c_out in 0..co {
            for t in 0..t_len {
                let mut acc = b.data()[c_out];
                for c_in in 0..ci {
                    for j in 0..kk {
                        let shift = (kk - 1 - j) * d;
                        if shift > t {
                            continue;
                        }
                        acc += k.data()[(c_out * ci + c_in) * kk + j]
                            * x.data()[(img * ci + c_in) * t_len + t - shift];
                    }
                }
                y.data_mut()[(img * co + c_out) * t_len + t] = acc;
            }
        }
    }
    y
}

/// Scalar per-component LSTM cell in i, f, g, o gate order.
pub fn naive_lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w_ih: &Tensor<f64>,
    w_hh: &Tensor<f64>,
    bias: &Tensor<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = h_prev.len();
    let input = x.len();
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let gate = |row: usize| -> f64 {
        let mut acc = bias.data()[row];
        for (i, &xv) in x.iter().enumerate() {
            acc += w_ih.data()[row * input + i] * xv;
        }
        for (i, &hv) in h_prev.iter().enumerate() {
            acc += w_hh.data()[row * hidden + i] * hv;
        }
        acc
    };
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for u in 0..hidden {
        let i_g = sigmoid(gate(u));
        let f_g = sigmoid(gate(hidden + u));
        let g_g = gate(2 * hidden + u).tanh();
        let o_g = sigmoid(gate(3 * hidden + u));
        c[u] = f_g * c_prev[u] + i_g * g_g;
        h[u] = o_g * c[u].tanh();
    }
    (h, c)
}

/// Seeded tensor with entries in `(-2, 2)`.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-2.0..2.0);
    }
    t
}
