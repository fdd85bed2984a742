//! Per-operator timing at the shapes the TCN uses during training.

use std::time::Instant;

use fmgteleop::nn::ops;
use fmgteleop::nn::Tensor;

fn t(shape: &[usize]) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|i| ((i as f32) * 0.13).sin()).collect();
    Tensor::new(shape, data).unwrap()
}

fn time(label: &str, macs: f64, mut f: impl FnMut()) {
    let t0 = Instant::now();
    let mut reps = 0;
    while t0.elapsed().as_secs_f64() < 1.0 {
        f();
        reps += 1;
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    println!(
        "{label:<28} {:>8.1} ms  {:>6.2} GMAC/s",
        per * 1e3,
        macs / per / 1e9
    );
}

fn main() {
    let nh = 256 * 60;

    // Spatial stage shapes.
    let x_sp = t(&[nh, 16, 4, 7]);
    let k_sp = t(&[16, 16, 3, 3]);
    let b16 = t(&[16]);
    let macs_sp = (nh * 16 * 28 * 16 * 9) as f64;
    time("conv2d 16->16 3x3 fwd", macs_sp, || {
        let _ = ops::conv2d_forward(&x_sp, &k_sp, &b16, (1, 1), (1, 1)).unwrap();
    });
    let dy_sp = t(&[nh, 16, 4, 7]);
    time("conv2d 16->16 3x3 bwd", 2.0 * macs_sp, || {
        let _ = ops::conv2d_backward(&x_sp, &k_sp, &dy_sp, (1, 1), (1, 1));
    });

    // Temporal stage shapes.
    let x_t = t(&[256, 64, 60]);
    let k_t = t(&[64, 64, 10]);
    let b64 = t(&[64]);
    let macs_t = (256 * 64 * 64 * 10 * 55) as f64;
    time("conv1d 64->64 k10 fwd", macs_t, || {
        let _ = ops::conv1d_causal_forward(&x_t, &k_t, &b64, 2).unwrap();
    });
    let dy_t = t(&[256, 64, 60]);
    time("conv1d 64->64 k10 bwd", 2.0 * macs_t, || {
        let _ = ops::conv1d_causal_backward(&x_t, &k_t, &dy_t, 2);
    });

    // Dense head shape from the FC-NN benchmark.
    let x_d = t(&[256, 224]);
    let w_d = t(&[224, 224]);
    let b224 = t(&[224]);
    let macs_d = (256 * 224 * 224) as f64;
    time("dense 224->224 fwd", macs_d, || {
        let _ = ops::dense_forward(&x_d, &w_d, Some(&b224)).unwrap();
    });
    let dy_d = t(&[256, 224]);
    time("dense 224->224 bwd", 2.0 * macs_d, || {
        let _ = ops::dense_backward(&x_d, &w_d, &dy_d);
    });

    // Batchnorm at the temporal shape.
    let scale = t(&[64]);
    time("batchnorm [256,64,60] fwd", (256 * 64 * 60) as f64, || {
        let _ = ops::bn_train_forward(&x_t, &scale, &b64, 1e-5).unwrap();
    });
}
