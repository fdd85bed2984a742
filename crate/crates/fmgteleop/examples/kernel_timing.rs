//! Rough timing of the TCN hot paths: one training step at batch 256 and
//! single-window inference latency/throughput.

use std::time::Instant;

use fmgteleop::models::{Architecture, Model, ModelSpec};
use fmgteleop::nn::Tensor;

fn main() {
    let spec = ModelSpec::new(Architecture::Tcn, 7);
    let mut model = Model::<f32>::build(spec).unwrap();
    println!("tcn parameters: {}", model.parameter_count());

    let batch = 256;
    let mut data = vec![0.0f32; batch * 60 * 4 * 7];
    for (i, v) in data.iter_mut().enumerate() {
        *v = ((i as f32) * 0.37).sin() * 30.0;
    }
    let input = Tensor::new(&[batch, 60, 4, 7], data.clone()).unwrap();

    // Warm-up + measured training steps.
    for round in 0..3 {
        let t0 = Instant::now();
        let fwd = model.forward_train(input.clone()).unwrap();
        let fwd_time = t0.elapsed();
        let mut graph = fwd.graph;
        let tgt = graph.leaf(Tensor::zeros(&[batch, 10]));
        let loss = graph.mse_loss(fwd.output, tgt).unwrap();
        let t1 = Instant::now();
        let _grads = graph.backward(loss).unwrap();
        let bwd_time = t1.elapsed();
        println!(
            "step {round}: forward {:.0} ms, backward {:.0} ms (batch {batch})",
            fwd_time.as_secs_f64() * 1e3,
            bwd_time.as_secs_f64() * 1e3
        );
    }

    // Single-window inference.
    let one = Tensor::new(&[1, 60, 4, 7], data[..60 * 4 * 7].to_vec()).unwrap();
    let t0 = Instant::now();
    let mut n = 0;
    while t0.elapsed().as_secs_f64() < 2.0 {
        let _ = model.predict_batch(one.clone()).unwrap();
        n += 1;
    }
    let per = t0.elapsed().as_secs_f64() / n as f64;
    println!(
        "inference: {:.2} ms/window ({:.0} Hz)",
        per * 1e3,
        1.0 / per
    );
}
