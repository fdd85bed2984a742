//! Verify reverse-mode gradients of a shrunken TCN against central finite
//! differences.

use fmgteleop::models::{grad_check_model, ArchDims, Architecture, Model, ModelSpec};
use fmgteleop::nn::Tensor;

fn main() {
    let spec = ModelSpec::new(Architecture::Tcn, 11)
        .with_h(6)
        .with_dims(ArchDims::shrunken());
    let model = Model::<f64>::build(spec).unwrap();
    println!("tcn (shrunken): {} parameters", model.parameter_count());

    let mut input = Tensor::<f64>::zeros(&[2, 6, 4, 7]);
    for (i, v) in input.data_mut().iter_mut().enumerate() {
        *v = 20.0 * ((i as f64) * 0.7).sin() + 1.0;
    }
    let mut target = Tensor::<f64>::zeros(&[2, 10]);
    for (i, v) in target.data_mut().iter_mut().enumerate() {
        *v = 30.0 + (i as f64);
    }

    let report = grad_check_model(&model, &input, &target, 1e-4).unwrap();
    println!("{report}");
}
