//! End-to-end at toy scale: synthesize sessions, train an instantaneous
//! FC-NN, and print the per-joint error table.

use fmgteleop::models::{Architecture, Model, ModelSpec};
use fmgteleop::synth::{generate_session, GeneratorConfig};
use fmgteleop::train::{evaluate, train, EvalReport, TrainConfig};

fn main() {
    let mut gen = GeneratorConfig::new(3);
    gen.frames_per_session = 600;
    let train_sessions: Vec<_> = (0..4)
        .map(|i| generate_session(&gen, i).unwrap().0)
        .collect();
    let test_sessions: Vec<_> = (10..12)
        .map(|i| generate_session(&gen, i).unwrap().0)
        .collect();

    let cfg = TrainConfig {
        seed: 3,
        max_epochs: 15,
        patience: 4,
        h: 1,
        stride: 2,
        ..TrainConfig::default()
    };
    let model = Model::<f32>::build(ModelSpec::new(Architecture::Fcnn, 3)).unwrap();
    let (trained, history) = train(model, &train_sessions, &cfg).unwrap();
    println!("trained fcnn for {} epochs", history.len());
    for e in &history {
        println!(
            "  epoch {:>2}: train mse {:>8.2}, val mae {:>6.2}",
            e.epoch, e.train_mse, e.val_mae
        );
    }

    let report = evaluate(&trained, &test_sessions, 1).unwrap();
    println!("\njoint   mae (deg)  std (deg)");
    for (j, name) in EvalReport::JOINT_NAMES.iter().enumerate() {
        println!(
            "{name:<7} {:>8.2} {:>10.2}",
            report.per_joint_mae[j], report.per_joint_std[j]
        );
    }
    println!("overall {:>8.2} {:>10.2}", report.overall_mae, report.overall_std);
}
