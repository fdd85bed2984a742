//! Permutation feature importance of a quickly trained instantaneous model
//! on synthetic sessions: informative sensors should dominate.

use fmgteleop::models::{Architecture, Model, ModelSpec};
use fmgteleop::synth::{generate_session, GeneratorConfig};
use fmgteleop::train::{permutation_importance, train, TrainConfig};

fn main() {
    let mut gen = GeneratorConfig::new(9);
    gen.frames_per_session = 800;
    let train_sessions: Vec<_> = (0..3)
        .map(|i| generate_session(&gen, i).unwrap().0)
        .collect();
    let test_sessions: Vec<_> = (10..11)
        .map(|i| generate_session(&gen, i).unwrap().0)
        .collect();

    let cfg = TrainConfig {
        seed: 9,
        max_epochs: 20,
        patience: 5,
        h: 1,
        stride: 1,
        batch_size: 64,
        lr: 3e-3,
        ..TrainConfig::default()
    };
    let model = Model::<f32>::build(ModelSpec::new(Architecture::Fcnn, 9)).unwrap();
    let (trained, _) = train(model, &train_sessions, &cfg).unwrap();

    let scores = permutation_importance(&trained, &test_sessions, 2, 11, 2).unwrap();
    println!("sensor  importance (% error increase)   informative?");
    for (i, s) in scores.iter().enumerate() {
        let informative = gen.informative_sensors.contains(&(i + 1));
        println!(
            "s{:02}     {:>8.2}{}",
            i + 1,
            s,
            if informative { "    yes" } else { "    no" }
        );
    }
}
