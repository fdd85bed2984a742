//! Cross-user transfer at toy scale: train on one synthetic user, measure
//! the zero-shot gap on a perturbed-anatomy user, then recover part of it by
//! fine-tuning on a small budget of new-user data.

use fmgteleop::models::{Architecture, Model, ModelSpec};
use fmgteleop::synth::{generate_session, make_user_variant, GeneratorConfig};
use fmgteleop::train::{evaluate, finetune, train, FinetuneConfig, TrainConfig};

fn sessions(gen: &GeneratorConfig, range: std::ops::Range<usize>) -> Vec<fmgteleop::signal::SessionRecording> {
    range.map(|i| generate_session(gen, i).unwrap().0).collect()
}

fn main() {
    let mut base = GeneratorConfig::new(21);
    base.frames_per_session = 800;
    let variant = make_user_variant(&base, 1);

    let train_sessions = sessions(&base, 0..4);
    let base_test = sessions(&base, 100..101);
    let user_test = sessions(&variant, 100..101);
    let user_tune = sessions(&variant, 0..1);

    let cfg = TrainConfig {
        seed: 21,
        max_epochs: 20,
        patience: 6,
        h: 1,
        stride: 1,
        batch_size: 64,
        lr: 3e-3,
        ..TrainConfig::default()
    };
    let model = Model::<f32>::build(ModelSpec::new(Architecture::Fcnn, 21)).unwrap();
    let (trained, _) = train(model, &train_sessions, &cfg).unwrap();

    let same_user = evaluate(&trained, &base_test, 1).unwrap().overall_mae;
    let zero_shot = evaluate(&trained, &user_test, 1).unwrap().overall_mae;
    println!("same-user MAE:  {same_user:.2} deg");
    println!("zero-shot MAE:  {zero_shot:.2} deg (+{:.0}%)", (zero_shot / same_user - 1.0) * 100.0);

    let ft = FinetuneConfig {
        seed: 21,
        ..FinetuneConfig::default()
    };
    let tuned = finetune(trained, &user_tune, &ft).unwrap();
    let after = evaluate(&tuned, &user_test, 1).unwrap().overall_mae;
    let recovered = (zero_shot - after) / (zero_shot - same_user).max(1e-9) * 100.0;
    println!("fine-tuned MAE: {after:.2} deg ({recovered:.0}% of the gap recovered)");
}
