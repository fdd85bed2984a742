//! Quick generator/training calibration probe at reduced scale.

use fmgteleop::models::{load_checkpoint, save_checkpoint, Architecture, Model, ModelSpec};
use fmgteleop::synth::{generate_session, make_user_variant, GeneratorConfig};
use fmgteleop::train::{evaluate, finetune, train, FinetuneConfig, TrainConfig};

fn main() {
    let mut gen = GeneratorConfig::new(7);
    {
        // joint coverage of the default coupling matrix
        let mut per_joint = [0usize; 10];
        for sens in 0..28 {
            for j in 0..10 {
                if gen.coupling[sens * 10 + j] != 0.0 {
                    per_joint[j] += 1;
                }
            }
        }
        println!("sensors per joint: {per_joint:?}");
    }
    gen.frames_per_session = 3000;
    let train_sessions: Vec<_> = (0..12)
        .map(|i| generate_session(&gen, i).unwrap().0)
        .collect();
    let test_sessions: Vec<_> = (100..103)
        .map(|i| generate_session(&gen, i).unwrap().0)
        .collect();

    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("all");

    if which == "all" || which == "fcnn" {
        let cfg = TrainConfig {
            seed: 7,
            max_epochs: 18,
            patience: 8,
            stride: 2,
            h: 1,
            batch_size: 64,
            lr: 3e-3,
            lr_decay: 0.88,
            noise_sigma: 2.0,
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let model = Model::<f32>::build(ModelSpec::new(Architecture::Fcnn, 7)).unwrap();
        let (m, hist) = train(model, &train_sessions, &cfg).unwrap();
        let report = evaluate(&m, &test_sessions, 1).unwrap();
        println!(
            "fcnn: test MAE {:.3} deg after {} epochs ({:.0}s)",
            report.overall_mae,
            hist.len(),
            t0.elapsed().as_secs_f64()
        );
        for e in hist.iter().take(6) {
            println!("  epoch {}: train_mse {:.2} val_mae {:.3}", e.epoch, e.train_mse, e.val_mae);
        }
    }

    if which == "all" || which == "cnn" {
        let cfg = TrainConfig {
            seed: 7,
            max_epochs: 18,
            patience: 8,
            stride: 2,
            h: 1,
            batch_size: 64,
            lr: 3e-3,
            lr_decay: 0.88,
            noise_sigma: 2.0,
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let model = Model::<f32>::build(ModelSpec::new(Architecture::Cnn, 7)).unwrap();
        let (m, hist) = train(model, &train_sessions, &cfg).unwrap();
        let report = evaluate(&m, &test_sessions, 1).unwrap();
        println!(
            "cnn: test MAE {:.3} deg after {} epochs ({:.0}s)",
            report.overall_mae,
            hist.len(),
            t0.elapsed().as_secs_f64()
        );
    }

    if which == "transfer" {
        let t0 = std::time::Instant::now();
        let base_model = load_checkpoint(std::path::Path::new("/tmp/fmg_probe_tcn.ckpt")).unwrap();
        let same_user = evaluate(&base_model, &test_sessions, 60).unwrap().overall_mae;
        let variant = make_user_variant(&gen, 1);
        let variant_test: Vec<_> = (100..103)
            .map(|i| generate_session(&variant, i).unwrap().0)
            .collect();
        let zero_shot = evaluate(&base_model, &variant_test, 60).unwrap().overall_mae;
        println!(
            "same-user {same_user:.3}, zero-shot {zero_shot:.3} (+{:.0}%)",
            (zero_shot / same_user - 1.0) * 100.0
        );
        for budget in [0.01f64, 0.02, 0.05] {
            let frames = (budget as f64 * 36_000.0).round() as usize;
            let mut tune_cfg = variant.clone();
            tune_cfg.frames_per_session = frames;
            let tune = vec![generate_session(&tune_cfg, 0).unwrap().0];
            let tuned = finetune(
                base_model.clone(),
                &tune,
                &FinetuneConfig { seed: 7, ..FinetuneConfig::default() },
            )
            .unwrap();
            let mae = evaluate(&tuned, &variant_test, 60).unwrap().overall_mae;
            let rec = (zero_shot - mae) / (zero_shot - same_user) * 100.0;
            println!(
                "budget {:>4.0}% ({frames} frames): MAE {mae:.3} ({rec:.0}% of gap recovered, {:.0}s)",
                budget * 100.0,
                t0.elapsed().as_secs_f64()
            );
        }
    }

    if which == "all" || which == "tcn" {
        let cfg = TrainConfig {
            seed: 7,
            max_epochs: 18,
            patience: 8,
            stride: 6,
            batch_size: 64,
            lr: 3e-3,
            lr_decay: 0.88,
            noise_sigma: 2.0,
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let model = Model::<f32>::build(ModelSpec::new(Architecture::Tcn, 7)).unwrap();
        let (m, hist) = train(model, &train_sessions, &cfg).unwrap();
        save_checkpoint(&m, std::path::Path::new("/tmp/fmg_probe_tcn.ckpt")).unwrap();
        let report = evaluate(&m, &test_sessions, 60).unwrap();
        println!(
            "tcn: test MAE {:.3} deg after {} epochs ({:.0}s)",
            report.overall_mae,
            hist.len(),
            t0.elapsed().as_secs_f64()
        );
        for e in &hist {
            println!("  epoch {}: train_mse {:.2} val_mae {:.3}", e.epoch, e.train_mse, e.val_mae);
        }
    }
}
