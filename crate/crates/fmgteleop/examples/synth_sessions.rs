//! Generate a few synthetic sessions and write them as session CSVs.

use fmgteleop::config::generator_to_kv;
use fmgteleop::signal::save_session;
use fmgteleop::synth::{generate_session, GeneratorConfig};

fn main() {
    let mut config = GeneratorConfig::new(42);
    config.n_sessions = 3;
    config.frames_per_session = 500;

    let dir = std::env::temp_dir().join("fmgteleop_synth_example");
    std::fs::create_dir_all(&dir).unwrap();

    for i in 0..config.n_sessions {
        let (session, ground_truth) = generate_session(&config, i).unwrap();
        let path = dir.join(format!("{}.csv", session.session_id));
        save_session(&session, &path).unwrap();
        let max_angle = ground_truth
            .iter()
            .flat_map(|q| q.iter().copied())
            .fold(0.0f64, f64::max);
        println!(
            "{}: {} rows ({} baseline), peak joint angle {:.1} deg",
            path.display(),
            session.len(),
            session.len() - ground_truth.len(),
            max_angle
        );
    }
    std::fs::write(dir.join("generator.cfg"), generator_to_kv(&config)).unwrap();
    println!("resolved generator config: {}", dir.join("generator.cfg").display());
}
