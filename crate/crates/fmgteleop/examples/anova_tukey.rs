//! One-way ANOVA and Tukey HSD over per-sample error groups.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fmgteleop::train::{anova_oneway, tukey_hsd};

fn main() {
    // Three synthetic "model error" populations: two similar, one better.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draw = |rng: &mut ChaCha8Rng, center: f64| -> Vec<f64> {
        (0..200).map(|_| center + rng.random_range(-3.0..3.0)).collect()
    };
    let groups = vec![
        draw(&mut rng, 13.6), // plain dense net
        draw(&mut rng, 13.3), // recurrent net
        draw(&mut rng, 9.8),  // spatio-temporal net
    ];

    let (f, p) = anova_oneway(&groups).unwrap();
    println!("ANOVA: F = {f:.1}, p = {p:.2e}");

    let tukey = tukey_hsd(&groups, 0.05).unwrap();
    println!("Tukey q_critical = {:.3} (alpha 0.05)", tukey.q_critical);
    let names = ["dense", "recurrent", "spatio-temporal"];
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            println!(
                "{:<16} vs {:<16} diff {:>6.2}  significant: {}",
                names[i], names[j], tukey.diffs[i][j], tukey.significant[i][j]
            );
        }
    }
}
