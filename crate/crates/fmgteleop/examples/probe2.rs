//! Ridge-regression oracle on the synthetic task: instantaneous features vs
//! stacked temporal lags. Bounds what any regressor can achieve.

use fmgteleop::signal::{JOINT_COUNT, SENSOR_COUNT};
use fmgteleop::synth::{generate_session, GeneratorConfig};

fn calibrated(rec: &fmgteleop::signal::SessionRecording) -> (Vec<[f64; 28]>, Vec<[f64; 10]>) {
    let b = rec.baseline().unwrap();
    let mut xs = Vec::new();
    let mut qs = Vec::new();
    for (f, q) in rec.active_rows() {
        xs.push(fmgteleop::signal::calibrate(f, &b).values);
        qs.push(*q.angles_deg());
    }
    (xs, qs)
}

/// Solve (A^T A + l I) w = A^T y by Cholesky.
fn ridge(a: &[Vec<f64>], y: &[Vec<f64>], lambda: f64) -> Vec<Vec<f64>> {
    let n = a.len();
    let d = a[0].len();
    let k = y[0].len();
    let mut ata = vec![vec![0.0; d]; d];
    let mut aty = vec![vec![0.0; k]; d];
    for row in 0..n {
        for i in 0..d {
            let ai = a[row][i];
            if ai == 0.0 {
                continue;
            }
            for j in i..d {
                ata[i][j] += ai * a[row][j];
            }
            for t in 0..k {
                aty[i][t] += ai * y[row][t];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            ata[i][j] = ata[j][i];
        }
        ata[i][i] += lambda;
    }
    // Cholesky
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = ata[i][j];
            for p in 0..j {
                s -= l[i][p] * l[j][p];
            }
            if i == j {
                l[i][i] = s.max(1e-12).sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // solve per output
    let mut w = vec![vec![0.0; k]; d];
    for t in 0..k {
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut s = aty[i][t];
            for p in 0..i {
                s -= l[i][p] * z[p];
            }
            z[i] = s / l[i][i];
        }
        for i in (0..d).rev() {
            let mut s = z[i];
            for p in i + 1..d {
                s -= l[p][i] * w[p][t];
            }
            w[i][t] = s / l[i][i];
        }
    }
    w
}

fn features(xs: &[[f64; 28]], t: usize, lags: &[usize]) -> Vec<f64> {
    let mut f = Vec::with_capacity(lags.len() * SENSOR_COUNT + 1);
    f.push(1.0);
    for &lag in lags {
        let row = &xs[t - lag];
        f.extend_from_slice(row);
    }
    f
}

fn run(lags: &[usize], label: &str, train: &[(Vec<[f64; 28]>, Vec<[f64; 10]>)], test: &(Vec<[f64; 28]>, Vec<[f64; 10]>)) {
    let max_lag = *lags.iter().max().unwrap();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for (xs, qs) in train {
        for t in max_lag..xs.len() {
            a.push(features(xs, t, lags));
            y.push(qs[t].to_vec());
        }
    }
    let w = ridge(&a, &y, 10.0);
    let d = a[0].len();

    let (xs, qs) = test;
    let mut err_sum = 0.0;
    let mut count = 0usize;
    for t in max_lag..xs.len() {
        let f = features(xs, t, lags);
        for j in 0..JOINT_COUNT {
            let mut pred = 0.0;
            for i in 0..d {
                pred += f[i] * w[i][j];
            }
            err_sum += (pred - qs[t][j]).abs();
            count += 1;
        }
    }
    println!("{label}: ridge MAE {:.3} deg ({} features)", err_sum / count as f64, d);
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gamma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.006);
    let lag_alpha: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let noise: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8.0);

    let mut gen = GeneratorConfig::new(7);
    gen.frames_per_session = 3000;
    gen.gamma = gamma;
    gen.lag_alpha = lag_alpha;
    gen.noise_std = noise;
    println!("gamma={gamma} lag_alpha={lag_alpha} noise={noise}");
    let train: Vec<_> = (0..4)
        .map(|i| calibrated(&generate_session(&gen, i).unwrap().0))
        .collect();
    let test = calibrated(&generate_session(&gen, 100).unwrap().0);

    run(&[0], "instantaneous", &train, &test);
    run(&[0, 1, 2, 3, 4, 6, 9, 12, 18, 24, 36, 48, 59], "lagged (sparse taps)", &train, &test);
    let all: Vec<usize> = (0..60).collect();
    run(&all, "lagged (all 60 taps)", &train, &test);
}
