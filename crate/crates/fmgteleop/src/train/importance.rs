//! Permutation feature importance.
//!
//! For each sensor, its calibrated values are shuffled across all active
//! frames of the test set (at the frame level, before windowing, so the
//! permuted channel also loses temporal self-consistency), the mean error is
//! recomputed, and the score is the relative error increase in percent:
//! `E_i = (e_i - e) / e * 100`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::models::Model;
use crate::nn::Scalar;
use crate::signal::{SessionRecording, SENSOR_COUNT};

use super::{calibrate_sessions, eval::prediction_errors, window_refs, TrainError};

fn mix(seed: u64, repeat: usize, sensor: usize) -> u64 {
    let mut z = seed
        .wrapping_add((repeat as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((sensor as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sensor importance scores in percent, averaged over `repeats`
/// independent shuffles. `stride` thins the evaluation windows to keep the
/// 28-sensor sweep tractable; the same windows are used for the unpermuted
/// reference, so scores are internally consistent.
pub fn permutation_importance<T: Scalar>(
    model: &Model<T>,
    test_sessions: &[SessionRecording],
    repeats: usize,
    seed: u64,
    stride: usize,
) -> Result<[f64; SENSOR_COUNT], TrainError> {
    if repeats == 0 {
        return Err(TrainError::EmptyDataset("repeats must be >= 1".into()));
    }
    let calibrated = calibrate_sessions(test_sessions)?;
    let refs = window_refs(&calibrated, model.h(), stride.max(1));
    let base_errors = prediction_errors(model, &calibrated, &refs)?;
    let e = base_errors.iter().sum::<f64>() / base_errors.len() as f64;

    let mut scores = [0.0f64; SENSOR_COUNT];
    if e == 0.0 {
        return Ok(scores);
    }

    for repeat in 0..repeats {
        for sensor in 0..SENSOR_COUNT {
            // Pool the sensor's values across every active frame of every
            // session, shuffle once, and write them back in order.
            let mut pool: Vec<f64> = calibrated
                .iter()
                .flat_map(|s| s.frames.iter().map(|f| f[sensor]))
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, repeat, sensor));
            pool.shuffle(&mut rng);

            let mut permuted = calibrated.clone();
            let mut idx = 0;
            for sess in &mut permuted {
                for frame in &mut sess.frames {
                    frame[sensor] = pool[idx];
                    idx += 1;
                }
            }

            let errors = prediction_errors(model, &permuted, &refs)?;
            let e_i = errors.iter().sum::<f64>() / errors.len() as f64;
            scores[sensor] += (e_i - e) / e * 100.0;
        }
    }
    for s in scores.iter_mut() {
        *s /= repeats as f64;
    }
    Ok(scores)
}

/// Writes one `sensor,score_pct` row per sensor.
pub fn write_importance_csv(
    scores: &[f64; SENSOR_COUNT],
    path: &std::path::Path,
) -> Result<(), TrainError> {
    let mut out = String::from("sensor,score_pct\n");
    for (i, s) in scores.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, s));
    }
    std::fs::write(path, out).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}
