//! Per-joint evaluation and multi-model benchmarking.

use rayon::prelude::*;

use crate::models::{Model, ModelSpec};
use crate::nn::Scalar;
use crate::signal::{SessionRecording, JOINT_COUNT};

use super::{
    batch_tensors, calibrate_sessions, window_refs, CalibratedSession, TrainConfig, TrainError,
    WindowRef,
};

const EVAL_BATCH: usize = 256;

/// Per-joint and overall absolute-error statistics, with the pooled
/// per-sample errors retained for downstream significance tests.
#[derive(Clone, Debug)]
pub struct EvalReport {
    /// MAE per joint in pose order `(MCP_1, PIP_1, ..., MCP_5, PIP_5)`.
    pub per_joint_mae: [f64; JOINT_COUNT],
    pub per_joint_std: [f64; JOINT_COUNT],
    pub overall_mae: f64,
    pub overall_std: f64,
    /// `|prediction - label|` per (window, joint), window-major.
    pub per_sample_errors: Vec<f64>,
    pub n_windows: usize,
}

impl EvalReport {
    pub const JOINT_NAMES: [&'static str; JOINT_COUNT] = [
        "mcp1", "pip1", "mcp2", "pip2", "mcp3", "pip3", "mcp4", "pip4", "mcp5", "pip5",
    ];

    fn from_errors(per_sample_errors: Vec<f64>) -> Self {
        let n_windows = per_sample_errors.len() / JOINT_COUNT;
        let mut per_joint_mae = [0.0; JOINT_COUNT];
        let mut per_joint_std = [0.0; JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for w in 0..n_windows {
                let e = per_sample_errors[w * JOINT_COUNT + j];
                sum += e;
                sum_sq += e * e;
            }
            let mean = sum / n_windows as f64;
            per_joint_mae[j] = mean;
            per_joint_std[j] = (sum_sq / n_windows as f64 - mean * mean).max(0.0).sqrt();
        }
        let n = per_sample_errors.len() as f64;
        let overall_mae = per_sample_errors.iter().sum::<f64>() / n;
        let var = per_sample_errors
            .iter()
            .map(|e| (e - overall_mae) * (e - overall_mae))
            .sum::<f64>()
            / n;
        Self {
            per_joint_mae,
            per_joint_std,
            overall_mae,
            overall_std: var.sqrt(),
            per_sample_errors,
            n_windows,
        }
    }

    /// `(mae, std)` laid out as the 2x5 MCP/PIP-by-finger grid.
    pub fn grid(&self) -> [[(f64, f64); 5]; 2] {
        let mut g = [[(0.0, 0.0); 5]; 2];
        for finger in 0..5 {
            g[0][finger] = (self.per_joint_mae[finger * 2], self.per_joint_std[finger * 2]);
            g[1][finger] = (
                self.per_joint_mae[finger * 2 + 1],
                self.per_joint_std[finger * 2 + 1],
            );
        }
        g
    }
}

/// Clamped predictions over window refs; errors per (window, joint) in
/// window order. Batches fan out across threads and are merged in order.
pub(crate) fn prediction_errors<T: Scalar>(
    model: &Model<T>,
    sessions: &[CalibratedSession],
    refs: &[WindowRef],
) -> Result<Vec<f64>, TrainError> {
    if refs.is_empty() {
        return Err(TrainError::EmptyDataset("no evaluation windows".into()));
    }
    let arch = model.arch();
    let h = model.h();
    let batches: Vec<Vec<f64>> = refs
        .par_chunks(EVAL_BATCH)
        .map(|chunk| -> Result<Vec<f64>, TrainError> {
            let (input, targets) = batch_tensors::<T>(arch, h, sessions, chunk, None);
            let pred = model.predict_batch(input)?;
            let mut errors = Vec::with_capacity(chunk.len() * JOINT_COUNT);
            for i in 0..chunk.len() * JOINT_COUNT {
                errors.push((pred.data()[i].to_f64() - targets.data()[i].to_f64()).abs());
            }
            Ok(errors)
        })
        .collect::<Result<_, _>>()?;
    Ok(batches.concat())
}

/// Evaluates on stride-1 windows of length `h` over the test sessions.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    test_sessions: &[SessionRecording],
    h: usize,
) -> Result<EvalReport, TrainError> {
    if h != model.h() {
        return Err(TrainError::WindowLength {
            model_h: model.h(),
            got: h,
        });
    }
    let calibrated = calibrate_sessions(test_sessions)?;
    let refs = window_refs(&calibrated, h, 1);
    let errors = prediction_errors(model, &calibrated, &refs)?;
    Ok(EvalReport::from_errors(errors))
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub name: String,
    pub mae: f64,
    pub std: f64,
}

/// One trained-and-evaluated row per architecture, plus retained per-sample
/// errors for the significance tests.
#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
    pub per_model_errors: Vec<(String, Vec<f64>)>,
}

impl BenchmarkReport {
    pub fn row(&self, name: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table in descending error order.
    pub fn table(&self) -> String {
        let mut rows: Vec<&BenchRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.mae.partial_cmp(&a.mae).unwrap());
        let mut out = String::from("model      angle error mean +- std (deg)\n");
        for r in rows {
            out.push_str(&format!("{:<10} {:.2} +- {:.2}\n", r.name, r.mae, r.std));
        }
        out
    }
}

/// Trains every spec on the same sessions with the same train config and
/// evaluates each on the held-out test sessions. Architectures train on
/// separate threads; rows are merged in input order, and every row equals a
/// standalone `train` + `evaluate` with the same seeds.
pub fn benchmark(
    specs: &[ModelSpec],
    train_sessions: &[SessionRecording],
    test_sessions: &[SessionRecording],
    cfg: &TrainConfig,
) -> Result<BenchmarkReport, TrainError> {
    let results: Vec<Result<(String, EvalReport), TrainError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| {
                let spec = spec.clone();
                scope.spawn(move || -> Result<(String, EvalReport), TrainError> {
                    let model = Model::<f32>::build(spec.clone())?;
                    let mut cfg = cfg.clone();
                    cfg.h = spec.h;
                    let (trained, _) = super::train(model, train_sessions, &cfg)?;
                    let report = evaluate(&trained, test_sessions, spec.h)?;
                    Ok((spec.arch.name().to_string(), report))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("benchmark thread")).collect()
    });

    let mut rows = Vec::new();
    let mut per_model_errors = Vec::new();
    for r in results {
        let (name, report) = r?;
        rows.push(BenchRow {
            name: name.clone(),
            mae: report.overall_mae,
            std: report.overall_std,
        });
        per_model_errors.push((name, report.per_sample_errors));
    }
    Ok(BenchmarkReport {
        rows,
        per_model_errors,
    })
}

/// `model,joint,mae_deg,std_deg` rows: ten joints then an `overall` row.
pub fn write_eval_csv(
    report: &EvalReport,
    model_name: &str,
    path: &std::path::Path,
) -> Result<(), TrainError> {
    let mut out = String::from("model,joint,mae_deg,std_deg\n");
    for (j, name) in EvalReport::JOINT_NAMES.iter().enumerate() {
        out.push_str(&format!(
            "{model_name},{name},{},{}\n",
            report.per_joint_mae[j], report.per_joint_std[j]
        ));
    }
    out.push_str(&format!(
        "{model_name},overall,{},{}\n",
        report.overall_mae, report.overall_std
    ));
    std::fs::write(path, out).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One `model,joint,mae_deg,std_deg` overall row per benchmarked model.
pub fn write_benchmark_csv(
    report: &BenchmarkReport,
    path: &std::path::Path,
) -> Result<(), TrainError> {
    let mut out = String::from("model,joint,mae_deg,std_deg\n");
    for row in &report.rows {
        out.push_str(&format!("{},overall,{},{}\n", row.name, row.mae, row.std));
    }
    std::fs::write(path, out).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}
