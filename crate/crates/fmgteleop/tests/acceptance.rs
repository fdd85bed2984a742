//! Acceptance gate: one test per release criterion, each printing a
//! `criterion N: PASS` line (run with `--nocapture` to see them).
//!
//! The quantitative criteria run against the seeded synthetic oracle
//! (generator seed 7, 12 training sessions x 3000 active frames, 3 test
//! sessions). The expensive fixture - training the spatio-temporal model
//! plus the two instantaneous baselines - is built once and shared; the
//! training schedule is sized for a two-core desktop budget.

use std::sync::LazyLock;
use std::time::Instant;

use fmgteleop::models::{
    grad_check_model, load_checkpoint, save_checkpoint, ArchDims, Architecture, Model, ModelSpec,
};
use fmgteleop::nn::{ops, Tensor};
use fmgteleop::retarget::{rate_limit, retarget, RobotHandConfig, DIP_PIP_RATIO};
use fmgteleop::signal::{
    calibrate, compute_baseline, flatten_spatial, load_session, make_windows, reshape_spatial,
    save_session, CalibratedFrame, FmgFrame, HandPose, SessionRecording, JOINT_COUNT,
    SENSOR_COUNT,
};
use fmgteleop::synth::{generate_session, make_user_variant, GeneratorConfig};
use fmgteleop::teleop::{
    decode_frame, encode_frame, run_offline, session_frames, Pipeline, ProtocolFrame,
};
use fmgteleop::train::{
    anova_oneway, evaluate, finetune, permutation_importance, train, tukey_hsd, EvalReport,
    FinetuneConfig, TrainConfig,
};

mod common;
use common::{
    max_abs_diff, naive_conv1d_causal, naive_conv2d, naive_conv2d_transposed, naive_dense,
    naive_lstm_cell, random_tensor,
};

const GENERATOR_SEED: u64 = 7;
const TRAIN_SESSIONS: usize = 12;
const FRAMES_PER_SESSION: usize = 3000;
const TEST_SESSIONS: usize = 3;
const H: usize = 60;

fn generator() -> GeneratorConfig {
    let mut g = GeneratorConfig::new(GENERATOR_SEED);
    g.n_sessions = TRAIN_SESSIONS;
    g.frames_per_session = FRAMES_PER_SESSION;
    g
}

fn sessions_for(config: &GeneratorConfig, range: std::ops::Range<usize>) -> Vec<SessionRecording> {
    range
        .map(|i| generate_session(config, i).unwrap().0)
        .collect()
}

/// Training schedule used for every model in the fixture: small batches and
/// a hot learning rate converge within the desktop budget.
fn fixture_train_config(h: usize, stride: usize) -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        batch_size: 64,
        max_epochs: 18,
        patience: 8,
        noise_sigma: 2.0,
        seed: GENERATOR_SEED,
        val_fraction: 0.25,
        h,
        stride,
        lr_decay: 0.88,
    }
}

struct Fixture {
    config: GeneratorConfig,
    test_sessions: Vec<SessionRecording>,
    tcn: Model<f32>,
    tcn_report: EvalReport,
    fcnn_report: EvalReport,
    cnn_report: EvalReport,
}

static FIXTURE: LazyLock<Fixture> = LazyLock::new(|| {
    let config = generator();
    let train_sessions = sessions_for(&config, 0..TRAIN_SESSIONS);
    let test_sessions = sessions_for(&config, 100..100 + TEST_SESSIONS);

    // The spatio-temporal model trains on one thread while both
    // instantaneous baselines share the other.
    let (tcn, tcn_report, fcnn_report, cnn_report) = std::thread::scope(|scope| {
        let tcn_handle = scope.spawn(|| {
            let spec = ModelSpec::new(Architecture::Tcn, GENERATOR_SEED).with_h(H);
            let model = Model::<f32>::build(spec).unwrap();
            let (trained, _) = train(model, &train_sessions, &fixture_train_config(H, 6)).unwrap();
            let report = evaluate(&trained, &test_sessions, H).unwrap();
            (trained, report)
        });
        let inst_handle = scope.spawn(|| {
            let cfg = fixture_train_config(1, 2);
            let fcnn = Model::<f32>::build(ModelSpec::new(Architecture::Fcnn, GENERATOR_SEED))
                .unwrap();
            let (fcnn, _) = train(fcnn, &train_sessions, &cfg).unwrap();
            let fcnn_report = evaluate(&fcnn, &test_sessions, 1).unwrap();
            let cnn =
                Model::<f32>::build(ModelSpec::new(Architecture::Cnn, GENERATOR_SEED)).unwrap();
            let (cnn, _) = train(cnn, &train_sessions, &cfg).unwrap();
            let cnn_report = evaluate(&cnn, &test_sessions, 1).unwrap();
            (fcnn_report, cnn_report)
        });
        let (tcn, tcn_report) = tcn_handle.join().unwrap();
        let (fcnn_report, cnn_report) = inst_handle.join().unwrap();
        (tcn, tcn_report, fcnn_report, cnn_report)
    });

    Fixture {
        config,
        test_sessions,
        tcn,
        tcn_report,
        fcnn_report,
        cnn_report,
    }
});

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness for all five architectures
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let tolerance = 1e-4;
    for arch in Architecture::ALL {
        let h = if arch.is_sequence() { 6 } else { 1 };
        let spec = ModelSpec::new(arch, 40 + arch.tag() as u64)
            .with_h(h)
            .with_dims(ArchDims::shrunken());
        let model = Model::<f64>::build(spec.clone()).unwrap();

        let input_shape: Vec<usize> = match arch {
            Architecture::Tcn => vec![2, h, 4, 7],
            Architecture::Lstm => vec![2, h, SENSOR_COUNT],
            Architecture::Cnn => vec![2, 1, 4, 7],
            Architecture::Fcnn | Architecture::Fcnn5 => vec![2, SENSOR_COUNT],
        };
        let mut input = random_tensor(&input_shape, 7 + arch.tag() as u64);
        for v in input.data_mut() {
            *v *= 15.0; // calibrated-signal scale
        }
        let mut target = Tensor::<f64>::zeros(&[2, JOINT_COUNT]);
        for (i, v) in target.data_mut().iter_mut().enumerate() {
            *v = 20.0 + 3.0 * i as f64;
        }

        let report = grad_check_model(&model, &input, &target, tolerance).unwrap();
        assert!(
            report.passed(),
            "criterion 1: FAIL for {}: {report}",
            arch.name()
        );
        println!("  {}: {report}", arch.name());
    }
    println!(
        "criterion 1: PASS - reverse-mode gradients of all five architectures match central \
         finite differences (rel err < {tolerance:.0e}, {:.0}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: operator oracles and causality
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_operator_oracles() {
    let started = Instant::now();
    let tol = 1e-12;
    let cases = 120;

    for case in 0..cases {
        let seed = 1000 + case;

        let x = random_tensor(&[3, 5], seed);
        let w = random_tensor(&[4, 5], seed + 1);
        let b = random_tensor(&[4], seed + 2);
        let got = ops::dense_forward(&x, &w, Some(&b)).unwrap();
        assert!(max_abs_diff(&got, &naive_dense(&x, &w, &b)) <= tol, "dense case {case}");

        let x = random_tensor(&[2, 2, 4, 7], seed + 3);
        let k = random_tensor(&[3, 2, 3, 3], seed + 4);
        let b = random_tensor(&[3], seed + 5);
        let pad = ((case % 2) as usize, ((case / 2) % 2) as usize);
        let got = ops::conv2d_forward(&x, &k, &b, pad, (1, 1)).unwrap();
        assert!(
            max_abs_diff(&got, &naive_conv2d(&x, &k, &b, pad, (1, 1))) <= tol,
            "conv2d case {case}"
        );

        let x = random_tensor(&[2, 3, 4, 7], seed + 6);
        let k = random_tensor(&[3, 1, 1, 3], seed + 7);
        let b = random_tensor(&[1], seed + 8);
        let got = ops::conv2d_transposed_forward(&x, &k, &b, (2, 1), (0, 1)).unwrap();
        assert!(
            max_abs_diff(&got, &naive_conv2d_transposed(&x, &k, &b, (2, 1), (0, 1))) <= tol,
            "conv2d_transposed case {case}"
        );

        let d = 1 + (case as usize % 4);
        let x = random_tensor(&[2, 3, 13], seed + 9);
        let k = random_tensor(&[2, 3, 4], seed + 10);
        let b = random_tensor(&[2], seed + 11);
        let got = ops::conv1d_causal_forward(&x, &k, &b, d).unwrap();
        assert!(
            max_abs_diff(&got, &naive_conv1d_causal(&x, &k, &b, d)) <= tol,
            "conv1d case {case}"
        );

        // causality: bumping the future never changes the past
        let t_edit = 1 + (case as usize % 12);
        let mut edited = x.clone();
        for c in 0..3 {
            for t in t_edit..13 {
                edited.data_mut()[c * 13 + t] += 1.5;
            }
        }
        let moved = ops::conv1d_causal_forward(&edited, &k, &b, d).unwrap();
        for co in 0..2 {
            for t in 0..t_edit {
                assert_eq!(
                    got.data()[co * 13 + t],
                    moved.data()[co * 13 + t],
                    "causality violated at case {case}, t {t}"
                );
            }
        }

        // adjoint identity: <conv(x), y> = <x, convT(y)> for matched configs
        let x = random_tensor(&[1, 2, 4, 7], seed + 12);
        let k = random_tensor(&[3, 2, 3, 3], seed + 13);
        let y = random_tensor(&[1, 3, 4, 7], seed + 14);
        let zero3 = Tensor::zeros(&[3]);
        let zero2 = Tensor::zeros(&[2]);
        let cx = ops::conv2d_forward(&x, &k, &zero3, (1, 1), (1, 1)).unwrap();
        let cty = ops::conv2d_transposed_forward(&y, &k, &zero2, (1, 1), (1, 1)).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(cty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10, "adjoint case {case}: {lhs} vs {rhs}");

        // LSTM cell against the scalar reference
        let x = random_tensor(&[2, 3], seed + 15);
        let h0 = random_tensor(&[2, 4], seed + 16);
        let c0 = random_tensor(&[2, 4], seed + 17);
        let w_ih = random_tensor(&[16, 3], seed + 18);
        let w_hh = random_tensor(&[16, 4], seed + 19);
        let bias = random_tensor(&[16], seed + 20);
        let mut g = fmgteleop::nn::Graph::new();
        let xn = g.leaf(x.clone());
        let hn = g.leaf(h0.clone());
        let cn = g.leaf(c0.clone());
        let vars = fmgteleop::nn::LstmCellVars {
            w_ih: g.leaf(w_ih.clone()),
            w_hh: g.leaf(w_hh.clone()),
            bias: g.leaf(bias.clone()),
        };
        let (h1, c1) = fmgteleop::nn::lstm_cell(&mut g, xn, hn, cn, &vars).unwrap();
        for row in 0..2 {
            let (h_ref, c_ref) = naive_lstm_cell(
                &x.data()[row * 3..(row + 1) * 3],
                &h0.data()[row * 4..(row + 1) * 4],
                &c0.data()[row * 4..(row + 1) * 4],
                &w_ih,
                &w_hh,
                &bias,
            );
            for u in 0..4 {
                assert!((g.value(h1).data()[row * 4 + u] - h_ref[u]).abs() <= tol);
                assert!((g.value(c1).data()[row * 4 + u] - c_ref[u]).abs() <= tol);
            }
        }
    }
    println!(
        "criterion 2: PASS - dense/conv2d/conv2d_transposed/conv1d/lstm match direct summation \
         (<= 1e-12, {cases} cases each), causality and adjoint identities hold ({:.0}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: end-to-end synthetic accuracy and benchmark ordering
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_end_to_end_accuracy() {
    let f = &*FIXTURE;
    let tcn = f.tcn_report.overall_mae;
    let fcnn = f.fcnn_report.overall_mae;
    let cnn = f.cnn_report.overall_mae;
    assert!(tcn <= 5.0, "criterion 3: FAIL - TCN MAE {tcn:.3} > 5.0 deg");
    assert!(
        tcn <= 0.8 * fcnn,
        "criterion 3: FAIL - TCN {tcn:.3} > 0.8 x FC-NN {fcnn:.3}"
    );
    assert!(tcn < cnn, "criterion 3: FAIL - TCN {tcn:.3} >= CNN {cnn:.3}");
    println!(
        "criterion 3: PASS - test MAE: tcn {tcn:.3}, fcnn {fcnn:.3}, cnn {cnn:.3} deg \
         (tcn <= 5.0, tcn <= 0.8*fcnn, tcn < cnn)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: ANOVA and Tukey
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_statistics() {
    let groups = vec![
        vec![1.0, 2.0, 3.0],
        vec![2.0, 3.0, 4.0],
        vec![3.0, 4.0, 5.0],
    ];
    let (f_stat, p) = anova_oneway(&groups).unwrap();
    assert!((f_stat - 3.0).abs() <= 1e-9, "F = {f_stat}");
    assert!((p - 0.125).abs() <= 1e-3, "p = {p}");

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let near_normal = |rng: &mut rand_chacha::ChaCha8Rng, mu: f64| -> Vec<f64> {
        (0..50)
            .map(|_| {
                // sum of uniforms: close enough to N(mu, 1)
                let s: f64 = (0..12).map(|_| rng.random_range(0.0..1.0)).sum();
                mu + (s - 6.0)
            })
            .collect()
    };
    let a = near_normal(&mut rng, 0.0);
    let b = near_normal(&mut rng, 10.0);
    let separated = tukey_hsd(&[a, b], 0.05).unwrap();
    assert!(separated.significant[0][1], "N(0,1) vs N(10,1) must flag");

    let identical = tukey_hsd(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]], 0.05).unwrap();
    assert_eq!(identical.diffs[0][1], 0.0);
    assert!(!identical.significant[0][1]);

    println!(
        "criterion 4: PASS - F = {f_stat:.12} (3.0 +- 1e-9), p = {p:.6} (0.125 +- 1e-3), \
         Tukey flags separated groups and clears identical ones"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: permutation feature importance structure
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_feature_importance() {
    let started = Instant::now();
    let f = &*FIXTURE;
    let scores = permutation_importance(&f.tcn, &f.test_sessions, 1, 55, 10).unwrap();

    let informative = &f.config.informative_sensors;
    let min_informative = informative
        .iter()
        .map(|&s| scores[s - 1])
        .fold(f64::INFINITY, f64::min);
    let max_uninformative = (1..=SENSOR_COUNT)
        .filter(|s| !informative.contains(s))
        .map(|s| scores[s - 1])
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        min_informative > max_uninformative,
        "criterion 5: FAIL - min informative {min_informative:.3} <= max uninformative {max_uninformative:.3}\nscores: {scores:?}"
    );
    for s in 1..=SENSOR_COUNT {
        if !informative.contains(&s) {
            assert!(
                scores[s - 1].abs() < 2.0,
                "criterion 5: FAIL - uninformative sensor {s} scored {:.3} pp",
                scores[s - 1]
            );
        }
    }
    println!(
        "criterion 5: PASS - importance separates the generator's coupling support: \
         min informative {min_informative:.2}% > max uninformative {max_uninformative:.2}%, \
         all uninformative within +-2pp ({:.0}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: transfer gap and fine-tune recovery
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_transfer_finetune() {
    let started = Instant::now();
    let f = &*FIXTURE;
    let same_user = f.tcn_report.overall_mae;

    let variant = make_user_variant(&f.config, 1);
    let variant_test = sessions_for(&variant, 100..100 + TEST_SESSIONS);
    let zero_shot = evaluate(&f.tcn, &variant_test, H).unwrap().overall_mae;
    assert!(
        zero_shot >= 1.3 * same_user,
        "criterion 6: FAIL - zero-shot {zero_shot:.3} < 1.3 x same-user {same_user:.3}"
    );

    let total_training_frames = TRAIN_SESSIONS * FRAMES_PER_SESSION;
    let budgets = [0.01, 0.02, 0.05];
    let mut maes = Vec::new();
    for &budget in &budgets {
        let frames = (budget * total_training_frames as f64).round() as usize;
        let mut tune_config = variant.clone();
        tune_config.frames_per_session = frames;
        let tune_sessions = sessions_for(&tune_config, 0..1);
        let tuned = finetune(
            f.tcn.clone(),
            &tune_sessions,
            &FinetuneConfig {
                seed: GENERATOR_SEED,
                ..FinetuneConfig::default()
            },
        )
        .unwrap();
        let mae = evaluate(&tuned, &variant_test, H).unwrap().overall_mae;
        maes.push((budget, frames, mae));
    }

    let gap = zero_shot - same_user;
    let recovered = (zero_shot - maes[2].2) / gap;
    assert!(
        recovered >= 0.5,
        "criterion 6: FAIL - 5% budget recovered {:.0}% of the gap (zero-shot {zero_shot:.3}, \
         same-user {same_user:.3}, tuned {:.3})",
        recovered * 100.0,
        maes[2].2
    );
    // monotone non-decreasing recovery within 1 MAE-point of noise
    assert!(
        maes[1].2 <= maes[0].2 + 1.0,
        "criterion 6: FAIL - 2% budget ({:.3}) worse than 1% ({:.3}) beyond tolerance",
        maes[1].2,
        maes[0].2
    );
    assert!(
        maes[2].2 <= maes[1].2 + 1.0,
        "criterion 6: FAIL - 5% budget ({:.3}) worse than 2% ({:.3}) beyond tolerance",
        maes[2].2,
        maes[1].2
    );
    println!(
        "criterion 6: PASS - same-user {same_user:.3}, zero-shot {zero_shot:.3} \
         (+{:.0}%), budgets 1/2/5% -> {:.3}/{:.3}/{:.3} deg, 5% recovers {:.0}% of the gap \
         ({:.0}s)",
        (zero_shot / same_user - 1.0) * 100.0,
        maes[0].2,
        maes[1].2,
        maes[2].2,
        recovered * 100.0,
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: protocol round trips, online/offline equivalence, latency
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_protocol_and_pipeline() {
    let started = Instant::now();

    // Byte-exact round trips for every frame type over seeded random payloads.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let ts: u64 = rng.random();
        let frame = match case % 6 {
            0 => {
                let mut values = [0.0f32; SENSOR_COUNT];
                for v in values.iter_mut() {
                    *v = rng.random_range(0.0..1023.0);
                }
                ProtocolFrame::Sensor {
                    timestamp_us: ts,
                    values,
                }
            }
            1 => {
                let mut angles_deg = [0.0f32; JOINT_COUNT];
                for v in angles_deg.iter_mut() {
                    *v = rng.random_range(0.0..120.0);
                }
                ProtocolFrame::Pose {
                    timestamp_us: ts,
                    angles_deg,
                }
            }
            2 => ProtocolFrame::JointCmd {
                timestamp_us: ts,
                targets: (0..if case % 2 == 0 { 16 } else { 20 })
                    .map(|_| rng.random_range(0.0..110.0f32))
                    .collect(),
            },
            3 => ProtocolFrame::BaselineStart { timestamp_us: ts },
            4 => ProtocolFrame::BaselineEnd { timestamp_us: ts },
            _ => ProtocolFrame::Error {
                timestamp_us: ts,
                message: format!("case {case}"),
            },
        };
        let bytes = encode_frame(&frame);
        let (decoded, consumed) = decode_frame(&bytes).unwrap();
        assert_eq!(consumed, bytes.len());
        assert_eq!(decoded, frame);
        assert_eq!(bytes, encode_frame(&decoded));
    }

    // Online replay equals offline stride-1 prediction exactly (no drops,
    // offline mode), using the trained fixture model.
    let f = &*FIXTURE;
    let mut short = f.config.clone();
    short.frames_per_session = 400;
    let rec = sessions_for(&short, 300..301).remove(0);
    let baseline = rec.baseline().unwrap();
    let windows = make_windows(&rec, &baseline, H, 1).unwrap();
    let offline: Vec<[f32; JOINT_COUNT]> = windows
        .iter()
        .map(|w| {
            let p = f.tcn.predict_window(w).unwrap();
            let mut row = [0.0f32; JOINT_COUNT];
            for (o, &a) in row.iter_mut().zip(p.angles_deg()) {
                *o = a as f32;
            }
            row
        })
        .collect();
    let mut pipeline = Pipeline::new(f.tcn.clone(), RobotHandConfig::four_finger_default(), H)
        .unwrap()
        .with_pose_output();
    let emitted = run_offline(&mut pipeline, session_frames(&rec)).unwrap();
    let online: Vec<[f32; JOINT_COUNT]> = emitted
        .iter()
        .filter_map(|fr| match fr {
            ProtocolFrame::Pose { angles_deg, .. } => Some(*angles_deg),
            _ => None,
        })
        .collect();
    assert_eq!(online.len(), offline.len());
    for (a, b) in online.iter().zip(&offline) {
        assert_eq!(a, b, "online/offline prediction mismatch");
    }
    let stats = pipeline.stats();
    assert_eq!(
        stats.inferences + stats.dropped + stats.fill_frames + stats.baseline_frames,
        stats.frames
    );

    // Realtime pacing: a 33 Hz replay through the realtime server must hold
    // p99 per-frame processing under the 30 ms frame budget with no drops
    // required for this input rate.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let model = f.tcn.clone();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        stream.set_nodelay(true).ok();
        let mut pipeline =
            Pipeline::new(model, RobotHandConfig::four_finger_default(), H).unwrap();
        fmgteleop::teleop::serve_connection(stream, &mut pipeline, true).unwrap()
    });
    let mut rt = f.config.clone();
    rt.frames_per_session = 330 - rt.baseline_frames;
    let rt_session = sessions_for(&rt, 310..311).remove(0);
    let client = std::net::TcpStream::connect(addr).unwrap();
    client.set_nodelay(true).ok();
    let mut writer = client.try_clone().unwrap();
    let drain = std::thread::spawn(move || {
        use std::io::Read;
        let mut sink = client;
        let mut buf = [0u8; 4096];
        while let Ok(n) = sink.read(&mut buf) {
            if n == 0 {
                break;
            }
        }
    });
    fmgteleop::teleop::replay_to_writer(&mut writer, &rt_session, 33.0, true).unwrap();
    writer.shutdown(std::net::Shutdown::Write).ok();
    let rt_stats = server.join().unwrap();
    drain.join().unwrap();
    assert!(
        (rt_stats.input_rate_hz - 33.0).abs() <= 2.0,
        "achieved input rate {:.2} Hz not ~33 Hz",
        rt_stats.input_rate_hz
    );
    assert!(
        rt_stats.process_us_p99 < 30_000,
        "p99 per-frame processing {} us >= 30 ms",
        rt_stats.process_us_p99
    );

    // Standalone inference throughput, reported for reference only.
    let one = {
        let w = &windows[0];
        let mut t = Tensor::<f32>::zeros(&[1, H, 4, 7]);
        for (ti, frame) in w.frames.iter().enumerate() {
            for r in 0..4 {
                for c in 0..7 {
                    t.data_mut()[(ti * 4 + r) * 7 + c] = frame.at(r, c) as f32;
                }
            }
        }
        t
    };
    let bench_start = Instant::now();
    let mut n = 0u64;
    while bench_start.elapsed().as_secs_f64() < 2.0 {
        let _ = f.tcn.predict_batch(one.clone()).unwrap();
        n += 1;
    }
    let hz = n as f64 / bench_start.elapsed().as_secs_f64();

    println!(
        "criterion 7: PASS - byte-exact round trips (200 frames), online == offline exactly \
         ({} predictions), realtime 33 Hz sustained (rate {:.2} Hz, p99 {:.2} ms, dropped {}); \
         standalone inference throughput {hz:.0} Hz (report only; ~7700 Hz cited on lab \
         hardware) ({:.0}s)",
        offline.len(),
        rt_stats.input_rate_hz,
        rt_stats.process_us_p99 as f64 / 1e3,
        rt_stats.dropped,
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: domain invariants
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_domain_invariants() {
    // DIP/PIP synergy is exactly 2/3 on unclamped outputs; four-finger
    // commands ignore the little finger.
    let config = RobotHandConfig::four_finger_default();
    for pip in [0.0, 18.0, 45.0, 90.0] {
        let mut angles = [0.0; JOINT_COUNT];
        angles[3] = pip;
        let cmd = retarget(&HandPose::new(angles).unwrap(), &config);
        assert_eq!(cmd.finger_joint(1, 2), DIP_PIP_RATIO * pip);
    }
    let mut a = [15.0; JOINT_COUNT];
    let base = retarget(&HandPose::new(a).unwrap(), &config);
    a[8] = 110.0;
    a[9] = 110.0;
    let moved = retarget(&HandPose::new(a).unwrap(), &config);
    assert_eq!(base.targets, moved.targets);
    // rate limiting respects the envelope
    let next = retarget(&HandPose::new([90.0; JOINT_COUNT]).unwrap(), &config);
    let limited = rate_limit(&base, &next, 0.03, &config).unwrap();
    for (l, b) in limited.targets.iter().zip(&base.targets) {
        assert!((l - b).abs() <= config.max_speed_deg_s * 0.03 + 1e-12);
    }

    // calibrate/reshape bijection and exact inversion at stored precision
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let mut values = [0u16; SENSOR_COUNT];
        for v in values.iter_mut() {
            *v = rng.random_range(0..=1023);
        }
        let frame = FmgFrame::new(0, values).unwrap();
        let baseline_frames: Vec<FmgFrame> = (0..7)
            .map(|i| {
                let mut v = [0u16; SENSOR_COUNT];
                for x in v.iter_mut() {
                    *x = rng.random_range(0..=1023);
                }
                FmgFrame::new(i, v).unwrap()
            })
            .collect();
        let baseline = compute_baseline(&baseline_frames).unwrap();
        let cal = calibrate(&frame, &baseline);
        for (i, &c) in cal.values.iter().enumerate() {
            assert_eq!(c + baseline.values()[i], frame.values()[i] as f64);
        }
        let spatial = reshape_spatial(&cal);
        assert_eq!(flatten_spatial(&spatial), cal.values);
    }
    // spot layout pins
    let mut values = [0.0f64; SENSOR_COUNT];
    values[0] = 1.0;
    values[7] = 2.0;
    values[14] = 3.0;
    values[27] = 4.0;
    let sp = reshape_spatial(&CalibratedFrame {
        timestamp_us: 0,
        values,
    });
    assert_eq!((sp.at(0, 0), sp.at(1, 0), sp.at(2, 0), sp.at(3, 6)), (1.0, 2.0, 3.0, 4.0));

    // window count formula
    let mut gen_small = GeneratorConfig::new(1);
    gen_small.baseline_frames = 20;
    for n in [59usize, 60, 100, 250] {
        gen_small.frames_per_session = n;
        let rec = generate_session(&gen_small, 0).unwrap().0;
        let b = rec.baseline().unwrap();
        let w = make_windows(&rec, &b, 60, 1).unwrap();
        assert_eq!(w.len(), n.saturating_sub(60) + usize::from(n >= 60));
    }

    // session CSV and checkpoint round-trip fixed points
    let dir = tempfile::tempdir().unwrap();
    let mut gen_rt = GeneratorConfig::new(2);
    gen_rt.frames_per_session = 80;
    gen_rt.baseline_frames = 12;
    let rec = generate_session(&gen_rt, 3).unwrap().0;
    let p1 = dir.path().join(format!("{}.csv", rec.session_id));
    save_session(&rec, &p1).unwrap();
    let loaded = load_session(&p1).unwrap();
    assert_eq!(loaded, rec);
    let p2 = dir.path().join(format!("{}_again.csv", rec.session_id));
    save_session(&loaded, &p2).unwrap();
    assert_eq!(
        std::fs::read_to_string(&p1).unwrap().replace(&rec.session_id, ""),
        std::fs::read_to_string(&p2).unwrap().replace(&rec.session_id, "")
    );

    let model = Model::<f32>::build(ModelSpec::new(Architecture::Cnn, 5)).unwrap();
    let c1 = dir.path().join("m.ckpt");
    save_checkpoint(&model, &c1).unwrap();
    let loaded = load_checkpoint(&c1).unwrap();
    assert!(loaded.state_eq(&model));
    let c2 = dir.path().join("m2.ckpt");
    save_checkpoint(&loaded, &c2).unwrap();
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());

    println!(
        "criterion 8: PASS - synergy ratio exact, little-finger independence, calibration \
         bijection, window-count formula, CSV and checkpoint round trips are fixed points"
    );
}
