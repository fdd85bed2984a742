//! End-to-end checks of the command-line interface: exit codes, the
//! synth -> train -> eval workflow, and the replay -> serve loopback.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fmgteleop"))
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["synth", "--no-such-option"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    let out = bin()
        .args([
            "train",
            "--model",
            "fcnn",
            "--data",
            dir.path().join("empty").to_str().unwrap(),
            "--out",
            dir.path().join("x.ckpt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.cfg");
    std::fs::write(&cfg, "seed = 1\nwarp_drive = 9\n").unwrap();
    let out = bin()
        .args([
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_drive"));
}

fn synth(dir: &Path, sessions: usize, frames: usize, seed: u64) {
    let out = bin()
        .args([
            "synth",
            "--out",
            dir.to_str().unwrap(),
            "--sessions",
            &sessions.to_string(),
            "--frames",
            &frames.to_string(),
            "--seed",
            &seed.to_string(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 3, 250, 5);
    assert_eq!(
        std::fs::read_dir(&data)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
            .count(),
        3
    );

    let ckpt = dir.path().join("fcnn.ckpt");
    let out = bin()
        .args([
            "train",
            "--model",
            "fcnn",
            "--data",
            data.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--epochs",
            "3",
            "--h",
            "1",
            "--stride",
            "2",
            "--seed",
            "5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    assert!(dir.path().join("fcnn.history.csv").exists());

    let report_dir = dir.path().join("report");
    let out = bin()
        .args([
            "eval",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            report_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("overall"));
    let csv = std::fs::read_to_string(report_dir.join("eval.csv")).unwrap();
    assert!(csv.starts_with("model,joint,mae_deg,std_deg"));
    assert_eq!(csv.lines().count(), 12); // header + 10 joints + overall
}

#[test]
fn replay_into_serve_matches_offline_window_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 1, 80, 9);
    let session_path = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "csv"))
        .unwrap();

    // A small untrained sequence model keeps the loopback fast.
    let ckpt = dir.path().join("tcn.ckpt");
    let out = bin()
        .args([
            "train",
            "--model",
            "tcn",
            "--data",
            data.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--epochs",
            "1",
            "--h",
            "12",
            "--stride",
            "8",
            "--batch-size",
            "16",
            "--seed",
            "9",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Offline reference: predict over stride-1 windows directly.
    let model = fmgteleop::models::load_checkpoint(&ckpt).unwrap();
    let rec = fmgteleop::signal::load_session(&session_path).unwrap();
    let baseline = rec.baseline().unwrap();
    let windows = fmgteleop::signal::make_windows(&rec, &baseline, 12, 1).unwrap();
    let offline: Vec<Vec<f32>> = windows
        .iter()
        .map(|w| {
            model
                .predict_window(w)
                .unwrap()
                .angles_deg()
                .iter()
                .map(|&a| a as f32)
                .collect()
        })
        .collect();

    // Serve on a random free port, then replay into it.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener); // free the port for the serve process

    let mut serve = bin()
        .args([
            "serve",
            "--ckpt",
            ckpt.to_str().unwrap(),
            "--listen",
            &addr,
            "--emit-poses",
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // The server accepts exactly one connection, so probing the port would
    // consume it; retry the replay until the listener is up instead.
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
    let out = loop {
        let out = bin()
            .args([
                "replay",
                "--session",
                session_path.to_str().unwrap(),
                "--connect",
                &addr,
            ])
            .output()
            .unwrap();
        if out.status.success() {
            break out;
        }
        let log = String::from_utf8_lossy(&out.stderr).to_string();
        assert!(log.contains("cannot connect"), "{log}");
        assert!(std::time::Instant::now() < deadline, "serve never came up");
        std::thread::sleep(std::time::Duration::from_millis(100));
    };
    let replay_log = String::from_utf8_lossy(&out.stderr);
    assert!(
        replay_log.contains(&format!("received {} joint commands", offline.len())),
        "{replay_log}"
    );

    let status = serve.wait().unwrap();
    assert!(status.success());
    let mut serve_log = String::new();
    serve.stderr.unwrap().read_to_string(&mut serve_log).unwrap();
    assert!(
        serve_log.contains(&format!("inferences={}", offline.len())),
        "{serve_log}"
    );
    assert!(serve_log.contains("dropped=0"), "{serve_log}");
}
