//! Command-line entry point for the full workflow: synthetic data,
//! training, evaluation, benchmarking, feature importance, fine-tuning,
//! and the teleoperation serve/replay pair.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 runtime failure. Diagnostics go to stderr; machine-readable outputs
//! go to files only.

use std::io::Read;
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fmgteleop::config::{
    finetune_from_kv, generator_from_kv, generator_to_kv, hand_from_kv, train_from_kv,
    ConfigError, KvFile,
};
use fmgteleop::models::{
    load_checkpoint, save_checkpoint, Architecture, CheckpointError, Model, ModelError, ModelSpec,
};
use fmgteleop::retarget::RobotHandConfig;
use fmgteleop::signal::{load_session, save_session, SessionRecording, SignalError};
use fmgteleop::synth::{generate_session, GeneratorConfig, SynthError};
use fmgteleop::teleop::{
    replay_to_writer, serve_once, FrameDecoder, Pipeline, PipelineError, ProtocolFrame, ServeError,
};
use fmgteleop::train::{
    anova_oneway, benchmark, evaluate, finetune, permutation_importance, train, tukey_hsd,
    write_benchmark_csv, write_eval_csv, write_history_csv, write_importance_csv, FinetuneConfig,
    StatsError, TrainConfig, TrainError,
};

#[derive(Parser)]
#[command(name = "fmgteleop", version, about = "Forearm FMG to robot-hand teleoperation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic session CSVs with known ground truth.
    Synth {
        /// Generator config file (key = value).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for session CSVs and the resolved config.
        #[arg(long)]
        out: PathBuf,
        /// Number of sessions (overrides the config).
        #[arg(long)]
        sessions: Option<usize>,
        /// Generator seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Active frames per session (overrides the config).
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Train one model on a directory of session CSVs.
    Train {
        #[arg(long, value_parser = parse_arch)]
        model: Architecture,
        /// Directory of session CSVs.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path; history lands at <out>.history.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train_flags: TrainFlags,
    },
    /// Evaluate a checkpoint: per-joint error table.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Directory for the report CSV (stdout table otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and compare architectures, with ANOVA + Tukey significance.
    Bench {
        /// Training session directory.
        #[arg(long)]
        data: PathBuf,
        /// Held-out test session directory (default: last 20% of --data).
        #[arg(long)]
        test_data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated architectures.
        #[arg(long, default_value = "tcn,fcnn,fcnn5,cnn,lstm")]
        models: String,
        #[command(flatten)]
        train_flags: TrainFlags,
    },
    /// Permutation feature importance over the 28 sensors.
    Importance {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Window stride used to thin the evaluation sweep.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Output CSV path (default <data>/importance.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fine-tune a checkpoint on new-user sessions.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        /// New-user session directory.
        #[arg(long)]
        data: PathBuf,
        /// Fraction of the new-user frames to use (by prefix).
        #[arg(long, default_value_t = 0.05)]
        fraction: f64,
        /// Held-out new-user sessions for the budget curve.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        /// Tuned checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Fine-tune config file (lr, epochs, batch_size, stride, seed).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the streaming pipeline on one incoming protocol connection.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        /// Robot hand config file (4-finger defaults if omitted).
        #[arg(long)]
        hand: Option<PathBuf>,
        /// Listen address, e.g. 127.0.0.1:7733.
        #[arg(long)]
        listen: String,
        /// Freshest-wins threaded ingest instead of the deterministic
        /// synchronous loop.
        #[arg(long)]
        realtime: bool,
        /// Also emit predicted poses as POSE frames.
        #[arg(long)]
        emit_poses: bool,
    },
    /// Stream a session CSV to a serve endpoint.
    Replay {
        #[arg(long)]
        session: PathBuf,
        /// Connect address, e.g. 127.0.0.1:7733.
        #[arg(long)]
        connect: String,
        /// Pace sensor frames against the wall clock.
        #[arg(long)]
        realtime: bool,
        /// Frame rate for realtime pacing.
        #[arg(long, default_value_t = 33.0)]
        rate: f64,
    },
}

/// Training flags shared by `train` and `bench`; flags win over --config.
#[derive(Args)]
struct TrainFlags {
    /// Training config file (key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Window length for sequence models.
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Per-epoch multiplicative learning-rate decay.
    #[arg(long)]
    lr_decay: Option<f64>,
}

impl TrainFlags {
    fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => train_from_kv(&KvFile::from_path(path)?)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.noise_sigma {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.val_fraction {
            cfg.val_fraction = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.lr_decay {
            cfg.lr_decay = v;
        }
        Ok(cfg)
    }
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    Architecture::parse(s).ok_or_else(|| format!("unknown model {s:?} (tcn|fcnn|fcnn5|cnn|lstm)"))
}

enum CliError {
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        match e {
            SignalError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } | TrainError::Io { .. } => {
                CliError::Runtime(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Pipeline(p) => p.into(),
            ServeError::Io(io) => CliError::Runtime(io.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with success status;
            // everything else is a usage error.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Loads every `*.csv` in a directory, sorted by file name.
fn load_sessions(dir: &Path) -> Result<Vec<SessionRecording>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!(
            "no session CSVs in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| load_session(p).map_err(CliError::from))
        .collect()
}

fn total_active_frames(sessions: &[SessionRecording]) -> usize {
    sessions.iter().map(|s| s.active_count()).sum()
}

/// Prefix of the sessions holding about `frames` active frames.
fn take_frames(sessions: &[SessionRecording], frames: usize) -> Vec<SessionRecording> {
    let mut out = Vec::new();
    let mut left = frames;
    for s in sessions {
        if left == 0 {
            break;
        }
        out.push(s.clone());
        left = left.saturating_sub(s.active_count());
    }
    out
}

fn model_spec(arch: Architecture, h: usize, seed: u64) -> ModelSpec {
    let spec = ModelSpec::new(arch, seed);
    if arch.is_sequence() {
        spec.with_h(h)
    } else {
        spec
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            config,
            out,
            sessions,
            seed,
            frames,
        } => {
            let mut gen = match (&config, seed) {
                (Some(path), _) => {
                    let mut g = generator_from_kv(&KvFile::from_path(path)?)?;
                    if let Some(s) = seed {
                        // re-derive the seed-dependent fields for the new seed
                        let fresh = GeneratorConfig::new(s);
                        g.seed = s;
                        g.coupling = fresh.coupling;
                        g.rest_levels = fresh.rest_levels;
                    }
                    g
                }
                (None, s) => GeneratorConfig::new(s.unwrap_or(0)),
            };
            if let Some(n) = sessions {
                gen.n_sessions = n;
            }
            if let Some(f) = frames {
                gen.frames_per_session = f;
            }
            gen.validate()?;
            std::fs::create_dir_all(&out)?;
            for i in 0..gen.n_sessions {
                let (session, _) = generate_session(&gen, i)?;
                let path = out.join(format!("{}.csv", session.session_id));
                save_session(&session, &path)?;
            }
            std::fs::write(out.join("generator.cfg"), generator_to_kv(&gen))?;
            eprintln!(
                "wrote {} sessions x {} active frames to {}",
                gen.n_sessions,
                gen.frames_per_session,
                out.display()
            );
            Ok(())
        }

        Command::Train {
            model,
            data,
            out,
            train_flags,
        } => {
            let cfg = train_flags.resolve()?;
            let sessions = load_sessions(&data)?;
            let spec = model_spec(model, cfg.h, cfg.seed);
            let built = Model::<f32>::build(spec)?;
            let (trained, history) = train(built, &sessions, &cfg)?;
            save_checkpoint(&trained, &out)?;
            let history_path = out.with_extension("history.csv");
            write_history_csv(&history, &history_path)?;
            eprintln!(
                "trained {} for {} epochs; checkpoint {}, history {}",
                model.name(),
                history.len(),
                out.display(),
                history_path.display()
            );
            Ok(())
        }

        Command::Eval { ckpt, data, out } => {
            let model = load_checkpoint(&ckpt)?;
            let sessions = load_sessions(&data)?;
            let report = evaluate(&model, &sessions, model.h())?;
            println!("model: {} (H={})", model.arch().name(), model.h());
            println!("joint   mae (deg)   std (deg)");
            for (j, name) in fmgteleop::train::EvalReport::JOINT_NAMES.iter().enumerate() {
                println!(
                    "{name:<7} {:>9.3} {:>11.3}",
                    report.per_joint_mae[j], report.per_joint_std[j]
                );
            }
            println!(
                "overall {:>9.3} {:>11.3}  ({} windows)",
                report.overall_mae, report.overall_std, report.n_windows
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join("eval.csv");
                write_eval_csv(&report, model.arch().name(), &path)?;
                eprintln!("report written to {}", path.display());
            }
            Ok(())
        }

        Command::Bench {
            data,
            test_data,
            out,
            models,
            train_flags,
        } => {
            let cfg = train_flags.resolve()?;
            let archs: Vec<Architecture> = models
                .split(',')
                .map(|s| parse_arch(s.trim()).map_err(CliError::Data))
                .collect::<Result<_, _>>()?;
            let all = load_sessions(&data)?;
            let (train_sessions, test_sessions) = match &test_data {
                Some(dir) => (all, load_sessions(dir)?),
                None => {
                    let held = (all.len() / 5).max(1);
                    if all.len() <= held {
                        return Err(CliError::Data(
                            "not enough sessions to hold out a test split".into(),
                        ));
                    }
                    let split = all.len() - held;
                    (all[..split].to_vec(), all[split..].to_vec())
                }
            };
            let specs: Vec<ModelSpec> = archs
                .iter()
                .map(|&a| model_spec(a, cfg.h, cfg.seed))
                .collect();
            let report = benchmark(&specs, &train_sessions, &test_sessions, &cfg)?;
            print!("{}", report.table());

            std::fs::create_dir_all(&out)?;
            write_benchmark_csv(&report, &out.join("benchmark.csv"))?;

            let groups: Vec<Vec<f64>> = report
                .per_model_errors
                .iter()
                .map(|(_, e)| e.clone())
                .collect();
            let mut stats_text = String::new();
            if groups.len() >= 2 {
                let (f, p) = anova_oneway(&groups)?;
                stats_text.push_str(&format!("anova_f = {f}\nanova_p = {p}\n"));
                let tukey = tukey_hsd(&groups, 0.05)?;
                stats_text.push_str(&format!("tukey_q_critical = {}\n", tukey.q_critical));
                for i in 0..groups.len() {
                    for j in i + 1..groups.len() {
                        stats_text.push_str(&format!(
                            "tukey {} vs {}: diff = {:.4}, significant = {}\n",
                            report.per_model_errors[i].0,
                            report.per_model_errors[j].0,
                            tukey.diffs[i][j],
                            tukey.significant[i][j]
                        ));
                    }
                }
            }
            std::fs::write(out.join("anova_tukey.txt"), &stats_text)?;
            eprint!("{stats_text}");
            Ok(())
        }

        Command::Importance {
            ckpt,
            data,
            repeats,
            seed,
            stride,
            out,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let sessions = load_sessions(&data)?;
            let scores = permutation_importance(&model, &sessions, repeats, seed, stride)?;
            let path = out.unwrap_or_else(|| data.join("importance.csv"));
            write_importance_csv(&scores, &path)?;
            for (i, s) in scores.iter().enumerate() {
                println!("sensor {:>2}: {:>8.3} %", i + 1, s);
            }
            eprintln!("scores written to {}", path.display());
            Ok(())
        }

        Command::Finetune {
            ckpt,
            data,
            fraction,
            eval_data,
            out,
            config,
        } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(CliError::Data(format!(
                    "fraction must be in [0, 1], got {fraction}"
                )));
            }
            let cfg = match &config {
                Some(path) => finetune_from_kv(&KvFile::from_path(path)?)?,
                None => FinetuneConfig::default(),
            };
            let base = load_checkpoint(&ckpt)?;
            let sessions = load_sessions(&data)?;
            let total = total_active_frames(&sessions);

            if let Some(eval_dir) = &eval_data {
                let eval_sessions = load_sessions(eval_dir)?;
                let mut budgets: Vec<f64> = [0.01, 0.02, 0.05]
                    .into_iter()
                    .filter(|b| *b <= fraction)
                    .collect();
                if !budgets.contains(&fraction) {
                    budgets.push(fraction);
                }
                let mut csv = String::from("budget_fraction,frames,mae_deg\n");
                let zero_shot = evaluate(&base, &eval_sessions, base.h())?;
                csv.push_str(&format!("0,0,{}\n", zero_shot.overall_mae));
                for b in budgets {
                    let frames = (b * total as f64).round() as usize;
                    let subset = take_frames(&sessions, frames);
                    let tuned = finetune(base.clone(), &subset, &cfg)?;
                    let report = evaluate(&tuned, &eval_sessions, tuned.h())?;
                    csv.push_str(&format!("{b},{frames},{}\n", report.overall_mae));
                }
                let curve_path = out.with_extension("budget.csv");
                std::fs::write(&curve_path, csv)?;
                eprintln!("budget curve written to {}", curve_path.display());
            }

            let frames = (fraction * total as f64).round() as usize;
            let subset = take_frames(&sessions, frames);
            let tuned = finetune(base, &subset, &cfg)?;
            save_checkpoint(&tuned, &out)?;
            eprintln!(
                "fine-tuned on {frames} frames ({}% of {total}); checkpoint {}",
                fraction * 100.0,
                out.display()
            );
            Ok(())
        }

        Command::Serve {
            ckpt,
            hand,
            listen,
            realtime,
            emit_poses,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let hand_cfg = match &hand {
                Some(path) => hand_from_kv(&KvFile::from_path(path)?)?,
                None => RobotHandConfig::four_finger_default(),
            };
            let h = model.h();
            let mut pipeline = Pipeline::new(model, hand_cfg, h)?;
            if emit_poses {
                pipeline = pipeline.with_pose_output();
            }
            eprintln!("listening on {listen}");
            let stats = serve_once(&listen, &mut pipeline, realtime)?;
            eprint!("{}", stats.render());
            Ok(())
        }

        Command::Replay {
            session,
            connect,
            realtime,
            rate,
        } => {
            let rec = load_session(&session)?;
            let stream = TcpStream::connect(&connect)
                .map_err(|e| CliError::Runtime(format!("cannot connect to {connect}: {e}")))?;
            stream.set_nodelay(true).ok();
            let mut writer = stream.try_clone()?;
            let mut reader = stream;

            // Drain responses concurrently so the server never blocks on a
            // full send buffer.
            let drain = std::thread::spawn(move || {
                let mut decoder = FrameDecoder::new();
                let mut buf = [0u8; 4096];
                let mut commands = 0usize;
                let mut errors = Vec::new();
                loop {
                    match reader.read(&mut buf) {
                        Ok(0) | Err(_) => break,
                        Ok(n) => {
                            decoder.push_bytes(&buf[..n]);
                            while let Some(f) = decoder.next_frame() {
                                match f {
                                    ProtocolFrame::JointCmd { .. } => commands += 1,
                                    ProtocolFrame::Error { message, .. } => errors.push(message),
                                    _ => {}
                                }
                            }
                        }
                    }
                }
                (commands, errors)
            });

            let sent = replay_to_writer(&mut writer, &rec, rate, realtime)?;
            writer.shutdown(std::net::Shutdown::Write).ok();
            let (commands, errors) = drain.join().expect("drain thread");
            eprintln!("sent {sent} frames, received {commands} joint commands");
            for e in errors {
                eprintln!("server error frame: {e}");
            }
            Ok(())
        }
    }
}
