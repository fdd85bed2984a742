//! Flat `key = value` configuration files.
//!
//! One pair per line, `#` starts a comment, blank lines are skipped.
//! Readers track which keys they consume and reject files containing
//! unknown keys, naming the offender.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::retarget::{JointLimit, RobotHandConfig, JOINTS_PER_FINGER};

use crate::synth::GeneratorConfig;
use crate::train::{FinetuneConfig, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key {key:?}: {message}")]
    Invalid { key: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parsed key=value file with order preserved.
#[derive(Clone, Debug, Default)]
pub struct KvFile {
    entries: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    path: path.to_string(),
                    line: idx + 1,
                    message: format!("expected `key = value`, got {raw:?}"),
                });
            };
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Tracks consumed keys so leftovers can be rejected by name.
pub struct KvReader<'a> {
    file: &'a KvFile,
    consumed: HashSet<String>,
}

impl<'a> KvReader<'a> {
    pub fn new(file: &'a KvFile) -> Self {
        Self {
            file,
            consumed: HashSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        let v = self.file.get(key);
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    pub fn parse_into<T: std::str::FromStr>(
        &mut self,
        key: &str,
        expected: &'static str,
        slot: &mut T,
    ) -> Result<(), ConfigError> {
        if let Some(v) = self.raw(key) {
            *slot = v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
                expected,
            })?;
        }
        Ok(())
    }

    pub fn parse_list<T: std::str::FromStr>(
        &mut self,
        key: &str,
        expected: &'static str,
        slot: &mut Vec<T>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = self.raw(key) {
            let mut out = Vec::new();
            for part in v.split(',') {
                out.push(part.trim().parse().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: part.trim().to_string(),
                    expected,
                })?);
            }
            *slot = out;
        }
        Ok(())
    }

    /// Errors on the first key the reader never consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        for (k, _) in &self.file.entries {
            if !self.consumed.contains(k) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        Ok(())
    }
}

fn fmt_list<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// GeneratorConfig
// ---------------------------------------------------------------------------

pub fn generator_to_kv(c: &GeneratorConfig) -> String {
    let mut out = String::from("# synthetic session generator\n");
    out.push_str(&format!("seed = {}\n", c.seed));
    out.push_str(&format!("n_sessions = {}\n", c.n_sessions));
    out.push_str(&format!("frames_per_session = {}\n", c.frames_per_session));
    out.push_str(&format!("baseline_frames = {}\n", c.baseline_frames));
    out.push_str(&format!("gamma = {}\n", c.gamma));
    out.push_str(&format!("lag_alpha = {}\n", c.lag_alpha));
    out.push_str(&format!("session_offset_scale = {}\n", c.session_offset_scale));
    out.push_str(&format!("noise_std = {}\n", c.noise_std));
    out.push_str(&format!("arm_confound_scale = {}\n", c.arm_confound_scale));
    out.push_str(&format!("drive_scale = {}\n", c.drive_scale));
    out.push_str(&format!("pose_amplitude_deg = {}\n", c.pose_amplitude_deg));
    out.push_str(&format!("sample_rate_hz = {}\n", c.sample_rate_hz));
    out.push_str(&format!(
        "informative_sensors = {}\n",
        fmt_list(&c.informative_sensors)
    ));
    out.push_str(&format!("rest_levels = {}\n", fmt_list(&c.rest_levels)));
    out.push_str(&format!("coupling = {}\n", fmt_list(&c.coupling)));
    out
}

/// Reads a generator config; fields not present fall back to the seeded
/// defaults (so a file holding only `seed` is valid).
pub fn generator_from_kv(file: &KvFile) -> Result<GeneratorConfig, ConfigError> {
    let mut seed = 0u64;
    {
        let mut probe = KvReader::new(file);
        probe.parse_into("seed", "u64", &mut seed)?;
        // only probing the seed; full validation happens below
    }
    let mut c = GeneratorConfig::new(seed);
    let mut r = KvReader::new(file);
    let mut seed_again = c.seed;
    r.parse_into("seed", "u64", &mut seed_again)?;
    r.parse_into("n_sessions", "usize", &mut c.n_sessions)?;
    r.parse_into("frames_per_session", "usize", &mut c.frames_per_session)?;
    r.parse_into("baseline_frames", "usize", &mut c.baseline_frames)?;
    r.parse_into("gamma", "f64", &mut c.gamma)?;
    r.parse_into("lag_alpha", "f64", &mut c.lag_alpha)?;
    r.parse_into("session_offset_scale", "f64", &mut c.session_offset_scale)?;
    r.parse_into("noise_std", "f64", &mut c.noise_std)?;
    r.parse_into("arm_confound_scale", "f64", &mut c.arm_confound_scale)?;
    r.parse_into("drive_scale", "f64", &mut c.drive_scale)?;
    r.parse_into("pose_amplitude_deg", "f64", &mut c.pose_amplitude_deg)?;
    r.parse_into("sample_rate_hz", "f64", &mut c.sample_rate_hz)?;
    r.parse_list("informative_sensors", "usize", &mut c.informative_sensors)?;
    r.parse_list("rest_levels", "f64", &mut c.rest_levels)?;
    r.parse_list("coupling", "f64", &mut c.coupling)?;
    r.finish()?;
    c.validate().map_err(|e| ConfigError::Invalid {
        key: "generator".into(),
        message: e.to_string(),
    })?;
    Ok(c)
}

// ---------------------------------------------------------------------------
// RobotHandConfig
// ---------------------------------------------------------------------------

pub fn hand_to_kv(c: &RobotHandConfig) -> String {
    let mins: Vec<f64> = c.limits.iter().map(|l| l.min_deg).collect();
    let maxs: Vec<f64> = c.limits.iter().map(|l| l.max_deg).collect();
    format!(
        "# robot hand\nfingers = {}\nlimit_min_deg = {}\nlimit_max_deg = {}\nabduction_deg = {}\nmax_speed_deg_s = {}\n",
        c.fingers,
        fmt_list(&mins),
        fmt_list(&maxs),
        fmt_list(&c.abduction_deg),
        c.max_speed_deg_s
    )
}

/// Reads a hand config. Limit and abduction lists of length 1 broadcast to
/// every joint/finger.
pub fn hand_from_kv(file: &KvFile) -> Result<RobotHandConfig, ConfigError> {
    let mut r = KvReader::new(file);
    let mut fingers = 4usize;
    r.parse_into("fingers", "usize", &mut fingers)?;
    let mut c = RobotHandConfig::with_fingers(fingers);

    let joints = fingers * JOINTS_PER_FINGER;
    let mut mins: Vec<f64> = c.limits.iter().map(|l| l.min_deg).collect();
    let mut maxs: Vec<f64> = c.limits.iter().map(|l| l.max_deg).collect();
    r.parse_list("limit_min_deg", "f64", &mut mins)?;
    r.parse_list("limit_max_deg", "f64", &mut maxs)?;
    let broadcast = |v: Vec<f64>, n: usize, key: &str| -> Result<Vec<f64>, ConfigError> {
        if v.len() == 1 {
            Ok(vec![v[0]; n])
        } else if v.len() == n {
            Ok(v)
        } else {
            Err(ConfigError::Invalid {
                key: key.to_string(),
                message: format!("expected 1 or {n} values, got {}", v.len()),
            })
        }
    };
    let mins = broadcast(mins, joints, "limit_min_deg")?;
    let maxs = broadcast(maxs, joints, "limit_max_deg")?;
    c.limits = mins
        .into_iter()
        .zip(maxs)
        .map(|(min_deg, max_deg)| JointLimit { min_deg, max_deg })
        .collect();

    let mut abduction = c.abduction_deg.clone();
    r.parse_list("abduction_deg", "f64", &mut abduction)?;
    c.abduction_deg = broadcast(abduction, fingers, "abduction_deg")?;
    r.parse_into("max_speed_deg_s", "f64", &mut c.max_speed_deg_s)?;
    r.finish()?;
    c.validate().map_err(|e| ConfigError::Invalid {
        key: "hand".into(),
        message: e.to_string(),
    })?;
    Ok(c)
}

// ---------------------------------------------------------------------------
// TrainConfig / FinetuneConfig
// ---------------------------------------------------------------------------

pub fn train_from_kv(file: &KvFile) -> Result<TrainConfig, ConfigError> {
    let mut c = TrainConfig::default();
    let mut r = KvReader::new(file);
    r.parse_into("lr", "f64", &mut c.lr)?;
    r.parse_into("batch_size", "usize", &mut c.batch_size)?;
    r.parse_into("max_epochs", "usize", &mut c.max_epochs)?;
    r.parse_into("patience", "usize", &mut c.patience)?;
    r.parse_into("noise_sigma", "f64", &mut c.noise_sigma)?;
    r.parse_into("seed", "u64", &mut c.seed)?;
    r.parse_into("val_fraction", "f64", &mut c.val_fraction)?;
    r.parse_into("h", "usize", &mut c.h)?;
    r.parse_into("stride", "usize", &mut c.stride)?;
    r.parse_into("lr_decay", "f64", &mut c.lr_decay)?;
    r.finish()?;
    Ok(c)
}

pub fn finetune_from_kv(file: &KvFile) -> Result<FinetuneConfig, ConfigError> {
    let mut c = FinetuneConfig::default();
    let mut r = KvReader::new(file);
    r.parse_into("lr", "f64", &mut c.lr)?;
    r.parse_into("epochs", "usize", &mut c.epochs)?;
    r.parse_into("batch_size", "usize", &mut c.batch_size)?;
    r.parse_into("stride", "usize", &mut c.stride)?;
    r.parse_into("noise_sigma", "f64", &mut c.noise_sigma)?;
    r.parse_into("seed", "u64", &mut c.seed)?;
    r.finish()?;
    Ok(c)
}
