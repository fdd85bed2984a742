//! Maps estimated hand poses to robot-hand joint commands.
//!
//! MCP and PIP estimates map directly to the robot joints; the unmeasured
//! DIP joint follows the synergy coupling `DIP = (2/3) * PIP`; abduction is
//! a configured constant. Four-finger hands drop the little finger. A rate
//! limiter bounds per-joint speed between consecutive commands.

use thiserror::Error;

use crate::signal::HandPose;

/// Joints per finger in command order: MCP, PIP, DIP, abduction.
pub const JOINTS_PER_FINGER: usize = 4;

/// Synergy ratio coupling the distal joint to the proximal one.
pub const DIP_PIP_RATIO: f64 = 2.0 / 3.0;

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("finger count must be 4 or 5, got {0}")]
    BadFingerCount(usize),
    #[error("{what} must list {expected} values, got {got}")]
    BadLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("joint {joint}: limit min {min} exceeds max {max}")]
    BadLimit { joint: usize, min: f64, max: f64 },
    #[error("max joint speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("command holds {got} targets, config expects {expected}")]
    CommandLength { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLimit {
    pub min_deg: f64,
    pub max_deg: f64,
}

/// Robot-hand geometry and safety limits. Joint ordering is fingers in
/// order (thumb, index, middle, ring[, little]) x (MCP, PIP, DIP, abduction).
#[derive(Clone, Debug, PartialEq)]
pub struct RobotHandConfig {
    pub fingers: usize,
    pub limits: Vec<JointLimit>,
    /// Constant abduction target per finger, degrees.
    pub abduction_deg: Vec<f64>,
    /// Rate limit, degrees per second per joint.
    pub max_speed_deg_s: f64,
}

impl RobotHandConfig {
    /// Four-finger hand, 0-110 degree flexion, abduction 0, 300 deg/s.
    pub fn four_finger_default() -> Self {
        Self::with_fingers(4)
    }

    pub fn with_fingers(fingers: usize) -> Self {
        Self {
            fingers,
            limits: vec![
                JointLimit {
                    min_deg: 0.0,
                    max_deg: 110.0,
                };
                fingers * JOINTS_PER_FINGER
            ],
            abduction_deg: vec![0.0; fingers],
            max_speed_deg_s: 300.0,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.fingers * JOINTS_PER_FINGER
    }

    pub fn validate(&self) -> Result<(), RetargetError> {
        if self.fingers != 4 && self.fingers != 5 {
            return Err(RetargetError::BadFingerCount(self.fingers));
        }
        if self.limits.len() != self.joint_count() {
            return Err(RetargetError::BadLength {
                what: "limits",
                expected: self.joint_count(),
                got: self.limits.len(),
            });
        }
        if self.abduction_deg.len() != self.fingers {
            return Err(RetargetError::BadLength {
                what: "abduction_deg",
                expected: self.fingers,
                got: self.abduction_deg.len(),
            });
        }
        for (j, l) in self.limits.iter().enumerate() {
            if l.min_deg > l.max_deg {
                return Err(RetargetError::BadLimit {
                    joint: j,
                    min: l.min_deg,
                    max: l.max_deg,
                });
            }
        }
        if self.max_speed_deg_s <= 0.0 {
            return Err(RetargetError::BadSpeed(self.max_speed_deg_s));
        }
        Ok(())
    }
}

/// Robot joint targets in the fixed ordering, all within configured limits.
#[derive(Clone, Debug, PartialEq)]
pub struct JointCommand {
    pub timestamp_us: u64,
    pub targets: Vec<f64>,
}

impl JointCommand {
    pub fn finger_joint(&self, finger: usize, joint: usize) -> f64 {
        self.targets[finger * JOINTS_PER_FINGER + joint]
    }
}

/// Maps a pose to joint targets: `MCP_cmd = MCP`, `PIP_cmd = PIP`,
/// `DIP_cmd = (2/3) PIP`, abduction constant, all clamped to limits.
/// A four-finger config disregards the little finger.
pub fn retarget(pose: &HandPose, config: &RobotHandConfig) -> JointCommand {
    let mut targets = Vec::with_capacity(config.joint_count());
    for finger in 0..config.fingers {
        let human_finger = finger + 1; // fingers 1..=5, little finger dropped on 4-finger hands
        let mcp = pose.mcp(human_finger);
        let pip = pose.pip(human_finger);
        targets.push(mcp);
        targets.push(pip);
        targets.push(DIP_PIP_RATIO * pip);
        targets.push(config.abduction_deg[finger]);
    }
    for (t, l) in targets.iter_mut().zip(&config.limits) {
        *t = t.clamp(l.min_deg, l.max_deg);
    }
    JointCommand {
        timestamp_us: 0,
        targets,
    }
}

/// Limits per-joint motion to `max_speed * dt` toward `next`, preserving
/// direction. `next` is returned unchanged when already inside the envelope.
pub fn rate_limit(
    prev: &JointCommand,
    next: &JointCommand,
    dt_s: f64,
    config: &RobotHandConfig,
) -> Result<JointCommand, RetargetError> {
    if prev.targets.len() != config.joint_count() {
        return Err(RetargetError::CommandLength {
            expected: config.joint_count(),
            got: prev.targets.len(),
        });
    }
    if next.targets.len() != config.joint_count() {
        return Err(RetargetError::CommandLength {
            expected: config.joint_count(),
            got: next.targets.len(),
        });
    }
    let budget = config.max_speed_deg_s * dt_s.max(0.0);
    let targets = prev
        .targets
        .iter()
        .zip(&next.targets)
        .map(|(&p, &n)| p + (n - p).clamp(-budget, budget))
        .collect();
    Ok(JointCommand {
        timestamp_us: next.timestamp_us,
        targets,
    })
}
