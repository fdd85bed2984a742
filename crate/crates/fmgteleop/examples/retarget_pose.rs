//! Map a hand pose to four-finger robot joint commands, then rate-limit a
//! step toward a new pose.

use fmgteleop::retarget::{rate_limit, retarget, RobotHandConfig, JOINTS_PER_FINGER};
use fmgteleop::signal::HandPose;

fn main() {
    let config = RobotHandConfig::four_finger_default();

    // Index-point gesture: every finger curled except the index.
    let mut angles = [70.0; 10];
    angles[2] = 0.0; // index MCP
    angles[3] = 0.0; // index PIP
    let pose = HandPose::new(angles).unwrap();
    let open = retarget(&HandPose::zero(), &config);
    let point = retarget(&pose, &config);

    println!("finger   MCP    PIP    DIP    abd");
    for (f, name) in ["thumb", "index", "middle", "ring"].iter().enumerate() {
        let j = f * JOINTS_PER_FINGER;
        println!(
            "{name:<7} {:>5.1} {:>6.1} {:>6.1} {:>6.1}",
            point.targets[j],
            point.targets[j + 1],
            point.targets[j + 2],
            point.targets[j + 3]
        );
    }

    // One 30 ms control tick toward the gesture, speed-limited.
    let step = rate_limit(&open, &point, 0.03, &config).unwrap();
    println!(
        "\nafter one 30 ms tick at {} deg/s, thumb MCP is at {:.1} deg (target {:.1})",
        config.max_speed_deg_s, step.targets[0], point.targets[0]
    );
}
