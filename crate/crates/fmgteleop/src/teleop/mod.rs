//! Real-time teleoperation: the framed wire protocol, the streaming
//! pipeline (baseline capture, sliding window, predict, retarget, emit),
//! session replay, and socket drivers.

pub mod pipeline;
pub mod protocol;
pub mod replay;
pub mod serve;

pub use pipeline::{run_offline, Pipeline, PipelineError, PipelineStats, MIN_BASELINE_FRAMES};
pub use protocol::{decode_frame, encode_frame, FrameDecoder, ProtocolError, ProtocolFrame};
pub use replay::{replay_to_writer, session_frames};
pub use serve::{serve_connection, serve_offline, serve_once, ServeError};
