//! Socket drivers for the pipeline.
//!
//! Offline mode is a synchronous decode-push-write loop and is fully
//! deterministic. Realtime mode splits ingest and inference across two
//! threads joined by a bounded freshest-wins queue: when inference cannot
//! keep pace, the oldest pending frames are dropped and counted.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crossbeam_queue::ArrayQueue;

use super::pipeline::{Pipeline, PipelineError, PipelineStats};
use super::protocol::{encode_frame, FrameDecoder, ProtocolFrame};

/// Capacity of the realtime ingest queue.
const QUEUE_CAPACITY: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs the pipeline over one established byte-stream connection until EOF
/// and returns the final stats.
pub fn serve_connection(
    mut stream: TcpStream,
    pipeline: &mut Pipeline,
    realtime: bool,
) -> Result<PipelineStats, ServeError> {
    if realtime {
        serve_realtime(stream, pipeline)
    } else {
        let mut out = stream.try_clone()?;
        serve_offline(&mut stream, &mut out, pipeline)
    }
}

/// Synchronous loop over arbitrary reader/writer pairs (sockets, pipes).
pub fn serve_offline(
    input: &mut impl Read,
    output: &mut impl Write,
    pipeline: &mut Pipeline,
) -> Result<PipelineStats, ServeError> {
    let mut decoder = FrameDecoder::new();
    let mut buf = [0u8; 4096];
    loop {
        let n = input.read(&mut buf)?;
        if n == 0 {
            break;
        }
        decoder.push_bytes(&buf[..n]);
        while let Some(frame) = decoder.next_frame() {
            for emitted in pipeline.push(&frame)? {
                output.write_all(&encode_frame(&emitted))?;
            }
        }
        output.flush()?;
    }
    Ok(pipeline.stats())
}

enum Item {
    Frame(ProtocolFrame),
    Eof,
}

fn serve_realtime(
    stream: TcpStream,
    pipeline: &mut Pipeline,
) -> Result<PipelineStats, ServeError> {
    let queue = Arc::new(ArrayQueue::<Item>::new(QUEUE_CAPACITY));
    let dropped = Arc::new(AtomicUsize::new(0));
    let mut reader = stream.try_clone()?;
    let mut writer = stream;

    let ingest_queue = Arc::clone(&queue);
    let ingest_dropped = Arc::clone(&dropped);
    let ingest = std::thread::spawn(move || {
        let mut decoder = FrameDecoder::new();
        let mut buf = [0u8; 4096];
        loop {
            match reader.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    decoder.push_bytes(&buf[..n]);
                    while let Some(frame) = decoder.next_frame() {
                        if ingest_queue.force_push(Item::Frame(frame)).is_some() {
                            // freshest-wins: the queue evicted its oldest entry
                            ingest_dropped.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
            }
        }
        while ingest_queue.force_push(Item::Eof).is_some() {
            ingest_dropped.fetch_add(1, Ordering::Relaxed);
        }
    });

    loop {
        match queue.pop() {
            Some(Item::Frame(frame)) => {
                for emitted in pipeline.push(&frame)? {
                    writer.write_all(&encode_frame(&emitted))?;
                }
                writer.flush()?;
            }
            Some(Item::Eof) => break,
            None => std::thread::yield_now(),
        }
    }
    ingest.join().expect("ingest thread");
    pipeline.add_dropped(dropped.load(Ordering::Relaxed));
    Ok(pipeline.stats())
}

/// Binds `addr`, accepts a single connection, and serves it to completion.
pub fn serve_once(
    addr: impl ToSocketAddrs,
    pipeline: &mut Pipeline,
    realtime: bool,
) -> Result<PipelineStats, ServeError> {
    let listener = TcpListener::bind(addr)?;
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true).ok();
    serve_connection(stream, pipeline, realtime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArchDims, Architecture, Model, ModelSpec};
    use crate::retarget::RobotHandConfig;
    use crate::synth::{generate_session, GeneratorConfig};
    use crate::teleop::pipeline::run_offline;
    use crate::teleop::replay::{replay_to_writer, session_frames};

    #[test]
    fn tcp_loopback_matches_in_memory_pipeline() {
        let h = 6;
        let model = Model::<f32>::build(
            ModelSpec::new(Architecture::Tcn, 3)
                .with_h(h)
                .with_dims(ArchDims::shrunken()),
        )
        .unwrap();
        let mut c = GeneratorConfig::new(2);
        c.baseline_frames = 15;
        c.frames_per_session = 40;
        let session = generate_session(&c, 0).unwrap().0;

        // In-memory reference.
        let mut reference =
            Pipeline::new(model.clone(), RobotHandConfig::four_finger_default(), h).unwrap();
        let expected = run_offline(&mut reference, session_frames(&session)).unwrap();

        // Over a localhost socket.
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut pipeline =
                Pipeline::new(model, RobotHandConfig::four_finger_default(), h).unwrap();
            let mut input = stream.try_clone().unwrap();
            let mut output = stream;
            serve_offline(&mut input, &mut output, &mut pipeline).unwrap()
        });

        let mut client = TcpStream::connect(addr).unwrap();
        let session_clone = session.clone();
        let sender = std::thread::spawn(move || {
            let mut w = client.try_clone().unwrap();
            replay_to_writer(&mut w, &session_clone, 33.0, false).unwrap();
            client.shutdown(std::net::Shutdown::Write).unwrap();
            // Drain responses.
            let mut decoder = FrameDecoder::new();
            let mut got = Vec::new();
            let mut buf = [0u8; 4096];
            loop {
                match client.read(&mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        decoder.push_bytes(&buf[..n]);
                        while let Some(f) = decoder.next_frame() {
                            got.push(f);
                        }
                    }
                }
            }
            got
        });

        let stats = server.join().unwrap();
        let got = sender.join().unwrap();
        assert_eq!(got, expected);
        assert_eq!(
            stats.inferences + stats.dropped + stats.fill_frames + stats.baseline_frames,
            stats.frames
        );
    }
}
