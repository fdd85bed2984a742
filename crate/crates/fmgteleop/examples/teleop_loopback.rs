//! Replay a synthetic session through the serving pipeline over a local
//! TCP connection and print the pipeline stats.

use std::io::Read;
use std::net::{TcpListener, TcpStream};

use fmgteleop::models::{ArchDims, Architecture, Model, ModelSpec};
use fmgteleop::retarget::RobotHandConfig;
use fmgteleop::synth::{generate_session, GeneratorConfig};
use fmgteleop::teleop::{replay_to_writer, serve_offline, FrameDecoder, Pipeline, ProtocolFrame};

fn main() {
    let h = 12;
    let model = Model::<f32>::build(
        ModelSpec::new(Architecture::Tcn, 1)
            .with_h(h)
            .with_dims(ArchDims::shrunken()),
    )
    .unwrap();

    let mut gen = GeneratorConfig::new(5);
    gen.baseline_frames = 20;
    gen.frames_per_session = 120;
    let session = generate_session(&gen, 0).unwrap().0;

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();

    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut pipeline = Pipeline::new(model, RobotHandConfig::four_finger_default(), h).unwrap();
        let mut input = stream.try_clone().unwrap();
        let mut output = stream;
        serve_offline(&mut input, &mut output, &mut pipeline).unwrap()
    });

    let client = TcpStream::connect(addr).unwrap();
    let mut writer = client.try_clone().unwrap();
    let session_for_send = session.clone();
    let sender = std::thread::spawn(move || {
        replay_to_writer(&mut writer, &session_for_send, 33.0, false).unwrap();
        writer.shutdown(std::net::Shutdown::Write).unwrap();
    });

    let mut reader = client;
    let mut decoder = FrameDecoder::new();
    let mut commands = 0usize;
    let mut buf = [0u8; 4096];
    loop {
        match reader.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                decoder.push_bytes(&buf[..n]);
                while let Some(f) = decoder.next_frame() {
                    if let ProtocolFrame::JointCmd { targets, .. } = f {
                        commands += 1;
                        if commands == 1 {
                            println!("first command targets: {targets:.1?}");
                        }
                    }
                }
            }
        }
    }
    sender.join().unwrap();
    let stats = server.join().unwrap();
    println!("received {commands} joint commands");
    print!("{}", stats.render());
}
