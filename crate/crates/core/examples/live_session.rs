//! Starts the live session server on an ephemeral port, connects a client,
//! records a short teleoperated demo and prints the exchanged frames.
//!
//! cargo run --release --example live_session

use std::time::Duration;
use tactile_workbench::service::protocol::{Envelope, Hello, Message, RecordStart, RecordStop, TeleopKey, PROTOCOL_VERSION};
use tactile_workbench::service::{Server, ServerConfig};
use tactile_workbench::sim::PegProfile;

fn main() {
    let dir = std::env::temp_dir().join("workbench-live-session");
    let config = ServerConfig { bind: "127.0.0.1:0".into(), data_root: dir, ..ServerConfig::default() };
    let handle = Server::bind(config).expect("bind").spawn().expect("spawn");
    let (mut ws, _) = tungstenite::connect(format!("ws://{}", handle.local_addr())).expect("connect");

    let script = [
        Message::Hello(Hello { protocol_version: PROTOCOL_VERSION, agent: "example".into(), connection: None }),
        Message::RecordStart(RecordStart { peg: PegProfile::Vertical, yaw_deg: 0.0, path: None }),
        Message::TeleopKey(TeleopKey { key: "+z".into() }),
        Message::TeleopKey(TeleopKey { key: "+z".into() }),
        Message::RecordStop(RecordStop::default()),
    ];
    for (i, m) in script.into_iter().enumerate() {
        let text = Envelope::new(i as u64 + 1, m).to_json();
        println!("-> {text}");
        ws.send(tungstenite::Message::text(text)).expect("send");
        std::thread::sleep(Duration::from_millis(60));
    }
    if let tungstenite::stream::MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(300))).expect("timeout");
    }
    while let Ok(tungstenite::Message::Text(text)) = ws.read() {
        let shown: String = text.chars().take(160).collect();
        println!("<- {shown}{}", if text.len() > 160 { " ..." } else { "" });
    }
    handle.shutdown();
}
