use std::net::TcpStream;
use std::time::{Duration, Instant};
use tactile_workbench::extract::read_session;
use tactile_workbench::service::protocol::{
    Envelope, ErrorCode, Hello, Message, RecordStart, RecordStop, TeleopKey, PROTOCOL_VERSION,
};
use tactile_workbench::service::{MetricsEvent, Server, ServerConfig, ServerHandle};
use tactile_workbench::sim::PegProfile;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::WebSocket;

type Socket = WebSocket<MaybeTlsStream<TcpStream>>;

struct Client {
    ws: Socket,
    seq: u64,
}

impl Client {
    fn connect(handle: &ServerHandle) -> Self {
        let (ws, _) = tungstenite::connect(format!("ws://{}", handle.local_addr())).unwrap();
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
        }
        Self { ws, seq: 0 }
    }

    fn send(&mut self, message: Message) -> u64 {
        self.seq += 1;
        self.send_raw(&Envelope::new(self.seq, message).to_json());
        self.seq
    }

    fn send_raw(&mut self, text: &str) {
        self.ws.send(tungstenite::Message::text(text)).unwrap();
    }

    fn recv(&mut self, timeout: Duration) -> Option<Envelope> {
        let end = Instant::now() + timeout;
        while Instant::now() < end {
            match self.ws.read() {
                Ok(tungstenite::Message::Text(t)) => return Some(Envelope::from_json(&t).expect("server sends valid frames")),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(e) => panic!("{e}"),
            }
        }
        None
    }

    /// Next message of the given kind, skipping snapshots and metrics.
    fn expect(&mut self, kind: &str) -> Envelope {
        let end = Instant::now() + Duration::from_secs(5);
        while Instant::now() < end {
            if let Some(e) = self.recv(Duration::from_millis(200)) {
                if e.message.kind() == kind {
                    return e;
                }
            }
        }
        panic!("no {kind} message");
    }

    fn hello(&mut self) -> u64 {
        self.send(Message::Hello(Hello { protocol_version: PROTOCOL_VERSION, agent: "test".into(), connection: None }));
        match self.expect("hello").message {
            Message::Hello(h) => h.connection.expect("server assigns an id"),
            _ => unreachable!(),
        }
    }
}

fn error_of(e: Envelope) -> (ErrorCode, Option<u64>) {
    match e.message {
        Message::Error(p) => (p.code, p.in_reply_to),
        m => panic!("expected error, got {m:?}"),
    }
}

fn start(dir: &std::path::Path) -> ServerHandle {
    let config = ServerConfig { bind: "127.0.0.1:0".into(), data_root: dir.to_path_buf(), ..ServerConfig::default() };
    Server::bind(config).unwrap().spawn().unwrap()
}

#[test]
fn teleop_recording_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let handle = start(dir.path());
    let mut a = Client::connect(&handle);
    let id_a = a.hello();
    a.expect("state_snapshot");

    a.send(Message::RecordStart(RecordStart { peg: PegProfile::Vertical, yaw_deg: 0.0, path: None }));
    let path = match a.expect("record_start").message {
        Message::RecordStart(r) => r.path.expect("server names the demo file"),
        _ => unreachable!(),
    };
    assert!(path.ends_with(".jsonl"));

    let mut b = Client::connect(&handle);
    let id_b = b.hello();
    assert_ne!(id_a, id_b);
    let seq = b.send(Message::TeleopKey(TeleopKey { key: "+z".into() }));
    assert_eq!(error_of(b.expect("error")), (ErrorCode::ConcurrentWriter, Some(seq)));

    for _ in 0..3 {
        a.send(Message::TeleopKey(TeleopKey { key: "+z".into() }));
    }
    let mut last = None;
    let end = Instant::now() + Duration::from_secs(3);
    while Instant::now() < end {
        if let Some(Envelope { message: Message::StateSnapshot(s), .. }) = a.recv(Duration::from_millis(100)) {
            if s.records == 3 {
                last = Some(s);
                break;
            }
        }
    }
    let snap = last.expect("snapshot after three keys");
    assert_eq!(snap.writer, Some(id_a));
    assert!(snap.recording);
    assert_eq!(snap.last_action.as_deref(), Some("+z"));

    let seq = a.send(Message::TeleopKey(TeleopKey { key: "jump".into() }));
    assert_eq!(error_of(a.expect("error")), (ErrorCode::UnknownKey, Some(seq)));

    a.send(Message::RecordStop(RecordStop::default()));
    let stop = match a.expect("record_stop").message {
        Message::RecordStop(r) => r,
        _ => unreachable!(),
    };
    assert_eq!(stop.path.as_deref(), Some(path.as_str()));
    assert_eq!(stop.records, Some(3));

    let session = read_session(std::path::Path::new(&path)).unwrap();
    assert_eq!(session.records.len(), 3);
    assert_eq!(session.header.peg, PegProfile::Vertical);

    // writer released: the second client may now record
    b.send(Message::RecordStart(RecordStart { peg: PegProfile::Curved, yaw_deg: 45.0, path: None }));
    b.expect("record_start");
    handle.shutdown();
}

#[test]
fn protocol_errors() {
    let dir = tempfile::tempdir().unwrap();
    let handle = start(dir.path());
    let mut c = Client::connect(&handle);

    c.send_raw(r#"{"seq":1,"type":"hello","payload":{"protocol_version":99,"agent":"x"}}"#);
    assert_eq!(error_of(c.expect("error")).0, ErrorCode::UnsupportedVersion);

    c.send_raw(r#"{"seq":2,"type":"teleop_key","payload":{"key":"+z"},"extra":0}"#);
    assert_eq!(error_of(c.expect("error")).0, ErrorCode::BadMessage);

    c.send_raw(r#"{"seq":5,"type":"record_stop","payload":{}}"#);
    assert_eq!(error_of(c.expect("error")), (ErrorCode::SessionClosed, Some(5)));
    c.send_raw(r#"{"seq":4,"type":"record_stop","payload":{}}"#);
    assert_eq!(error_of(c.expect("error")).0, ErrorCode::BadSeq);

    c.send_raw(r#"{"seq":6,"type":"state_snapshot","payload":{}}"#);
    assert_eq!(error_of(c.expect("error")).0, ErrorCode::BadMessage);
    handle.shutdown();
}

#[test]
fn snapshot_rate_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let handle = start(dir.path());
    let mut c = Client::connect(&handle);
    c.hello();
    c.send(Message::RecordStart(RecordStart { peg: PegProfile::Vertical, yaw_deg: 0.0, path: None }));
    c.expect("record_start");
    let t0 = Instant::now();
    let mut snapshots = Vec::new();
    let mut toggle = false;
    while t0.elapsed() < Duration::from_secs(1) {
        toggle = !toggle;
        c.send(Message::TeleopKey(TeleopKey { key: if toggle { "+x" } else { "-x" }.into() }));
        // about 50 keys per second stays inside one 64-step episode
        let tick = Instant::now();
        while tick.elapsed() < Duration::from_millis(20) {
            if let Some(Envelope { message: Message::StateSnapshot(s), .. }) = c.recv(Duration::from_millis(2)) {
                snapshots.push(s.frame);
            }
        }
    }
    // one second of key presses plus the initial snapshot
    assert!(snapshots.len() <= 32, "{} snapshots", snapshots.len());
    assert!(snapshots.len() >= 5, "{} snapshots", snapshots.len());
    assert!(snapshots.windows(2).all(|w| w[1] > w[0]));
    handle.shutdown();
}

#[test]
fn metrics_reach_every_client() {
    let dir = tempfile::tempdir().unwrap();
    let handle = start(dir.path());
    let mut a = Client::connect(&handle);
    let mut b = Client::connect(&handle);
    a.hello();
    b.hello();
    let event = MetricsEvent { run: "grasp_ppo".into(), seed: 2, episode: 7, steps: 3, reward: 0.3, success: true, epsilon: None };
    handle.publish_metrics(&event);
    for c in [&mut a, &mut b] {
        match c.expect("metrics_update").message {
            Message::MetricsUpdate(m) => assert_eq!((m.episode, m.steps, m.seed), (7, 3, 2)),
            _ => unreachable!(),
        }
    }
    handle.shutdown();
}
