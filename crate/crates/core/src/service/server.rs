use super::protocol::{
    Envelope, ErrorCode, Hello, Message, MetricsUpdate, RecordStart, RecordStop, SeqCounter, SeqGuard, StateSnapshot, PROTOCOL_VERSION,
};
use super::{data_root, MetricsEvent, ServiceError};
use crate::extract::teleop::TeleopError;
use crate::extract::{ExtractConfig, ExtractEnv, TeleopSession};
use crate::rl::RlError;
use crate::sim::PegProfile;
use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use tungstenite::WebSocket;

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: String,
    /// Demo files go to `<data_root>/demos`.
    pub data_root: PathBuf,
    pub extract: ExtractConfig,
    /// Environment shown before the first `record_start`.
    pub peg: PegProfile,
    pub yaw_deg: f64,
    pub seed: u64,
    /// Upper bound on snapshot broadcasts per second.
    pub snapshot_hz: f64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8765".into(),
            data_root: data_root(),
            extract: ExtractConfig::default(),
            peg: PegProfile::Vertical,
            yaw_deg: 0.0,
            seed: 0,
            snapshot_hz: 30.0,
        }
    }
}

struct Live {
    session: TeleopSession,
    writer: Option<u64>,
    last_reward: Option<f64>,
    frame: u64,
    dirty: bool,
    recordings: u64,
}

impl Live {
    fn snapshot(&self) -> StateSnapshot {
        let env = self.session.env();
        let obs = self.session.observation();
        let mut s = StateSnapshot {
            frame: self.frame,
            peg: env.peg(),
            yaw_deg: env.yaw_deg(),
            episode: env.next_episode().saturating_sub(1),
            step: env.steps(),
            done: env.is_done(),
            succeeded: env.succeeded(),
            recording: self.session.is_recording(),
            records: self.session.records(),
            writer: self.writer,
            position: obs.position,
            orientation: obs.orientation,
            pressures: obs.pressures,
            deltas: obs.deltas,
            rise: env.rise(),
            goal_rise: env.goal_rise(),
            last_action: None,
            last_reward: self.last_reward,
            jammed: false,
        };
        s.set_info(env.last_info());
        s
    }
}

struct Hub {
    config: ServerConfig,
    live: Mutex<Live>,
    clients: Mutex<BTreeMap<u64, Sender<Message>>>,
    next_id: AtomicU64,
    shutdown: AtomicBool,
}

fn error_code(e: &TeleopError) -> ErrorCode {
    match e {
        TeleopError::SessionClosed => ErrorCode::SessionClosed,
        TeleopError::AlreadyRecording => ErrorCode::AlreadyRecording,
        TeleopError::UnknownKey(_) => ErrorCode::UnknownKey,
        TeleopError::Rl(RlError::EpisodeDone) => ErrorCode::EpisodeDone,
        _ => ErrorCode::Internal,
    }
}

impl Hub {
    fn broadcast(&self, message: &Message) {
        for tx in self.clients.lock().expect("clients").values() {
            let _ = tx.send(message.clone());
        }
    }

    fn tick(&self) {
        let snapshot = {
            let mut live = self.live.lock().expect("live");
            if !live.dirty {
                return;
            }
            live.dirty = false;
            live.frame += 1;
            live.snapshot()
        };
        self.broadcast(&Message::StateSnapshot(snapshot));
    }

    fn demo_path(&self, live: &mut Live, peg: PegProfile, yaw: f64) -> Result<(PathBuf, String), ServiceError> {
        let dir = self.config.data_root.join("demos");
        std::fs::create_dir_all(&dir)?;
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        live.recordings += 1;
        let name = format!("{}_yaw{}_{secs}_{}.jsonl", peg.name(), yaw.round() as i64, live.recordings);
        Ok((dir.join(name), format!("unix:{secs}")))
    }

    /// Handles one client message and returns the direct replies.
    fn handle(&self, conn: u64, seq: u64, message: Message) -> Vec<Message> {
        let err = |code, m: String| vec![Message::error(code, m, Some(seq))];
        let mut live = self.live.lock().expect("live");
        let claim = |live: &Live| match live.writer {
            Some(w) if w != conn => Err(err(ErrorCode::ConcurrentWriter, format!("connection {w} holds the teleop session"))),
            _ => Ok(()),
        };
        match message {
            Message::Hello(h) => {
                if h.protocol_version != PROTOCOL_VERSION {
                    return err(ErrorCode::UnsupportedVersion, format!("server speaks protocol {PROTOCOL_VERSION}"));
                }
                let hello = Hello { protocol_version: PROTOCOL_VERSION, agent: concat!("workbench/", env!("CARGO_PKG_VERSION")).into(), connection: Some(conn) };
                vec![Message::Hello(hello), Message::StateSnapshot(live.snapshot())]
            }
            Message::RecordStart(r) => {
                if let Err(e) = claim(&live) {
                    return e;
                }
                if live.session.is_recording() {
                    return err(ErrorCode::AlreadyRecording, "stop the current recording first".into());
                }
                if live.session.env().peg() != r.peg || live.session.env().yaw_deg() != r.yaw_deg {
                    let env = match ExtractEnv::new(self.config.extract.clone(), r.peg, r.yaw_deg, self.config.seed) {
                        Ok(env) => env,
                        Err(e) => return err(ErrorCode::BadMessage, e.to_string()),
                    };
                    match TeleopSession::new(env) {
                        Ok(s) => live.session = s,
                        Err(e) => return err(ErrorCode::Internal, e.to_string()),
                    }
                }
                let (path, stamp) = match self.demo_path(&mut live, r.peg, r.yaw_deg) {
                    Ok(p) => p,
                    Err(e) => return err(ErrorCode::Internal, e.to_string()),
                };
                if let Err(e) = live.session.start_recording(Some(&path), &stamp) {
                    return err(error_code(&e), e.to_string());
                }
                log::info!("connection {conn} recording {}", path.display());
                live.writer = Some(conn);
                live.last_reward = None;
                live.dirty = true;
                vec![Message::RecordStart(RecordStart { path: Some(path.display().to_string()), ..r })]
            }
            Message::TeleopKey(k) => {
                if let Err(e) = claim(&live) {
                    return e;
                }
                match live.session.key(&k.key) {
                    Ok((_, reward, _)) => {
                        live.last_reward = Some(reward);
                        live.dirty = true;
                        vec![]
                    }
                    Err(e) => err(error_code(&e), e.to_string()),
                }
            }
            Message::RecordStop(_) => {
                if let Err(e) = claim(&live) {
                    return e;
                }
                match live.session.stop_recording() {
                    Ok((session, path)) => {
                        live.writer = None;
                        live.dirty = true;
                        vec![Message::RecordStop(RecordStop { path: path.map(|p| p.display().to_string()), records: Some(session.records.len()) })]
                    }
                    Err(e) => err(error_code(&e), e.to_string()),
                }
            }
            other => err(ErrorCode::BadMessage, format!("{} is sent by the server only", other.kind())),
        }
    }

    fn disconnect(&self, conn: u64) {
        self.clients.lock().expect("clients").remove(&conn);
        let mut live = self.live.lock().expect("live");
        if live.writer == Some(conn) {
            if let Ok((s, path)) = live.session.stop_recording() {
                log::info!("connection {conn} left; closed recording with {} records at {path:?}", s.records.len());
            }
            live.writer = None;
            live.dirty = true;
        }
    }
}

fn serve_connection(hub: Arc<Hub>, stream: TcpStream, conn: u64, rx: Receiver<Message>) {
    let mut ws: WebSocket<TcpStream> = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("handshake with connection {conn} failed: {e}");
            hub.disconnect(conn);
            return;
        }
    };
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        hub.disconnect(conn);
        return;
    }
    let mut out_seq = SeqCounter::default();
    let mut in_seq = SeqGuard::default();
    let mut send = |ws: &mut WebSocket<TcpStream>, m: Message| {
        let text = Envelope::new(out_seq.next(), m).to_json();
        ws.send(tungstenite::Message::Text(text))
    };
    'outer: while !hub.shutdown.load(Ordering::Relaxed) {
        let replies = match ws.read() {
            Ok(tungstenite::Message::Text(text)) => match Envelope::from_json(&text) {
                Ok(env) if !in_seq.accept(env.seq) => {
                    vec![Message::error(ErrorCode::BadSeq, "seq must increase strictly", Some(env.seq))]
                }
                Ok(env) => hub.handle(conn, env.seq, env.message),
                Err(e) => vec![Message::error(ErrorCode::BadMessage, e.to_string(), None)],
            },
            Ok(tungstenite::Message::Close(_)) => break,
            Ok(_) => vec![],
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => vec![],
            Err(_) => break,
        };
        for m in replies.into_iter().chain(rx.try_iter()) {
            if send(&mut ws, m).is_err() {
                break 'outer;
            }
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    hub.disconnect(conn);
}

/// A bound, not yet running session server.
pub struct Server {
    listener: TcpListener,
    hub: Arc<Hub>,
}

impl Server {
    pub fn bind(config: ServerConfig) -> Result<Self, ServiceError> {
        let listener = TcpListener::bind(&config.bind)?;
        let env = ExtractEnv::new(config.extract.clone(), config.peg, config.yaw_deg, config.seed)
            .map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
        let session = TeleopSession::new(env).map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
        let live = Live { session, writer: None, last_reward: None, frame: 0, dirty: false, recordings: 0 };
        let hub = Hub { config, live: Mutex::new(live), clients: Mutex::new(BTreeMap::new()), next_id: AtomicU64::new(1), shutdown: AtomicBool::new(false) };
        Ok(Self { listener, hub: Arc::new(hub) })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Starts the accept loop and the snapshot ticker on background threads.
    pub fn spawn(self) -> Result<ServerHandle, ServiceError> {
        let addr = self.listener.local_addr()?;
        self.listener.set_nonblocking(true)?;
        let hub = self.hub;
        let mut threads = Vec::new();

        let ticker = hub.clone();
        let period = Duration::from_secs_f64(1.0 / ticker.config.snapshot_hz.max(1e-3));
        threads.push(std::thread::spawn(move || {
            while !ticker.shutdown.load(Ordering::Relaxed) {
                std::thread::sleep(period);
                ticker.tick();
            }
        }));

        let acceptor = hub.clone();
        let listener = self.listener;
        threads.push(std::thread::spawn(move || {
            let mut workers = Vec::new();
            while !acceptor.shutdown.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        if stream.set_nonblocking(false).is_err() {
                            continue;
                        }
                        let conn = acceptor.next_id.fetch_add(1, Ordering::Relaxed);
                        let (tx, rx) = channel();
                        acceptor.clients.lock().expect("clients").insert(conn, tx);
                        log::info!("connection {conn} from {peer}");
                        let hub = acceptor.clone();
                        workers.push(std::thread::spawn(move || serve_connection(hub, stream, conn, rx)));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
            for w in workers {
                let _ = w.join();
            }
        }));
        Ok(ServerHandle { addr, hub, threads })
    }

    /// Serves until the process is stopped.
    pub fn run(self) -> Result<(), ServiceError> {
        let handle = self.spawn()?;
        handle.join();
        Ok(())
    }
}

/// Running server.
pub struct ServerHandle {
    addr: SocketAddr,
    hub: Arc<Hub>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Broadcasts a training episode as `metrics_update`.
    pub fn publish_metrics(&self, event: &MetricsEvent) {
        self.hub.broadcast(&Message::MetricsUpdate(MetricsUpdate::from(event)));
    }

    /// A cloneable sender for publishing from another thread.
    pub fn metrics_publisher(&self) -> impl Fn(&MetricsEvent) + Send + Sync + 'static {
        let hub = self.hub.clone();
        move |e| hub.broadcast(&Message::MetricsUpdate(MetricsUpdate::from(e)))
    }

    /// Stops accepting, closes every connection and waits for the threads.
    pub fn shutdown(self) {
        self.hub.shutdown.store(true, Ordering::Relaxed);
        self.join();
    }

    fn join(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }
}
