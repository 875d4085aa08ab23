//! The session server. One writer thread owns the session; every
//! connection runs on its own thread and talks to the writer through an
//! ordered command queue.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::protocol::CloseFrame;
use tungstenite::{Message, WebSocket};

use oikos_core::fixtures;
use oikos_core::runtime::{replay_bytes, ActionCommand, EpisodeLog, Session, SessionError, TaskError, TaskSpec};
use oikos_core::taxonomy::Taxonomy;
use oikos_core::world::SceneDoc;

use crate::http;
use crate::protocol::*;
use crate::snapshot::{diff, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Everything needed to start, restart and replay the served episode.
#[derive(Debug, Clone)]
pub struct SessionSource {
    pub scene: SceneDoc,
    pub taxonomy: Arc<Taxonomy>,
    pub task: TaskSpec,
    pub seed: u64,
}

impl SessionSource {
    pub fn from_task_file(path: &Path, seed: u64) -> Result<Self, BridgeError> {
        let task = TaskSpec::load(path)?;
        let scene = task.scene(Some(path))?;
        Ok(SessionSource { scene, taxonomy: fixtures::tax(), task, seed })
    }

    pub fn open(&self) -> Result<Session, SessionError> {
        Session::new(&self.scene, self.taxonomy.clone(), &self.task, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    /// Served at `/`; a built-in page is used when absent.
    pub static_dir: Option<PathBuf>,
    /// Where recordings are written and served from under `/logs`.
    pub log_dir: PathBuf,
    /// Steps between periodic full snapshots.
    pub snapshot_every: u64,
    /// Actions a controller may have unacknowledged before `Busy`.
    pub max_in_flight: usize,
    /// Minimum wall time between steps.
    pub step_interval: Duration,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 0,
            static_dir: None,
            log_dir: PathBuf::from("logs"),
            snapshot_every: 120,
            max_in_flight: 8,
            step_interval: Duration::ZERO,
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    writer: Option<JoinHandle<()>>,
    commands: Sender<Command>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/", self.addr)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.commands.send(Command::Shutdown);
        for h in [self.accept.take(), self.writer.take()].into_iter().flatten() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

enum Command {
    Join { conn: u64, role: Role, tx: Sender<Outbound> },
    Leave { conn: u64 },
    Action { conn: u64, seq: u64, actions: Vec<ActionCommand> },
    Record { conn: u64, seq: u64, op: RecordControl },
    Replay { conn: u64, seq: u64, op: ReplayControl },
    Shutdown,
}

enum Outbound {
    Msg(ServerMsg),
    /// A message that settles one in-flight action.
    Settled(ServerMsg),
    Close(ErrorCode, String),
}

/// Starts serving `source` and returns once the port is bound.
pub fn serve(source: SessionSource, config: ServeConfig) -> Result<ServerHandle, BridgeError> {
    let session = source.open()?;
    let listener = TcpListener::bind((config.bind, config.port)).map_err(|e| match e.kind() {
        io::ErrorKind::AddrInUse => BridgeError::PortInUse(config.port),
        _ => BridgeError::Io(e),
    })?;
    listener.set_nonblocking(true)?;
    std::fs::create_dir_all(&config.log_dir)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();

    let writer = {
        let config = config.clone();
        thread::Builder::new()
            .name("oikos-session".into())
            .spawn(move || Writer::new(source, session, config).run(rx))?
    };
    let accept = {
        let stop = stop.clone();
        let tx = tx.clone();
        let config = Arc::new(config);
        thread::Builder::new().name("oikos-accept".into()).spawn(move || accept_loop(listener, stop, tx, config))?
    };
    Ok(ServerHandle { addr, stop, accept: Some(accept), writer: Some(writer), commands: tx })
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, tx: Sender<Command>, config: Arc<ServeConfig>) {
    let ids = AtomicU64::new(1);
    let mut conns: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let conn = ids.fetch_add(1, Ordering::SeqCst);
                let (stop, tx, config) = (stop.clone(), tx.clone(), config.clone());
                if let Ok(h) = thread::Builder::new()
                    .name(format!("oikos-conn-{conn}"))
                    .spawn(move || handle_connection(stream, conn, stop, tx, &config))
                {
                    conns.push(h);
                }
                conns.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
    for h in conns {
        let _ = h.join();
    }
}

/// Reads the request head without consuming it.
fn peek_head(stream: &TcpStream) -> io::Result<Vec<u8>> {
    let mut buf = vec![0u8; 16 * 1024];
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        if buf[..n].windows(4).any(|w| w == b"\r\n\r\n") || n == buf.len() {
            buf.truncate(n);
            return Ok(buf);
        }
        if Instant::now() > deadline {
            return Err(io::ErrorKind::TimedOut.into());
        }
        thread::sleep(Duration::from_millis(2));
    }
}

fn handle_connection(stream: TcpStream, conn: u64, stop: Arc<AtomicBool>, tx: Sender<Command>, config: &ServeConfig) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_read_timeout(Some(Duration::from_secs(5)));
    let _ = stream.set_nodelay(true);
    let Ok(head) = peek_head(&stream) else { return };
    if http::is_upgrade(&head) {
        if let Ok(ws) = tungstenite::accept(stream) {
            Connection::new(ws, conn, tx, config.max_in_flight).run(&stop);
        }
    } else {
        http::respond(stream, config);
    }
}

// ---------------------------------------------------------------------------
// Connection thread
// ---------------------------------------------------------------------------

struct Connection {
    ws: WebSocket<TcpStream>,
    conn: u64,
    commands: Sender<Command>,
    inbox: Option<Receiver<Outbound>>,
    role: Option<Role>,
    seq: u64,
    in_flight: usize,
    max_in_flight: usize,
}

enum Flow {
    Continue,
    Stop,
}

impl Connection {
    fn new(ws: WebSocket<TcpStream>, conn: u64, commands: Sender<Command>, max_in_flight: usize) -> Self {
        let _ = ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)));
        Connection { ws, conn, commands, inbox: None, role: None, seq: 0, in_flight: 0, max_in_flight }
    }

    fn run(mut self, stop: &AtomicBool) {
        loop {
            if stop.load(Ordering::SeqCst) {
                let _ = self.send(&ServerMsg::Bye { reason: "server shutting down".into() });
                self.close(CloseCode::Away, "server shutting down");
                break;
            }
            let flow = match self.ws.read() {
                Ok(Message::Text(text)) => self.on_text(text.as_str()),
                Ok(Message::Binary(_)) => self.violation("binary frames are not part of the protocol", None),
                Ok(Message::Close(_)) => Flow::Stop,
                Ok(_) => Flow::Continue,
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Flow::Continue,
                Err(_) => Flow::Stop,
            };
            if matches!(flow, Flow::Stop) || matches!(self.drain(stop), Flow::Stop) {
                break;
            }
        }
        if self.inbox.is_some() {
            let _ = self.commands.send(Command::Leave { conn: self.conn });
        }
    }

    fn send(&mut self, msg: &ServerMsg) -> tungstenite::Result<()> {
        self.seq += 1;
        self.ws.send(Message::text(encode(msg, self.seq)))
    }

    fn close(&mut self, code: CloseCode, reason: &str) {
        let _ = self.ws.close(Some(CloseFrame { code, reason: reason.to_string().into() }));
        // Let the close handshake finish so the peer sees the reason.
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            match self.ws.read() {
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    let _ = self.ws.flush();
                }
                Err(_) => break,
            }
        }
    }

    fn violation(&mut self, reason: &str, seq: Option<u64>) -> Flow {
        self.fail(ErrorCode::ProtocolViolation, reason, seq)
    }

    fn fail(&mut self, code: ErrorCode, reason: &str, seq: Option<u64>) -> Flow {
        let _ = self.send(&ServerMsg::error(code, reason, seq));
        let close = if code == ErrorCode::ProtocolViolation || code == ErrorCode::VersionMismatch {
            CloseCode::Policy
        } else {
            CloseCode::Normal
        };
        self.close(close, &format!("{code:?}: {reason}"));
        Flow::Stop
    }

    fn on_text(&mut self, text: &str) -> Flow {
        let (seq, msg) = match decode::<ClientMsg>(text) {
            Ok(m) => m,
            Err(e) => return self.violation(&e.to_string(), None),
        };
        match (self.role, msg) {
            (None, ClientMsg::Hello { protocol, role, .. }) => {
                if protocol != PROTOCOL {
                    return self.fail(ErrorCode::VersionMismatch, &format!("server speaks {PROTOCOL}, client sent {protocol}"), Some(seq));
                }
                let (tx, rx) = mpsc::channel();
                self.inbox = Some(rx);
                self.role = Some(role);
                let _ = self.commands.send(Command::Join { conn: self.conn, role, tx });
                Flow::Continue
            }
            (None, _) => self.violation("the first message must be hello", Some(seq)),
            (Some(_), ClientMsg::Hello { .. }) => self.violation("hello sent twice", Some(seq)),
            (Some(Role::Observer), ClientMsg::Action { .. }) => self.violation("observers may not send actions", Some(seq)),
            (Some(Role::Observer), ClientMsg::RecordControl(_)) => self.violation("observers may not control recording", Some(seq)),
            (Some(Role::Controller), ClientMsg::Action { actions }) => {
                if self.in_flight >= self.max_in_flight {
                    let msg = format!("{} actions awaiting acknowledgment", self.in_flight);
                    let _ = self.send(&ServerMsg::error(ErrorCode::Busy, msg, Some(seq)));
                } else {
                    self.in_flight += 1;
                    let _ = self.commands.send(Command::Action { conn: self.conn, seq, actions });
                }
                Flow::Continue
            }
            (Some(_), ClientMsg::RecordControl(op)) => {
                let _ = self.commands.send(Command::Record { conn: self.conn, seq, op });
                Flow::Continue
            }
            (Some(_), ClientMsg::ReplayControl(op)) => {
                let _ = self.commands.send(Command::Replay { conn: self.conn, seq, op });
                Flow::Continue
            }
            (Some(_), ClientMsg::Bye { .. }) => {
                let _ = self.send(&ServerMsg::Bye { reason: "client said bye".into() });
                self.close(CloseCode::Normal, "bye");
                Flow::Stop
            }
        }
    }

    fn drain(&mut self, stop: &AtomicBool) -> Flow {
        loop {
            let next = match &self.inbox {
                Some(rx) => rx.try_recv(),
                None => return Flow::Continue,
            };
            match next {
                Ok(Outbound::Msg(m)) => {
                    if self.send(&m).is_err() {
                        return Flow::Stop;
                    }
                }
                Ok(Outbound::Settled(m)) => {
                    self.in_flight = self.in_flight.saturating_sub(1);
                    if self.send(&m).is_err() {
                        return Flow::Stop;
                    }
                }
                Ok(Outbound::Close(code, reason)) => return self.fail(code, &reason, None),
                Err(TryRecvError::Empty) => return Flow::Continue,
                Err(TryRecvError::Disconnected) => {
                    let reason = if stop.load(Ordering::SeqCst) { "server shutting down" } else { "session ended" };
                    let _ = self.send(&ServerMsg::Bye { reason: reason.into() });
                    self.close(CloseCode::Away, reason);
                    return Flow::Stop;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Session writer thread
// ---------------------------------------------------------------------------

struct Subscriber {
    tx: Sender<Outbound>,
}

struct Writer {
    source: SessionSource,
    session: Session,
    config: ServeConfig,
    subscribers: BTreeMap<u64, Subscriber>,
    controller: Option<u64>,
    view: Snapshot,
    recording: Option<String>,
    recordings: u64,
    last_step: Option<Instant>,
}

impl Writer {
    fn new(source: SessionSource, session: Session, config: ServeConfig) -> Self {
        let view = Snapshot::of(session.world(), session.step_index());
        Writer {
            source,
            session,
            config,
            subscribers: BTreeMap::new(),
            controller: None,
            view,
            recording: None,
            recordings: 0,
            last_step: None,
        }
    }

    fn run(mut self, rx: Receiver<Command>) {
        while let Ok(cmd) = rx.recv() {
            match cmd {
                Command::Join { conn, role, tx } => self.join(conn, role, tx),
                Command::Leave { conn } => {
                    self.subscribers.remove(&conn);
                    if self.controller == Some(conn) {
                        // The session simply waits; nothing advances without a controller.
                        self.controller = None;
                    }
                }
                Command::Action { conn, seq, actions } => self.action(conn, seq, &actions),
                Command::Record { conn, seq, op } => self.record(conn, seq, op),
                Command::Replay { conn, seq, op } => self.replay(conn, seq, op),
                Command::Shutdown => break,
            }
        }
    }

    fn to(&self, conn: u64, out: Outbound) {
        if let Some(s) = self.subscribers.get(&conn) {
            let _ = s.tx.send(out);
        }
    }

    fn broadcast(&self, msg: &ServerMsg) {
        for s in self.subscribers.values() {
            let _ = s.tx.send(Outbound::Msg(msg.clone()));
        }
    }

    fn snapshot_msg(&self, reason: SnapshotReason) -> ServerMsg {
        ServerMsg::Snapshot(SnapshotMsg { reason, digest: self.view.digest(), snapshot: self.view.clone() })
    }

    fn attach(&self, role: Role) -> ServerMsg {
        let h = self.session.header();
        ServerMsg::Attach(Attach {
            protocol: PROTOCOL.into(),
            role,
            task: h.task.clone(),
            seed: h.seed,
            scene_digest: h.scene_digest.clone(),
            taxonomy_digest: h.taxonomy_digest.clone(),
            step: self.session.step_index(),
            time_limit: self.session.time_limit(),
            goal: self.session.goal().iter().map(|g| g.to_string()).collect(),
            recording: self.recording.clone(),
        })
    }

    fn join(&mut self, conn: u64, role: Role, tx: Sender<Outbound>) {
        if role == Role::Controller {
            if self.controller.is_some() {
                let _ = tx.send(Outbound::Close(ErrorCode::ControllerTaken, "this session already has a controller".into()));
                return;
            }
            self.controller = Some(conn);
        }
        let _ = tx.send(Outbound::Msg(self.attach(role)));
        let _ = tx.send(Outbound::Msg(self.snapshot_msg(SnapshotReason::Join)));
        self.subscribers.insert(conn, Subscriber { tx });
    }

    fn action(&mut self, conn: u64, seq: u64, actions: &[ActionCommand]) {
        if self.controller != Some(conn) {
            return;
        }
        if let Some(t) = self.last_step {
            let next = t + self.config.step_interval;
            let now = Instant::now();
            if next > now {
                thread::sleep(next - now);
            }
        }
        let result = match self.session.step(actions) {
            Ok(r) => r,
            Err(e) => {
                let code = match e {
                    SessionError::SessionFinished => ErrorCode::SessionFinished,
                    SessionError::InvalidAction(_) | SessionError::World(_) => ErrorCode::InvalidAction,
                    _ => ErrorCode::Internal,
                };
                self.to(conn, Outbound::Settled(ServerMsg::error(code, e.to_string(), Some(seq))));
                return;
            }
        };
        self.last_step = Some(Instant::now());
        let view = Snapshot::of(self.session.world(), result.step_index);
        let delta = diff(&self.view, &view, result.events.clone());
        self.view = view;
        for (id, s) in &self.subscribers {
            let ack = (*id == conn).then_some(Ack { seq, step: result.step_index });
            let msg = ServerMsg::Delta(DeltaMsg { ack, delta: delta.clone() });
            let _ = s.tx.send(if ack.is_some() { Outbound::Settled(msg) } else { Outbound::Msg(msg) });
        }
        if !result.events.is_empty() || result.done {
            self.broadcast(&ServerMsg::PredicateEvents(PredicateEventsMsg {
                step: result.step_index,
                events: result.events,
                success: result.success,
                success_step: self.session.success_step(),
                done: result.done,
            }));
        }
        if self.config.snapshot_every > 0 && result.step_index % self.config.snapshot_every == 0 {
            self.broadcast(&self.snapshot_msg(SnapshotReason::Periodic));
        }
    }

    fn record(&mut self, conn: u64, seq: u64, op: RecordControl) {
        if self.controller != Some(conn) {
            self.to(conn, Outbound::Msg(ServerMsg::error(ErrorCode::ProtocolViolation, "only the controller records", Some(seq))));
            return;
        }
        let reply = match op {
            RecordControl::Start { name } => {
                if let Some(n) = &self.recording {
                    Err((ErrorCode::AlreadyRecording, format!("already recording `{n}`")))
                } else {
                    self.recordings += 1;
                    let name = name.filter(|n| valid_name(n)).unwrap_or_else(|| format!("demo-{}", self.recordings));
                    self.start_episode(name)
                }
            }
            RecordControl::Mark { label } => match &self.recording {
                Some(n) => {
                    self.session.mark(&label);
                    Ok(RecordReply { op: "mark".into(), name: n.clone(), step: self.session.step_index(), ..Default::default() })
                }
                None => Err((ErrorCode::NotRecording, "mark needs an active recording".into())),
            },
            RecordControl::Stop {} => match self.recording.take() {
                Some(n) => self.save(n),
                None => Err((ErrorCode::NotRecording, "stop without start".into())),
            },
        };
        match reply {
            Ok(r) => self.to(conn, Outbound::Msg(ServerMsg::RecordControl(r))),
            Err((code, m)) => self.to(conn, Outbound::Msg(ServerMsg::error(code, m, Some(seq)))),
        }
    }

    /// Recordings always cover a whole episode, so starting one resets the
    /// session to its initial state.
    fn start_episode(&mut self, name: String) -> Result<RecordReply, (ErrorCode, String)> {
        self.session = self.source.open().map_err(|e| (ErrorCode::Internal, e.to_string()))?;
        self.view = Snapshot::of(self.session.world(), 0);
        self.recording = Some(name.clone());
        self.last_step = None;
        self.broadcast(&self.snapshot_msg(SnapshotReason::Reset));
        Ok(RecordReply { op: "start".into(), name, step: 0, ..Default::default() })
    }

    fn save(&mut self, name: String) -> Result<RecordReply, (ErrorCode, String)> {
        let log = self.session.log();
        let file = format!("{name}.log");
        log.write(&self.config.log_dir.join(&file)).map_err(|e| (ErrorCode::Internal, e.to_string()))?;
        Ok(RecordReply {
            op: "stop".into(),
            name,
            step: self.session.step_index(),
            file: Some(file),
            final_digest: Some(log.final_digest().to_string()),
            success_step: log.footer.success_step,
        })
    }

    fn replay(&mut self, conn: u64, seq: u64, op: ReplayControl) {
        let msg = match op {
            ReplayControl::List {} => {
                ServerMsg::ReplayControl(ReplayReply { op: "list".into(), logs: list_logs(&self.config.log_dir), ..Default::default() })
            }
            ReplayControl::Verify { log } => match log_path(&self.config.log_dir, &log) {
                None => ServerMsg::error(ErrorCode::UnknownLog, format!("no log named `{log}`"), Some(seq)),
                Some(path) => {
                    let mut reply = ReplayReply { op: "verify".into(), log: Some(log.clone()), ..Default::default() };
                    match std::fs::read(&path).map_err(|e| e.to_string()).and_then(|b| {
                        replay_bytes(&b, &self.source.scene, self.source.taxonomy.clone()).map_err(|e| e.to_string())
                    }) {
                        Ok(r) => {
                            reply.ok = Some(true);
                            reply.steps = Some(r.step_digests.len() as u64);
                            reply.final_digest = Some(r.final_digest);
                        }
                        Err(e) => {
                            reply.ok = Some(false);
                            reply.error = Some(e);
                        }
                    }
                    ServerMsg::ReplayControl(reply)
                }
            },
        };
        self.to(conn, Outbound::Msg(msg));
    }
}

pub(crate) fn valid_name(n: &str) -> bool {
    !n.is_empty() && n.len() <= 64 && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Resolves a log name, with or without its `.log` suffix, inside `dir`.
pub(crate) fn log_path(dir: &Path, name: &str) -> Option<PathBuf> {
    let stem = name.strip_suffix(".log").unwrap_or(name);
    if !valid_name(stem) {
        return None;
    }
    let p = dir.join(format!("{stem}.log"));
    p.is_file().then_some(p)
}

pub(crate) fn list_logs(dir: &Path) -> Vec<LogEntry> {
    let mut out: Vec<LogEntry> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().to_str()?.to_string();
            let stem = name.strip_suffix(".log")?;
            if !valid_name(stem) {
                return None;
            }
            let mut bytes = Vec::new();
            std::fs::File::open(e.path()).ok()?.read_to_end(&mut bytes).ok()?;
            let final_digest = EpisodeLog::from_bytes(&bytes).ok().map(|l| l.final_digest().to_string());
            Some(LogEntry { name, bytes: bytes.len() as u64, final_digest })
        })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}
