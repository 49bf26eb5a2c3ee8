//! Acquisition server: newline-delimited JSON session messages over TCP,
//! labels and a time service over HTTP, and a replay client that streams a
//! stored session through both channels.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    read_session, write_session, LabelEvent, Millis, RecordingSession, SensorEvent, SensorKind, TriaxialSeries,
};

/// Longest accepted TCP line, newline excluded.
pub const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireEvent {
    pub t: Millis,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionMessage {
    StartSession {
        session: String,
    },
    SensorBatch {
        session: String,
        sensor: SensorKind,
        events: Vec<WireEvent>,
    },
    EndSession {
        session: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Ack {
    fn from_result(r: Result<()>) -> Self {
        match r {
            Ok(()) => Ack { ok: true, error: None },
            Err(e) => Ack {
                ok: false,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    t: Millis,
    l: String,
}

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> Millis;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as Millis)
    }
}

/// Always reports the same instant.
pub struct FixedClock(pub Millis);

impl Clock for FixedClock {
    fn now_ms(&self) -> Millis {
        self.0
    }
}

#[derive(Debug, Default)]
struct SessionBuffer {
    gyroscope: Vec<SensorEvent>,
    accelerometer: Vec<SensorEvent>,
    labels: Vec<LabelEvent>,
}

/// Session ids become directory names, so they are restricted to a
/// portable character set.
fn check_session_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Protocol(format!("invalid session id {id:?}")))
    }
}

/// Open sessions and the directory closed sessions are written to.
pub struct ServerState {
    data_dir: PathBuf,
    open: Mutex<HashMap<String, SessionBuffer>>,
}

impl ServerState {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerState {
            data_dir: data_dir.into(),
            open: Mutex::new(HashMap::new()),
        }
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, HashMap<String, SessionBuffer>> {
        self.open.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn is_open(&self, session: &str) -> bool {
        self.sessions().contains_key(session)
    }

    /// Buffered events of one sensor in an open session.
    pub fn buffered(&self, session: &str, sensor: SensorKind) -> Option<usize> {
        self.sessions().get(session).map(|b| match sensor {
            SensorKind::Gyroscope => b.gyroscope.len(),
            SensorKind::Accelerometer => b.accelerometer.len(),
        })
    }

    pub fn buffered_labels(&self, session: &str) -> Option<usize> {
        self.sessions().get(session).map(|b| b.labels.len())
    }

    pub fn handle_message(&self, msg: SessionMessage) -> Result<()> {
        match msg {
            SessionMessage::StartSession { session } => {
                check_session_id(&session)?;
                let mut open = self.sessions();
                if open.contains_key(&session) {
                    return Err(Error::Protocol(format!("session {session:?} is already open")));
                }
                open.insert(session, SessionBuffer::default());
                Ok(())
            }
            SessionMessage::SensorBatch {
                session,
                sensor,
                events,
            } => {
                // Validate the whole batch before touching the buffer.
                let events = events
                    .into_iter()
                    .map(|e| SensorEvent::new(sensor, e.t, e.x, e.y, e.z))
                    .collect::<Result<Vec<_>>>()?;
                let mut open = self.sessions();
                let buf = open
                    .get_mut(&session)
                    .ok_or_else(|| Error::UnknownSession(session.clone()))?;
                match sensor {
                    SensorKind::Gyroscope => buf.gyroscope.extend(events),
                    SensorKind::Accelerometer => buf.accelerometer.extend(events),
                }
                Ok(())
            }
            SessionMessage::EndSession { session } => {
                let buf = self
                    .sessions()
                    .remove(&session)
                    .ok_or_else(|| Error::UnknownSession(session.clone()))?;
                let closed = (|| {
                    let gyroscope = TriaxialSeries::from_events(SensorKind::Gyroscope, &buf.gyroscope)?;
                    let accelerometer = TriaxialSeries::from_events(SensorKind::Accelerometer, &buf.accelerometer)?;
                    let s = RecordingSession::new(session.clone(), gyroscope, accelerometer, buf.labels.clone())?;
                    write_session(&s, &self.data_dir.join(&session))
                })();
                if closed.is_err() {
                    // Keep the data so the client can fix and retry.
                    self.sessions().insert(session, buf);
                }
                closed
            }
        }
    }

    /// Parses and applies one TCP line.
    pub fn handle_line(&self, line: &[u8]) -> Ack {
        let r = serde_json::from_slice::<SessionMessage>(line)
            .map_err(|e| Error::Protocol(format!("malformed message: {e}")))
            .and_then(|m| self.handle_message(m));
        Ack::from_result(r)
    }

    /// Appends a label from a JSON body `{"t": <ms>, "l": "<symbol>"}`.
    pub fn handle_label(&self, session: &str, body: &[u8]) -> Result<()> {
        let b: LabelBody =
            serde_json::from_slice(body).map_err(|e| Error::Protocol(format!("malformed label: {e}")))?;
        if b.t < 0 {
            return Err(Error::Protocol(format!("negative timestamp {}", b.t)));
        }
        if b.l.is_empty() {
            return Err(Error::Protocol(format!("unusable label {:?}", b.l)));
        }
        let mut open = self.sessions();
        let buf = open
            .get_mut(session)
            .ok_or_else(|| Error::UnknownSession(session.to_string()))?;
        buf.labels.push(LabelEvent::new(b.t, b.l));
        Ok(())
    }
}

/// Thirteen-digit decimal ms timestamp.
pub fn time_response(clock: &dyn Clock) -> String {
    format!("{:013}", clock.now_ms())
}

/// Reads newline-terminated lines of at most `MAX_LINE_BYTES`, answering
/// each with one JSON acknowledgement line.
fn serve_connection(state: &ServerState, stream: TcpStream) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = (&mut reader)
            .take(MAX_LINE_BYTES as u64 + 1)
            .read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(());
        }
        let ack = if line.last() != Some(&b'\n') && line.len() > MAX_LINE_BYTES {
            // Drop the rest of the oversized line.
            let mut rest = Vec::new();
            reader.read_until(b'\n', &mut rest)?;
            Ack::from_result(Err(Error::Protocol(format!("line exceeds {MAX_LINE_BYTES} bytes"))))
        } else {
            while matches!(line.last(), Some(b'\n' | b'\r')) {
                line.pop();
            }
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            state.handle_line(&line)
        };
        let mut out = serde_json::to_vec(&ack).expect("ack serializes");
        out.push(b'\n');
        writer.write_all(&out)?;
    }
}

fn respond(request: tiny_http::Request, status: u16, body: String) {
    let r = tiny_http::Response::from_string(body).with_status_code(status);
    if let Err(e) = request.respond(r) {
        log::warn!("http response failed: {e}");
    }
}

fn serve_http(state: &ServerState, clock: &dyn Clock, mut request: tiny_http::Request) {
    let url = request.url().to_string();
    let path = url.split('?').next().unwrap_or("");
    let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
    match (request.method(), parts.as_slice()) {
        (tiny_http::Method::Get, ["time"]) => {
            let t = time_response(clock);
            respond(request, 200, t);
        }
        (tiny_http::Method::Post, ["session", id, "label"]) => {
            let id = id.to_string();
            let mut body = Vec::new();
            let read = request
                .as_reader()
                .take(MAX_LINE_BYTES as u64)
                .read_to_end(&mut body);
            let r = read
                .map_err(|e| Error::Network(e.to_string()))
                .and_then(|_| state.handle_label(&id, &body));
            let status = match &r {
                Ok(()) => 200,
                Err(Error::UnknownSession(_)) => 404,
                Err(_) => 400,
            };
            let ack = serde_json::to_string(&Ack::from_result(r)).expect("ack serializes");
            respond(request, status, ack);
        }
        _ => {
            let msg = format!("no route for {} {path}", request.method());
            respond(request, 404, msg);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerConfig {
    pub tcp_addr: String,
    pub http_addr: String,
    pub data_dir: PathBuf,
}

/// A server running on background threads.
pub struct RunningServer {
    pub tcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    pub state: Arc<ServerState>,
    stop: Arc<AtomicBool>,
    http: Arc<tiny_http::Server>,
    threads: Vec<JoinHandle<()>>,
}

impl RunningServer {
    /// Stops accepting connections and joins the listener threads.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.http.unblock();
        // Wake the accept loop.
        let _ = TcpStream::connect(self.tcp_addr);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Blocks until the listener threads exit.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Binds both listeners (port 0 picks a free port) and serves on
/// background threads, one per TCP connection.
pub fn spawn(config: &ServerConfig, clock: Arc<dyn Clock>) -> Result<RunningServer> {
    std::fs::create_dir_all(&config.data_dir).map_err(|e| Error::io(&config.data_dir, e))?;
    let listener = TcpListener::bind(&config.tcp_addr)
        .map_err(|e| Error::Network(format!("bind {}: {e}", config.tcp_addr)))?;
    let tcp_addr = listener.local_addr().map_err(|e| Error::Network(e.to_string()))?;
    let http = tiny_http::Server::http(&config.http_addr)
        .map_err(|e| Error::Network(format!("bind {}: {e}", config.http_addr)))?;
    let http_addr = http
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Network("http listener has no IP address".into()))?;
    let http = Arc::new(http);
    let state = Arc::new(ServerState::new(config.data_dir.clone()));
    let stop = Arc::new(AtomicBool::new(false));

    let tcp_thread = {
        let state = Arc::clone(&state);
        let stop = Arc::clone(&stop);
        std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let state = Arc::clone(&state);
                        std::thread::spawn(move || {
                            if let Err(e) = serve_connection(&state, stream) {
                                log::warn!("connection closed: {e}");
                            }
                        });
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            }
        })
    };
    let http_thread = {
        let state = Arc::clone(&state);
        let http = Arc::clone(&http);
        std::thread::spawn(move || {
            for request in http.incoming_requests() {
                serve_http(&state, clock.as_ref(), request);
            }
        })
    };
    log::info!("listening on tcp {tcp_addr}, http {http_addr}");
    Ok(RunningServer {
        tcp_addr,
        http_addr,
        state,
        stop,
        http,
        threads: vec![tcp_thread, http_thread],
    })
}

/// Client side of the TCP channel.
pub struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Connection {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::Network(e.to_string()))?;
        let writer = stream.try_clone().map_err(|e| Error::Network(e.to_string()))?;
        Ok(Connection {
            reader: BufReader::new(stream),
            writer,
        })
    }

    /// Sends one message and waits for its acknowledgement.
    pub fn send(&mut self, msg: &SessionMessage) -> Result<Ack> {
        let mut line = serde_json::to_vec(msg).map_err(|e| Error::Protocol(e.to_string()))?;
        line.push(b'\n');
        self.send_raw(&line)
    }

    pub fn send_raw(&mut self, line: &[u8]) -> Result<Ack> {
        self.writer.write_all(line).map_err(|e| Error::Network(e.to_string()))?;
        let mut reply = String::new();
        let n = self
            .reader
            .read_line(&mut reply)
            .map_err(|e| Error::Network(e.to_string()))?;
        if n == 0 {
            return Err(Error::Network("server closed the connection".into()));
        }
        serde_json::from_str(&reply).map_err(|e| Error::Protocol(format!("bad acknowledgement: {e}")))
    }

    fn expect_ok(&mut self, msg: &SessionMessage) -> Result<()> {
        let ack = self.send(msg)?;
        if ack.ok {
            Ok(())
        } else {
            Err(Error::Protocol(ack.error.unwrap_or_default()))
        }
    }
}

/// Posts one label over HTTP.
pub fn post_label(http_addr: &str, session: &str, label: &LabelEvent) -> Result<()> {
    let body = serde_json::json!({ "t": label.t, "l": label.label }).to_string();
    ureq::post(format!("http://{http_addr}/session/{session}/label"))
        .header("Content-Type", "application/json")
        .send(&body)
        .map_err(|e| Error::Network(format!("label post: {e}")))?;
    Ok(())
}

/// Asks the time service for the current server time.
pub fn request_time(http_addr: &str) -> Result<Millis> {
    let mut r = ureq::get(format!("http://{http_addr}/time"))
        .call()
        .map_err(|e| Error::Network(format!("time request: {e}")))?;
    let body = r
        .body_mut()
        .read_to_string()
        .map_err(|e| Error::Network(e.to_string()))?;
    body.trim()
        .parse()
        .map_err(|_| Error::Protocol(format!("bad time response {body:?}")))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayOptions {
    pub seed: u64,
    /// Largest batch; sizes are drawn from `1..=max_batch`.
    pub max_batch: usize,
    /// Session id to use on the server; defaults to the stored id.
    pub session: Option<String>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            seed: 1,
            max_batch: 64,
            session: None,
        }
    }
}

enum Step {
    Batch(SensorKind, Vec<WireEvent>),
    Label(LabelEvent),
}

/// Streams a session through the server: both sensors cut into batches of
/// random size, batches and label posts sent in random order, then the
/// session is closed.
pub fn replay(session: &RecordingSession, tcp_addr: &str, http_addr: &str, options: &ReplayOptions) -> Result<()> {
    if options.max_batch == 0 {
        return Err(Error::invalid("max_batch must be >= 1"));
    }
    let id = options.session.clone().unwrap_or_else(|| session.id.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut steps = Vec::new();
    for sensor in SensorKind::ALL {
        let events: Vec<WireEvent> = session
            .series(sensor)
            .to_events()
            .into_iter()
            .map(|e| WireEvent {
                t: e.t,
                x: e.x,
                y: e.y,
                z: e.z,
            })
            .collect();
        let mut rest = events.as_slice();
        while !rest.is_empty() {
            let n = rng.gen_range(1..=options.max_batch).min(rest.len());
            steps.push(Step::Batch(sensor, rest[..n].to_vec()));
            rest = &rest[n..];
        }
    }
    steps.extend(session.labels.iter().cloned().map(Step::Label));
    steps.shuffle(&mut rng);

    let mut conn = Connection::connect(tcp_addr)?;
    conn.expect_ok(&SessionMessage::StartSession { session: id.clone() })?;
    for step in steps {
        match step {
            Step::Batch(sensor, events) => conn.expect_ok(&SessionMessage::SensorBatch {
                session: id.clone(),
                sensor,
                events,
            })?,
            Step::Label(l) => post_label(http_addr, &id, &l)?,
        }
    }
    conn.expect_ok(&SessionMessage::EndSession { session: id })
}

/// Replays the session stored in `directory`.
pub fn replay_session(directory: &Path, tcp_addr: &str, http_addr: &str, options: &ReplayOptions) -> Result<()> {
    replay(&read_session(directory)?, tcp_addr, http_addr, options)
}
