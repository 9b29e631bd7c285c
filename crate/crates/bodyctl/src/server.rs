//! The live engine: WebSocket ingest, pipeline, OSC sender, telemetry.
//!
//! One client at a time (a second is turned away with HTTP 409). Its text
//! messages are frame records or `{"cmd":...}` control records; telemetry
//! and acks go back on the same socket. Threads:
//!
//! * acceptor — owns the listener, spawns the client thread;
//! * client — reads messages into the inbound queue, writes outbound text;
//! * pipeline — parses, processes, records, routes, emits telemetry;
//! * sender — encodes and delivers updates.
//!
//! The inbound queue evicts the oldest *frame* when full, so a slow pipeline
//! loses stale poses but never a command. The update queue evicts the oldest
//! update for the same address first.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use bodyctl_core::{FrameOutput, ParamUpdate, Pipeline, PipelineError};
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::http::StatusCode;
use tungstenite::{Message, WebSocket};

use crate::config::EngineConfig;
use crate::control::{self, Ack, Controller};
use crate::queue::{DropQueue, Pop};
use crate::replay::StallTicker;
use crate::session::{RecordReport, Recorder};
use crate::sink::{self, SendStats, UdpSink, UpdateSink};
use crate::telemetry::{DropCounters, ErrorCounters, FpsMeter, RateLimiter, Telemetry};
use crate::wire::parse_frame;

const FRAME_QUEUE: usize = 16;
const UPDATE_QUEUE: usize = 256;
const OUTBOUND_QUEUE: usize = 64;
const CLIENT_POLL: Duration = Duration::from_millis(5);
const IDLE_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("cannot open OSC output {addr}: {source}")]
    Output { addr: String, source: io::Error },
    #[error("cannot create {path}: {source}")]
    Record { path: String, source: io::Error },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Default)]
pub struct ServerOptions {
    /// Append every received frame to this session file.
    pub record: Option<PathBuf>,
    /// Where updates go; UDP to the configured `osc_out` when unset.
    pub sink: Option<Box<dyn UpdateSink>>,
}

/// Counters of a running engine.
#[derive(Debug, Default)]
pub struct EngineStats {
    pub frames_received: AtomicU64,
    pub frames_processed: AtomicU64,
    pub frames_dropped: AtomicU64,
    pub frame_errors: AtomicU64,
    pub stall_ticks: AtomicU64,
    pub telemetry_sent: AtomicU64,
    pub clients_rejected: AtomicU64,
    pub send: SendStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub frames_received: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub frame_errors: u64,
    pub stall_ticks: u64,
    pub telemetry_sent: u64,
    pub clients_rejected: u64,
    pub updates_sent: u64,
    pub updates_dropped: u64,
    pub send_errors: u64,
}

impl EngineStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        let l = |c: &AtomicU64| c.load(Ordering::Relaxed);
        StatsSnapshot {
            frames_received: l(&self.frames_received),
            frames_processed: l(&self.frames_processed),
            frames_dropped: l(&self.frames_dropped),
            frame_errors: l(&self.frame_errors),
            stall_ticks: l(&self.stall_ticks),
            telemetry_sent: l(&self.telemetry_sent),
            clients_rejected: l(&self.clients_rejected),
            updates_sent: self.send.sent(),
            updates_dropped: self.send.dropped(),
            send_errors: self.send.errors(),
        }
    }
}

enum Inbound {
    Frame(String, Instant),
    Command(String),
    Connected(SyncSender<String>),
    Disconnected,
}

/// A running engine. Dropping it without [`EngineHandle::stop`] leaves the
/// threads running.
pub struct EngineHandle {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    stats: Arc<EngineStats>,
    acceptor: JoinHandle<()>,
    worker: JoinHandle<Option<io::Result<RecordReport>>>,
    sender: Option<JoinHandle<()>>,
}

impl EngineHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Blocks until the engine stops (it only stops via [`Self::stop`]).
    pub fn wait(self) -> Option<io::Result<RecordReport>> {
        self.join()
    }

    /// Shuts every thread down; returns the recording summary if recording.
    pub fn stop(self) -> Option<io::Result<RecordReport>> {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join()
    }

    fn join(self) -> Option<io::Result<RecordReport>> {
        let _ = self.acceptor.join();
        let report = self.worker.join().unwrap_or(None);
        if let Some(s) = self.sender {
            let _ = s.join();
        }
        report
    }
}

fn bind(addr: &str) -> Result<TcpListener, ServerError> {
    let err = |source| ServerError::Bind {
        addr: addr.into(),
        source,
    };
    let addrs: Vec<SocketAddr> = addr.to_socket_addrs().map_err(err)?.collect();
    let listener = TcpListener::bind(&addrs[..]).map_err(err)?;
    listener.set_nonblocking(true).map_err(err)?;
    Ok(listener)
}

fn open_recorder(path: &PathBuf) -> Result<Recorder<BufWriter<File>>, ServerError> {
    File::create(path)
        .map(|f| Recorder::new(BufWriter::new(f)))
        .map_err(|source| ServerError::Record {
            path: path.display().to_string(),
            source,
        })
}

fn inbound_queue() -> Arc<DropQueue<Inbound>> {
    Arc::new(DropQueue::with_eviction(FRAME_QUEUE, |q: &VecDeque<Inbound>, _| {
        q.iter().position(|m| matches!(m, Inbound::Frame(..))).unwrap_or(0)
    }))
}

/// Starts the full engine on `config.listen`.
pub fn start(config: EngineConfig, options: ServerOptions) -> Result<EngineHandle, ServerError> {
    let pipeline = Pipeline::new(config.pipeline_config())?;
    let listener = bind(&config.listen)?;
    let local_addr = listener.local_addr().map_err(|source| ServerError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    let sink = match options.sink {
        Some(s) => s,
        None => Box::new(UdpSink::new(&config.osc_out).map_err(|source| ServerError::Output {
            addr: config.osc_out.clone(),
            source,
        })?),
    };
    let recorder = options.record.as_ref().map(open_recorder).transpose()?;

    let shutdown = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(EngineStats::default());
    let inbound = inbound_queue();
    let updates: Arc<DropQueue<ParamUpdate>> = Arc::new(DropQueue::with_eviction(
        UPDATE_QUEUE,
        |q: &VecDeque<ParamUpdate>, incoming: &ParamUpdate| {
            q.iter().position(|u| u.address == incoming.address).unwrap_or(0)
        },
    ));

    let acceptor = spawn_acceptor(listener, inbound.clone(), shutdown.clone(), stats.clone());
    let sender = {
        let (updates, stats) = (updates.clone(), stats.clone());
        thread::Builder::new()
            .name("bodyctl-sender".into())
            .spawn(move || sender_loop(&updates, sink, &stats))
            .expect("spawn sender")
    };
    let osc_out = config.osc_out.clone();
    let worker = {
        let (shutdown, stats) = (shutdown.clone(), stats.clone());
        thread::Builder::new()
            .name("bodyctl-pipeline".into())
            .spawn(move || {
                let mut w = Worker::new(&config, pipeline, recorder, stats, updates.clone());
                w.run(&inbound, &shutdown);
                updates.close();
                w.recorder.map(Recorder::finish)
            })
            .expect("spawn pipeline")
    };
    log::info!("listening on ws://{local_addr}, OSC to {osc_out}");
    Ok(EngineHandle {
        local_addr,
        shutdown,
        stats,
        acceptor,
        worker,
        sender: Some(sender),
    })
}

/// Starts a recorder without a pipeline: frames received on `listen` are
/// appended to `output`; control records are refused.
pub fn start_recording(listen: &str, output: PathBuf) -> Result<EngineHandle, ServerError> {
    let listener = bind(listen)?;
    let local_addr = listener.local_addr().map_err(|source| ServerError::Bind {
        addr: listen.into(),
        source,
    })?;
    let mut recorder = open_recorder(&output)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(EngineStats::default());
    let inbound = inbound_queue();
    let acceptor = spawn_acceptor(listener, inbound.clone(), shutdown.clone(), stats.clone());
    let worker = {
        let (shutdown, stats) = (shutdown.clone(), stats.clone());
        thread::Builder::new()
            .name("bodyctl-recorder".into())
            .spawn(move || {
                let mut outbound: Option<SyncSender<String>> = None;
                while !shutdown.load(Ordering::SeqCst) {
                    match inbound.pop_timeout(IDLE_POLL) {
                        Pop::Item(Inbound::Frame(text, _)) => match parse_frame(&text) {
                            Ok(frame) => {
                                match recorder.push(&frame) {
                                    Ok(true) => stats.frames_processed.fetch_add(1, Ordering::Relaxed),
                                    Ok(false) => stats.frame_errors.fetch_add(1, Ordering::Relaxed),
                                    Err(e) => return Some(Err(e)),
                                };
                            }
                            Err(e) => {
                                log::debug!("bad frame: {e}");
                                stats.frame_errors.fetch_add(1, Ordering::Relaxed);
                            }
                        },
                        Pop::Item(Inbound::Command(_)) => {
                            if let Some(tx) = &outbound {
                                let ack = serde_json::json!({
                                    "ack": "invalid",
                                    "ok": false,
                                    "error": "recording only; no engine to control",
                                });
                                let _ = tx.try_send(ack.to_string());
                            }
                        }
                        Pop::Item(Inbound::Connected(tx)) => outbound = Some(tx),
                        Pop::Item(Inbound::Disconnected) => outbound = None,
                        Pop::Timeout => {}
                        Pop::Closed => break,
                    }
                }
                Some(recorder.finish())
            })
            .expect("spawn recorder")
    };
    log::info!("recording ws://{local_addr} to {}", output.display());
    Ok(EngineHandle {
        local_addr,
        shutdown,
        stats,
        acceptor,
        worker,
        sender: None,
    })
}

fn spawn_acceptor(
    listener: TcpListener,
    inbound: Arc<DropQueue<Inbound>>,
    shutdown: Arc<AtomicBool>,
    stats: Arc<EngineStats>,
) -> JoinHandle<()> {
    thread::Builder::new()
        .name("bodyctl-acceptor".into())
        .spawn(move || {
            let busy = Arc::new(AtomicBool::new(false));
            let mut clients: Vec<JoinHandle<()>> = Vec::new();
            while !shutdown.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let _ = stream.set_nonblocking(false);
                        if busy.swap(true, Ordering::SeqCst) {
                            log::info!("rejecting {peer}: a performer is already connected");
                            stats.clients_rejected.fetch_add(1, Ordering::Relaxed);
                            clients.push(thread::spawn(move || reject(stream)));
                            continue;
                        }
                        log::info!("client {peer} connected");
                        let (inbound, shutdown, busy) = (inbound.clone(), shutdown.clone(), busy.clone());
                        let stats = stats.clone();
                        clients.push(thread::spawn(move || {
                            serve_client(stream, &inbound, &shutdown, &stats);
                            log::info!("client {peer} disconnected");
                            busy.store(false, Ordering::SeqCst);
                        }));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(IDLE_POLL),
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        thread::sleep(IDLE_POLL);
                    }
                }
                clients.retain(|c| !c.is_finished());
            }
            for c in clients {
                let _ = c.join();
            }
        })
        .expect("spawn acceptor")
}

// the callback signature is tungstenite's
#[allow(clippy::result_large_err)]
fn reject(stream: TcpStream) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(2)));
    let _ = tungstenite::accept_hdr(stream, |_: &Request, _: Response| {
        let mut resp = ErrorResponse::new(Some("another performer is connected".into()));
        *resp.status_mut() = StatusCode::CONFLICT;
        Err(resp)
    });
}

fn serve_client(stream: TcpStream, inbound: &DropQueue<Inbound>, shutdown: &AtomicBool, stats: &EngineStats) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(2)));
    let _ = stream.set_nodelay(true);
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::info!("handshake failed: {e}");
            return;
        }
    };
    let _ = ws.get_ref().set_read_timeout(Some(CLIENT_POLL));
    let (tx, rx) = mpsc::sync_channel(OUTBOUND_QUEUE);
    inbound.push(Inbound::Connected(tx));
    client_loop(&mut ws, &rx, inbound, shutdown, stats);
    inbound.push(Inbound::Disconnected);
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn client_loop(
    ws: &mut WebSocket<TcpStream>,
    outbound: &Receiver<String>,
    inbound: &DropQueue<Inbound>,
    shutdown: &AtomicBool,
    stats: &EngineStats,
) {
    while !shutdown.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let text = text.as_str();
                let msg = if control::is_control(text) {
                    Inbound::Command(text.to_owned())
                } else {
                    stats.frames_received.fetch_add(1, Ordering::Relaxed);
                    Inbound::Frame(text.to_owned(), Instant::now())
                };
                if let Some(Inbound::Frame(..)) = inbound.push(msg) {
                    stats.frames_dropped.fetch_add(1, Ordering::Relaxed);
                }
            }
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return,
            Err(e) => {
                log::info!("client read failed: {e}");
                return;
            }
        }
        let mut wrote = false;
        while let Ok(text) = outbound.try_recv() {
            if ws.write(Message::text(text)).is_err() {
                return;
            }
            wrote = true;
        }
        if wrote && ws.flush().is_err() {
            return;
        }
    }
}

fn sender_loop(updates: &DropQueue<ParamUpdate>, mut sink: Box<dyn UpdateSink>, stats: &EngineStats) {
    let mut batch = Vec::new();
    loop {
        match updates.pop_timeout(IDLE_POLL) {
            Pop::Item(u) => batch.push(u),
            Pop::Timeout => continue,
            Pop::Closed => break,
        }
        while let Some(u) = updates.try_pop() {
            batch.push(u);
        }
        sink::send(&batch, sink.as_mut(), &stats.send);
        batch.clear();
        if let Err(e) = sink.flush() {
            log::debug!("sink flush failed: {e}");
            stats.send.errors.fetch_add(1, Ordering::Relaxed);
        }
    }
    let _ = sink.flush();
}

/// Pipeline-thread state.
struct Worker {
    pipeline: Pipeline,
    controller: Controller,
    recorder: Option<Recorder<BufWriter<File>>>,
    stats: Arc<EngineStats>,
    updates: Arc<DropQueue<ParamUpdate>>,
    outbound: Option<SyncSender<String>>,
    ticker: StallTicker,
    t_hold: f64,
    /// Wall-clock arrival and timestamp of the latest processed frame.
    last_frame: Option<(Instant, f64)>,
    started: Instant,
    limiter: RateLimiter,
    fps: FpsMeter,
}

impl Worker {
    fn new(
        config: &EngineConfig,
        pipeline: Pipeline,
        recorder: Option<Recorder<BufWriter<File>>>,
        stats: Arc<EngineStats>,
        updates: Arc<DropQueue<ParamUpdate>>,
    ) -> Self {
        Worker {
            controller: Controller::new(config, &pipeline),
            pipeline,
            recorder,
            stats,
            updates,
            outbound: None,
            ticker: StallTicker::default(),
            t_hold: config.smoother.t_hold_ms,
            last_frame: None,
            started: Instant::now(),
            limiter: RateLimiter::new(config.telemetry_rate),
            fps: FpsMeter::default(),
        }
    }

    fn wall_ms(&self, at: Instant) -> f64 {
        at.saturating_duration_since(self.started).as_secs_f64() * 1000.0
    }

    fn run(&mut self, inbound: &DropQueue<Inbound>, shutdown: &AtomicBool) {
        while !shutdown.load(Ordering::SeqCst) {
            match inbound.pop_timeout(IDLE_POLL) {
                Pop::Item(Inbound::Frame(text, at)) => self.frame(&text, at),
                Pop::Item(Inbound::Command(text)) => self.command(&text),
                Pop::Item(Inbound::Connected(tx)) => {
                    // a new client brings a new time base
                    self.pipeline.reset();
                    self.ticker.clear();
                    self.last_frame = None;
                    self.outbound = Some(tx);
                }
                Pop::Item(Inbound::Disconnected) => self.outbound = None,
                Pop::Timeout => {}
                Pop::Closed => break,
            }
            self.stall_check();
        }
    }

    fn frame(&mut self, text: &str, at: Instant) {
        let frame = match parse_frame(text) {
            Ok(f) => f,
            Err(e) => {
                log::debug!("bad frame: {e}");
                self.stats.frame_errors.fetch_add(1, Ordering::Relaxed);
                return;
            }
        };
        if let Some(rec) = &mut self.recorder {
            if let Err(e) = rec.push(&frame).and_then(|_| rec.flush()) {
                log::warn!("recording failed, stopping it: {e}");
                self.recorder = None;
            }
        }
        if self.pipeline.last_t().is_some_and(|last| frame.t <= last) && self.ticker.stalled() {
            // the stream came back after a stall with a fresh clock
            self.pipeline.reset();
        }
        let out = match self.pipeline.process(&frame) {
            Ok(out) => out,
            Err(e) => {
                log::debug!("frame at t={} rejected: {e}", frame.t);
                self.stats.frame_errors.fetch_add(1, Ordering::Relaxed);
                return;
            }
        };
        self.stats.frames_processed.fetch_add(1, Ordering::Relaxed);
        self.ticker.on_frame(frame.t, self.t_hold);
        self.last_frame = Some((at, frame.t));
        self.fps.record(self.wall_ms(at));
        if let Some(ack) = self.controller.observe(&out, &mut self.pipeline) {
            self.send_text(ack.to_json());
        }
        self.emit(&out);
    }

    fn stall_check(&mut self) {
        let Some((at, t)) = self.last_frame else { return };
        let virtual_now = t + at.elapsed().as_secs_f64() * 1000.0;
        while let Some(tick) = self.ticker.due(virtual_now) {
            match self.pipeline.tick(tick) {
                Ok(out) => {
                    self.ticker.ticked(&out);
                    self.stats.stall_ticks.fetch_add(1, Ordering::Relaxed);
                    self.emit(&out);
                }
                Err(e) => {
                    log::warn!("stall tick failed: {e}");
                    self.ticker.clear();
                }
            }
        }
    }

    fn command(&mut self, text: &str) {
        let ack = match control::parse_command(text) {
            Ok(cmd) => self.controller.apply(&cmd, &mut self.pipeline),
            Err(e) => Ack::rejected(e, self.controller.state().clone()),
        };
        self.send_text(ack.to_json());
    }

    fn emit(&mut self, out: &FrameOutput) {
        for u in &out.updates {
            if self.updates.push(u.clone()).is_some() {
                self.stats.send.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        if self.outbound.is_none() {
            return;
        }
        let now = self.wall_ms(Instant::now());
        if !self.limiter.admit(now) {
            return;
        }
        let snap = self.stats.snapshot();
        let telemetry = Telemetry::from_output(
            out,
            self.pipeline.mappings(),
            self.controller.state(),
            self.fps.fps(now),
            DropCounters {
                frames: snap.frames_dropped,
                updates: snap.updates_dropped,
            },
            ErrorCounters {
                send: snap.send_errors,
                frames: snap.frame_errors,
            },
        );
        self.send_text(telemetry.to_json());
        self.stats.telemetry_sent.fetch_add(1, Ordering::Relaxed);
    }

    fn send_text(&mut self, text: String) {
        if let Some(tx) = &self.outbound {
            match tx.try_send(text) {
                Ok(()) => {}
                // a slow UI misses a report; it gets the next one
                Err(TrySendError::Full(_)) => {}
                Err(TrySendError::Disconnected(_)) => self.outbound = None,
            }
        }
    }
}
