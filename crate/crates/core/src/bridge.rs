//! Push-only telemetry stream of speed commands over plain TCP.
//!
//! Each record is one line: `seq t mode fraction min_distance dynamic_msd`,
//! single spaces, six decimals, `inf` when nobody is tracked. The producer
//! never blocks: samples go through a bounded drop-oldest queue to a
//! dispatcher thread that numbers them and fans them out to per-client
//! bounded buffers. A client whose buffer fills, or whose socket write times
//! out, is disconnected.

use std::io::{BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::{self, SendTimeoutError, Sender, TryRecvError, TrySendError};
use crossbeam::queue::ArrayQueue;
use thiserror::Error;

use crate::controller::ModeKind;
use crate::io::{read_trace, IoError};
use crate::sim::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeMessage {
    pub seq: u64,
    pub t: f64,
    pub mode: ModeKind,
    pub fraction: f64,
    /// Human–TCP distance (m).
    pub min_distance: f64,
    /// Dynamic separation distance at the commanded speed (m).
    pub dynamic_msd: f64,
}

impl BridgeMessage {
    pub fn from_row(seq: u64, row: &TraceRow) -> Self {
        Sample::from(row).numbered(seq)
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {:.6} {} {:.6} {:.6} {:.6}\n",
            self.seq,
            self.t,
            self.mode.as_str(),
            self.fraction,
            self.min_distance,
            self.dynamic_msd
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut f = line.split(' ');
        let msg = BridgeMessage {
            seq: f.next()?.parse().ok()?,
            t: f.next()?.parse().ok()?,
            mode: ModeKind::parse(f.next()?)?,
            fraction: f.next()?.parse().ok()?,
            min_distance: f.next()?.parse().ok()?,
            dynamic_msd: f.next()?.trim_end().parse().ok()?,
        };
        f.next().is_none().then_some(msg)
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    mode: ModeKind,
    fraction: f64,
    min_distance: f64,
    dynamic_msd: f64,
}

impl From<&TraceRow> for Sample {
    fn from(row: &TraceRow) -> Self {
        Sample {
            t: row.t,
            mode: row.mode,
            fraction: row.fraction,
            min_distance: row.d_true,
            dynamic_msd: row.msd_dynamic,
        }
    }
}

impl Sample {
    fn numbered(self, seq: u64) -> BridgeMessage {
        BridgeMessage {
            seq,
            t: self.t,
            mode: self.mode,
            fraction: self.fraction,
            min_distance: self.min_distance,
            dynamic_msd: self.dynamic_msd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeConfig {
    /// Publish every n-th control tick.
    pub decimation: u64,
    /// Producer-side queue length; the oldest sample is dropped on overflow.
    pub queue_capacity: usize,
    /// Lines buffered per client before it counts as slow.
    pub client_buffer: usize,
    pub write_timeout: Duration,
    /// Wait up to `write_timeout` for a full client buffer to drain instead
    /// of dropping the client at once. Only for producers that may stall.
    pub lossless: bool,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            decimation: 1,
            queue_capacity: 4096,
            client_buffer: 1024,
            write_timeout: Duration::from_millis(250),
            lossless: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("decimation must be at least 1")]
    InvalidDecimation,
    #[error("queue and client buffers must be non-empty")]
    InvalidCapacity,
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DisconnectReason {
    /// The client's buffer filled up.
    SlowClient,
    /// A socket write failed or timed out.
    WriteFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisconnectEvent {
    pub client: u64,
    pub peer: SocketAddr,
    /// Last sequence number handed to this client.
    pub last_seq: Option<u64>,
    pub reason: DisconnectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BridgeStats {
    /// Samples accepted from the producer.
    pub published: u64,
    /// Samples discarded by the drop-oldest queue.
    pub dropped: u64,
    /// Records numbered and fanned out.
    pub dispatched: u64,
    pub clients_accepted: u64,
    pub active_clients: usize,
    pub disconnects: Vec<DisconnectEvent>,
}

struct Client {
    id: u64,
    peer: SocketAddr,
    tx: Sender<Arc<str>>,
    last_seq: Option<u64>,
}

struct Shared {
    queue: ArrayQueue<Sample>,
    published: AtomicU64,
    dropped: AtomicU64,
    dispatched: AtomicU64,
    accepted: AtomicU64,
    closing: AtomicBool,
    clients: Mutex<Vec<Client>>,
    disconnects: Mutex<Vec<DisconnectEvent>>,
    writers: Mutex<Vec<JoinHandle<()>>>,
}

impl Shared {
    /// First reason wins; a writer timing out after the dispatcher already
    /// dropped its client adds nothing.
    fn record(&self, event: DisconnectEvent) {
        let mut all = self.disconnects.lock().expect("bridge lock");
        if all.iter().all(|e| e.client != event.client) {
            all.push(event);
        }
    }
}

/// Producer side; cheap to create, never blocks in [`Publisher::publish`].
pub struct Publisher {
    shared: Arc<Shared>,
    dispatcher: thread::Thread,
    decimation: u64,
    tick: u64,
}

impl Publisher {
    fn due(&mut self) -> bool {
        let due = self.tick % self.decimation == 0;
        self.tick += 1;
        due
    }

    /// Offers one control tick; on a full queue the oldest sample is dropped.
    pub fn publish(&mut self, row: &TraceRow) {
        if !self.due() {
            return;
        }
        self.shared.published.fetch_add(1, Ordering::Relaxed);
        if self.shared.queue.force_push(Sample::from(row)).is_some() {
            self.shared.dropped.fetch_add(1, Ordering::Relaxed);
        }
        self.dispatcher.unpark();
    }

    /// Like [`Publisher::publish`] but waits for queue space instead of
    /// dropping, for producers that may be throttled.
    pub fn publish_blocking(&mut self, row: &TraceRow) {
        if !self.due() {
            return;
        }
        self.shared.published.fetch_add(1, Ordering::Relaxed);
        let mut sample = Sample::from(row);
        while let Err(back) = self.shared.queue.push(sample) {
            sample = back;
            self.dispatcher.unpark();
            thread::sleep(Duration::from_micros(100));
        }
        self.dispatcher.unpark();
    }
}

pub struct BridgeHandle {
    addr: SocketAddr,
    config: BridgeConfig,
    shared: Arc<Shared>,
    acceptor: Option<JoinHandle<()>>,
    dispatcher: Option<JoinHandle<()>>,
}

/// Starts the stream service on `addr` (port 0 picks a free port).
pub fn serve(addr: impl ToSocketAddrs + std::fmt::Debug, config: BridgeConfig) -> Result<BridgeHandle, BridgeError> {
    if config.decimation == 0 {
        return Err(BridgeError::InvalidDecimation);
    }
    if config.queue_capacity == 0 || config.client_buffer == 0 {
        return Err(BridgeError::InvalidCapacity);
    }
    let bind_err = |source| BridgeError::Bind {
        addr: format!("{addr:?}"),
        source,
    };
    let listener = TcpListener::bind(&addr).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    let local = listener.local_addr().map_err(bind_err)?;
    let shared = Arc::new(Shared {
        queue: ArrayQueue::new(config.queue_capacity),
        published: AtomicU64::new(0),
        dropped: AtomicU64::new(0),
        dispatched: AtomicU64::new(0),
        accepted: AtomicU64::new(0),
        closing: AtomicBool::new(false),
        clients: Mutex::new(Vec::new()),
        disconnects: Mutex::new(Vec::new()),
        writers: Mutex::new(Vec::new()),
    });
    let dispatcher = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("bridge-dispatch".into())
            .spawn(move || dispatch(&shared, config))
            .expect("spawn dispatcher")
    };
    let acceptor = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("bridge-accept".into())
            .spawn(move || accept_loop(listener, &shared, config))
            .expect("spawn acceptor")
    };
    Ok(BridgeHandle {
        addr: local,
        config,
        shared,
        acceptor: Some(acceptor),
        dispatcher: Some(dispatcher),
    })
}

fn accept_loop(listener: TcpListener, shared: &Arc<Shared>, config: BridgeConfig) {
    while !shared.closing.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if stream.set_nonblocking(false).is_err()
                    || stream.set_write_timeout(Some(config.write_timeout)).is_err()
                {
                    continue;
                }
                let _ = stream.set_nodelay(true);
                let id = shared.accepted.fetch_add(1, Ordering::AcqRel);
                let (tx, rx) = channel::bounded::<Arc<str>>(config.client_buffer);
                let writer = {
                    let shared = Arc::clone(shared);
                    thread::spawn(move || write_loop(stream, rx, id, peer, &shared))
                };
                shared.writers.lock().expect("bridge lock").push(writer);
                shared.clients.lock().expect("bridge lock").push(Client {
                    id,
                    peer,
                    tx,
                    last_seq: None,
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(1));
            }
            Err(_) => thread::sleep(Duration::from_millis(1)),
        }
    }
}

fn write_loop(
    stream: TcpStream,
    rx: channel::Receiver<Arc<str>>,
    id: u64,
    peer: SocketAddr,
    shared: &Shared,
) {
    let mut out = BufWriter::new(stream);
    // Last record known to have left the buffer, and the last one buffered.
    let mut flushed = None;
    let mut buffered = None;
    let result = loop {
        let line = match rx.try_recv() {
            Ok(line) => line,
            Err(TryRecvError::Empty) => {
                // Flush only when caught up so bursts go out in few syscalls.
                if let Err(e) = out.flush() {
                    break Err(e);
                }
                flushed = buffered;
                match rx.recv() {
                    Ok(line) => line,
                    Err(_) => break out.flush(),
                }
            }
            Err(TryRecvError::Disconnected) => break out.flush(),
        };
        if let Err(e) = out.write_all(line.as_bytes()) {
            break Err(e);
        }
        buffered = line.split(' ').next().and_then(|s| s.parse().ok());
    };
    if let Err(e) = result {
        shared.record(DisconnectEvent {
            client: id,
            peer,
            last_seq: flushed,
            reason: DisconnectReason::WriteFailed(e.to_string()),
        });
    }
    let _ = out.get_ref().shutdown(Shutdown::Both);
}

fn offer(tx: &Sender<Arc<str>>, line: Arc<str>, config: &BridgeConfig) -> Result<(), TrySendError<Arc<str>>> {
    if !config.lossless {
        return tx.try_send(line);
    }
    tx.send_timeout(line, config.write_timeout).map_err(|e| match e {
        SendTimeoutError::Timeout(l) => TrySendError::Full(l),
        SendTimeoutError::Disconnected(l) => TrySendError::Disconnected(l),
    })
}

fn dispatch(shared: &Shared, config: BridgeConfig) {
    let mut seq = 0u64;
    loop {
        let Some(sample) = shared.queue.pop() else {
            if shared.closing.load(Ordering::Acquire) && shared.queue.is_empty() {
                break;
            }
            thread::park_timeout(Duration::from_millis(2));
            continue;
        };
        let line: Arc<str> = sample.numbered(seq).to_line().into();
        let mut clients = shared.clients.lock().expect("bridge lock");
        clients.retain_mut(|c| match offer(&c.tx, Arc::clone(&line), &config) {
            Ok(()) => {
                c.last_seq = Some(seq);
                true
            }
            Err(TrySendError::Full(_)) => {
                shared.record(DisconnectEvent {
                    client: c.id,
                    peer: c.peer,
                    last_seq: c.last_seq,
                    reason: DisconnectReason::SlowClient,
                });
                false
            }
            // The writer already recorded why it stopped.
            Err(TrySendError::Disconnected(_)) => false,
        });
        drop(clients);
        seq += 1;
        shared.dispatched.store(seq, Ordering::Release);
    }
    shared.clients.lock().expect("bridge lock").clear();
}

impl BridgeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.config
    }

    pub fn publisher(&self) -> Publisher {
        Publisher {
            shared: Arc::clone(&self.shared),
            dispatcher: self
                .dispatcher
                .as_ref()
                .expect("bridge is running")
                .thread()
                .clone(),
            decimation: self.config.decimation,
            tick: 0,
        }
    }

    pub fn active_clients(&self) -> usize {
        self.shared.clients.lock().expect("bridge lock").len()
    }

    /// Waits until at least `n` clients are connected.
    pub fn wait_for_clients(&self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            if self.active_clients() >= n {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(1));
        }
    }

    pub fn stats(&self) -> BridgeStats {
        BridgeStats {
            published: self.shared.published.load(Ordering::Acquire),
            dropped: self.shared.dropped.load(Ordering::Acquire),
            dispatched: self.shared.dispatched.load(Ordering::Acquire),
            clients_accepted: self.shared.accepted.load(Ordering::Acquire),
            active_clients: self.active_clients(),
            disconnects: self.shared.disconnects.lock().expect("bridge lock").clone(),
        }
    }

    fn stop(&mut self) {
        self.shared.closing.store(true, Ordering::Release);
        if let Some(d) = self.dispatcher.take() {
            d.thread().unpark();
            let _ = d.join();
        }
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        let writers: Vec<_> = self.shared.writers.lock().expect("bridge lock").drain(..).collect();
        for w in writers {
            let _ = w.join();
        }
    }

    /// Delivers everything already queued, closes every connection and
    /// stops accepting.
    pub fn finish(mut self) -> BridgeStats {
        self.stop();
        self.stats()
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("speed factor must be positive, got {0}")]
    InvalidFactor(f64),
    #[error(transparent)]
    Trace(#[from] IoError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayOptions {
    /// Real-time multiplier; infinity streams as fast as clients allow.
    pub factor: f64,
    /// Clients to wait for before streaming.
    pub wait_clients: usize,
    pub wait_timeout: Duration,
    pub bridge: BridgeConfig,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            factor: 1.0,
            wait_clients: 0,
            wait_timeout: Duration::from_secs(10),
            bridge: BridgeConfig::default(),
        }
    }
}

pub struct ReplayHandle {
    addr: SocketAddr,
    worker: JoinHandle<BridgeStats>,
}

impl ReplayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Waits for the end of the stream.
    pub fn join(self) -> BridgeStats {
        self.worker.join().expect("replay worker panicked")
    }
}

/// Streams recorded rows with their original spacing scaled by `1 / factor`.
pub fn replay_rows(
    rows: Vec<TraceRow>,
    addr: impl ToSocketAddrs + std::fmt::Debug,
    options: ReplayOptions,
) -> Result<ReplayHandle, ReplayError> {
    if !(options.factor > 0.0) {
        return Err(ReplayError::InvalidFactor(options.factor));
    }
    // A replay may wait for its readers, so a briefly full buffer is not a slow client.
    let bridge = serve(
        addr,
        BridgeConfig {
            lossless: true,
            ..options.bridge
        },
    )?;
    let local = bridge.local_addr();
    let worker = thread::spawn(move || {
        if options.wait_clients > 0 {
            bridge.wait_for_clients(options.wait_clients, options.wait_timeout);
        }
        let mut publisher = bridge.publisher();
        let start = Instant::now();
        let t0 = rows.first().map_or(0.0, |r| r.t);
        for row in &rows {
            if options.factor.is_finite() {
                let due = start + Duration::from_secs_f64(((row.t - t0) / options.factor).max(0.0));
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
            }
            publisher.publish_blocking(row);
        }
        bridge.finish()
    });
    Ok(ReplayHandle { addr: local, worker })
}

/// Reads a trace file, rejecting it with the offending row index if any row
/// is malformed, and streams it.
pub fn replay(
    trace: &Path,
    addr: impl ToSocketAddrs + std::fmt::Debug,
    options: ReplayOptions,
) -> Result<ReplayHandle, ReplayError> {
    let rows = read_trace(trace)?;
    replay_rows(rows, addr, options)
}
