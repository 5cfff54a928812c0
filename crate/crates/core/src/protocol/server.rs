//! Connection handling: one thread per client, all ingest connections
//! feeding a single bounded event queue, responses fanned out to every
//! connected response client.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{channel, sync_channel, Receiver, Sender, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::loopback::{pipe, LoopbackStream};
use super::{decode, encode, ClientKind, WireMessage, PROTOCOL_VERSION};
use crate::engine::ResponseSink;
use crate::model::{EventKind, ResponseRecord};

pub const DEFAULT_QUEUE_CAPACITY: usize = 65_536;
/// A connection is dropped after this many malformed lines in a row.
pub const MAX_CONSECUTIVE_ERRORS: u32 = 3;
const MAX_LINE: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientEvent {
    pub conn: u64,
    /// Microseconds since the server started listening.
    pub arrival_us: u64,
    pub kind: EventKind,
}

/// What the scheduler receives from listener threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueueItem {
    Connected { conn: u64, kind: ClientKind },
    Event(ClientEvent),
    Disconnected { conn: u64, kind: ClientKind },
}

#[derive(Default)]
struct HubInner {
    subscribers: Vec<(u64, Sender<ResponseRecord>)>,
    closed: bool,
}

/// Broadcasts response records to every subscribed response connection.
#[derive(Clone, Default)]
pub struct ResponseHub {
    inner: Arc<Mutex<HubInner>>,
}

impl ResponseHub {
    fn subscribe(&self, conn: u64) -> Option<Receiver<ResponseRecord>> {
        let mut inner = self.inner.lock().unwrap();
        if inner.closed {
            return None;
        }
        let (tx, rx) = channel();
        inner.subscribers.push((conn, tx));
        Some(rx)
    }

    fn unsubscribe(&self, conn: u64) {
        self.inner
            .lock()
            .unwrap()
            .subscribers
            .retain(|(c, _)| *c != conn);
    }

    pub fn subscribers(&self) -> usize {
        self.inner.lock().unwrap().subscribers.len()
    }

    /// Drops every subscription; response connections drain what they have
    /// already been sent and then see end of stream.
    pub fn close(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.closed = true;
        inner.subscribers.clear();
    }
}

impl ResponseSink for ResponseHub {
    fn record(&mut self, rec: &ResponseRecord) -> io::Result<()> {
        self.inner
            .lock()
            .unwrap()
            .subscribers
            .retain(|(_, tx)| tx.send(*rec).is_ok());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `host:port`; port 0 picks a free port.
    Tcp(String),
    /// In-process only; connect with [`ServerHandle::connect_loopback`].
    Loopback,
}

struct Shared {
    queue: SyncSender<QueueItem>,
    hub: ResponseHub,
    start: Instant,
    next_conn: AtomicU64,
    open: AtomicUsize,
    stop: AtomicBool,
    tcp_streams: Mutex<Vec<TcpStream>>,
}

impl Shared {
    fn arrival_us(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }
}

pub struct ServerHandle {
    shared: Arc<Shared>,
    local_addr: Option<SocketAddr>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.local_addr
    }

    pub fn hub(&self) -> ResponseHub {
        self.shared.hub.clone()
    }

    /// Currently open connections of any kind.
    pub fn open_connections(&self) -> usize {
        self.shared.open.load(Ordering::SeqCst)
    }

    /// Opens an in-process connection serviced exactly like a socket.
    pub fn connect_loopback(&self) -> LoopbackStream {
        let (client, server) = pipe();
        let shared = Arc::clone(&self.shared);
        let conn = shared.next_conn.fetch_add(1, Ordering::SeqCst);
        thread::spawn(move || {
            let (r, w) = server.split();
            serve_connection(BufReader::new(r), w, shared, conn);
        });
        client
    }

    /// Stops accepting, ends response streams and closes open sockets.
    pub fn shutdown(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.shared.hub.close();
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        for s in self.shared.tcp_streams.lock().unwrap().drain(..) {
            let _ = s.shutdown(Shutdown::Read);
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Starts listening. Ingest messages become [`QueueItem`]s on `queue`;
/// response connections are subscribed to `hub`.
pub fn serve_clients(
    endpoint: &Endpoint,
    queue: SyncSender<QueueItem>,
    hub: ResponseHub,
) -> io::Result<ServerHandle> {
    let shared = Arc::new(Shared {
        queue,
        hub,
        start: Instant::now(),
        next_conn: AtomicU64::new(0),
        open: AtomicUsize::new(0),
        stop: AtomicBool::new(false),
        tcp_streams: Mutex::new(Vec::new()),
    });
    let (local_addr, acceptor) = match endpoint {
        Endpoint::Loopback => (None, None),
        Endpoint::Tcp(addr) => {
            let addr = addr
                .to_socket_addrs()?
                .next()
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
            let listener = TcpListener::bind(addr)?;
            listener.set_nonblocking(true)?;
            let local = listener.local_addr()?;
            let shared = Arc::clone(&shared);
            let h = thread::spawn(move || accept_loop(listener, shared));
            (Some(local), Some(h))
        }
    };
    Ok(ServerHandle {
        shared,
        local_addr,
        acceptor,
    })
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("connection from {peer}");
                if stream.set_nonblocking(false).is_err() {
                    continue;
                }
                let _ = stream.set_nodelay(true);
                let Ok(read_half) = stream.try_clone() else {
                    continue;
                };
                if let Ok(c) = stream.try_clone() {
                    shared.tcp_streams.lock().unwrap().push(c);
                }
                let conn = shared.next_conn.fetch_add(1, Ordering::SeqCst);
                let shared = Arc::clone(&shared);
                thread::spawn(move || {
                    serve_connection(BufReader::new(read_half), stream, shared, conn)
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

struct OpenGuard<'a>(&'a AtomicUsize);

impl Drop for OpenGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Reads one line, bounded in length. `None` at end of stream.
fn read_line<R: BufRead>(reader: &mut R, buf: &mut Vec<u8>) -> Option<()> {
    buf.clear();
    match reader.by_ref().take(MAX_LINE).read_until(b'\n', buf) {
        Ok(0) | Err(_) => None,
        Ok(_) => Some(()),
    }
}

fn serve_connection<R, W>(mut reader: R, writer: W, shared: Arc<Shared>, conn: u64)
where
    R: BufRead,
    W: Write + Send + 'static,
{
    shared.open.fetch_add(1, Ordering::SeqCst);
    let _guard = OpenGuard(&shared.open);
    let mut buf = Vec::new();
    let mut errors = 0;

    let kind = loop {
        read_line(&mut reader, &mut buf).map(|_| ()).unwrap_or(());
        if buf.is_empty() {
            return;
        }
        match decode(&buf) {
            Ok(WireMessage::Hello { kind, version }) if version == PROTOCOL_VERSION => break kind,
            Ok(other) => warn!("conn {conn}: expected HELLO, got {other}"),
            Err(e) => warn!("conn {conn}: {e}"),
        }
        errors += 1;
        if errors >= MAX_CONSECUTIVE_ERRORS {
            warn!("conn {conn}: dropped after {errors} errors");
            return;
        }
    };
    debug!("conn {conn}: {} client", kind.as_str());

    match kind {
        ClientKind::Antigen | ClientKind::Signal => {
            if shared.queue.send(QueueItem::Connected { conn, kind }).is_err() {
                return;
            }
            ingest_loop(&mut reader, &mut buf, &shared, conn, kind);
            let _ = shared.queue.send(QueueItem::Disconnected { conn, kind });
        }
        ClientKind::Response => {
            let Some(rx) = shared.hub.subscribe(conn) else {
                return;
            };
            let writer_thread = thread::spawn(move || response_writer(rx, writer));
            // Only BYE or hangup are expected from here on.
            errors = 0;
            while read_line(&mut reader, &mut buf).is_some() {
                match decode(&buf) {
                    Ok(WireMessage::Bye) => break,
                    _ => {
                        errors += 1;
                        if errors >= MAX_CONSECUTIVE_ERRORS {
                            break;
                        }
                    }
                }
            }
            shared.hub.unsubscribe(conn);
            let _ = writer_thread.join();
        }
    }
}

fn ingest_loop<R: BufRead>(
    reader: &mut R,
    buf: &mut Vec<u8>,
    shared: &Shared,
    conn: u64,
    kind: ClientKind,
) {
    let mut errors = 0;
    while read_line(reader, buf).is_some() {
        let event = match (kind, decode(buf)) {
            (ClientKind::Antigen, Ok(WireMessage::Antigen(v))) => EventKind::Antigen(v),
            (ClientKind::Signal, Ok(WireMessage::Signal { id, level })) => EventKind::Signal {
                id: id as usize,
                level,
            },
            (_, Ok(WireMessage::Bye)) => return,
            (_, Ok(other)) => {
                warn!("conn {conn}: unexpected {other} on {} connection", kind.as_str());
                errors += 1;
                if errors >= MAX_CONSECUTIVE_ERRORS {
                    warn!("conn {conn}: dropped after {errors} errors");
                    return;
                }
                continue;
            }
            (_, Err(e)) => {
                warn!("conn {conn}: {e}");
                errors += 1;
                if errors >= MAX_CONSECUTIVE_ERRORS {
                    warn!("conn {conn}: dropped after {errors} errors");
                    return;
                }
                continue;
            }
        };
        errors = 0;
        let item = QueueItem::Event(ClientEvent {
            conn,
            arrival_us: shared.arrival_us(),
            kind: event,
        });
        if shared.queue.send(item).is_err() {
            return;
        }
    }
}

fn response_writer<W: Write>(rx: Receiver<ResponseRecord>, mut w: W) {
    for rec in rx {
        let line = encode(&WireMessage::Response {
            antigen: rec.antigen,
            t_us: rec.t_us,
        });
        if w.write_all(line.as_bytes()).and_then(|_| w.flush()).is_err() {
            break;
        }
    }
}

/// A bound server endpoint together with the scheduler's end of its queue.
pub struct Listeners {
    pub handle: ServerHandle,
    pub events: Receiver<QueueItem>,
}

impl Listeners {
    pub fn bind(endpoint: &Endpoint, capacity: usize) -> io::Result<Self> {
        let (tx, rx) = sync_channel(capacity);
        let handle = serve_clients(endpoint, tx, ResponseHub::default())?;
        Ok(Listeners { handle, events: rx })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AntigenValue;
    use crate::protocol::{Client, ResponseListener};

    fn loopback() -> Listeners {
        Listeners::bind(&Endpoint::Loopback, 16).unwrap()
    }

    fn wait_for(mut f: impl FnMut() -> bool) {
        let t = Instant::now();
        while !f() {
            assert!(t.elapsed() < Duration::from_secs(5), "timed out");
            thread::sleep(Duration::from_millis(1));
        }
    }

    #[test]
    fn antigen_messages_queue_in_order() {
        let l = loopback();
        let stream = l.handle.connect_loopback();
        let mut c = Client::hello(stream, ClientKind::Antigen).unwrap();
        for v in [6, 5, 78] {
            c.antigen(AntigenValue(v)).unwrap();
        }
        c.bye().unwrap();
        let items: Vec<QueueItem> = (0..5).map(|_| l.events.recv().unwrap()).collect();
        assert!(matches!(items[0], QueueItem::Connected { kind: ClientKind::Antigen, .. }));
        let got: Vec<EventKind> = items[1..4]
            .iter()
            .map(|i| match i {
                QueueItem::Event(e) => e.kind,
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(
            got,
            [6, 5, 78].map(|v| EventKind::Antigen(AntigenValue(v)))
        );
        assert!(matches!(items[4], QueueItem::Disconnected { .. }));
    }

    #[test]
    fn three_bad_lines_drop_the_connection() {
        let l = loopback();
        let stream = l.handle.connect_loopback();
        let (mut r, mut w) = stream.split();
        w.write_all(b"HELLO antigen 1\nANTIGEN x\nSIGNAL 0 1\nANTIGEN 7\nBOGUS\nnope\n???\nANTIGEN 8\n")
            .unwrap();
        assert!(matches!(l.events.recv().unwrap(), QueueItem::Connected { .. }));
        match l.events.recv().unwrap() {
            QueueItem::Event(e) => assert_eq!(e.kind, EventKind::Antigen(AntigenValue(7))),
            other => panic!("{other:?}"),
        }
        assert!(matches!(l.events.recv().unwrap(), QueueItem::Disconnected { .. }));
        // Server side hung up: our read sees end of stream.
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).unwrap();
        wait_for(|| l.handle.open_connections() == 0);
    }

    #[test]
    fn disconnect_decrements_connection_count() {
        let l = loopback();
        let s = l.handle.connect_loopback();
        let c = Client::hello(s, ClientKind::Signal).unwrap();
        l.events.recv().unwrap();
        assert_eq!(l.handle.open_connections(), 1);
        drop(c);
        assert!(matches!(l.events.recv().unwrap(), QueueItem::Disconnected { .. }));
        wait_for(|| l.handle.open_connections() == 0);
    }

    #[test]
    fn response_clients_receive_records_after_subscribing() {
        let l = loopback();
        let mut hub = l.handle.hub();
        let rec = |v| ResponseRecord {
            t_us: 100,
            antigen: AntigenValue(v),
            cell_type: crate::model::CellType(2),
        };
        hub.record(&rec(1)).unwrap(); // nobody listening yet
        let (r, w) = l.handle.connect_loopback().split();
        let listener = ResponseListener::new(BufReader::new(r), w).unwrap();
        wait_for(|| hub.subscribers() == 1);
        for v in 2..7 {
            hub.record(&rec(v)).unwrap();
        }
        hub.close();
        let got: Vec<u32> = listener.map(|r| r.unwrap().0 .0).collect();
        assert_eq!(got, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn tcp_endpoint_accepts_clients() {
        let l = Listeners::bind(&Endpoint::Tcp("127.0.0.1:0".into()), 16).unwrap();
        let addr = l.handle.local_addr().unwrap();
        let mut c = Client::connect(addr, ClientKind::Antigen).unwrap();
        c.antigen(AntigenValue(11)).unwrap();
        c.bye().unwrap();
        assert!(matches!(l.events.recv().unwrap(), QueueItem::Connected { .. }));
        assert!(matches!(
            l.events.recv().unwrap(),
            QueueItem::Event(ClientEvent { kind: EventKind::Antigen(AntigenValue(11)), .. })
        ));
    }

    #[test]
    fn bind_failure_is_reported() {
        let l = Listeners::bind(&Endpoint::Tcp("127.0.0.1:0".into()), 16).unwrap();
        let addr = l.handle.local_addr().unwrap();
        assert!(Listeners::bind(&Endpoint::Tcp(addr.to_string()), 16).is_err());
    }
}
