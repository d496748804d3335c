//! TCP transport for the bridge: one thread per connection side, one
//! simulation thread that owns the [`Hub`].

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use fleet_core::bridge::encode;
use fleet_core::sim::LogRecord;

use crate::hub::{ClientId, Hub};

enum Command {
    Connect(ClientId, Sender<String>),
    Line(ClientId, String),
    Gone(ClientId),
}

pub struct ServeOptions {
    pub period: Duration,
    /// Set to stop the loop from another thread.
    pub stop: Arc<AtomicBool>,
    /// Receives the replay log of the session as it is produced.
    pub log_sink: Option<Box<dyn Write + Send>>,
    /// Return once the hub has reached its tick limit.
    pub exit_when_finished: bool,
}

fn spawn_acceptor(listener: TcpListener, tx: Sender<Command>, stop: Arc<AtomicBool>) {
    listener.set_nonblocking(true).expect("listener supports nonblocking mode");
    thread::spawn(move || {
        let mut next: ClientId = 0;
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    next += 1;
                    log::info!("client {next} connected from {peer}");
                    if connect(stream, next, &tx).is_err() {
                        let _ = tx.send(Command::Gone(next));
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(Duration::from_millis(10));
                }
            }
        }
    });
}

fn connect(stream: TcpStream, id: ClientId, tx: &Sender<Command>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    if tx.send(Command::Connect(id, out_tx)).is_err() {
        return Ok(());
    }
    thread::spawn(move || write_lines(stream, out_rx));
    let tx = tx.clone();
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    let line = String::from_utf8_lossy(&buf).into_owned();
                    if tx.send(Command::Line(id, line)).is_err() {
                        return;
                    }
                }
            }
        }
        let _ = tx.send(Command::Gone(id));
    });
    Ok(())
}

fn write_lines(stream: TcpStream, rx: Receiver<String>) {
    let mut w = BufWriter::new(stream);
    for line in rx {
        if w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).and_then(|_| w.flush()).is_err() {
            break;
        }
    }
    if let Ok(s) = w.into_inner() {
        let _ = s.shutdown(std::net::Shutdown::Both);
    }
}

/// Runs the bridge until `opts.stop` is set or, if asked, the hub is done.
pub fn serve(mut hub: Hub, listener: TcpListener, mut opts: ServeOptions) -> std::io::Result<Hub> {
    let (tx, rx) = mpsc::channel();
    spawn_acceptor(listener, tx, opts.stop.clone());
    let mut senders: std::collections::BTreeMap<ClientId, Sender<String>> = Default::default();
    // Transport ids map onto hub ids; they are assigned in the same order
    // but kept apart so either side may change.
    let mut ids: std::collections::BTreeMap<ClientId, ClientId> = Default::default();
    let mut deadline = Instant::now();
    while !opts.stop.load(Ordering::Relaxed) {
        loop {
            match rx.try_recv() {
                Ok(Command::Connect(t, sender)) => {
                    let id = hub.connect();
                    ids.insert(t, id);
                    senders.insert(id, sender);
                }
                Ok(Command::Line(t, line)) => {
                    if let Some(&id) = ids.get(&t) {
                        hub.handle_line(id, &line);
                    }
                }
                Ok(Command::Gone(t)) => {
                    if let Some(id) = ids.remove(&t) {
                        log::info!("client {t} disconnected");
                        hub.disconnect(id);
                        senders.remove(&id);
                    }
                }
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
            }
        }
        let records = hub.tick();
        if let Some(sink) = opts.log_sink.as_mut() {
            write_records(sink, &records)?;
        }
        let mut dead = Vec::new();
        for (&id, sender) in &senders {
            for frame in hub.take_outbox(id) {
                if sender.send(encode(&frame)).is_err() {
                    dead.push(id);
                    break;
                }
            }
        }
        for id in dead {
            hub.disconnect(id);
            senders.remove(&id);
        }
        if opts.exit_when_finished && hub.finished() {
            break;
        }
        deadline += opts.period;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        } else {
            deadline = now;
        }
    }
    opts.stop.store(true, Ordering::Relaxed);
    if let Some(sink) = opts.log_sink.as_mut() {
        sink.flush()?;
    }
    Ok(hub)
}

pub fn write_records<W: Write + ?Sized>(w: &mut W, records: &[LogRecord]) -> std::io::Result<()> {
    for r in records {
        w.write_all(r.to_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
