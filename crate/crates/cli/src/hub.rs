//! Transport-free bridge session: client frames in, server frames out.
//!
//! The hub owns the world. Client frames are applied between ticks, so the
//! simulation itself stays single-threaded. Each tick turns the new log
//! records into stream frames that every client receives.

use std::collections::{BTreeMap, BTreeSet};

use fleet_core::bridge::{decode, Ack, Body, ErrorReply, Frame, ProtocolError, SeqGuard, Sequencer};
use fleet_core::sim::{Controller, EventKind, LogRecord, SimError, World};

pub type ClientId = u64;

#[derive(Debug, Default)]
struct Client {
    out: Sequencer,
    guard: SeqGuard,
    steered: BTreeSet<u32>,
    outbox: Vec<Frame>,
}

pub struct Hub {
    world: World,
    paused: bool,
    clients: BTreeMap<ClientId, Client>,
    next_client: ClientId,
    /// Stream frames emitted so far, in order; kept for replay checks.
    stream: Vec<Body>,
    keep_stream: bool,
    /// Simulation stops advancing at this tick.
    limit: Option<u64>,
}

/// Turns log records into the frames a client would have been streamed.
pub fn stream_bodies(records: &[LogRecord]) -> Vec<Body> {
    records
        .iter()
        .filter_map(|r| {
            let body = match r.kind {
                EventKind::State => Body::State(serde_json::from_value(r.payload.clone()).ok()?),
                EventKind::HirReport => Body::HirReport(serde_json::from_value(r.payload.clone()).ok()?),
                EventKind::HapOutcome => Body::HapOutcome(serde_json::from_value(r.payload.clone()).ok()?),
                _ => return None,
            };
            Some(body)
        })
        .collect()
}

impl Hub {
    /// The world should log a state every tick so clients see each one.
    pub fn new(world: World) -> Self {
        Self { world, paused: false, clients: BTreeMap::new(), next_client: 1, stream: Vec::new(), keep_stream: false, limit: None }
    }

    /// Also remember every stream frame, see [`Hub::stream`].
    pub fn recording(mut self) -> Self {
        self.keep_stream = true;
        self
    }

    /// Stops advancing once the world reaches `tick`; states keep flowing.
    pub fn with_tick_limit(mut self, tick: u64) -> Self {
        self.limit = Some(tick);
        self
    }

    pub fn finished(&self) -> bool {
        self.limit.is_some_and(|l| self.world.tick() >= l)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn into_world(self) -> World {
        self.world
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn stream(&self) -> &[Body] {
        &self.stream
    }

    pub fn clients(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.clients.keys().copied()
    }

    pub fn connect(&mut self) -> ClientId {
        let id = self.next_client;
        self.next_client += 1;
        self.clients.insert(id, Client { out: Sequencer::new(), ..Client::default() });
        id
    }

    /// Workers the client was steering stop where they are.
    pub fn disconnect(&mut self, id: ClientId) {
        let Some(client) = self.clients.remove(&id) else { return };
        let still_steered: BTreeSet<u32> = self.clients.values().flat_map(|c| c.steered.iter().copied()).collect();
        for w in client.steered.difference(&still_steered) {
            let _ = self.world.set_controller(*w, Controller::Hold);
        }
    }

    pub fn take_outbox(&mut self, id: ClientId) -> Vec<Frame> {
        self.clients.get_mut(&id).map(|c| std::mem::take(&mut c.outbox)).unwrap_or_default()
    }

    fn reply(&mut self, id: ClientId, body: Body) {
        if let Some(c) = self.clients.get_mut(&id) {
            let frame = c.out.stamp(body);
            c.outbox.push(frame);
        }
    }

    fn reject(&mut self, id: ClientId, of: Option<u64>, message: String) {
        self.reply(id, Body::Error(ErrorReply { of, message }));
    }

    /// Applies one line from a client and queues the ack or error.
    pub fn handle_line(&mut self, id: ClientId, line: &str) {
        if line.trim().is_empty() || !self.clients.contains_key(&id) {
            return;
        }
        let frame = match decode(line) {
            Ok(f) => f,
            Err(e) => return self.reject(id, e.seq(), e.to_string()),
        };
        let guard = &mut self.clients.get_mut(&id).expect("checked above").guard;
        if let Err(e) = guard.check(frame.seq) {
            return self.reject(id, Some(frame.seq), e.to_string());
        }
        if !frame.body.from_client() {
            let e = ProtocolError::InvalidPayload {
                seq: frame.seq,
                kind: frame.body.kind().into(),
                reason: "server-to-client kind".into(),
            };
            return self.reject(id, Some(frame.seq), e.to_string());
        }
        match self.apply(id, frame.body) {
            Ok(note) => self.reply(id, Body::Ack(Ack { of: frame.seq, note })),
            Err(e) => self.reject(id, Some(frame.seq), e.to_string()),
        }
    }

    fn apply(&mut self, id: ClientId, body: Body) -> Result<Option<String>, SimError> {
        match body {
            Body::Steer(cmd) => {
                let clamped = self.world.steer(cmd.worker, cmd.steer)?;
                if let Some(c) = self.clients.get_mut(&id) {
                    c.steered.insert(cmd.worker);
                }
                let v_max = self.world.config().hap.band.v_max;
                Ok(clamped.then(|| format!("speed clamped to {v_max} m/s")))
            }
            Body::SpawnDeviation(d) => {
                let h = self
                    .world
                    .humans()
                    .iter()
                    .find(|h| h.id == d.worker)
                    .ok_or(SimError::UnknownWorker(d.worker))?;
                if h.external {
                    return Err(SimError::Config(format!("worker {} is steered, not scripted", d.worker)));
                }
                let at = d.at.unwrap_or(0.0).max(self.world.time());
                self.world.inject_deviation(d.worker, at, d.toward)?;
                Ok(None)
            }
            Body::Pause => {
                self.paused = true;
                Ok(None)
            }
            Body::Resume => {
                self.paused = false;
                Ok(None)
            }
            Body::SetMode(m) => {
                self.world.set_mode(m.mode);
                Ok(None)
            }
            _ => unreachable!("server kinds are filtered before apply"),
        }
    }

    /// Advances one tick unless paused, then fans out the new frames.
    /// While paused the current state is re-sent so clients keep their
    /// rate. Returns the log records of the tick.
    pub fn tick(&mut self) -> Vec<LogRecord> {
        if self.paused || self.finished() {
            self.world.record_state();
        } else {
            self.world.step();
        }
        let records = self.world.drain_log();
        for body in stream_bodies(&records) {
            for c in self.clients.values_mut() {
                let frame = c.out.stamp(body.clone());
                c.outbox.push(frame);
            }
            if self.keep_stream {
                self.stream.push(body);
            }
        }
        records
    }
}
