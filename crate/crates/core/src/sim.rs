//! Wires the engine, world, protocol and adversary into a single run.

use std::fmt::Write as _;
use std::rc::Rc;

use thiserror::Error;

use crate::adversary::{AttackError, Attacker, Behavior};
use crate::analysis::{AttackerDropRecord, FgGrant, RunTrace, Transmission, TxKind};
use crate::engine::{draw_key, EngineError, EventQueue, RngStream, SimEvent, SimTime, StreamId};
use crate::protocol::{
    DrawPurpose, Draws, NodeProtocolState, Outcome, Packet, ProtocolParams, Role, SharedPacket,
};
use crate::world::{Area, NodeId, Position, RadioParams, World, WorldError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Fully resolved input of one run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub area: Area,
    pub radio: RadioParams,
    pub protocol: ProtocolParams,
    pub positions: Vec<Position>,
    pub speed: f64,
    pub source: NodeId,
    pub receivers: Vec<NodeId>,
    pub attackers: Vec<(NodeId, Attacker)>,
    pub duration: f64,
    pub seed: u64,
    /// Replaces the jitter window with a fixed per-node processing delay.
    pub fixed_proc_delays: Option<Vec<f64>>,
    pub record_events: bool,
}

impl Scenario {
    /// Stationary nodes at the given coordinates, default radio and
    /// protocol settings, no attackers. The area is the bounding box of the
    /// points (at least 1 m on each side).
    pub fn fixed(points: &[(f64, f64)], source: u32, receivers: &[u32]) -> Self {
        let w = points.iter().map(|p| p.0).fold(1.0, f64::max);
        let h = points.iter().map(|p| p.1).fold(1.0, f64::max);
        Self {
            area: Area::new(w, h).expect("positive bounding box"),
            radio: RadioParams::default(),
            protocol: ProtocolParams::default(),
            positions: points.iter().map(|&(x, y)| Position::new(x, y)).collect(),
            speed: 0.0,
            source: NodeId(source),
            receivers: receivers.iter().map(|&r| NodeId(r)).collect(),
            attackers: Vec::new(),
            duration: 30.0,
            seed: 1,
            fixed_proc_delays: None,
            record_events: false,
        }
    }

    pub fn with_attacker(mut self, node: u32, attacker: Attacker) -> Self {
        self.attackers.push((NodeId(node), attacker));
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        let n = self.positions.len();
        let in_range = |id: NodeId| id.index() < n;
        if !in_range(self.source) {
            return Err(SimError::Invalid(format!("source {} out of range", self.source)));
        }
        for r in &self.receivers {
            if !in_range(*r) || *r == self.source {
                return Err(SimError::Invalid(format!("bad receiver {r}")));
            }
        }
        for (a, attacker) in &self.attackers {
            if !in_range(*a) || *a == self.source || self.receivers.contains(a) {
                return Err(SimError::Invalid(format!("bad attacker {a}")));
            }
            attacker.kind.check()?;
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::Invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        let p = &self.protocol;
        if !(p.refresh_interval > 0.0 && p.fg_lifetime > 0.0 && p.data_rate > 0.0 && p.data_start >= 0.0) {
            return Err(SimError::Invalid("protocol timers and data rate must be positive".into()));
        }
        if let Some(fixed) = &self.fixed_proc_delays {
            if fixed.len() != n || fixed.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                return Err(SimError::Invalid("need one non-negative fixed delay per node".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Event {
    PacketArrival {
        to: NodeId,
        from: NodeId,
        packet: SharedPacket,
    },
    WaypointArrival {
        node: NodeId,
    },
    OriginateQuery {
        round: u32,
    },
    OriginateData {
        session_seq: u64,
    },
    SimEnd,
}

struct StreamDraws {
    jitter: RngStream,
    attack: RngStream,
    lo: f64,
    hi: f64,
    fixed: Option<Vec<f64>>,
}

fn purpose_key(node: NodeId, purpose: DrawPurpose) -> u64 {
    let n = u64::from(node.0);
    match purpose {
        DrawPurpose::QueryRelay { source, round } => draw_key(&[n, 1, source.0.into(), round.into()]),
        DrawPurpose::ReplyOrigin { source, round } => draw_key(&[n, 2, source.0.into(), round.into()]),
        DrawPurpose::ReplyRelay { receiver, round } => draw_key(&[n, 3, receiver.0.into(), round.into()]),
        DrawPurpose::DataRelay { source, session_seq } => draw_key(&[n, 4, source.0.into(), session_seq]),
        DrawPurpose::DataDrop { source, session_seq } => draw_key(&[n, 5, source.0.into(), session_seq]),
    }
}

impl Draws for StreamDraws {
    fn jitter(&mut self, node: NodeId, purpose: DrawPurpose) -> f64 {
        match &self.fixed {
            Some(fixed) => fixed[node.index()],
            None => self.jitter.uniform_at(purpose_key(node, purpose), self.lo, self.hi),
        }
    }

    fn unit(&mut self, node: NodeId, purpose: DrawPurpose) -> f64 {
        self.attack.uniform_at(purpose_key(node, purpose), 0.0, 1.0)
    }
}

struct NodeSlot {
    role: Role,
    behavior: Behavior,
    state: NodeProtocolState,
}

/// A single simulation run in progress.
pub struct Simulation {
    queue: EventQueue<Event>,
    world: World,
    nodes: Vec<NodeSlot>,
    draws: StreamDraws,
    protocol: ProtocolParams,
    source: NodeId,
    duration: SimTime,
    data_stop: f64,
    trace: RunTrace,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let world = World::from_positions(
            scenario.area,
            scenario.radio.clone(),
            scenario.positions.clone(),
            scenario.speed,
            scenario.seed,
        )?;
        let mut nodes: Vec<NodeSlot> = (0..scenario.positions.len())
            .map(|_| NodeSlot {
                role: Role::Forwarder,
                behavior: Behavior::Honest,
                state: NodeProtocolState::new(),
            })
            .collect();
        nodes[scenario.source.index()].role = Role::Source;
        for r in &scenario.receivers {
            nodes[r.index()].role = Role::Receiver;
        }
        for (a, attacker) in &scenario.attackers {
            nodes[a.index()].behavior = Behavior::Attacker(*attacker);
        }

        let duration = SimTime::from_secs(scenario.duration);
        let data_stop = scenario
            .protocol
            .data_stop
            .map_or(scenario.duration, |s| s.min(scenario.duration));

        let mut trace = RunTrace {
            n_nodes: scenario.positions.len(),
            source: Some(scenario.source),
            receivers: scenario.receivers.clone(),
            attackers: scenario.attackers.iter().map(|(a, _)| *a).collect(),
            duration: scenario.duration,
            event_log: scenario.record_events.then(Vec::new),
            ..Default::default()
        };
        trace.config_echo = format!(
            "nodes={} source={} receivers={:?} attackers={:?} speed={} duration={} seed={}",
            scenario.positions.len(),
            scenario.source,
            scenario.receivers.iter().map(|r| r.0).collect::<Vec<_>>(),
            scenario
                .attackers
                .iter()
                .map(|(a, k)| format!("{}:{}", a, k.kind.name()))
                .collect::<Vec<_>>(),
            scenario.speed,
            scenario.duration,
            scenario.seed
        );

        let mut queue = EventQueue::new();
        queue.schedule(SimTime::ZERO, Event::OriginateQuery { round: 0 })?;
        if scenario.protocol.data_start < data_stop {
            queue.schedule(
                SimTime::from_secs(scenario.protocol.data_start),
                Event::OriginateData { session_seq: 0 },
            )?;
        }
        for (node, at) in world.pending_arrivals() {
            queue.schedule(at, Event::WaypointArrival { node })?;
        }
        queue.schedule(duration, Event::SimEnd)?;

        Ok(Self {
            queue,
            world,
            nodes,
            draws: StreamDraws {
                jitter: RngStream::new(scenario.seed, StreamId::Jitter),
                attack: RngStream::new(scenario.seed, StreamId::Attack),
                lo: scenario.radio.proc_delay_lo,
                hi: scenario.radio.proc_delay_hi,
                fixed: scenario.fixed_proc_delays.clone(),
            },
            protocol: scenario.protocol.clone(),
            source: scenario.source,
            duration,
            data_stop,
            trace,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn node_state(&self, node: NodeId) -> &NodeProtocolState {
        &self.nodes[node.index()].state
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    /// Advances to `horizon` (capped at the run duration).
    pub fn run_until(&mut self, horizon: SimTime) -> Result<usize, SimError> {
        let horizon = horizon.min(self.duration);
        let mut queue = std::mem::take(&mut self.queue);
        let result = queue.run_until(horizon, |q, ev| self.handle(q, ev));
        self.queue = queue;
        let n = result?;
        self.trace.events_processed += n;
        Ok(n)
    }

    pub fn finish(mut self) -> Result<RunTrace, SimError> {
        self.run_until(self.duration)?;
        Ok(self.trace)
    }

    fn log(&mut self, at: SimTime, seq: u64, line: std::fmt::Arguments<'_>) {
        if let Some(log) = &mut self.trace.event_log {
            let mut s = String::new();
            let _ = write!(s, "{at}\t{seq}\t{line}");
            log.push(s);
        }
    }

    fn handle(&mut self, queue: &mut EventQueue<Event>, ev: SimEvent<Event>) -> Result<(), SimError> {
        let now = ev.fire_at;
        let seq = ev.sequence;
        match ev.payload {
            Event::OriginateQuery { round } => {
                let src = self.source;
                self.log(now, seq, format_args!("orig-query\t{src}\tquery\t{src}\t{round}\t-\t-"));
                self.trace.rounds.push(now);
                let packet = self.nodes[src.index()].state.originate_query(src, round);
                self.transmit(queue, src, now, seq, packet, 0.0)?;
                let next = self.protocol.round_time(round + 1);
                if next < self.duration.secs() {
                    queue.schedule(SimTime::from_secs(next), Event::OriginateQuery { round: round + 1 })?;
                }
            }
            Event::OriginateData { session_seq } => {
                let src = self.source;
                self.log(now, seq, format_args!("orig-data\t{src}\tdata\t{src}\t{session_seq}\t-\t-"));
                debug_assert_eq!(self.trace.data_originated.len() as u64, session_seq);
                self.trace.data_originated.push(now);
                let packet = self.nodes[src.index()].state.originate_data(src, session_seq, now);
                self.transmit(queue, src, now, seq, packet, 0.0)?;
                let next = self.protocol.data_time(session_seq + 1);
                if next < self.data_stop {
                    queue.schedule(
                        SimTime::from_secs(next),
                        Event::OriginateData {
                            session_seq: session_seq + 1,
                        },
                    )?;
                }
            }
            Event::WaypointArrival { node } => {
                self.log(now, seq, format_args!("waypoint\t{node}\t-\t-\t-\t-\t-"));
                if let Some(next) = self.world.waypoint_reached(node, now) {
                    queue.schedule(next, Event::WaypointArrival { node })?;
                }
            }
            Event::SimEnd => {
                self.log(now, seq, format_args!("end\t-\t-\t-\t-\t-\t-"));
            }
            Event::PacketArrival { to, from, packet } => {
                self.arrival(queue, to, from, &packet, now, seq)?;
            }
        }
        Ok(())
    }

    fn arrival(
        &mut self,
        queue: &mut EventQueue<Event>,
        me: NodeId,
        from: NodeId,
        packet: &Packet,
        now: SimTime,
        seq: u64,
    ) -> Result<(), SimError> {
        if self.trace.event_log.is_some() {
            let (origin, number) = packet_identity(packet);
            let hops = join_hops(packet.hop_record());
            self.log(now, seq, format_args!("rx\t{me}\t{}\t{origin}\t{number}\t{from}\t{hops}", packet.kind()));
        }
        let slot = &mut self.nodes[me.index()];
        let outcomes = match packet {
            Packet::Query(q) => slot.state.handle_query(me, slot.role, &slot.behavior, q, &mut self.draws),
            Packet::Reply(r) => slot.state.handle_reply(
                me,
                &slot.behavior,
                r,
                now,
                self.protocol.fg_lifetime,
                &mut self.draws,
            ),
            Packet::Data(d) => slot.state.forward_data(me, slot.role, &slot.behavior, d, now, &mut self.draws),
        };
        for outcome in outcomes {
            match outcome {
                Outcome::Broadcast { packet, delay } => {
                    self.transmit(queue, me, now, seq, packet, delay)?;
                }
                Outcome::DuplicateDropped => {
                    self.trace.drops_duplicate += 1;
                    self.log(now, seq, format_args!("drop-dup\t{me}\t{}\t-\t-\t{from}\t-", packet.kind()));
                }
                Outcome::StaleReply => {
                    self.trace.drops_stale_reply += 1;
                    self.log(now, seq, format_args!("drop-stale\t{me}\treply\t-\t-\t{from}\t-"));
                }
                Outcome::FgGranted { source, round } => {
                    self.trace.fg_grants.push(FgGrant { node: me, round, at: now });
                    self.log(now, seq, format_args!("fg\t{me}\treply\t{source}\t{round}\t{from}\t-"));
                }
                Outcome::Delivered(d) => {
                    if self.trace.event_log.is_some() {
                        let hops = join_hops(&d.hop_record);
                        self.log(now, seq, format_args!("deliver\t{me}\tdata\t{}\t{}\t{from}\t{hops}", d.source, d.session_seq));
                    }
                    self.trace.deliveries.push(d);
                }
                Outcome::AttackerDrop { source, session_seq } => {
                    self.trace.attacker_drops.push(AttackerDropRecord {
                        node: me,
                        session_seq,
                        at: now,
                    });
                    self.log(now, seq, format_args!("drop-attack\t{me}\tdata\t{source}\t{session_seq}\t{from}\t-"));
                }
            }
        }
        Ok(())
    }

    fn transmit(
        &mut self,
        queue: &mut EventQueue<Event>,
        from: NodeId,
        now: SimTime,
        seq: u64,
        packet: Packet,
        delay: f64,
    ) -> Result<(), SimError> {
        let radio = self.world.radio();
        let bits = if packet.is_control() {
            radio.ctrl_packet_bits
        } else {
            radio.data_packet_bits
        };
        let (origin, number) = packet_identity(&packet);
        let kind = match packet {
            Packet::Query(_) => TxKind::Query,
            Packet::Reply(_) => TxKind::Reply,
            Packet::Data(_) => TxKind::Data,
        };
        if self.trace.event_log.is_some() {
            let hops = join_hops(packet.hop_record());
            self.log(now, seq, format_args!("tx\t{from}\t{}\t{origin}\t{number}\t{delay:.9}\t{hops}", packet.kind()));
        }
        let shared: SharedPacket = Rc::new(packet);
        let fanout = self.world.broadcast(queue, from, now, delay, bits, |to| Event::PacketArrival {
            to,
            from,
            packet: Rc::clone(&shared),
        })?;
        self.trace.transmissions.push(Transmission {
            node: from,
            kind,
            origin,
            number,
            send_at: now.after(delay),
            fanout,
        });
        Ok(())
    }
}

fn packet_identity(packet: &Packet) -> (NodeId, u64) {
    match packet {
        Packet::Query(q) => (q.source, q.seq.into()),
        Packet::Reply(r) => (r.receiver, r.seq.into()),
        Packet::Data(d) => (d.source, d.session_seq),
    }
}

fn join_hops(hops: &[NodeId]) -> String {
    hops.iter().map(|h| h.0.to_string()).collect::<Vec<_>>().join("-")
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<RunTrace, SimError> {
    Simulation::new(scenario)?.finish()
}
