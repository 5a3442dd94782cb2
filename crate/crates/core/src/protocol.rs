//! Mesh multicast routing in the style of ODMRP.
//!
//! The source floods a JOIN QUERY every refresh interval. Each node relays
//! only the first copy of a round and remembers who it came from. Receivers
//! answer with a JOIN REPLY addressed to that upstream; every node named by
//! a reply joins the forwarding group and passes the reply to its own
//! upstream. Data packets are relayed only by forwarding-group members.
//!
//! Handlers here are pure state transitions: they mutate one node's state
//! and return [`Outcome`]s that the driver turns into radio broadcasts and
//! trace records.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::adversary::{Behavior, DataVerdict};
use crate::engine::SimTime;
use crate::world::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct JoinQuery {
    pub source: NodeId,
    pub seq: u32,
    pub prev_hop: NodeId,
    pub hop_record: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinReply {
    pub source: NodeId,
    pub seq: u32,
    pub receiver: NodeId,
    pub next_hop: NodeId,
    pub hop_record: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub source: NodeId,
    pub session_seq: u64,
    pub origin_time: SimTime,
    pub hop_record: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Query(JoinQuery),
    Reply(JoinReply),
    Data(DataPacket),
}

impl Packet {
    pub fn kind(&self) -> &'static str {
        match self {
            Packet::Query(_) => "query",
            Packet::Reply(_) => "reply",
            Packet::Data(_) => "data",
        }
    }

    pub fn hop_record(&self) -> &[NodeId] {
        match self {
            Packet::Query(q) => &q.hop_record,
            Packet::Reply(r) => &r.hop_record,
            Packet::Data(d) => &d.hop_record,
        }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self, Packet::Data(_))
    }
}

/// Timer and traffic settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub refresh_interval: f64,
    pub fg_lifetime: f64,
    /// Data packets per second.
    pub data_rate: f64,
    /// First data packet time.
    pub data_start: f64,
    /// No data is originated at or after this time; `None` means the end of
    /// the run.
    pub data_stop: Option<f64>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            refresh_interval: 3.0,
            fg_lifetime: 6.0,
            data_rate: 4.0,
            data_start: 0.0,
            data_stop: None,
        }
    }
}

impl ProtocolParams {
    /// Origination time of query round `round`.
    pub fn round_time(&self, round: u32) -> f64 {
        f64::from(round) * self.refresh_interval
    }

    pub fn data_time(&self, session_seq: u64) -> f64 {
        self.data_start + session_seq as f64 / self.data_rate
    }

    /// Rounds originated within `[0, duration)`.
    pub fn rounds_within(&self, duration: f64) -> u32 {
        let mut n = (duration / self.refresh_interval).floor() as u32 + 1;
        while n > 0 && self.round_time(n - 1) >= duration {
            n -= 1;
        }
        n
    }
}

/// Why a randomized value is being drawn; part of the draw key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawPurpose {
    QueryRelay { source: NodeId, round: u32 },
    ReplyOrigin { source: NodeId, round: u32 },
    ReplyRelay { receiver: NodeId, round: u32 },
    DataRelay { source: NodeId, session_seq: u64 },
    DataDrop { source: NodeId, session_seq: u64 },
}

/// Source of per-hop processing jitter and attacker coin flips.
pub trait Draws {
    /// Legitimate processing delay, seconds.
    fn jitter(&mut self, node: NodeId, purpose: DrawPurpose) -> f64;
    /// Uniform value in `[0, 1)`.
    fn unit(&mut self, node: NodeId, purpose: DrawPurpose) -> f64;
}

/// A unique data packet recorded at a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub receiver: NodeId,
    pub source: NodeId,
    pub session_seq: u64,
    pub origin_time: SimTime,
    pub arrival: SimTime,
    pub hop_record: Vec<NodeId>,
}

impl Delivery {
    pub fn delay(&self) -> f64 {
        self.arrival.secs() - self.origin_time.secs()
    }
}

/// Effects of handling one arrival.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Broadcast { packet: Packet, delay: f64 },
    DuplicateDropped,
    StaleReply,
    FgGranted { source: NodeId, round: u32 },
    Delivered(Delivery),
    AttackerDrop { source: NodeId, session_seq: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source,
    Receiver,
    Forwarder,
}

/// Per-node routing state.
#[derive(Debug, Clone, Default)]
pub struct NodeProtocolState {
    query_cache: HashSet<(NodeId, u32)>,
    data_cache: HashSet<(NodeId, u64)>,
    upstream: HashMap<(NodeId, u32), NodeId>,
    fg_expiry: Option<SimTime>,
}

impl NodeProtocolState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn upstream(&self, source: NodeId, round: u32) -> Option<NodeId> {
        self.upstream.get(&(source, round)).copied()
    }

    pub fn fg_expiry(&self) -> Option<SimTime> {
        self.fg_expiry
    }

    pub fn fg_live(&self, now: SimTime) -> bool {
        self.fg_expiry.is_some_and(|e| e > now)
    }

    pub fn has_seen_query(&self, source: NodeId, round: u32) -> bool {
        self.query_cache.contains(&(source, round))
    }

    /// Source side of a new discovery round; zero processing delay.
    pub fn originate_query(&mut self, me: NodeId, round: u32) -> Packet {
        self.query_cache.insert((me, round));
        Packet::Query(JoinQuery {
            source: me,
            seq: round,
            prev_hop: me,
            hop_record: vec![me],
        })
    }

    pub fn originate_data(&mut self, me: NodeId, session_seq: u64, now: SimTime) -> Packet {
        self.data_cache.insert((me, session_seq));
        Packet::Data(DataPacket {
            source: me,
            session_seq,
            origin_time: now,
            hop_record: vec![me],
        })
    }

    pub fn handle_query(
        &mut self,
        me: NodeId,
        role: Role,
        behavior: &Behavior,
        pkt: &JoinQuery,
        draws: &mut dyn Draws,
    ) -> Vec<Outcome> {
        let key = (pkt.source, pkt.seq);
        if !self.query_cache.insert(key) {
            return vec![Outcome::DuplicateDropped];
        }
        self.upstream.insert(key, pkt.prev_hop);

        let jitter = draws.jitter(
            me,
            DrawPurpose::QueryRelay {
                source: pkt.source,
                round: pkt.seq,
            },
        );
        let relay = behavior.query_relay(jitter);
        let mut relayed = pkt.clone();
        if relay.record_self {
            relayed.prev_hop = me;
            relayed.hop_record.push(me);
        }
        let mut out = vec![Outcome::Broadcast {
            packet: Packet::Query(relayed),
            delay: relay.delay,
        }];

        if role == Role::Receiver {
            let jitter = draws.jitter(
                me,
                DrawPurpose::ReplyOrigin {
                    source: pkt.source,
                    round: pkt.seq,
                },
            );
            out.push(Outcome::Broadcast {
                packet: Packet::Reply(JoinReply {
                    source: pkt.source,
                    seq: pkt.seq,
                    receiver: me,
                    next_hop: pkt.prev_hop,
                    hop_record: vec![me],
                }),
                delay: behavior.reply_delay(jitter),
            });
        }
        out
    }

    pub fn handle_reply(
        &mut self,
        me: NodeId,
        behavior: &Behavior,
        pkt: &JoinReply,
        now: SimTime,
        fg_lifetime: f64,
        draws: &mut dyn Draws,
    ) -> Vec<Outcome> {
        if pkt.next_hop != me {
            return Vec::new();
        }
        let upstream = if me == pkt.source {
            None
        } else {
            match self.upstream(pkt.source, pkt.seq) {
                Some(up) => Some(up),
                None => return vec![Outcome::StaleReply],
            }
        };

        self.fg_expiry = Some(now.after(fg_lifetime).max(self.fg_expiry.unwrap_or(SimTime::ZERO)));
        let mut out = vec![Outcome::FgGranted {
            source: pkt.source,
            round: pkt.seq,
        }];
        if let Some(up) = upstream {
            let jitter = draws.jitter(
                me,
                DrawPurpose::ReplyRelay {
                    receiver: pkt.receiver,
                    round: pkt.seq,
                },
            );
            let mut hop_record = pkt.hop_record.clone();
            hop_record.push(me);
            out.push(Outcome::Broadcast {
                packet: Packet::Reply(JoinReply {
                    next_hop: up,
                    hop_record,
                    ..pkt.clone()
                }),
                delay: behavior.reply_delay(jitter),
            });
        }
        out
    }

    pub fn forward_data(
        &mut self,
        me: NodeId,
        role: Role,
        behavior: &Behavior,
        pkt: &DataPacket,
        now: SimTime,
        draws: &mut dyn Draws,
    ) -> Vec<Outcome> {
        if !self.data_cache.insert((pkt.source, pkt.session_seq)) {
            return vec![Outcome::DuplicateDropped];
        }
        let mut out = Vec::new();
        if role == Role::Receiver {
            out.push(Outcome::Delivered(Delivery {
                receiver: me,
                source: pkt.source,
                session_seq: pkt.session_seq,
                origin_time: pkt.origin_time,
                arrival: now,
                hop_record: pkt.hop_record.clone(),
            }));
        }
        if !(self.fg_live(now) || me == pkt.source) {
            return out;
        }
        let jitter = draws.jitter(
            me,
            DrawPurpose::DataRelay {
                source: pkt.source,
                session_seq: pkt.session_seq,
            },
        );
        let purpose = DrawPurpose::DataDrop {
            source: pkt.source,
            session_seq: pkt.session_seq,
        };
        match behavior.data_verdict(jitter, || draws.unit(me, purpose)) {
            DataVerdict::Drop => out.push(Outcome::AttackerDrop {
                source: pkt.source,
                session_seq: pkt.session_seq,
            }),
            DataVerdict::Relay(relay) => {
                let mut relayed = pkt.clone();
                if relay.record_self {
                    relayed.hop_record.push(me);
                }
                out.push(Outcome::Broadcast {
                    packet: Packet::Data(relayed),
                    delay: relay.delay,
                });
            }
        }
        out
    }
}

/// Radio payload shared by all arrivals of one transmission.
pub type SharedPacket = Rc<Packet>;
