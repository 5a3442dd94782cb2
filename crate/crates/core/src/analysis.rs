//! Run traces, the metrics computed from them, and an independent
//! earliest-arrival oracle for static topologies.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::SimTime;
use crate::protocol::Delivery;
use crate::world::{NodeId, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    Query,
    Reply,
    Data,
}

/// One radio transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub node: NodeId,
    pub kind: TxKind,
    /// Query/data source, or the receiver that originated a reply.
    pub origin: NodeId,
    /// Round for control packets, session sequence for data.
    pub number: u64,
    pub send_at: SimTime,
    pub fanout: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FgGrant {
    pub node: NodeId,
    pub round: u32,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerDropRecord {
    pub node: NodeId,
    pub session_seq: u64,
    pub at: SimTime,
}

/// Everything a run leaves behind. Append-only while the run executes.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub n_nodes: usize,
    pub source: Option<NodeId>,
    pub receivers: Vec<NodeId>,
    /// Nodes that behaved maliciously.
    pub attackers: Vec<NodeId>,
    pub duration: f64,
    /// Origination time of each query round.
    pub rounds: Vec<SimTime>,
    /// Origination time of each data packet, indexed by session sequence.
    pub data_originated: Vec<SimTime>,
    pub deliveries: Vec<Delivery>,
    pub fg_grants: Vec<FgGrant>,
    pub attacker_drops: Vec<AttackerDropRecord>,
    pub transmissions: Vec<Transmission>,
    pub drops_duplicate: u64,
    pub drops_stale_reply: u64,
    pub events_processed: usize,
    /// Optional per-event log lines.
    pub event_log: Option<Vec<String>>,
    /// Human-readable echo of the run configuration.
    pub config_echo: String,
}

/// A ratio that may be undefined (zero denominator); undefined reads as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub defined: bool,
}

impl Ratio {
    pub fn of(num: usize, den: usize) -> Self {
        if den == 0 {
            Ratio {
                value: 0.0,
                defined: false,
            }
        } else {
            Ratio {
                value: num as f64 / den as f64,
                defined: true,
            }
        }
    }
}

/// `(asr_fg, asr_data)`.
///
/// `asr_fg` is the fraction of originated discovery rounds whose replies
/// granted forwarding-group membership to at least one attacker. `asr_data`
/// is the fraction of unique deliveries whose hop record contains an
/// attacker.
pub fn attack_success_rate(trace: &RunTrace) -> (Ratio, Ratio) {
    let attackers: HashSet<NodeId> = trace.attackers.iter().copied().collect();
    let captured_rounds: BTreeSet<u32> = trace
        .fg_grants
        .iter()
        .filter(|g| attackers.contains(&g.node))
        .map(|g| g.round)
        .collect();
    let asr_fg = Ratio::of(captured_rounds.len(), trace.rounds.len());
    let via_attacker = trace
        .deliveries
        .iter()
        .filter(|d| d.hop_record.iter().any(|h| attackers.contains(h)))
        .count();
    (asr_fg, Ratio::of(via_attacker, trace.deliveries.len()))
}

/// `asr_data` restricted to one receiver.
pub fn asr_data_for(trace: &RunTrace, receiver: NodeId) -> Ratio {
    let mine: Vec<&Delivery> = trace.deliveries.iter().filter(|d| d.receiver == receiver).collect();
    let hit = mine
        .iter()
        .filter(|d| d.hop_record.iter().any(|h| trace.attackers.contains(h)))
        .count();
    Ratio::of(hit, mine.len())
}

pub fn packet_delivery_ratio(trace: &RunTrace) -> Ratio {
    Ratio::of(
        trace.deliveries.len(),
        trace.data_originated.len() * trace.receivers.len(),
    )
}

/// PDR over packets originated at or after `from`.
pub fn packet_delivery_ratio_since(trace: &RunTrace, from: SimTime) -> Ratio {
    let counted = trace.data_originated.iter().filter(|t| **t >= from).count();
    let delivered = trace.deliveries.iter().filter(|d| d.origin_time >= from).count();
    Ratio::of(delivered, counted * trace.receivers.len())
}

/// Mean of first-copy delays; `None` without deliveries.
pub fn mean_end_to_end_delay(trace: &RunTrace) -> Option<f64> {
    if trace.deliveries.is_empty() {
        return None;
    }
    Some(trace.deliveries.iter().map(Delivery::delay).sum::<f64>() / trace.deliveries.len() as f64)
}

/// Per-(receiver, packet) fate accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accounting {
    pub originated: usize,
    pub delivered: usize,
    pub dropped_by_attacker: usize,
    pub undelivered: usize,
}

impl Accounting {
    pub fn balanced(&self) -> bool {
        self.originated == self.delivered + self.dropped_by_attacker + self.undelivered
    }
}

/// Classifies each (receiver, packet) pair as delivered, lost to an attacker
/// drop, or otherwise undelivered. Each class is counted from its own
/// source in the trace.
pub fn accounting(trace: &RunTrace) -> Accounting {
    let delivered: HashSet<(NodeId, u64)> = trace
        .deliveries
        .iter()
        .map(|d| (d.receiver, d.session_seq))
        .collect();
    let dropped: HashSet<u64> = trace.attacker_drops.iter().map(|d| d.session_seq).collect();
    let mut acc = Accounting {
        originated: trace.data_originated.len() * trace.receivers.len(),
        delivered: trace.deliveries.len(),
        ..Default::default()
    };
    for r in &trace.receivers {
        for seq in 0..trace.data_originated.len() as u64 {
            if delivered.contains(&(*r, seq)) {
                continue;
            }
            if dropped.contains(&seq) {
                acc.dropped_by_attacker += 1;
            } else {
                acc.undelivered += 1;
            }
        }
    }
    acc
}

/// Per-run summary; one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub asr_fg: Ratio,
    pub asr_data: Ratio,
    pub pdr: Ratio,
    pub mean_delay: Option<f64>,
    pub drops_attacker: u64,
    pub drops_duplicate: u64,
    pub drops_stale_reply: u64,
}

pub fn run_metrics(trace: &RunTrace) -> RunMetrics {
    let (asr_fg, asr_data) = attack_success_rate(trace);
    RunMetrics {
        asr_fg,
        asr_data,
        pdr: packet_delivery_ratio(trace),
        mean_delay: mean_end_to_end_delay(trace),
        drops_attacker: trace.attacker_drops.len() as u64,
        drops_duplicate: trace.drops_duplicate,
        drops_stale_reply: trace.drops_stale_reply,
    }
}

/// Sample mean with a two-sided 95% Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &MeanCi) -> bool {
        self.lo() <= other.hi() && other.lo() <= self.hi()
    }
}

pub fn mean_ci95(values: &[f64]) -> MeanCi {
    let n = values.len();
    if n == 0 {
        return MeanCi {
            mean: f64::NAN,
            half_width: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanCi {
            mean,
            half_width: f64::INFINITY,
            n,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    MeanCi {
        mean,
        half_width: t * (var / n as f64).sqrt(),
        n,
    }
}

/// Undirected unit-disk graph frozen at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGraph {
    adjacency: Vec<Vec<NodeId>>,
}

impl StaticGraph {
    pub fn unit_disk(positions: &[Position], range: f64) -> Self {
        let adjacency = positions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                positions
                    .iter()
                    .enumerate()
                    .filter(|&(j, q)| j != i && p.distance(q) <= range)
                    .map(|(j, _)| NodeId(j as u32))
                    .collect()
            })
            .collect();
        Self { adjacency }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, n: NodeId) -> &[NodeId] {
        &self.adjacency[n.index()]
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![NodeId(0)];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &m in self.neighbors(n) {
                if !seen[m.index()] {
                    seen[m.index()] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Earliest arrival time and winning predecessor of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub source: NodeId,
    pub arrival: Vec<Option<f64>>,
    pub predecessor: Vec<Option<NodeId>>,
}

impl OracleResult {
    pub fn reachable(&self, n: NodeId) -> bool {
        self.arrival[n.index()].is_some()
    }

    /// Predecessor chain from `n` back to the source, excluding `n`.
    pub fn chain(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = n;
        while let Some(p) = self.predecessor[cur.index()] {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Whether the discovered route to `receiver` passes through an attacker.
    pub fn captured(&self, receiver: NodeId, attackers: &[NodeId]) -> bool {
        self.reachable(receiver) && self.chain(receiver).iter().any(|n| attackers.contains(n))
    }
}

/// Dijkstra over the flood: a node that first hears the query at `t`
/// transmits at `t + proc_delay[node]` (the source at `t = 0` with no
/// processing delay) and its neighbors hear it `tx_delay` later.
pub fn earliest_arrival_oracle(
    graph: &StaticGraph,
    proc_delay: &[f64],
    tx_delay: f64,
    source: NodeId,
) -> OracleResult {
    assert_eq!(proc_delay.len(), graph.len(), "one processing delay per node");
    let n = graph.len();
    let mut arrival: Vec<Option<f64>> = vec![None; n];
    let mut predecessor: Vec<Option<NodeId>> = vec![None; n];
    let mut done = vec![false; n];
    arrival[source.index()] = Some(0.0);
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((OrderedSecs(0.0), source)));
    while let Some(Reverse((OrderedSecs(t), u))) = heap.pop() {
        if done[u.index()] {
            continue;
        }
        done[u.index()] = true;
        let own = if u == source { 0.0 } else { proc_delay[u.index()] };
        let reach = (t + own) + tx_delay;
        for &v in graph.neighbors(u) {
            if v == source || done[v.index()] {
                continue;
            }
            if arrival[v.index()].is_none_or(|best| reach < best) {
                arrival[v.index()] = Some(reach);
                predecessor[v.index()] = Some(u);
                heap.push(Reverse((OrderedSecs(reach), v)));
            }
        }
    }
    OracleResult {
        source,
        arrival,
        predecessor,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedSecs(f64);

impl Eq for OrderedSecs {}

impl PartialOrd for OrderedSecs {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedSecs {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
