//! Attacker behaviors and attacker placement.
//!
//! Every attacker forwards through the same protocol state machine as an
//! honest node; only its forwarding decisions differ:
//!
//! - rushing: relays control packets after `rush_delay` instead of the
//!   legitimate jitter, winning duplicate-suppression races;
//! - blackhole: rushes control packets to enter the forwarding group, then
//!   drops each data packet with probability `drop_prob`;
//! - jellyfish: rushes control packets, then holds each data packet for
//!   `hold_delay` on top of normal processing;
//! - neighbor: relays queries without recording itself, so downstream nodes
//!   record an upstream that may be out of radio range.

use std::fmt;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::engine::{RngStream, StreamId};
use crate::world::{Area, NodeId, Position, RadioParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    Rushing { rush_delay: f64 },
    Blackhole { drop_prob: f64, rush_delay: f64 },
    Jellyfish { hold_delay: f64, rush_delay: f64 },
    Neighbor,
}

impl AttackKind {
    pub const DEFAULT_RUSH_DELAY: f64 = 0.0005;
    pub const DEFAULT_HOLD_DELAY: f64 = 0.5;

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Rushing { .. } => "rushing",
            AttackKind::Blackhole { .. } => "blackhole",
            AttackKind::Jellyfish { .. } => "jellyfish",
            AttackKind::Neighbor => "neighbor",
        }
    }

    /// Delay applied to relayed control packets, if the kind rushes them.
    pub fn rush_delay(&self) -> Option<f64> {
        match *self {
            AttackKind::Rushing { rush_delay }
            | AttackKind::Blackhole { rush_delay, .. }
            | AttackKind::Jellyfish { rush_delay, .. } => Some(rush_delay),
            AttackKind::Neighbor => None,
        }
    }

    /// Parameter ranges that hold for any radio configuration.
    pub fn check(&self) -> Result<(), AttackError> {
        if let Some(r) = self.rush_delay() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(AttackError::RushDelay(r));
            }
        }
        match *self {
            AttackKind::Blackhole { drop_prob, .. } if !(0.0..=1.0).contains(&drop_prob) => {
                Err(AttackError::DropProb(drop_prob))
            }
            AttackKind::Jellyfish { hold_delay, .. }
                if !(hold_delay > 0.0 && hold_delay.is_finite()) =>
            {
                Err(AttackError::HoldDelay(hold_delay))
            }
            _ => Ok(()),
        }
    }

    /// Full validation. A rush delay that is not strictly below the
    /// legitimate jitter floor means the race is decided by tie-breaks or
    /// lost outright; such configurations are flagged as pathological.
    pub fn validate(&self, radio: &RadioParams) -> Result<(), AttackError> {
        self.check()?;
        match self.rush_delay() {
            Some(r) if r >= radio.proc_delay_lo => Err(AttackError::PathologicalRush {
                rush_delay: r,
                floor: radio.proc_delay_lo,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("rush_delay must be finite and >= 0, got {0}")]
    RushDelay(f64),
    #[error("rush_delay {rush_delay} is not below the legitimate jitter floor {floor}")]
    PathologicalRush { rush_delay: f64, floor: f64 },
    #[error("drop_prob must lie in [0, 1], got {0}")]
    DropProb(f64),
    #[error("hold_delay must be > 0, got {0}")]
    HoldDelay(f64),
    #[error("need at least one attacker")]
    NoAttackers,
    #[error("{requested} attackers requested but only {available} non-member nodes exist")]
    NotEnoughNodes { requested: usize, available: usize },
}

/// Which packets a rushing attacker hurries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RushScope {
    ControlOnly,
    #[default]
    All,
}

impl fmt::Display for RushScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RushScope::ControlOnly => "control-only",
            RushScope::All => "all",
        })
    }
}

impl FromStr for RushScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "control-only" => Ok(RushScope::ControlOnly),
            "all" => Ok(RushScope::All),
            other => Err(format!("unknown rush scope '{other}' (expected control-only|all)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    NearSender,
    NearReceiver,
    #[default]
    #[serde(alias = "anywhere")]
    Uniform,
}

impl Placement {
    pub const ALL: [Placement; 3] = [Placement::NearSender, Placement::NearReceiver, Placement::Uniform];
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::NearSender => "near-sender",
            Placement::NearReceiver => "near-receiver",
            Placement::Uniform => "uniform",
        })
    }
}

impl FromStr for Placement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "near-sender" => Ok(Placement::NearSender),
            "near-receiver" => Ok(Placement::NearReceiver),
            "uniform" | "anywhere" => Ok(Placement::Uniform),
            other => Err(format!(
                "unknown placement '{other}' (expected near-sender|near-receiver|uniform)"
            )),
        }
    }
}

/// How a node relays a packet it has decided to forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relay {
    pub delay: f64,
    pub record_self: bool,
}

impl Relay {
    pub fn honest(jitter: f64) -> Self {
        Self {
            delay: jitter,
            record_self: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataVerdict {
    Relay(Relay),
    Drop,
}

/// Rushing relay of a route-discovery packet: same bookkeeping as an honest
/// node, but no processing jitter.
pub fn rushing_query_relay(rush_delay: f64) -> Relay {
    Relay {
        delay: rush_delay,
        record_self: true,
    }
}

/// Neighbor-attack relay: normal timing, but the attacker's id never enters
/// the hop record and `prev_hop` is left untouched.
pub fn neighbor_query_relay(jitter: f64) -> Relay {
    Relay {
        delay: jitter,
        record_self: false,
    }
}

/// Drops when the unit draw falls below `drop_prob`.
pub fn blackhole_data_verdict(drop_prob: f64, unit_draw: f64, jitter: f64) -> DataVerdict {
    if unit_draw < drop_prob {
        DataVerdict::Drop
    } else {
        DataVerdict::Relay(Relay::honest(jitter))
    }
}

pub fn jellyfish_data_relay(hold_delay: f64, jitter: f64) -> Relay {
    Relay::honest(jitter + hold_delay)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attacker {
    pub kind: AttackKind,
    pub rush_scope: RushScope,
}

/// Per-node forwarding behavior.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Behavior {
    #[default]
    Honest,
    Attacker(Attacker),
}

impl Behavior {
    pub fn is_malicious(&self) -> bool {
        matches!(self, Behavior::Attacker(_))
    }

    pub fn query_relay(&self, jitter: f64) -> Relay {
        match self {
            Behavior::Honest => Relay::honest(jitter),
            Behavior::Attacker(a) => match a.kind {
                AttackKind::Neighbor => neighbor_query_relay(jitter),
                kind => rushing_query_relay(kind.rush_delay().unwrap_or(jitter)),
            },
        }
    }

    /// Delay for originating or relaying a join reply.
    pub fn reply_delay(&self, jitter: f64) -> f64 {
        match self {
            Behavior::Attacker(a) => a.kind.rush_delay().unwrap_or(jitter),
            Behavior::Honest => jitter,
        }
    }

    /// Decision for a data packet this node would forward as a forwarding
    /// group member. `unit_draw` is only consulted by the blackhole.
    pub fn data_verdict(&self, jitter: f64, unit_draw: impl FnOnce() -> f64) -> DataVerdict {
        let Behavior::Attacker(a) = self else {
            return DataVerdict::Relay(Relay::honest(jitter));
        };
        match a.kind {
            AttackKind::Rushing { rush_delay } => match a.rush_scope {
                RushScope::All => DataVerdict::Relay(rushing_query_relay(rush_delay)),
                RushScope::ControlOnly => DataVerdict::Relay(Relay::honest(jitter)),
            },
            AttackKind::Blackhole { drop_prob, .. } => {
                blackhole_data_verdict(drop_prob, unit_draw(), jitter)
            }
            AttackKind::Jellyfish { hold_delay, .. } => {
                DataVerdict::Relay(jellyfish_data_relay(hold_delay, jitter))
            }
            AttackKind::Neighbor => DataVerdict::Relay(neighbor_query_relay(jitter)),
        }
    }
}

/// Chooses attacker nodes among non-members and moves them according to the
/// placement strategy. `positions` is updated in place.
///
/// Attacker identities are drawn before any positions, so for a fixed seed
/// the same nodes are attackers under every strategy.
#[allow(clippy::too_many_arguments)]
pub fn place_attackers(
    placement: Placement,
    count: usize,
    positions: &mut [Position],
    source: NodeId,
    receivers: &[NodeId],
    area: &Area,
    range: f64,
    seed: u64,
) -> Result<Vec<NodeId>, AttackError> {
    if count == 0 {
        return Err(AttackError::NoAttackers);
    }
    let mut candidates: Vec<NodeId> = (0..positions.len() as u32)
        .map(NodeId)
        .filter(|n| *n != source && !receivers.contains(n))
        .collect();
    if count > candidates.len() {
        return Err(AttackError::NotEnoughNodes {
            requested: count,
            available: candidates.len(),
        });
    }
    let mut rng = RngStream::new(seed, StreamId::Placement);
    rng.shuffle_prefix(&mut candidates, count);
    let attackers = candidates[..count].to_vec();

    let mut anchors: Vec<NodeId> = receivers.to_vec();
    let len = anchors.len();
    rng.shuffle_prefix(&mut anchors, len);

    for (k, attacker) in attackers.iter().enumerate() {
        let anchor = match placement {
            Placement::Uniform => continue,
            Placement::NearSender => source,
            Placement::NearReceiver => match anchors.get(k % anchors.len().max(1)) {
                Some(r) => *r,
                None => source,
            },
        };
        let center = positions[anchor.index()];
        positions[attacker.index()] = point_in_disk(&mut rng, center, range, area);
    }
    Ok(attackers)
}

/// Uniform point in the disk of radius `range` around `center`, restricted
/// to the area by rejection (with a clamp fallback).
fn point_in_disk(rng: &mut RngStream, center: Position, range: f64, area: &Area) -> Position {
    let mut candidate = center;
    for _ in 0..64 {
        let r = range * rng.draw_uniform(0.0, 1.0).sqrt();
        let theta = rng.draw_uniform(0.0, std::f64::consts::TAU);
        candidate = Position::new(center.x + r * theta.cos(), center.y + r * theta.sin());
        if area.contains(&candidate) {
            return candidate;
        }
    }
    // Projection onto the rectangle never moves a point away from an inside
    // center.
    area.clamp(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::initial_positions;

    fn radio() -> RadioParams {
        RadioParams::default()
    }

    #[test]
    fn validation_rules() {
        assert!(AttackKind::Rushing { rush_delay: 0.0005 }.validate(&radio()).is_ok());
        assert_eq!(
            AttackKind::Rushing { rush_delay: 0.005 }.validate(&radio()),
            Err(AttackError::PathologicalRush {
                rush_delay: 0.005,
                floor: 0.005
            })
        );
        assert!(AttackKind::Rushing { rush_delay: 0.005 }.check().is_ok());
        assert_eq!(
            AttackKind::Blackhole {
                drop_prob: 1.5,
                rush_delay: 0.0005
            }
            .check(),
            Err(AttackError::DropProb(1.5))
        );
        assert_eq!(
            AttackKind::Jellyfish {
                hold_delay: 0.0,
                rush_delay: 0.0005
            }
            .check(),
            Err(AttackError::HoldDelay(0.0))
        );
        assert!(AttackKind::Neighbor.validate(&radio()).is_ok());
    }

    #[test]
    fn rushing_skips_jitter_but_records_itself() {
        let b = Behavior::Attacker(Attacker {
            kind: AttackKind::Rushing { rush_delay: 0.0005 },
            rush_scope: RushScope::All,
        });
        assert_eq!(
            b.query_relay(0.012),
            Relay {
                delay: 0.0005,
                record_self: true
            }
        );
        assert_eq!(b.reply_delay(0.012), 0.0005);
        assert_eq!(
            b.data_verdict(0.012, || unreachable!()),
            DataVerdict::Relay(Relay {
                delay: 0.0005,
                record_self: true
            })
        );
        let control_only = Behavior::Attacker(Attacker {
            kind: AttackKind::Rushing { rush_delay: 0.0005 },
            rush_scope: RushScope::ControlOnly,
        });
        assert_eq!(
            control_only.data_verdict(0.012, || unreachable!()),
            DataVerdict::Relay(Relay::honest(0.012))
        );
    }

    #[test]
    fn blackhole_extremes() {
        assert_eq!(blackhole_data_verdict(1.0, 0.999_999, 0.01), DataVerdict::Drop);
        assert_eq!(blackhole_data_verdict(1.0, 0.0, 0.01), DataVerdict::Drop);
        assert_eq!(
            blackhole_data_verdict(0.0, 0.0, 0.01),
            DataVerdict::Relay(Relay::honest(0.01))
        );
    }

    #[test]
    fn blackhole_drop_count_is_binomial() {
        let rng = RngStream::new(99, StreamId::Attack);
        let n = 10_000u64;
        let drops = (0..n)
            .filter(|&k| blackhole_data_verdict(0.25, rng.uniform_at(k, 0.0, 1.0), 0.01) == DataVerdict::Drop)
            .count() as f64;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        assert!((drops - 2500.0).abs() <= 3.0 * sigma, "drops {drops}");
    }

    #[test]
    fn jellyfish_holds_on_top_of_processing() {
        assert_eq!(jellyfish_data_relay(0.5, 0.01), Relay::honest(0.51));
    }

    #[test]
    fn neighbor_does_not_record() {
        let b = Behavior::Attacker(Attacker {
            kind: AttackKind::Neighbor,
            rush_scope: RushScope::All,
        });
        assert_eq!(
            b.query_relay(0.01),
            Relay {
                delay: 0.01,
                record_self: false
            }
        );
        assert_eq!(b.reply_delay(0.01), 0.01);
    }

    fn setup(seed: u64) -> (Area, Vec<Position>, NodeId, Vec<NodeId>) {
        let area = Area::new(500.0, 500.0).unwrap();
        let positions = initial_positions(&area, 50, seed).unwrap();
        let receivers = (1..=5).map(NodeId).collect();
        (area, positions, NodeId(0), receivers)
    }

    #[test]
    fn near_sender_within_range() {
        for seed in 0..50 {
            let (area, mut pos, src, rx) = setup(seed);
            let a = place_attackers(Placement::NearSender, 1, &mut pos, src, &rx, &area, 250.0, seed).unwrap();
            assert!(pos[a[0].index()].distance(&pos[0]) <= 250.0);
            assert!(area.contains(&pos[a[0].index()]));
        }
    }

    #[test]
    fn uniform_keeps_position_and_is_reproducible() {
        let (area, mut pos, src, rx) = setup(4);
        let before = pos.clone();
        let a = place_attackers(Placement::Uniform, 1, &mut pos, src, &rx, &area, 250.0, 4).unwrap();
        assert_eq!(pos, before);
        let mut again = before.clone();
        let b = place_attackers(Placement::Uniform, 1, &mut again, src, &rx, &area, 250.0, 4).unwrap();
        assert_eq!(a, b);
        assert!(a[0] != src && !rx.contains(&a[0]));
    }

    #[test]
    fn same_attacker_identity_across_strategies() {
        let (area, pos, src, rx) = setup(8);
        let ids: Vec<_> = Placement::ALL
            .iter()
            .map(|&p| place_attackers(p, 2, &mut pos.clone(), src, &rx, &area, 250.0, 8).unwrap())
            .collect();
        assert!(ids.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn near_receiver_spreads_over_distinct_receivers() {
        for seed in 0..20 {
            let (area, mut pos, src, rx) = setup(seed);
            let attackers =
                place_attackers(Placement::NearReceiver, 2, &mut pos, src, &rx, &area, 250.0, seed).unwrap();
            // Each attacker is adjacent to some receiver, and the two anchors
            // differ: at least two distinct receivers are covered.
            let covering: Vec<Vec<NodeId>> = attackers
                .iter()
                .map(|a| {
                    rx.iter()
                        .copied()
                        .filter(|r| pos[r.index()].distance(&pos[a.index()]) <= 250.0)
                        .collect()
                })
                .collect();
            assert!(covering.iter().all(|c| !c.is_empty()));
            let mut union: Vec<NodeId> = covering.concat();
            union.sort();
            union.dedup();
            assert!(union.len() >= 2);
        }
    }

    #[test]
    fn rejects_too_many_attackers() {
        let (area, mut pos, src, rx) = setup(1);
        assert_eq!(
            place_attackers(Placement::Uniform, 45, &mut pos, src, &rx, &area, 250.0, 1),
            Err(AttackError::NotEnoughNodes {
                requested: 45,
                available: 44
            })
        );
        assert_eq!(
            place_attackers(Placement::Uniform, 0, &mut pos, src, &rx, &area, 250.0, 1),
            Err(AttackError::NoAttackers)
        );
    }
}
