#![allow(dead_code)]

use rushsim::adversary::{AttackKind, Attacker, RushScope};
use rushsim::analysis::StaticGraph;
use rushsim::engine::{RngStream, StreamId};
use rushsim::{Area, Position, Scenario};

/// S(0), A(1), B(2), M(3), R(4). R hears only M; M hears A and B.
pub const DIAMOND: [(f64, f64); 5] = [(0.0, 150.0), (200.0, 250.0), (200.0, 50.0), (400.0, 150.0), (600.0, 150.0)];

/// Evenly spaced nodes 200 m apart on the x axis.
pub fn line(n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|i| (200.0 * i as f64, 0.0)).collect()
}

pub fn rushing(rush_delay: f64) -> Attacker {
    Attacker {
        kind: AttackKind::Rushing { rush_delay },
        rush_scope: RushScope::All,
    }
}

pub fn blackhole(drop_prob: f64) -> Attacker {
    Attacker {
        kind: AttackKind::Blackhole {
            drop_prob,
            rush_delay: AttackKind::DEFAULT_RUSH_DELAY,
        },
        rush_scope: RushScope::All,
    }
}

pub fn jellyfish(hold_delay: f64) -> Attacker {
    Attacker {
        kind: AttackKind::Jellyfish {
            hold_delay,
            rush_delay: AttackKind::DEFAULT_RUSH_DELAY,
        },
        rush_scope: RushScope::All,
    }
}

pub fn neighbor() -> Attacker {
    Attacker {
        kind: AttackKind::Neighbor,
        rush_scope: RushScope::All,
    }
}

/// A connected static topology of `n` nodes in a 500 m square, drawn from
/// `seed` by rejection.
pub fn connected_topology(n: usize, seed: u64) -> Vec<Position> {
    let area = Area::new(500.0, 500.0).unwrap();
    let mut rng = RngStream::new(seed, StreamId::Placement);
    loop {
        let pts: Vec<Position> = (0..n).map(|_| area.random_point(&mut rng)).collect();
        if StaticGraph::unit_disk(&pts, 250.0).is_connected() {
            return pts;
        }
    }
}

/// Static scenario over explicit positions in a 500 m square.
pub fn static_scenario(positions: Vec<Position>, source: u32, receivers: &[u32]) -> Scenario {
    let pts: Vec<(f64, f64)> = positions.iter().map(|p| (p.x, p.y)).collect();
    let mut s = Scenario::fixed(&pts, source, receivers);
    s.area = Area::new(500.0, 500.0).unwrap();
    s
}
