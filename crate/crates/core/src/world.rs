//! Node positions under random-waypoint mobility (zero pause time) and a
//! unit-disk broadcast radio with a processing-delay plus transmission-delay
//! timing model.

use thiserror::Error;

use crate::engine::{EngineError, EventQueue, RngStream, SimTime, StreamId};

/// Node identifier; doubles as the index into per-node tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// The rectangle `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn new(width: f64, height: f64) -> Result<Self, WorldError> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(WorldError::DegenerateArea { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn clamp(&self, p: Position) -> Position {
        Position::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn random_point(&self, rng: &mut RngStream) -> Position {
        let x = rng.draw_uniform(0.0, self.width);
        let y = rng.draw_uniform(0.0, self.height);
        Position::new(x, y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioParams {
    /// Transmission range in meters; the disk is closed.
    pub range: f64,
    /// Bits per second.
    pub bitrate: f64,
    /// Legitimate forwarding jitter window, seconds.
    pub proc_delay_lo: f64,
    pub proc_delay_hi: f64,
    pub ctrl_packet_bits: u32,
    pub data_packet_bits: u32,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            range: 250.0,
            bitrate: 2_000_000.0,
            proc_delay_lo: 0.005,
            proc_delay_hi: 0.015,
            ctrl_packet_bits: 512,
            data_packet_bits: 4096,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |what: &'static str| Err(WorldError::InvalidRadio(what));
        if !(self.range > 0.0 && self.range.is_finite()) {
            return bad("range must be > 0");
        }
        if !(self.bitrate > 0.0 && self.bitrate.is_finite()) {
            return bad("bitrate must be > 0");
        }
        if !(self.proc_delay_lo >= 0.0 && self.proc_delay_lo <= self.proc_delay_hi) {
            return bad("need 0 <= proc_delay_lo <= proc_delay_hi");
        }
        if !self.proc_delay_hi.is_finite() {
            return bad("proc_delay_hi must be finite");
        }
        Ok(())
    }

    pub fn tx_delay(&self, bits: u32) -> f64 {
        f64::from(bits) / self.bitrate
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("area must have positive finite dimensions, got {width} x {height}")]
    DegenerateArea { width: f64, height: f64 },
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid radio parameters: {0}")]
    InvalidRadio(&'static str),
    #[error("speed must be finite and >= 0, got {0}")]
    InvalidSpeed(f64),
    #[error("position ({x}, {y}) of node {node} lies outside the area")]
    OutOfArea { node: u32, x: f64, y: f64 },
}

/// One straight-line leg of a node's trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub origin: Position,
    pub destination: Position,
    pub speed: f64,
    pub depart_at: SimTime,
}

impl MotionState {
    pub fn stationary(at: Position) -> Self {
        Self {
            origin: at,
            destination: at,
            speed: 0.0,
            depart_at: SimTime::ZERO,
        }
    }

    pub fn length(&self) -> f64 {
        self.origin.distance(&self.destination)
    }

    /// When the node reaches `destination`; `None` for a stationary node.
    pub fn arrival_time(&self) -> Option<SimTime> {
        if self.speed == 0.0 {
            return None;
        }
        Some(self.depart_at.after(self.length() / self.speed))
    }

    /// Linear interpolation along the leg, pinned at the destination once
    /// reached.
    pub fn position_at(&self, t: SimTime) -> Position {
        let len = self.length();
        if self.speed == 0.0 || len == 0.0 {
            return self.origin;
        }
        let travelled = self.speed * (t.secs() - self.depart_at.secs()).max(0.0);
        if travelled >= len {
            return self.destination;
        }
        let f = travelled / len;
        Position::new(
            self.origin.x + (self.destination.x - self.origin.x) * f,
            self.origin.y + (self.destination.y - self.origin.y) * f,
        )
    }
}

/// Uniform initial positions for `n` nodes, drawn in node order.
pub fn initial_positions(area: &Area, n: usize, seed: u64) -> Result<Vec<Position>, WorldError> {
    if n < 2 {
        return Err(WorldError::TooFewNodes(n));
    }
    let mut rng = RngStream::new(seed, StreamId::InitialPositions);
    Ok((0..n).map(|_| area.random_point(&mut rng)).collect())
}

/// Physical world: trajectories plus radio.
#[derive(Debug, Clone)]
pub struct World {
    area: Area,
    radio: RadioParams,
    speed: f64,
    legs: Vec<MotionState>,
    waypoint_rngs: Vec<RngStream>,
}

impl World {
    /// Builds the world from explicit starting positions. Mobile nodes
    /// immediately start toward their first waypoint.
    pub fn from_positions(
        area: Area,
        radio: RadioParams,
        positions: Vec<Position>,
        speed: f64,
        seed: u64,
    ) -> Result<Self, WorldError> {
        radio.validate()?;
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(WorldError::InvalidSpeed(speed));
        }
        if positions.len() < 2 {
            return Err(WorldError::TooFewNodes(positions.len()));
        }
        for (i, p) in positions.iter().enumerate() {
            if !area.contains(p) {
                return Err(WorldError::OutOfArea {
                    node: i as u32,
                    x: p.x,
                    y: p.y,
                });
            }
        }
        let mut waypoint_rngs: Vec<RngStream> = (0..positions.len())
            .map(|i| RngStream::new(seed, StreamId::Mobility(i as u32)))
            .collect();
        let legs = positions
            .into_iter()
            .zip(waypoint_rngs.iter_mut())
            .map(|(origin, rng)| {
                if speed == 0.0 {
                    MotionState::stationary(origin)
                } else {
                    MotionState {
                        origin,
                        destination: area.random_point(rng),
                        speed,
                        depart_at: SimTime::ZERO,
                    }
                }
            })
            .collect();
        Ok(Self {
            area,
            radio,
            speed,
            legs,
            waypoint_rngs,
        })
    }

    /// Uniformly placed nodes; see [`initial_positions`].
    pub fn random(
        area: Area,
        radio: RadioParams,
        n: usize,
        speed: f64,
        seed: u64,
    ) -> Result<Self, WorldError> {
        let positions = initial_positions(&area, n, seed)?;
        Self::from_positions(area, radio, positions, speed, seed)
    }

    pub fn area(&self) -> &Area {
        &self.area
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn node_count(&self) -> usize {
        self.legs.len()
    }

    pub fn leg(&self, node: NodeId) -> &MotionState {
        &self.legs[node.index()]
    }

    pub fn position_at(&self, node: NodeId, t: SimTime) -> Position {
        self.area.clamp(self.legs[node.index()].position_at(t))
    }

    /// Next waypoint arrival for every mobile node, in node order.
    pub fn pending_arrivals(&self) -> Vec<(NodeId, SimTime)> {
        self.legs
            .iter()
            .enumerate()
            .filter_map(|(i, leg)| leg.arrival_time().map(|t| (NodeId(i as u32), t)))
            .collect()
    }

    /// Handles a waypoint arrival: the node turns toward a fresh uniform
    /// destination without pausing. Returns the next arrival time.
    pub fn waypoint_reached(&mut self, node: NodeId, now: SimTime) -> Option<SimTime> {
        let i = node.index();
        let here = self.legs[i].destination;
        if self.speed == 0.0 {
            return None;
        }
        let destination = self.area.random_point(&mut self.waypoint_rngs[i]);
        self.legs[i] = MotionState {
            origin: here,
            destination,
            speed: self.speed,
            depart_at: now,
        };
        self.legs[i].arrival_time()
    }

    /// Every other node within range of `node` at time `t`, in id order.
    pub fn neighbors(&self, node: NodeId, t: SimTime) -> Vec<NodeId> {
        let here = self.position_at(node, t);
        (0..self.legs.len() as u32)
            .map(NodeId)
            .filter(|&other| other != node)
            .filter(|&other| here.distance(&self.position_at(other, t)) <= self.radio.range)
            .collect()
    }

    /// Schedules one arrival per node in range at send time
    /// (`at + proc_delay`). Arrivals land `tx_delay(bits)` later. Returns the
    /// number of arrivals scheduled.
    pub fn broadcast<P, F>(
        &self,
        queue: &mut EventQueue<P>,
        from: NodeId,
        at: SimTime,
        proc_delay: f64,
        bits: u32,
        mut make: F,
    ) -> Result<usize, EngineError>
    where
        F: FnMut(NodeId) -> P,
    {
        assert!(proc_delay >= 0.0, "negative processing delay {proc_delay}");
        let send_at = at.after(proc_delay);
        let arrive_at = send_at.after(self.radio.tx_delay(bits));
        let receivers = self.neighbors(from, send_at);
        for &to in &receivers {
            queue.schedule(arrive_at, make(to))?;
        }
        Ok(receivers.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn area500() -> Area {
        Area::new(500.0, 500.0).unwrap()
    }

    fn static_world(points: &[(f64, f64)]) -> World {
        let positions = points.iter().map(|&(x, y)| Position::new(x, y)).collect();
        World::from_positions(
            Area::new(1000.0, 1000.0).unwrap(),
            RadioParams::default(),
            positions,
            0.0,
            1,
        )
        .unwrap()
    }

    #[test]
    fn init_positions_in_bounds_and_reproducible() {
        let a = initial_positions(&area500(), 50, 1).unwrap();
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|p| area500().contains(p)));
        assert_eq!(a, initial_positions(&area500(), 50, 1).unwrap());
        assert_ne!(a, initial_positions(&area500(), 50, 2).unwrap());
    }

    #[test]
    fn init_rejects_degenerate_input() {
        assert!(Area::new(0.0, 500.0).is_err());
        assert!(Area::new(500.0, -1.0).is_err());
        assert_eq!(
            initial_positions(&area500(), 1, 1),
            Err(WorldError::TooFewNodes(1))
        );
    }

    #[test]
    fn init_positions_uniform_by_quadrant() {
        let pts = initial_positions(&area500(), 10_000, 7).unwrap();
        let mut counts = [0usize; 4];
        for p in &pts {
            let q = usize::from(p.x >= 250.0) + 2 * usize::from(p.y >= 250.0);
            counts[q] += 1;
        }
        for c in counts {
            assert!((c as f64 - 2500.0).abs() <= 0.05 * 2500.0, "{counts:?}");
        }
    }

    #[test]
    fn stationary_node_never_moves() {
        let w = static_world(&[(10.0, 20.0), (30.0, 40.0)]);
        for s in [0.0, 1.0, 999.0] {
            assert_eq!(w.position_at(NodeId(0), SimTime::from_secs(s)), Position::new(10.0, 20.0));
        }
        assert!(w.pending_arrivals().is_empty());
    }

    #[test]
    fn linear_motion() {
        let leg = MotionState {
            origin: Position::new(0.0, 0.0),
            destination: Position::new(100.0, 0.0),
            speed: 10.0,
            depart_at: SimTime::from_secs(2.0),
        };
        assert_eq!(leg.position_at(SimTime::from_secs(7.0)), Position::new(50.0, 0.0));
        assert_eq!(leg.arrival_time(), Some(SimTime::from_secs(12.0)));
        assert_eq!(leg.position_at(SimTime::from_secs(20.0)), Position::new(100.0, 0.0));
    }

    #[test]
    fn neighbor_boundary_is_closed() {
        let w = static_world(&[(0.0, 0.0), (250.0, 0.0), (500.1, 0.0), (900.0, 900.0)]);
        let t = SimTime::ZERO;
        assert_eq!(w.neighbors(NodeId(0), t), vec![NodeId(1)]);
        // 250.1 apart
        assert!(!w.neighbors(NodeId(1), t).contains(&NodeId(2)));
        assert!(w.neighbors(NodeId(3), t).is_empty());
    }

    #[test]
    fn broadcast_fans_out_to_neighbors() {
        let w = static_world(&[(0.0, 0.0), (100.0, 0.0), (0.0, 100.0), (100.0, 100.0), (800.0, 800.0)]);
        let mut q: EventQueue<NodeId> = EventQueue::new();
        let n = w
            .broadcast(&mut q, NodeId(0), SimTime::ZERO, 0.01, 512, |to| to)
            .unwrap();
        assert_eq!(n, 3);
        let mut times = Vec::new();
        q.run_until::<EngineError, _>(SimTime::from_secs(1.0), |_, ev| {
            times.push((ev.fire_at, ev.payload));
            Ok(())
        })
        .unwrap();
        let expected = SimTime::from_secs(0.01 + 0.000256);
        assert!(times.iter().all(|(t, _)| *t == expected));
        assert_eq!(
            times.iter().map(|(_, n)| *n).collect::<Vec<_>>(),
            vec![NodeId(1), NodeId(2), NodeId(3)]
        );

        let isolated = w
            .broadcast(&mut q, NodeId(4), SimTime::from_secs(1.0), 0.0, 512, |to| to)
            .unwrap();
        assert_eq!(isolated, 0);
        assert!(q.is_empty());
    }

    #[test]
    fn control_packet_tx_delay() {
        assert_eq!(RadioParams::default().tx_delay(512), 0.000256);
    }

    #[test]
    fn waypoint_chain_continues_without_pause() {
        let mut w = World::random(area500(), RadioParams::default(), 5, 10.0, 3).unwrap();
        let (node, t) = w.pending_arrivals()[0];
        let reached = w.leg(node).destination;
        let next = w.waypoint_reached(node, t).unwrap();
        assert!(next >= t);
        assert_eq!(w.leg(node).origin, reached);
        assert_eq!(w.leg(node).depart_at, t);
    }

    fn walk(world: &mut World, horizon: f64) -> Vec<(SimTime, Vec<Position>)> {
        // Drive waypoint arrivals through a queue and sample positions.
        let mut q: EventQueue<NodeId> = EventQueue::new();
        for (n, t) in world.pending_arrivals() {
            q.schedule(t, n).unwrap();
        }
        let mut samples = Vec::new();
        let step = horizon / 50.0;
        for k in 0..=50 {
            let t = SimTime::from_secs(step * k as f64);
            while let Some(ev) = q.pop_until(t) {
                if let Some(next) = world.waypoint_reached(ev.payload, ev.fire_at) {
                    q.schedule(next, ev.payload).unwrap();
                }
            }
            let ps = (0..world.node_count())
                .map(|i| world.position_at(NodeId(i as u32), t))
                .collect();
            samples.push((t, ps));
        }
        samples
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn mobility_contained_and_speed_bounded(seed in 0u64..10_000, speed in prop::sample::select(vec![1.0, 10.0, 25.0])) {
            let mut w = World::random(area500(), RadioParams::default(), 25, speed, seed).unwrap();
            let samples = walk(&mut w, 400.0);
            for (_, ps) in &samples {
                for p in ps {
                    prop_assert!(area500().contains(p));
                }
            }
            for pair in samples.windows(2) {
                let dt = pair[1].0.secs() - pair[0].0.secs();
                for (a, b) in pair[0].1.iter().zip(&pair[1].1) {
                    prop_assert!(a.distance(b) <= speed * dt + 1e-9);
                }
            }
        }

        #[test]
        fn neighbor_relation_is_symmetric(seed in 0u64..10_000, t in 0.0f64..1000.0) {
            let w = World::random(area500(), RadioParams::default(), 30, 0.0, seed).unwrap();
            let t = SimTime::from_secs(t);
            for a in 0..30u32 {
                for b in w.neighbors(NodeId(a), t) {
                    prop_assert!(w.neighbors(b, t).contains(&NodeId(a)));
                }
            }
        }
    }
}
