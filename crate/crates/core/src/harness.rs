//! Experiment configuration, seeded multi-run sweeps, presets, and CSV
//! output.
//!
//! Configuration files are flat TOML documents; every key is optional and
//! unknown keys are rejected. Run `i` of a point uses seed `seed + i`, and
//! each concern draws from its own random stream, so sweeps over placement
//! or attack kind are paired run by run.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::adversary::{place_attackers, AttackKind, Attacker, Placement, RushScope};
use crate::analysis::{mean_ci95, run_metrics, RunMetrics, RunTrace};
use crate::engine::{RngStream, StreamId};
use crate::protocol::ProtocolParams;
use crate::sim::{self, Scenario, SimError};
use crate::world::{initial_positions, Area, NodeId, RadioParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackSelection {
    #[default]
    None,
    Rushing,
    Blackhole,
    Jellyfish,
    Neighbor,
}

impl fmt::Display for AttackSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackSelection::None => "none",
            AttackSelection::Rushing => "rushing",
            AttackSelection::Blackhole => "blackhole",
            AttackSelection::Jellyfish => "jellyfish",
            AttackSelection::Neighbor => "neighbor",
        })
    }
}

impl std::str::FromStr for AttackSelection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(AttackSelection::None),
            "rushing" => Ok(AttackSelection::Rushing),
            "blackhole" => Ok(AttackSelection::Blackhole),
            "jellyfish" => Ok(AttackSelection::Jellyfish),
            "neighbor" => Ok(AttackSelection::Neighbor),
            other => Err(format!(
                "unknown attack '{other}' (expected none|rushing|blackhole|jellyfish|neighbor)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub area_width: f64,
    pub area_height: f64,
    pub n_nodes: usize,
    pub n_receivers: usize,
    pub n_attackers: usize,
    pub attack: AttackSelection,
    pub placement: Placement,
    pub rush_scope: RushScope,
    pub rush_delay: f64,
    pub drop_prob: f64,
    pub hold_delay: f64,
    pub speed: f64,
    pub duration: f64,
    pub refresh_interval: f64,
    pub fg_lifetime: f64,
    pub data_rate: f64,
    pub data_start: f64,
    pub data_stop: Option<f64>,
    pub range: f64,
    pub bitrate: f64,
    pub proc_delay_lo: f64,
    pub proc_delay_hi: f64,
    pub ctrl_packet_bits: u32,
    pub data_packet_bits: u32,
    pub seed: u64,
    pub runs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let radio = RadioParams::default();
        let protocol = ProtocolParams::default();
        Self {
            area_width: 500.0,
            area_height: 500.0,
            n_nodes: 50,
            n_receivers: 5,
            n_attackers: 1,
            attack: AttackSelection::None,
            placement: Placement::Uniform,
            rush_scope: RushScope::All,
            rush_delay: AttackKind::DEFAULT_RUSH_DELAY,
            drop_prob: 1.0,
            hold_delay: AttackKind::DEFAULT_HOLD_DELAY,
            speed: 1.0,
            duration: 1000.0,
            refresh_interval: protocol.refresh_interval,
            fg_lifetime: protocol.fg_lifetime,
            data_rate: protocol.data_rate,
            data_start: protocol.data_start,
            data_stop: protocol.data_stop,
            range: radio.range,
            bitrate: radio.bitrate,
            proc_delay_lo: radio.proc_delay_lo,
            proc_delay_hi: radio.proc_delay_hi,
            ctrl_packet_bits: radio.ctrl_packet_bits,
            data_packet_bits: radio.data_packet_bits,
            seed: 1,
            runs: 30,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for '{key}': {constraint}")]
    Invalid { key: &'static str, constraint: String },
    #[error("unknown preset '{0}' (expected fig7|fig8|fig9|paper-fig-7-9)")]
    UnknownPreset(String),
}

fn invalid(key: &'static str, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        constraint: constraint.into(),
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub placement: Option<Placement>,
    pub attack: Option<AttackSelection>,
    pub speed: Option<f64>,
    pub nodes: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any), applies `overrides`, validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                toml::from_str(&text)?
            }
            None => ExperimentConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.runs {
            self.runs = v;
        }
        if let Some(v) = o.placement {
            self.placement = v;
        }
        if let Some(v) = o.attack {
            self.attack = v;
        }
        if let Some(v) = o.speed {
            self.speed = v;
        }
        if let Some(v) = o.nodes {
            self.n_nodes = v;
        }
    }

    pub fn radio(&self) -> RadioParams {
        RadioParams {
            range: self.range,
            bitrate: self.bitrate,
            proc_delay_lo: self.proc_delay_lo,
            proc_delay_hi: self.proc_delay_hi,
            ctrl_packet_bits: self.ctrl_packet_bits,
            data_packet_bits: self.data_packet_bits,
        }
    }

    pub fn protocol(&self) -> ProtocolParams {
        ProtocolParams {
            refresh_interval: self.refresh_interval,
            fg_lifetime: self.fg_lifetime,
            data_rate: self.data_rate,
            data_start: self.data_start,
            data_stop: self.data_stop,
        }
    }

    /// The attacker behavior implied by `attack`. Blackhole and jellyfish
    /// rush control packets to get into the forwarding group first.
    pub fn attack_kind(&self) -> Option<AttackKind> {
        let rush_delay = self.rush_delay;
        match self.attack {
            AttackSelection::None => None,
            AttackSelection::Rushing => Some(AttackKind::Rushing { rush_delay }),
            AttackSelection::Blackhole => Some(AttackKind::Blackhole {
                drop_prob: self.drop_prob,
                rush_delay,
            }),
            AttackSelection::Jellyfish => Some(AttackKind::Jellyfish {
                hold_delay: self.hold_delay,
                rush_delay,
            }),
            AttackSelection::Neighbor => Some(AttackKind::Neighbor),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be > 0, got {v}")))
            }
        };
        positive("area_width", self.area_width)?;
        positive("area_height", self.area_height)?;
        positive("duration", self.duration)?;
        positive("refresh_interval", self.refresh_interval)?;
        positive("fg_lifetime", self.fg_lifetime)?;
        positive("data_rate", self.data_rate)?;
        positive("range", self.range)?;
        positive("bitrate", self.bitrate)?;
        if self.n_nodes < 2 {
            return Err(invalid("n_nodes", format!("must be >= 2, got {}", self.n_nodes)));
        }
        if self.n_receivers < 1 {
            return Err(invalid("n_receivers", "must be >= 1"));
        }
        if self.n_receivers + self.n_attackers + 1 > self.n_nodes {
            return Err(invalid(
                "n_receivers",
                format!(
                    "n_receivers ({}) + n_attackers ({}) + 1 sender exceeds n_nodes ({})",
                    self.n_receivers, self.n_attackers, self.n_nodes
                ),
            ));
        }
        if self.attack != AttackSelection::None && self.n_attackers == 0 {
            return Err(invalid("n_attackers", "must be >= 1 when an attack is selected"));
        }
        if self.runs < 1 {
            return Err(invalid("runs", "must be >= 1"));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(invalid("speed", format!("must be >= 0, got {}", self.speed)));
        }
        if !(self.proc_delay_lo >= 0.0 && self.proc_delay_lo <= self.proc_delay_hi && self.proc_delay_hi.is_finite()) {
            return Err(invalid("proc_delay_lo", "need 0 <= proc_delay_lo <= proc_delay_hi"));
        }
        if !(self.data_start >= 0.0 && self.data_start.is_finite()) {
            return Err(invalid("data_start", "must be >= 0"));
        }
        if let Some(stop) = self.data_stop {
            if !stop.is_finite() || stop <= self.data_start {
                return Err(invalid("data_stop", "must be after data_start"));
            }
        }
        if let Some(kind) = self.attack_kind() {
            kind.validate(&self.radio()).map_err(|e| {
                let key = match e {
                    crate::adversary::AttackError::DropProb(_) => "drop_prob",
                    crate::adversary::AttackError::HoldDelay(_) => "hold_delay",
                    _ => "rush_delay",
                };
                invalid(key, e.to_string())
            })?;
        }
        Ok(())
    }

    /// Resolved key/value listing, one per line.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "area_width = {}", self.area_width);
        let _ = writeln!(s, "area_height = {}", self.area_height);
        let _ = writeln!(s, "n_nodes = {}", self.n_nodes);
        let _ = writeln!(s, "n_receivers = {}", self.n_receivers);
        let _ = writeln!(s, "n_attackers = {}", self.n_attackers);
        let _ = writeln!(s, "attack = \"{}\"", self.attack);
        let _ = writeln!(s, "placement = \"{}\"", self.placement);
        let _ = writeln!(s, "rush_scope = \"{}\"", self.rush_scope);
        let _ = writeln!(s, "rush_delay = {}", self.rush_delay);
        let _ = writeln!(s, "drop_prob = {}", self.drop_prob);
        let _ = writeln!(s, "hold_delay = {}", self.hold_delay);
        let _ = writeln!(s, "speed = {}", self.speed);
        let _ = writeln!(s, "duration = {}", self.duration);
        let _ = writeln!(s, "refresh_interval = {}", self.refresh_interval);
        let _ = writeln!(s, "fg_lifetime = {}", self.fg_lifetime);
        let _ = writeln!(s, "data_rate = {}", self.data_rate);
        let _ = writeln!(s, "data_start = {}", self.data_start);
        if let Some(stop) = self.data_stop {
            let _ = writeln!(s, "data_stop = {stop}");
        }
        let _ = writeln!(s, "range = {}", self.range);
        let _ = writeln!(s, "bitrate = {}", self.bitrate);
        let _ = writeln!(s, "proc_delay_lo = {}", self.proc_delay_lo);
        let _ = writeln!(s, "proc_delay_hi = {}", self.proc_delay_hi);
        let _ = writeln!(s, "ctrl_packet_bits = {}", self.ctrl_packet_bits);
        let _ = writeln!(s, "data_packet_bits = {}", self.data_packet_bits);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = write!(s, "runs = {}", self.runs);
        s
    }

    /// Builds run `run_index` of this configuration.
    pub fn scenario(&self, run_index: usize) -> Result<Scenario, SimError> {
        let seed = self.seed.wrapping_add(run_index as u64);
        let area = Area::new(self.area_width, self.area_height)?;
        let mut positions = initial_positions(&area, self.n_nodes, seed)?;

        let mut ids: Vec<NodeId> = (0..self.n_nodes as u32).map(NodeId).collect();
        RngStream::new(seed, StreamId::Traffic).shuffle_prefix(&mut ids, 1 + self.n_receivers);
        let source = ids[0];
        let receivers = ids[1..=self.n_receivers].to_vec();

        let attackers = if self.n_attackers > 0 {
            let placed = place_attackers(
                self.placement,
                self.n_attackers,
                &mut positions,
                source,
                &receivers,
                &area,
                self.range,
                seed,
            )?;
            match self.attack_kind() {
                Some(kind) => placed
                    .into_iter()
                    .map(|a| {
                        (
                            a,
                            Attacker {
                                kind,
                                rush_scope: self.rush_scope,
                            },
                        )
                    })
                    .collect(),
                // Placed but honest: the baseline keeps the same topology.
                None => Vec::new(),
            }
        } else {
            Vec::new()
        };

        Ok(Scenario {
            area,
            radio: self.radio(),
            protocol: self.protocol(),
            positions,
            speed: self.speed,
            source,
            receivers,
            attackers,
            duration: self.duration,
            seed,
            fixed_proc_delays: None,
            record_events: false,
        })
    }
}

/// One completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub run_id: usize,
    pub seed: u64,
    pub placement: Placement,
    pub attack: AttackSelection,
    pub n_nodes: usize,
    pub speed: f64,
    pub metrics: RunMetrics,
}

pub const CSV_HEADER: &str = "run_id,seed,placement,attack,n_nodes,speed,asr_fg,asr_data,pdr,mean_delay,drops_attacker,drops_duplicate,drops_stale_reply";

impl ResultRow {
    pub fn csv_line(&self) -> String {
        let m = &self.metrics;
        let delay = m.mean_delay.map_or_else(|| "nan".to_string(), |d| format!("{d:.6}"));
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            self.run_id,
            self.seed,
            self.placement,
            self.attack,
            self.n_nodes,
            self.speed,
            m.asr_fg.value,
            m.asr_data.value,
            m.pdr.value,
            delay,
            m.drops_attacker,
            m.drops_duplicate,
            m.drops_stale_reply
        )
    }
}

/// Runs one simulation of `cfg` and returns its row and full trace.
pub fn run_single(cfg: &ExperimentConfig, run_index: usize, record_events: bool) -> Result<(ResultRow, RunTrace), SimError> {
    let mut scenario = cfg.scenario(run_index)?;
    scenario.record_events = record_events;
    let trace = sim::run(&scenario)?;
    let row = ResultRow {
        run_id: run_index,
        seed: scenario.seed,
        placement: cfg.placement,
        attack: cfg.attack,
        n_nodes: cfg.n_nodes,
        speed: cfg.speed,
        metrics: run_metrics(&trace),
    };
    Ok((row, trace))
}

/// Rows completed before a run failed.
#[derive(Debug, Error)]
#[error("run {failed_run} failed: {error}")]
pub struct SweepFailure {
    pub completed: Vec<ResultRow>,
    pub failed_run: usize,
    pub error: SimError,
}

/// Runs `cfg.runs` independent seeds (in parallel); rows come back in
/// run-index order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, SweepFailure> {
    let results: Vec<Result<ResultRow, SimError>> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_single(cfg, i, false).map(|(row, _)| row))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(error) => {
                return Err(SweepFailure {
                    completed: rows,
                    failed_run: i,
                    error,
                })
            }
        }
    }
    Ok(rows)
}

/// An ordered list of configurations run back to back.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub name: String,
    pub points: Vec<ExperimentConfig>,
}

pub const PRESETS: [&str; 4] = ["fig7", "fig8", "fig9", "paper-fig-7-9"];

impl Sweep {
    pub fn single(cfg: ExperimentConfig) -> Self {
        Self {
            name: "single".into(),
            points: vec![cfg],
        }
    }

    /// Presets on top of `base` (which still supplies seed, runs, radio and
    /// timers):
    ///
    /// - `fig7` / `fig8` / `fig9`: near-sender / near-receiver / uniform
    ///   rushing attacker and the honest baseline, at speeds 0, 1 and 10 m/s;
    /// - `paper-fig-7-9`: rushing attacker under all three placements at the
    ///   base speed.
    ///
    /// All use 50 nodes, one sender and five receivers.
    pub fn preset(name: &str, base: &ExperimentConfig) -> Result<Self, ConfigError> {
        let mut base = base.clone();
        base.n_nodes = 50;
        base.n_receivers = 5;
        base.n_attackers = base.n_attackers.max(1);
        let figure = |placement: Placement| {
            let mut points = Vec::new();
            for speed in [0.0, 1.0, 10.0] {
                for attack in [AttackSelection::Rushing, AttackSelection::None] {
                    points.push(ExperimentConfig {
                        placement,
                        attack,
                        speed,
                        ..base.clone()
                    });
                }
            }
            points
        };
        let points = match name {
            "fig7" => figure(Placement::NearSender),
            "fig8" => figure(Placement::NearReceiver),
            "fig9" => figure(Placement::Uniform),
            "paper-fig-7-9" => Placement::ALL
                .iter()
                .map(|&placement| ExperimentConfig {
                    placement,
                    attack: AttackSelection::Rushing,
                    ..base.clone()
                })
                .collect(),
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        for p in &points {
            p.validate()?;
        }
        Ok(Self {
            name: name.to_string(),
            points,
        })
    }

    pub fn run(&self) -> Result<Vec<ResultRow>, SweepFailure> {
        let mut rows = Vec::new();
        for point in &self.points {
            match run_experiment(point) {
                Ok(r) => rows.extend(r),
                Err(mut failure) => {
                    rows.append(&mut failure.completed);
                    failure.completed = rows;
                    return Err(failure);
                }
            }
        }
        Ok(rows)
    }
}

/// Header plus one line per row.
pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> io::Result<()> {
    if rows.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no rows to write"));
    }
    fs::write(path, csv_string(rows))
}

/// Means and 95% confidence intervals per (placement, attack, nodes, speed),
/// in first-appearance order.
pub fn summary(rows: &[ResultRow]) -> String {
    type Key = (Placement, AttackSelection, usize, u64);
    let mut groups: Vec<(Key, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        let key = (r.placement, r.attack, r.n_nodes, r.speed.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut s = String::from("# placement attack n_nodes speed runs | asr_fg | asr_data | pdr | mean_delay  (mean +/- 95% CI)\n");
    for ((placement, attack, n, speed), members) in groups {
        let col = |f: &dyn Fn(&ResultRow) -> Option<f64>| {
            let v: Vec<f64> = members.iter().filter_map(|r| f(r)).collect();
            let ci = mean_ci95(&v);
            format!("{:.4} +/- {:.4}", ci.mean, ci.half_width)
        };
        let _ = writeln!(
            s,
            "# {placement} {attack} {n} {} {} | {} | {} | {} | {}",
            f64::from_bits(speed),
            members.len(),
            col(&|r| Some(r.metrics.asr_fg.value)),
            col(&|r| Some(r.metrics.asr_data.value)),
            col(&|r| Some(r.metrics.pdr.value)),
            col(&|r| r.metrics.mean_delay),
        );
    }
    s
}
