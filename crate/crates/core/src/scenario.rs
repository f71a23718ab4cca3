//! Declarative experiment descriptions, their validation, and built-in presets.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{ChannelKind, ChannelModel};
use crate::geo::{self, GeoPosition};
use crate::linkmetrics::LqParams;
use crate::mobility::{GpsErrorModel, Trajectory};
use crate::wire::{NodeAddr, Variant};

pub const SCHEMA_VERSION: u32 = 1;

/// Routing protocol run by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Link-quality OLSR with plain ETX.
    Olsr,
    /// Predictive OLSR: speed-weighted ETX from GPS positions in Hellos.
    Polsr,
}

impl Protocol {
    pub fn variant(self) -> Variant {
        match self {
            Protocol::Olsr => Variant::Original,
            Protocol::Polsr => Variant::Modified,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Olsr => "olsr",
            Protocol::Polsr => "polsr",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "olsr" => Ok(Protocol::Olsr),
            "polsr" => Ok(Protocol::Polsr),
            other => Err(format!("unknown protocol '{other}' (expected olsr or polsr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Destination,
    Relay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<NodeAddr>,
    pub role: Role,
    pub trajectory: Trajectory,
}

impl NodeSpec {
    /// Explicit address, or 10.0.0.id.
    pub fn addr(&self) -> NodeAddr {
        self.address.unwrap_or(NodeAddr(0x0a00_0000 | (self.id & 0x00ff_ffff)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traffic {
    pub source: u32,
    pub destination: u32,
    #[serde(default = "defaults::datagrams_per_second")]
    pub datagrams_per_second: u32,
    #[serde(default = "defaults::datagram_bytes")]
    pub datagram_bytes: u32,
    /// Datagrams arriving later than this after emission count as lost.
    #[serde(default = "defaults::delay_loss_threshold")]
    pub delay_loss_threshold: f64,
}

impl Traffic {
    pub fn offered_bps(&self) -> f64 {
        f64::from(self.datagrams_per_second) * f64::from(self.datagram_bytes) * 8.0
    }
}

/// Timer relationships, all expressed relative to the Hello interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// TC interval as a multiple of the Hello interval.
    #[serde(default = "defaults::tc_interval_factor")]
    pub tc_interval_factor: f64,
    /// TC validity as a multiple of the TC interval.
    #[serde(default = "defaults::tc_validity_factor")]
    pub tc_validity_factor: f64,
    /// Uniform relative jitter applied to every Hello and TC period.
    #[serde(default = "defaults::jitter")]
    pub jitter: f64,
    /// Hop limit for data datagrams.
    #[serde(default = "defaults::ttl")]
    pub ttl: u32,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            tc_interval_factor: defaults::tc_interval_factor(),
            tc_validity_factor: defaults::tc_validity_factor(),
            jitter: defaults::jitter(),
            ttl: defaults::ttl(),
        }
    }
}

mod defaults {
    pub fn schema() -> u32 {
        super::SCHEMA_VERSION
    }
    pub fn datagrams_per_second() -> u32 {
        85
    }
    pub fn datagram_bytes() -> u32 {
        1470
    }
    pub fn delay_loss_threshold() -> f64 {
        5.0
    }
    pub fn tc_interval_factor() -> f64 {
        2.0
    }
    pub fn tc_validity_factor() -> f64 {
        3.0
    }
    pub fn jitter() -> f64 {
        0.05
    }
    pub fn ttl() -> u32 {
        16
    }
    pub fn warmup() -> f64 {
        10.0
    }
    pub fn repetitions() -> u32 {
        10
    }
    pub fn channel() -> crate::channel::ChannelModel {
        crate::channel::ChannelModel::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "defaults::schema")]
    pub schema_version: u32,
    pub name: String,
    pub protocol: Protocol,
    pub params: LqParams,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default = "defaults::channel")]
    pub channel: ChannelModel,
    /// GPS error applied to positions carried in Hellos; `None` means perfect fixes.
    #[serde(default)]
    pub gps: Option<GpsErrorModel>,
    pub nodes: Vec<NodeSpec>,
    pub traffic: Traffic,
    /// Measured traffic duration, seconds.
    pub duration: f64,
    /// Protocol-only lead-in before traffic starts, seconds.
    #[serde(default = "defaults::warmup")]
    pub warmup: f64,
    #[serde(default = "defaults::repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub base_seed: u64,
    /// Draw each loitering node's initial phase uniformly from [0, 2pi) per seed.
    #[serde(default)]
    pub randomize_loiter_phase: bool,
    /// Send data straight to the destination, bypassing routing tables
    /// (single-link characterisation). Control traffic still runs.
    #[serde(default)]
    pub direct_delivery: bool,
}

/// One field-level validation problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario is invalid:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Issue>),
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown preset '{0}' (available: shuttle2, threenode, grid19)")]
    UnknownPreset(String),
}

impl Scenario {
    pub fn hello_interval(&self) -> f64 {
        self.params.hello_interval
    }

    pub fn tc_interval(&self) -> f64 {
        self.timing.tc_interval_factor * self.params.hello_interval
    }

    pub fn tc_validity(&self) -> f64 {
        self.timing.tc_validity_factor * self.tc_interval()
    }

    pub fn node(&self, id: u32) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Checks every invariant, collecting all problems.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut issues = Vec::new();
        let mut bad = |field: &str, message: String| issues.push(Issue { field: field.into(), message });

        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version", format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if let Err(e) = self.params.validate() {
            let field = match e {
                crate::linkmetrics::LinkError::Alpha(_) => "params.alpha",
                crate::linkmetrics::LinkError::Beta(_) => "params.beta",
                crate::linkmetrics::LinkError::Gamma(_) => "params.gamma",
                _ => "params.hello_interval",
            };
            bad(field, e.to_string());
        }
        let t = &self.timing;
        if !(t.tc_interval_factor > 0.0) {
            bad("timing.tc_interval_factor", "must be positive".into());
        }
        if !(t.tc_validity_factor >= 1.0) {
            bad("timing.tc_validity_factor", "must be at least 1".into());
        }
        if !(0.0..0.5).contains(&t.jitter) {
            bad("timing.jitter", "must be in [0, 0.5)".into());
        }
        if t.ttl == 0 {
            bad("timing.ttl", "must be at least 1".into());
        }
        if let Err(e) = self.channel.validate() {
            bad("channel", e.to_string());
        }
        if let Some(g) = &self.gps {
            if let Err(e) = g.validate() {
                bad("gps", e.to_string());
            }
        }
        if self.nodes.len() < 2 {
            bad("nodes", "need at least two nodes".into());
        }
        let mut ids = BTreeSet::new();
        let mut addrs = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !ids.insert(n.id) {
                bad(&format!("nodes[{i}].id"), format!("duplicate node id {}", n.id));
            }
            if !addrs.insert(n.addr()) {
                bad(&format!("nodes[{i}].address"), format!("duplicate address {}", n.addr()));
            }
            if let Err(e) = n.trajectory.validate() {
                bad(&format!("nodes[{i}].trajectory"), e.to_string());
            }
        }
        if let (Some(first), true) = (self.nodes.first(), self.nodes.len() > 1) {
            if let Ok(origin) = first.trajectory.position_clamped(0.0) {
                for (i, n) in self.nodes.iter().enumerate().skip(1) {
                    if let Ok(p) = n.trajectory.position_clamped(0.0) {
                        if geo::to_local(&origin, &p).is_err() {
                            bad(&format!("nodes[{i}].trajectory"), "more than 50 km from the first node".into());
                        }
                    }
                }
            }
        }
        let tr = &self.traffic;
        if tr.source == tr.destination {
            bad("traffic.destination", "must differ from traffic.source".into());
        }
        if !ids.contains(&tr.source) {
            bad("traffic.source", format!("no node with id {}", tr.source));
        }
        if !ids.contains(&tr.destination) {
            bad("traffic.destination", format!("no node with id {}", tr.destination));
        }
        if tr.datagrams_per_second == 0 {
            bad("traffic.datagrams_per_second", "must be positive".into());
        }
        if tr.datagram_bytes == 0 {
            bad("traffic.datagram_bytes", "must be positive".into());
        }
        if !(tr.delay_loss_threshold > 0.0) {
            bad("traffic.delay_loss_threshold", "must be positive".into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            bad("duration", "must be positive".into());
        }
        if !(self.warmup >= 0.0) {
            bad("warmup", "must be non-negative".into());
        }
        if self.repetitions == 0 {
            bad("repetitions", "must be at least 1".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(issues))
        }
    }

    /// Short content hash used to name output files.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a scenario file and loads any position logs it references.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        let mut sc = Self::from_json(&text)?;
        let base = path.parent();
        let mut issues = Vec::new();
        for (i, n) in sc.nodes.iter_mut().enumerate() {
            if let Err(e) = n.trajectory.resolve(base) {
                issues.push(Issue { field: format!("nodes[{i}].trajectory"), message: e.to_string() });
            }
        }
        if !issues.is_empty() {
            return Err(ScenarioError::Invalid(issues));
        }
        Ok(sc)
    }

    /// Same scenario under another protocol, keeping every parameter.
    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        self.protocol = protocol;
        self
    }
}

/// Reference point of all presets: the ground station of the field trials.
pub fn campus_origin() -> GeoPosition {
    GeoPosition { lat: 46.51843, lon: 6.561591, alt: 0.0 }
}

pub const PRESET_NAMES: [&str; 3] = ["shuttle2", "threenode", "grid19"];

/// Builds a named preset for the given protocol.
pub fn preset(name: &str, protocol: Protocol) -> Result<Scenario, ScenarioError> {
    match name {
        "shuttle2" => Ok(shuttle2(protocol)),
        "threenode" => Ok(threenode(protocol)),
        "grid19" => Ok(grid19(protocol)),
        other => Err(ScenarioError::UnknownPreset(other.into())),
    }
}

fn traffic(source: u32, destination: u32) -> Traffic {
    Traffic {
        source,
        destination,
        datagrams_per_second: defaults::datagrams_per_second(),
        datagram_bytes: defaults::datagram_bytes(),
        delay_loss_threshold: defaults::delay_loss_threshold(),
    }
}

/// Air-to-ground link characterisation: a UAV shuttling 450 m out from a
/// ground node and back, ten times.
pub fn shuttle2(protocol: Protocol) -> Scenario {
    let ground = campus_origin();
    let air = GeoPosition { alt: 75.0, ..ground };
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "shuttle2".into(),
        protocol,
        params: LqParams { alpha: 0.2, beta: 0.2, gamma: 0.04, hello_interval: 0.5 },
        timing: Timing::default(),
        channel: ChannelModel::default(),
        gps: Some(GpsErrorModel::default()),
        nodes: vec![
            NodeSpec { id: 1, address: None, role: Role::Destination, trajectory: Trajectory::Fixed { position: ground } },
            NodeSpec {
                id: 2,
                address: None,
                role: Role::Source,
                trajectory: Trajectory::Shuttle { start: air, bearing_deg: 270.0, leg_length: 450.0, speed: 12.0 },
            },
        ],
        traffic: traffic(2, 1),
        duration: 750.0,
        warmup: defaults::warmup(),
        repetitions: 1,
        base_seed: 1,
        randomize_loiter_phase: false,
        direct_delivery: true,
    }
}

/// Ground destination, a UAV source shuttling 600 m west and back, and a
/// UAV relay loitering 250 m west.
pub fn threenode(protocol: Protocol) -> Scenario {
    let ground = GeoPosition { alt: 10.0, ..campus_origin() };
    let air = GeoPosition { alt: 75.0, ..ground };
    let alpha = match protocol {
        Protocol::Olsr => 0.2,
        Protocol::Polsr => 0.05,
    };
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "threenode".into(),
        protocol,
        params: LqParams { alpha, beta: 0.2, gamma: 0.04, hello_interval: 0.5 },
        timing: Timing::default(),
        channel: ChannelModel::default(),
        gps: Some(GpsErrorModel::default()),
        nodes: vec![
            NodeSpec { id: 1, address: None, role: Role::Destination, trajectory: Trajectory::Fixed { position: ground } },
            NodeSpec {
                id: 2,
                address: None,
                role: Role::Source,
                trajectory: Trajectory::Shuttle { start: air, bearing_deg: 270.0, leg_length: 600.0, speed: 12.0 },
            },
            NodeSpec {
                id: 3,
                address: None,
                role: Role::Relay,
                trajectory: Trajectory::Circular {
                    center: geo::offset(&air, -250.0, 0.0, 0.0),
                    radius: 30.0,
                    speed: 12.0,
                    phase: 0.0,
                },
            },
        ],
        traffic: traffic(2, 1),
        duration: 1000.0,
        warmup: defaults::warmup(),
        repetitions: 10,
        base_seed: 1,
        randomize_loiter_phase: true,
        direct_delivery: false,
    }
}

/// Nearest-neighbour spacing of the 19-node relay lattice, metres.
pub const GRID19_SPACING_M: f64 = 250.0;
/// Duration of one scan of the relay area, seconds.
pub const GRID19_SCAN_TIME_S: f64 = 380.0;

/// Lattice slot of relay `id` in the 19-node layout: columns alternate
/// between three and two relays, numbered column by column from the south.
/// Returns (column, half-row).
pub fn grid19_slot(id: u32) -> (u32, u32) {
    let mut slot = 1;
    for col in 0..8 {
        let rows: &[u32] = if col % 2 == 0 { &[0, 2, 4] } else { &[1, 3] };
        for &hr in rows {
            if slot == id {
                return (col, hr);
            }
            slot += 1;
        }
    }
    panic!("grid19 has no slot for node {id}")
}

/// Local (east, north) position of lattice slot `id` for a given spacing.
pub fn grid19_local(id: u32, spacing: f64) -> (f64, f64) {
    let (col, hr) = grid19_slot(id);
    (f64::from(col) * spacing / 2.0, f64::from(hr) * spacing * 3f64.sqrt() / 2.0)
}

/// Eighteen loitering relays on a triangular lattice, node 2 scanning the
/// whole area and streaming to node 1. Uses the two-slope channel with
/// per-frame retries, under which only nearest lattice neighbours are usable.
pub fn grid19(protocol: Protocol) -> Scenario {
    grid19_with_spacing(protocol, GRID19_SPACING_M)
}

/// [`grid19`] with a custom nearest-neighbour spacing.
pub fn grid19_with_spacing(protocol: Protocol, spacing: f64) -> Scenario {
    let base = GeoPosition { alt: 75.0, ..campus_origin() };
    let speed = 12.0;
    let mut nodes = Vec::new();
    let mut max_east: f64 = 0.0;
    let mut max_north: f64 = 0.0;
    for id in (1..=19).filter(|&id| id != 2) {
        let (e, n) = grid19_local(id, spacing);
        max_east = max_east.max(e);
        max_north = max_north.max(n);
        nodes.push(NodeSpec {
            id,
            address: None,
            role: if id == 1 { Role::Destination } else { Role::Relay },
            trajectory: Trajectory::Circular { center: geo::offset(&base, e, n, 0.0), radius: 30.0, speed, phase: 0.0 },
        });
    }
    // four east-west lanes covering the lattice height; lane length chosen so
    // that one full sweep takes the scan time at cruise speed
    let lanes = 4;
    let height = max_north;
    let width = (GRID19_SCAN_TIME_S * speed - height) / f64::from(lanes);
    let corner = geo::offset(&base, (max_east - width) / 2.0, 0.0, 0.0);
    nodes.insert(
        1,
        NodeSpec {
            id: 2,
            address: None,
            role: Role::Source,
            trajectory: Trajectory::LawnmowerScan { corner, width, height, lanes, speed },
        },
    );
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "grid19".into(),
        protocol,
        params: LqParams { alpha: 0.2, beta: 0.2, gamma: 0.08, hello_interval: 0.5 },
        timing: Timing::default(),
        channel: ChannelModel { kind: ChannelKind::two_slope_default(), ..ChannelModel::default() },
        gps: Some(GpsErrorModel::default()),
        nodes,
        traffic: traffic(2, 1),
        duration: GRID19_SCAN_TIME_S,
        warmup: defaults::warmup(),
        repetitions: 10,
        base_seed: 1,
        randomize_loiter_phase: true,
        direct_delivery: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            for p in [Protocol::Olsr, Protocol::Polsr] {
                let sc = preset(name, p).unwrap();
                sc.validate().unwrap_or_else(|e| panic!("{name}/{p}: {e}"));
                assert_eq!(sc.protocol, p);
            }
        }
        assert!(matches!(preset("nope", Protocol::Olsr), Err(ScenarioError::UnknownPreset(_))));
    }

    #[test]
    fn threenode_matches_field_settings() {
        let o = threenode(Protocol::Olsr);
        let p = threenode(Protocol::Polsr);
        assert_eq!(o.params.alpha, 0.2);
        assert_eq!(p.params.alpha, 0.05);
        assert_eq!((p.params.beta, p.params.gamma, p.params.hello_interval), (0.2, 0.04, 0.5));
        let ground = o.node(1).unwrap().trajectory.position(0.0).unwrap();
        assert_eq!((ground.lat, ground.lon, ground.alt), (46.51843, 6.561591, 10.0));
        let relay = &o.node(3).unwrap().trajectory;
        if let Trajectory::Circular { center, radius, .. } = relay {
            assert_eq!(*radius, 30.0);
            let l = geo::to_local(&ground, center).unwrap();
            assert!((l.east + 250.0).abs() < 1e-6 && (l.up - 65.0).abs() < 1e-9);
        } else {
            panic!("relay must loiter");
        }
    }

    #[test]
    fn offered_load_is_one_megabit() {
        let sc = threenode(Protocol::Olsr);
        assert_eq!(sc.traffic.offered_bps(), 999_600.0);
    }

    #[test]
    fn grid19_lattice_adjacency() {
        // node 10 has exactly nodes 5, 7, 8, 12, 13, 15 at the nearest-neighbour distance
        let s = GRID19_SPACING_M;
        let (x, y) = grid19_local(10, s);
        let near: Vec<u32> = (1..=19)
            .filter(|&id| id != 10 && id != 2)
            .filter(|&id| {
                let (a, b) = grid19_local(id, s);
                ((a - x).hypot(b - y) - s).abs() < 1e-6
            })
            .collect();
        assert_eq!(near, vec![5, 7, 8, 12, 13, 15]);
        // everyone else is at least sqrt(3) spacings away
        for id in (1..=19).filter(|id| ![2, 10, 5, 7, 8, 12, 13, 15].contains(id)) {
            let (a, b) = grid19_local(id, s);
            assert!((a - x).hypot(b - y) >= 3f64.sqrt() * s - 1e-6);
        }
    }

    #[test]
    fn grid19_scan_takes_scan_time() {
        let sc = grid19(Protocol::Polsr);
        assert_eq!(sc.nodes.len(), 19);
        let scan = &sc.node(2).unwrap().trajectory;
        assert!((scan.period().unwrap() / 2.0 - GRID19_SCAN_TIME_S).abs() < 1e-9);
    }

    #[test]
    fn validation_reports_fields() {
        let mut sc = threenode(Protocol::Olsr);
        sc.params.hello_interval = -1.0;
        sc.params.beta = -0.1;
        sc.traffic.destination = sc.traffic.source;
        let err = sc.validate().unwrap_err();
        let ScenarioError::Invalid(issues) = err else { panic!() };
        let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains(&"params.beta") || fields.contains(&"params.hello_interval"));
        assert!(fields.contains(&"traffic.destination"));
    }

    #[test]
    fn json_round_trip_keeps_hash() {
        let sc = grid19(Protocol::Olsr);
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(sc.hash(), back.hash());
        assert_ne!(sc.hash(), grid19(Protocol::Polsr).hash());
    }

    #[test]
    fn protocol_parsing() {
        assert_eq!("P-OLSR".parse::<Protocol>().unwrap(), Protocol::Polsr);
        assert_eq!("olsr".parse::<Protocol>().unwrap(), Protocol::Olsr);
        assert!("babel".parse::<Protocol>().is_err());
    }
}
