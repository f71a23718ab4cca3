//! UAV trajectories, a Gauss-Markov GPS error model, and position-log replay.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, GeoPosition, LocalPosition};

/// Smallest loiter radius a fixed-wing airframe can hold.
pub const MIN_TURN_RADIUS_M: f64 = 30.0;
pub const MAX_AIRSPEED_MPS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("invalid trajectory: {0}")]
    Invalid(String),
    #[error("time {t} s outside the log span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("position log is empty")]
    EmptyLog,
    #[error("no samples for node {0} in position log")]
    UnknownNode(u32),
    #[error("timestamps for node {node} are not increasing at t={t}")]
    Unsorted { node: u32, t: f64 },
    #[error("position log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("position log: {0}")]
    Csv(#[from] csv::Error),
    #[error("position log sample out of range: {0}")]
    Geo(#[from] geo::GeoError),
    #[error("log replay trajectory for {0} was never loaded")]
    Unresolved(PathBuf),
}

/// Time-sorted samples of one node, stored in a local frame anchored at the first sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PositionTrack {
    origin: Option<GeoPosition>,
    samples: Vec<(f64, LocalPosition)>,
}

impl PositionTrack {
    pub fn from_samples(samples: &[(f64, GeoPosition)]) -> Result<Self, MobilityError> {
        let first = samples.first().ok_or(MobilityError::EmptyLog)?.1;
        let mut out = Vec::with_capacity(samples.len());
        for (t, p) in samples {
            p.validate()?;
            if let Some((prev, _)) = out.last() {
                if !(t > prev) {
                    return Err(MobilityError::Unsorted { node: 0, t: *t });
                }
            }
            out.push((*t, geo::to_local(&first, p)?));
        }
        Ok(PositionTrack { origin: Some(first), samples: out })
    }

    pub fn span(&self) -> (f64, f64) {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => (f64::NAN, f64::NAN),
        }
    }

    fn at(&self, t: f64, clamp: bool) -> Result<GeoPosition, MobilityError> {
        let origin = self.origin.ok_or(MobilityError::EmptyLog)?;
        let (start, end) = self.span();
        let t = if clamp { t.clamp(start, end) } else { t };
        if !(start..=end).contains(&t) {
            return Err(MobilityError::OutOfSpan { t, start, end });
        }
        let i = self.samples.partition_point(|(ts, _)| *ts <= t);
        let local = if i == 0 {
            self.samples[0].1
        } else if i == self.samples.len() {
            self.samples[i - 1].1
        } else {
            let (t0, p0) = self.samples[i - 1];
            let (t1, p1) = self.samples[i];
            let w = (t - t0) / (t1 - t0);
            LocalPosition::new(
                p0.east + w * (p1.east - p0.east),
                p0.north + w * (p1.north - p0.north),
                p0.up + w * (p1.up - p0.up),
            )
        };
        Ok(geo::from_local(&origin, &local))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Fixed {
        position: GeoPosition,
    },
    /// Counter-clockwise loiter; phase 0 is due east of the centre.
    Circular {
        center: GeoPosition,
        radius: f64,
        speed: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Out-and-back along a fixed bearing (degrees clockwise from north),
    /// turning around instantly at both ends.
    Shuttle {
        start: GeoPosition,
        bearing_deg: f64,
        leg_length: f64,
        speed: f64,
    },
    /// Boustrophedon sweep of a `width` x `height` rectangle whose south-west
    /// corner is `corner`: `lanes` east-west passes, stepping north between them.
    /// The sweep is retraced backwards once complete.
    LawnmowerScan {
        corner: GeoPosition,
        width: f64,
        height: f64,
        lanes: u32,
        speed: f64,
    },
    LogReplay {
        path: PathBuf,
        node: u32,
        #[serde(skip)]
        track: Option<Arc<PositionTrack>>,
    },
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), MobilityError> {
        let bad = |m: String| Err(MobilityError::Invalid(m));
        match self {
            Trajectory::Fixed { position } => position.validate()?,
            Trajectory::Circular { center, radius, speed, phase } => {
                center.validate()?;
                if !(*radius >= MIN_TURN_RADIUS_M) {
                    return bad(format!("loiter radius {radius} m below {MIN_TURN_RADIUS_M} m"));
                }
                if !(*speed > 0.0 && *speed <= MAX_AIRSPEED_MPS) {
                    return bad(format!("loiter speed {speed} m/s outside (0, {MAX_AIRSPEED_MPS}]"));
                }
                if !phase.is_finite() {
                    return bad("loiter phase must be finite".into());
                }
            }
            Trajectory::Shuttle { start, bearing_deg, leg_length, speed } => {
                start.validate()?;
                if !(*leg_length > 0.0) || !(*speed > 0.0) || !bearing_deg.is_finite() {
                    return bad("shuttle needs a positive leg, positive speed and finite bearing".into());
                }
            }
            Trajectory::LawnmowerScan { corner, width, height, lanes, speed } => {
                corner.validate()?;
                if !(*width > 0.0) || !(*height > 0.0) || *lanes < 2 || !(*speed > 0.0) {
                    return bad("scan needs positive extents, at least two lanes and positive speed".into());
                }
            }
            Trajectory::LogReplay { path, track, .. } => {
                if track.is_none() {
                    return Err(MobilityError::Unresolved(path.clone()));
                }
            }
        }
        Ok(())
    }

    /// Loads log-backed trajectories, resolving relative paths against `base`.
    pub fn resolve(&mut self, base: Option<&Path>) -> Result<(), MobilityError> {
        if let Trajectory::LogReplay { path, node, track } = self {
            if track.is_none() {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(&*path),
                    _ => path.clone(),
                };
                *track = Some(Arc::new(load_track(&full, *node)?));
            }
        }
        Ok(())
    }

    /// Configured ground speed, if the trajectory has one.
    pub fn speed(&self) -> Option<f64> {
        match self {
            Trajectory::Circular { speed, .. }
            | Trajectory::Shuttle { speed, .. }
            | Trajectory::LawnmowerScan { speed, .. } => Some(*speed),
            Trajectory::Fixed { .. } => Some(0.0),
            Trajectory::LogReplay { .. } => None,
        }
    }

    /// Time after which the motion repeats.
    pub fn period(&self) -> Option<f64> {
        match self {
            Trajectory::Circular { radius, speed, .. } => Some(TAU * radius / speed),
            Trajectory::Shuttle { leg_length, speed, .. } => Some(2.0 * leg_length / speed),
            Trajectory::LawnmowerScan { width, height, lanes, speed, .. } => {
                Some(2.0 * scan_length(*width, *height, *lanes) / speed)
            }
            _ => None,
        }
    }

    pub fn position(&self, t: f64) -> Result<GeoPosition, MobilityError> {
        self.eval(t, false)
    }

    /// Like [`Trajectory::position`], but log replays hold their first and
    /// last samples outside the logged span.
    pub fn position_clamped(&self, t: f64) -> Result<GeoPosition, MobilityError> {
        self.eval(t, true)
    }

    fn eval(&self, t: f64, clamp: bool) -> Result<GeoPosition, MobilityError> {
        Ok(match self {
            Trajectory::Fixed { position } => *position,
            Trajectory::Circular { center, radius, speed, phase } => {
                let angle = phase + speed / radius * t;
                geo::offset(center, radius * angle.cos(), radius * angle.sin(), 0.0)
            }
            Trajectory::Shuttle { start, bearing_deg, leg_length, speed } => {
                let s = (speed * t).rem_euclid(2.0 * leg_length);
                let along = if s <= *leg_length { s } else { 2.0 * leg_length - s };
                let b = bearing_deg.to_radians();
                geo::offset(start, along * b.sin(), along * b.cos(), 0.0)
            }
            Trajectory::LawnmowerScan { corner, width, height, lanes, speed } => {
                let total = scan_length(*width, *height, *lanes);
                let s = (speed * t).rem_euclid(2.0 * total);
                let s = if s <= total { s } else { 2.0 * total - s };
                let (east, north) = scan_point(s, *width, *height, *lanes);
                geo::offset(corner, east, north, 0.0)
            }
            Trajectory::LogReplay { path, track, .. } => {
                track.as_ref().ok_or_else(|| MobilityError::Unresolved(path.clone()))?.at(t, clamp)?
            }
        })
    }
}

fn scan_length(width: f64, height: f64, lanes: u32) -> f64 {
    f64::from(lanes) * width + height
}

fn scan_point(s: f64, width: f64, height: f64, lanes: u32) -> (f64, f64) {
    let spacing = height / f64::from(lanes - 1);
    let mut rest = s;
    for lane in 0..lanes {
        let north = spacing * f64::from(lane);
        let eastbound = lane % 2 == 0;
        if rest <= width {
            return (if eastbound { rest } else { width - rest }, north);
        }
        rest -= width;
        if lane + 1 < lanes {
            if rest <= spacing {
                return (if eastbound { width } else { 0.0 }, north + rest);
            }
            rest -= spacing;
        }
    }
    (if lanes % 2 == 1 { width } else { 0.0 }, height)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsErrorModel {
    /// Correlation time, seconds.
    pub tau: f64,
    /// Per-axis horizontal standard deviation, metres.
    pub sigma_h: f64,
    /// Vertical standard deviation, metres.
    pub sigma_v: f64,
}

impl Default for GpsErrorModel {
    fn default() -> Self {
        GpsErrorModel { tau: 30.0, sigma_h: 3.0, sigma_v: 5.0 }
    }
}

/// Current east/north/up error of one receiver.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GpsError {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

/// Errors are clamped to this many standard deviations.
const GPS_CLAMP_SIGMAS: f64 = 6.0;

impl GpsErrorModel {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(self.tau > 0.0) || !(self.sigma_h >= 0.0) || !(self.sigma_v >= 0.0) {
            return Err(MobilityError::Invalid("gps model needs tau > 0 and non-negative sigmas".into()));
        }
        Ok(())
    }

    /// Draws an error from the stationary distribution.
    pub fn initial_error<R: Rng + ?Sized>(&self, rng: &mut R) -> GpsError {
        let mut e = GpsError {
            east: self.sigma_h * rng.sample::<f64, _>(StandardNormal),
            north: self.sigma_h * rng.sample::<f64, _>(StandardNormal),
            up: self.sigma_v * rng.sample::<f64, _>(StandardNormal),
        };
        self.clamp(&mut e);
        e
    }

    /// Advances the first-order Gauss-Markov error by `dt` and applies it to `true_pos`.
    pub fn perturb<R: Rng + ?Sized>(&self, err: &mut GpsError, true_pos: &GeoPosition, dt: f64, rng: &mut R) -> GeoPosition {
        if dt > 0.0 {
            let decay = (-dt / self.tau).exp();
            let drive = (1.0 - decay * decay).sqrt();
            let mut step = |e: &mut f64, sigma: f64| {
                if sigma > 0.0 {
                    *e = *e * decay + sigma * drive * rng.sample::<f64, _>(StandardNormal);
                }
            };
            step(&mut err.east, self.sigma_h);
            step(&mut err.north, self.sigma_h);
            step(&mut err.up, self.sigma_v);
            self.clamp(err);
        }
        geo::offset(true_pos, err.east, err.north, err.up)
    }

    fn clamp(&self, e: &mut GpsError) {
        let h = GPS_CLAMP_SIGMAS * self.sigma_h;
        let v = GPS_CLAMP_SIGMAS * self.sigma_v;
        e.east = e.east.clamp(-h, h);
        e.north = e.north.clamp(-h, h);
        e.up = e.up.clamp(-v, v);
    }
}

#[derive(Debug, Deserialize)]
struct LogRecord {
    t: f64,
    node: u32,
    lat: f64,
    lon: f64,
    alt: f64,
}

/// Parses a `t,node,lat,lon,alt` position log into one track per node.
pub fn read_position_log<R: Read>(reader: R) -> Result<BTreeMap<u32, PositionTrack>, MobilityError> {
    let mut per_node: BTreeMap<u32, Vec<(f64, GeoPosition)>> = BTreeMap::new();
    for rec in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize() {
        let r: LogRecord = rec?;
        let p = GeoPosition::new(r.lat, r.lon, r.alt)?;
        let samples = per_node.entry(r.node).or_default();
        if let Some((prev, _)) = samples.last() {
            if !(r.t > *prev) {
                return Err(MobilityError::Unsorted { node: r.node, t: r.t });
            }
        }
        samples.push((r.t, p));
    }
    if per_node.is_empty() {
        return Err(MobilityError::EmptyLog);
    }
    per_node
        .into_iter()
        .map(|(node, s)| {
            PositionTrack::from_samples(&s)
                .map(|tr| (node, tr))
                .map_err(|e| match e {
                    MobilityError::Unsorted { t, .. } => MobilityError::Unsorted { node, t },
                    other => other,
                })
        })
        .collect()
}

fn load_track(path: &Path, node: u32) -> Result<PositionTrack, MobilityError> {
    let file = std::fs::File::open(path).map_err(|source| MobilityError::Io { path: path.into(), source })?;
    read_position_log(file)?.remove(&node).ok_or(MobilityError::UnknownNode(node))
}

/// Loads the samples of `node` from a position log as a replay trajectory.
pub fn load_position_log(path: &Path, node: u32) -> Result<Trajectory, MobilityError> {
    let track = load_track(path, node)?;
    Ok(Trajectory::LogReplay { path: path.into(), node, track: Some(Arc::new(track)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn origin() -> GeoPosition {
        GeoPosition { lat: 46.51843, lon: 6.561591, alt: 75.0 }
    }

    fn circle() -> Trajectory {
        Trajectory::Circular { center: origin(), radius: 30.0, speed: 12.0, phase: 0.0 }
    }

    fn local(tr: &Trajectory, t: f64) -> LocalPosition {
        geo::to_local(&origin(), &tr.position(t).unwrap()).unwrap()
    }

    fn numeric_speed(tr: &Trajectory, t: f64) -> f64 {
        let a = tr.position(t).unwrap();
        let b = tr.position(t + 0.1).unwrap();
        geo::distance(&a, &b) / 0.1
    }

    #[test]
    fn circle_starts_due_east() {
        let l = local(&circle(), 0.0);
        assert!((l.east - 30.0).abs() < 1e-6 && l.north.abs() < 1e-6);
    }

    #[test]
    fn circle_period_and_closure() {
        let tr = circle();
        let period = tr.period().unwrap();
        assert!((period - 15.708).abs() < 1e-3);
        for t in [0.0, 3.3, 11.0] {
            let d = geo::distance(&tr.position(t).unwrap(), &tr.position(t + period).unwrap());
            assert!(d < 0.01);
        }
    }

    #[test]
    fn shuttle_returns_after_two_legs() {
        let tr = Trajectory::Shuttle { start: origin(), bearing_deg: 270.0, leg_length: 600.0, speed: 12.0 };
        assert!(geo::distance(&tr.position(100.0).unwrap(), &origin()) < 1e-6);
        let far = local(&tr, 50.0);
        assert!((far.east + 600.0).abs() < 1e-6 && far.north.abs() < 1e-6);
    }

    #[test]
    fn speed_law_holds_for_closed_form_kinds() {
        let kinds = [
            circle(),
            Trajectory::Shuttle { start: origin(), bearing_deg: 270.0, leg_length: 600.0, speed: 12.0 },
            Trajectory::LawnmowerScan { corner: origin(), width: 900.0, height: 800.0, lanes: 4, speed: 12.0 },
        ];
        for tr in &kinds {
            let period = tr.period().unwrap();
            let mut t = 0.05;
            while t < period {
                let v = numeric_speed(tr, t);
                // finite differences across a corner are legitimately short
                let at_corner = v < 11.88;
                if !at_corner {
                    assert!((v - 12.0).abs() <= 0.12, "{tr:?} t={t} v={v}");
                }
                t += 0.7;
            }
        }
    }

    #[test]
    fn lawnmower_covers_rectangle() {
        let tr = Trajectory::LawnmowerScan { corner: origin(), width: 900.0, height: 600.0, lanes: 4, speed: 12.0 };
        let total = 4.0 * 900.0 + 600.0;
        assert!((tr.period().unwrap() - 2.0 * total / 12.0).abs() < 1e-9);
        let end = local(&tr, total / 12.0);
        assert!(end.east.abs() < 1e-6 && (end.north - 600.0).abs() < 1e-6);
        let mid_first_lane = local(&tr, 450.0 / 12.0);
        assert!((mid_first_lane.east - 450.0).abs() < 1e-6 && mid_first_lane.north.abs() < 1e-6);
        let up_first_step = local(&tr, (900.0 + 100.0) / 12.0);
        assert!((up_first_step.east - 900.0).abs() < 1e-6 && (up_first_step.north - 100.0).abs() < 1e-6);
    }

    #[test]
    fn validation_rejects_infeasible_loiter() {
        let tight = Trajectory::Circular { center: origin(), radius: 20.0, speed: 12.0, phase: 0.0 };
        assert!(tight.validate().is_err());
        let fast = Trajectory::Circular { center: origin(), radius: 30.0, speed: 25.0, phase: 0.0 };
        assert!(fast.validate().is_err());
        assert!(circle().validate().is_ok());
    }

    fn write_log(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn log_replay_interpolates() {
        let f = write_log("t,node,lat,lon,alt\n0,3,46.5,6.5,70\n10,3,46.501,6.5,80\n0,4,46.0,6.0,0\n");
        let tr = load_position_log(f.path(), 3).unwrap();
        let mid = tr.position(5.0).unwrap();
        assert!((mid.lat - 46.5005).abs() < 1e-9 && (mid.alt - 75.0).abs() < 1e-9);
        let at = tr.position(10.0).unwrap();
        assert!(geo::distance(&at, &GeoPosition { lat: 46.501, lon: 6.5, alt: 80.0 }) < 1e-6);
        assert!(matches!(tr.position(11.0), Err(MobilityError::OutOfSpan { .. })));
        assert!((tr.position_clamped(11.0).unwrap().alt - 80.0).abs() < 1e-9);
        assert!(matches!(load_position_log(f.path(), 9), Err(MobilityError::UnknownNode(9))));
    }

    #[test]
    fn log_rejects_bad_input() {
        let unsorted = write_log("t,node,lat,lon,alt\n5,1,46.5,6.5,0\n4,1,46.5,6.5,0\n");
        assert!(matches!(load_position_log(unsorted.path(), 1), Err(MobilityError::Unsorted { node: 1, .. })));
        let missing = write_log("t,node,lat,lon\n5,1,46.5,6.5\n");
        assert!(matches!(load_position_log(missing.path(), 1), Err(MobilityError::Csv(_))));
        let empty = write_log("t,node,lat,lon,alt\n");
        assert!(matches!(load_position_log(empty.path(), 1), Err(MobilityError::EmptyLog)));
    }

    #[test]
    fn noiseless_gps_is_identity() {
        let m = GpsErrorModel { sigma_h: 0.0, sigma_v: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut e = m.initial_error(&mut rng);
        let p = origin();
        assert_eq!(m.perturb(&mut e, &p, 1.0, &mut rng), p);
    }

    #[test]
    fn gauss_markov_statistics() {
        let m = GpsErrorModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut e = m.initial_error(&mut rng);
        let n = 100_000;
        let dt = 1.0;
        let lag = m.tau as usize;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            m.perturb(&mut e, &origin(), dt, &mut rng);
            xs.push(e.east);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var.sqrt() - 3.0).abs() < 0.3, "std {}", var.sqrt());
        // long correlation time: the mean has an effective sample size of ~n/(2 tau)
        let eff = n as f64 / (2.0 * m.tau);
        assert!(mean.abs() < 3.0 * 3.0 / eff.sqrt(), "mean {mean}");
        let cov = (0..n - lag).map(|i| (xs[i] - mean) * (xs[i + lag] - mean)).sum::<f64>() / (n - lag) as f64;
        let expected = (-1f64).exp() * var;
        assert!((cov - expected).abs() < 0.15 * expected, "cov {cov} vs {expected}");
    }
}
