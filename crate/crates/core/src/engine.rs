//! Deterministic discrete-event simulation of a FANET running OLSR or P-OLSR
//! under a constant-bit-rate flow, with per-second loss and goodput metrics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::TAU;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geo::{self, GeoPosition};
use crate::mobility::{GpsError, Trajectory};
use crate::rng::{substream, Purpose};
use crate::routing::Router;
use crate::scenario::{Scenario, ScenarioError};
use crate::wire::{self, NodeAddr};

/// Loss rate above which a second counts as outage.
pub const OUTAGE_THRESHOLD: f64 = 0.2;
/// IPv4 + UDP header bytes added to every datagram and control packet.
const IP_UDP_OVERHEAD: u32 = 28;
/// OLSR packet header preceding each control message.
const OLSR_PACKET_HEADER: u32 = 4;

/// Seconds with loss rate strictly above `threshold`.
pub fn outage_time(dlr: &[f64], threshold: f64) -> f64 {
    dlr.iter().filter(|&&x| x > threshold).count() as f64
}

/// Per-second goodput in bit/s and its mean.
pub fn goodput(delivered_per_second: &[u32], datagram_bytes: u32) -> (Vec<f64>, f64) {
    let series: Vec<f64> =
        delivered_per_second.iter().map(|&n| f64::from(n) * f64::from(datagram_bytes) * 8.0).collect();
    let mean = if series.is_empty() { 0.0 } else { series.iter().sum::<f64>() / series.len() as f64 };
    (series, mean)
}

/// How each offered datagram ended up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub offered: u64,
    pub delivered: u64,
    pub lost_channel: u64,
    pub lost_no_route: u64,
    pub lost_ttl: u64,
    pub lost_late: u64,
}

impl Counters {
    pub fn lost(&self) -> u64 {
        self.lost_channel + self.lost_no_route + self.lost_ttl + self.lost_late
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteChange {
    /// Seconds since traffic start.
    pub time: f64,
    pub node: u32,
    pub destination: u32,
    pub old_next_hop: Option<NodeAddr>,
    pub new_next_hop: Option<NodeAddr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub dlr_series: Vec<f64>,
    pub goodput_series: Vec<f64>,
    pub outage_time: f64,
    pub mean_goodput: f64,
    pub route_changes: Vec<RouteChange>,
    pub counters: Counters,
    /// Source's hop count to the destination sampled mid-second (`None` = no route).
    pub source_hops: Vec<Option<u32>>,
    /// True source-destination distance sampled mid-second, metres.
    pub source_distance: Vec<f64>,
    pub hello_bytes: u64,
    pub tc_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub base_seed: u64,
    pub repetitions: u32,
    pub mean_outage: f64,
    pub mean_goodput: f64,
    pub runs: Vec<RunResult>,
}

/// Runs seeds `base_seed .. base_seed + repetitions` in parallel; means are
/// taken in seed order so they do not depend on the worker count.
pub fn run_campaign(sc: &Scenario, repetitions: u32, base_seed: u64) -> Result<CampaignResult, ScenarioError> {
    sc.validate()?;
    let runs: Vec<RunResult> = (0..u64::from(repetitions))
        .into_par_iter()
        .map(|k| run_unchecked(sc, base_seed + k))
        .collect();
    Ok(summarize(base_seed, runs))
}

/// Aggregates runs already ordered by seed.
pub fn summarize(base_seed: u64, runs: Vec<RunResult>) -> CampaignResult {
    let n = runs.len().max(1) as f64;
    CampaignResult {
        base_seed,
        repetitions: runs.len() as u32,
        mean_outage: runs.iter().map(|r| r.outage_time).sum::<f64>() / n,
        mean_goodput: runs.iter().map(|r| r.mean_goodput).sum::<f64>() / n,
        runs,
    }
}

/// Trajectories as flown under `seed`: loiter phases drawn per node when enabled.
pub fn seeded_trajectories(sc: &Scenario, seed: u64) -> Vec<Trajectory> {
    sc.nodes
        .iter()
        .map(|n| {
            let mut tr = n.trajectory.clone();
            if sc.randomize_loiter_phase {
                if let Trajectory::Circular { phase, .. } = &mut tr {
                    *phase = substream(seed, Purpose::Phase, n.id, 0).gen_range(0.0..TAU);
                }
            }
            tr
        })
        .collect()
}

pub fn run(sc: &Scenario, seed: u64) -> Result<RunResult, ScenarioError> {
    sc.validate()?;
    Ok(run_unchecked(sc, seed))
}

fn run_unchecked(sc: &Scenario, seed: u64) -> RunResult {
    Sim::new(sc, seed).execute()
}

#[derive(Debug)]
enum Event {
    HelloTimer(usize),
    TcTimer(usize),
    Tick(usize),
    HelloRx { to: usize, from: usize, bytes: Rc<[u8]> },
    TcRx { to: usize, originator: NodeAddr, msg_seq: u16, bytes: Rc<[u8]> },
    Emit(u32),
    DataArrive { at: usize, id: u32, ttl: u32 },
    Sample(u32),
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Gps {
    err: GpsError,
    last: f64,
    rng: ChaCha8Rng,
}

struct Sim<'a> {
    sc: &'a Scenario,
    seed: u64,
    queue: BinaryHeap<Scheduled>,
    seq: u64,
    trajectories: Vec<Trajectory>,
    routers: Vec<Router>,
    index: BTreeMap<NodeAddr, usize>,
    timers: Vec<ChaCha8Rng>,
    gps: Vec<Option<Gps>>,
    control_rng: Vec<Option<ChaCha8Rng>>,
    data_rng: Vec<Option<ChaCha8Rng>>,
    last_next_hop: Vec<Option<NodeAddr>>,
    src: usize,
    dst: usize,
    /// Simulation time at which traffic starts.
    t0: f64,
    stop_control: f64,
    emit_times: Vec<f64>,
    delivered: Vec<bool>,
    per_second_offered: Vec<u32>,
    per_second_delivered: Vec<u32>,
    counters: Counters,
    route_changes: Vec<RouteChange>,
    source_hops: Vec<Option<u32>>,
    source_distance: Vec<f64>,
    hello_bytes: u64,
    tc_bytes: u64,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, seed: u64) -> Self {
        let n = sc.nodes.len();
        let variant = sc.protocol.variant();
        let routers: Vec<Router> =
            sc.nodes.iter().map(|s| Router::new(s.addr(), variant, sc.params, sc.tc_validity())).collect();
        let index = sc.nodes.iter().enumerate().map(|(i, s)| (s.addr(), i)).collect();
        let pos = |id| sc.nodes.iter().position(|s| s.id == id).expect("validated traffic endpoint");
        let gps = sc
            .nodes
            .iter()
            .map(|s| {
                sc.gps.map(|m| {
                    let mut rng = substream(seed, Purpose::Gps, s.id, 0);
                    Gps { err: m.initial_error(&mut rng), last: 0.0, rng }
                })
            })
            .collect();
        let seconds = sc.duration.ceil() as usize;
        let rate = sc.traffic.datagrams_per_second;
        let total = (sc.duration * f64::from(rate)).round() as usize;
        Sim {
            sc,
            seed,
            queue: BinaryHeap::new(),
            seq: 0,
            trajectories: seeded_trajectories(sc, seed),
            routers,
            index,
            timers: sc.nodes.iter().map(|s| substream(seed, Purpose::Timers, s.id, 0)).collect(),
            gps,
            control_rng: (0..n * n).map(|_| None).collect(),
            data_rng: (0..n * n).map(|_| None).collect(),
            last_next_hop: vec![None; n],
            src: pos(sc.traffic.source),
            dst: pos(sc.traffic.destination),
            t0: sc.warmup,
            stop_control: sc.warmup + sc.duration + sc.traffic.delay_loss_threshold,
            emit_times: Vec::with_capacity(total),
            delivered: vec![false; total],
            per_second_offered: vec![0; seconds],
            per_second_delivered: vec![0; seconds],
            counters: Counters::default(),
            route_changes: Vec::new(),
            source_hops: Vec::with_capacity(seconds),
            source_distance: Vec::with_capacity(seconds),
            hello_bytes: 0,
            tc_bytes: 0,
        }
    }

    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.queue.push(Scheduled { time, seq: self.seq, event });
    }

    /// True position at simulation time `t`; trajectories are timed from traffic start.
    fn position(&self, i: usize, t: f64) -> GeoPosition {
        self.trajectories[i].position_clamped(t - self.t0).expect("trajectories resolved before running")
    }

    fn gps_fix(&mut self, i: usize, t: f64) -> GeoPosition {
        let truth = self.position(i, t);
        match (&mut self.gps[i], &self.sc.gps) {
            (Some(g), Some(model)) => {
                let dt = t - g.last;
                g.last = t;
                model.perturb(&mut g.err, &truth, dt, &mut g.rng)
            }
            _ => truth,
        }
    }

    fn link_rng(&mut self, data: bool, from: usize, to: usize) -> &mut ChaCha8Rng {
        let n = self.sc.nodes.len();
        let (a, b) = (self.sc.nodes[from].id, self.sc.nodes[to].id);
        let seed = self.seed;
        let (slot, purpose) = if data {
            (&mut self.data_rng[from * n + to], Purpose::DataChannel)
        } else {
            (&mut self.control_rng[from * n + to], Purpose::ControlChannel)
        };
        slot.get_or_insert_with(|| substream(seed, purpose, a, b))
    }

    fn jittered(&mut self, i: usize, period: f64) -> f64 {
        let j = self.sc.timing.jitter;
        if j > 0.0 {
            period * (1.0 + self.timers[i].gen_range(-j..j))
        } else {
            period
        }
    }

    /// Broadcasts a control frame to every other node, each reception drawn independently.
    fn broadcast(&mut self, from: usize, t: f64, make: impl Fn(usize) -> Event) {
        let latency = self.sc.channel.slot_time;
        let here = self.position(from, t);
        for to in 0..self.sc.nodes.len() {
            if to == from {
                continue;
            }
            let d = geo::distance(&here, &self.position(to, t));
            let channel = self.sc.channel;
            if channel.attempt_broadcast(d, self.link_rng(false, from, to)) {
                self.schedule(t + latency, make(to));
            }
        }
    }

    fn observe_route(&mut self, i: usize, t: f64) {
        if i == self.dst {
            return;
        }
        let dst_addr = self.routers[self.dst].addr;
        let nh = self.routers[i].routes(t).get(dst_addr).map(|r| r.next_hop);
        if nh != self.last_next_hop[i] {
            self.route_changes.push(RouteChange {
                time: t - self.t0,
                node: self.sc.nodes[i].id,
                destination: self.sc.nodes[self.dst].id,
                old_next_hop: self.last_next_hop[i],
                new_next_hop: nh,
            });
            self.last_next_hop[i] = nh;
        }
    }

    fn execute(mut self) -> RunResult {
        let hi = self.sc.hello_interval();
        let tci = self.sc.tc_interval();
        for i in 0..self.sc.nodes.len() {
            let h = self.timers[i].gen_range(0.0..hi);
            let c = self.timers[i].gen_range(0.0..tci);
            let k = self.timers[i].gen_range(0.0..hi);
            self.schedule(h, Event::HelloTimer(i));
            self.schedule(c, Event::TcTimer(i));
            self.schedule(k, Event::Tick(i));
        }
        if !self.delivered.is_empty() {
            self.schedule(self.t0, Event::Emit(0));
        }
        for s in 0..self.per_second_offered.len() as u32 {
            self.schedule(self.t0 + f64::from(s) + 0.5, Event::Sample(s));
        }

        while let Some(Scheduled { time: t, event, .. }) = self.queue.pop() {
            match event {
                Event::HelloTimer(i) => self.on_hello_timer(i, t, hi),
                Event::TcTimer(i) => self.on_tc_timer(i, t, tci),
                Event::Tick(i) => {
                    self.routers[i].housekeeping(t);
                    self.observe_route(i, t);
                    if t < self.stop_control {
                        self.schedule(t + hi, Event::Tick(i));
                    }
                }
                Event::HelloRx { to, from, bytes } => self.on_hello_rx(to, from, &bytes, t),
                Event::TcRx { to, originator, msg_seq, bytes } => self.on_tc_rx(to, originator, msg_seq, bytes, t),
                Event::Emit(k) => self.on_emit(k, t),
                Event::DataArrive { at, id, ttl } => self.forward(at, id, ttl, t),
                Event::Sample(s) => {
                    let dst_addr = self.routers[self.dst].addr;
                    let hops = self.routers[self.src].routes(t).get(dst_addr).map(|r| r.hops);
                    self.source_hops.push(hops);
                    let d = geo::distance(&self.position(self.src, t), &self.position(self.dst, t));
                    self.source_distance.push(d);
                    debug_assert_eq!(self.source_hops.len(), s as usize + 1);
                }
            }
        }
        self.finish()
    }

    fn on_hello_timer(&mut self, i: usize, t: f64, hi: f64) {
        let fix = self.routers[i].speed_aware().then(|| self.gps_fix(i, t));
        let hello = self.routers[i].generate_hello(t, fix);
        let bytes: Rc<[u8]> = wire::encode_hello(&hello).expect("locally generated Hello encodes").into();
        self.hello_bytes += u64::from(OLSR_PACKET_HEADER + IP_UDP_OVERHEAD) + bytes.len() as u64;
        self.broadcast(i, t, |to| Event::HelloRx { to, from: i, bytes: Rc::clone(&bytes) });
        if t < self.stop_control {
            let next = t + self.jittered(i, hi);
            self.schedule(next, Event::HelloTimer(i));
        }
    }

    fn on_tc_timer(&mut self, i: usize, t: f64, tci: f64) {
        let out = self.routers[i].generate_tc(t);
        let bytes: Rc<[u8]> = wire::encode_tc(&out.msg).expect("locally generated TC encodes").into();
        self.send_tc(i, out.msg.originator, out.msg_seq, bytes, t);
        if t < self.stop_control {
            let next = t + self.jittered(i, tci);
            self.schedule(next, Event::TcTimer(i));
        }
    }

    fn send_tc(&mut self, from: usize, originator: NodeAddr, msg_seq: u16, bytes: Rc<[u8]>, t: f64) {
        self.tc_bytes += u64::from(OLSR_PACKET_HEADER + IP_UDP_OVERHEAD) + bytes.len() as u64;
        self.broadcast(from, t, |to| Event::TcRx { to, originator, msg_seq, bytes: Rc::clone(&bytes) });
    }

    fn on_hello_rx(&mut self, to: usize, from: usize, bytes: &[u8], t: f64) {
        let variant = self.sc.protocol.variant();
        let Ok(hello) = wire::decode_hello(bytes, variant, self.routers[from].addr) else { return };
        let fix = self.routers[to].speed_aware().then(|| self.gps_fix(to, t));
        // a malformed or out-of-order Hello is dropped like a lost frame
        let _ = self.routers[to].receive_hello(&hello, fix.as_ref(), t);
    }

    fn on_tc_rx(&mut self, to: usize, originator: NodeAddr, msg_seq: u16, bytes: Rc<[u8]>, t: f64) {
        if originator == self.routers[to].addr {
            return;
        }
        let variant = self.sc.protocol.variant();
        let Ok(tc) = wire::decode_tc(&bytes, variant, originator) else { return };
        if self.routers[to].receive_tc(&tc, msg_seq, t) {
            self.send_tc(to, originator, msg_seq, bytes, t);
        }
    }

    fn on_emit(&mut self, k: u32, t: f64) {
        let rate = self.sc.traffic.datagrams_per_second;
        let second = (k / rate) as usize;
        self.emit_times.push(t);
        self.per_second_offered[second] += 1;
        self.counters.offered += 1;
        self.forward(self.src, k, self.sc.timing.ttl, t);
        let next = k + 1;
        if (next as usize) < self.delivered.len() {
            self.schedule(self.t0 + f64::from(next) / f64::from(rate), Event::Emit(next));
        }
    }

    fn forward(&mut self, at: usize, id: u32, ttl: u32, t: f64) {
        let emitted = self.emit_times[id as usize];
        if at == self.dst {
            if self.delivered[id as usize] {
                return;
            }
            self.delivered[id as usize] = true;
            if t - emitted > self.sc.traffic.delay_loss_threshold {
                self.counters.lost_late += 1;
            } else {
                self.counters.delivered += 1;
                let second = (id / self.sc.traffic.datagrams_per_second) as usize;
                self.per_second_delivered[second] += 1;
            }
            return;
        }
        let next = if self.sc.direct_delivery {
            Some(self.routers[self.dst].addr)
        } else {
            self.observe_route(at, t);
            self.last_next_hop[at]
        };
        let Some(next) = next else {
            self.counters.lost_no_route += 1;
            return;
        };
        if ttl == 0 {
            self.counters.lost_ttl += 1;
            return;
        }
        let Some(&to) = self.index.get(&next) else {
            self.counters.lost_no_route += 1;
            return;
        };
        let d = geo::distance(&self.position(at, t), &self.position(to, t));
        let bits = (self.sc.traffic.datagram_bytes + IP_UDP_OVERHEAD) * 8;
        let channel = self.sc.channel;
        let outcome = channel.attempt_delivery(d, bits, self.link_rng(true, at, to));
        if outcome.delivered {
            self.schedule(t + outcome.latency, Event::DataArrive { at: to, id, ttl: ttl - 1 });
        } else {
            self.counters.lost_channel += 1;
        }
    }

    fn finish(self) -> RunResult {
        let dlr_series: Vec<f64> = self
            .per_second_offered
            .iter()
            .zip(&self.per_second_delivered)
            .map(|(&o, &d)| if o == 0 { 0.0 } else { 1.0 - f64::from(d) / f64::from(o) })
            .collect();
        let (goodput_series, mean_goodput) = goodput(&self.per_second_delivered, self.sc.traffic.datagram_bytes);
        RunResult {
            seed: self.seed,
            outage_time: outage_time(&dlr_series, OUTAGE_THRESHOLD),
            dlr_series,
            goodput_series,
            mean_goodput,
            route_changes: self.route_changes,
            counters: self.counters,
            source_hops: self.source_hops,
            source_distance: self.source_distance,
            hello_bytes: self.hello_bytes,
            tc_bytes: self.tc_bytes,
        }
    }
}

/// Times (seconds from traffic start) at which the expected-ETX-best path from
/// source to destination switches between the direct link and a relayed
/// path, judged from true positions and the channel's mean delivery
/// probability. Switches closer than `merge` seconds to the previous kept
/// one are folded into it.
pub fn expected_switch_times(sc: &Scenario, seed: u64, step: f64, merge: f64) -> Vec<f64> {
    let tr = seeded_trajectories(sc, seed);
    let idx = |id| sc.nodes.iter().position(|s| s.id == id).expect("traffic endpoint exists");
    let (s, d) = (idx(sc.traffic.source), idx(sc.traffic.destination));
    let etx = |a: &GeoPosition, b: &GeoPosition| {
        let p = sc.channel.delivery_prob(geo::distance(a, b));
        if p > 0.0 { 1.0 / (p * p) } else { f64::INFINITY }
    };
    let mut out: Vec<f64> = Vec::new();
    let mut prev: Option<bool> = None;
    let steps = (sc.duration / step).floor() as usize;
    for k in 0..=steps {
        let t = k as f64 * step;
        let pos: Vec<GeoPosition> = tr.iter().map(|x| x.position_clamped(t).expect("resolved")).collect();
        let direct = etx(&pos[s], &pos[d]);
        let relayed = (0..pos.len())
            .filter(|&r| r != s && r != d)
            .map(|r| etx(&pos[s], &pos[r]) + etx(&pos[r], &pos[d]))
            .fold(f64::INFINITY, f64::min);
        let is_direct = direct <= relayed;
        if let Some(p) = prev {
            if p != is_direct && out.last().is_none_or(|&last| t - last >= merge) {
                out.push(t);
            }
        }
        prev = Some(is_direct);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outage_examples() {
        assert_eq!(outage_time(&[0.1, 0.3, 0.3, 0.1], 0.2), 2.0);
        assert_eq!(outage_time(&[0.0; 10], 0.2), 0.0);
        assert_eq!(outage_time(&[0.2; 10], 0.2), 0.0);
    }

    #[test]
    fn goodput_examples() {
        let (s, m) = goodput(&[85, 85], 1470);
        assert_eq!(s, vec![999_600.0, 999_600.0]);
        assert_eq!(m, 999_600.0);
        assert_eq!(goodput(&[0, 0], 1470).1, 0.0);
        let (_, half) = goodput(&[85, 0], 1470);
        assert!((half - 499_800.0).abs() < 1e-9);
    }

    #[test]
    fn event_order_is_time_then_insertion() {
        let mut q = BinaryHeap::new();
        q.push(Scheduled { time: 2.0, seq: 1, event: Event::Emit(0) });
        q.push(Scheduled { time: 1.0, seq: 3, event: Event::Emit(1) });
        q.push(Scheduled { time: 1.0, seq: 2, event: Event::Emit(2) });
        let order: Vec<u64> = std::iter::from_fn(|| q.pop().map(|s| s.seq)).collect();
        assert_eq!(order, vec![2, 3, 1]);
    }

    #[test]
    fn campaign_means() {
        let mk = |o| RunResult {
            seed: 0,
            dlr_series: vec![],
            goodput_series: vec![],
            outage_time: o,
            mean_goodput: 0.0,
            route_changes: vec![],
            counters: Counters::default(),
            source_hops: vec![],
            source_distance: vec![],
            hello_bytes: 0,
            tc_bytes: 0,
        };
        assert_eq!(summarize(1, vec![mk(10.0), mk(20.0)]).mean_outage, 15.0);
        assert_eq!(summarize(1, vec![mk(20.0), mk(10.0)]).mean_outage, 15.0);
        assert_eq!(summarize(1, vec![mk(7.0)]).mean_outage, 7.0);
    }
}
