//! Link-state routing core: neighbour and topology tables, duplicate-suppressed
//! TC flooding, and minimum-ETX route computation.
//!
//! TC messages are flooded by every node exactly once per
//! `(originator, ansn, message sequence)`; there is no MPR selection.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::geo::GeoPosition;
use crate::linkmetrics::{hop_etx, LinkError, LinkState, LqParams};
use crate::wire::{
    dequantize_ratio, dequantize_speed, encode_vtime, quantize_speed_saturating, HelloMessage,
    NeighborBlock, NodeAddr, TcMessage, Variant,
};

/// `a` is newer than `b` under 16-bit serial-number arithmetic.
pub fn seq_newer(a: u16, b: u16) -> bool {
    a != b && a.wrapping_sub(b) < 0x8000
}

fn ratio_byte(r: f64) -> u8 {
    (r.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// One advertised link as last heard in a TC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyEntry {
    pub lq: u8,
    pub nlq: u8,
    pub speed: i16,
}

impl TopologyEntry {
    pub fn metric(&self, beta: f64) -> f64 {
        hop_etx(dequantize_ratio(self.nlq), dequantize_ratio(self.lq), dequantize_speed(self.speed), beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginatorLinks {
    pub ansn: u16,
    pub expires_at: f64,
    pub links: BTreeMap<NodeAddr, TopologyEntry>,
}

/// Advertised links of every known originator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologySet {
    entries: BTreeMap<NodeAddr, OriginatorLinks>,
}

impl TopologySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds a TC into the set. Returns whether anything changed.
    ///
    /// A TC with an older ANSN than the stored one is dropped; an equal ANSN
    /// refreshes the link values and the validity time.
    pub fn absorb_tc(&mut self, tc: &TcMessage, t: f64, validity: f64) -> bool {
        if let Some(stored) = self.entries.get(&tc.originator) {
            if seq_newer(stored.ansn, tc.ansn) {
                return false;
            }
        }
        let links = tc
            .advertised
            .iter()
            .map(|b| (b.addr, TopologyEntry { lq: b.lq, nlq: b.nlq, speed: b.speed }))
            .collect();
        let fresh = OriginatorLinks { ansn: tc.ansn, expires_at: t + validity, links };
        let changed = self.entries.get(&tc.originator).is_none_or(|old| old.links != fresh.links);
        self.entries.insert(tc.originator, fresh);
        changed
    }

    /// Drops originators whose validity has elapsed. Returns whether any were removed.
    pub fn purge(&mut self, t: f64) -> bool {
        let before = self.entries.len();
        self.entries.retain(|_, e| t < e.expires_at);
        before != self.entries.len()
    }

    pub fn originator(&self, addr: NodeAddr) -> Option<&OriginatorLinks> {
        self.entries.get(&addr)
    }

    pub fn get(&self, originator: NodeAddr, neighbor: NodeAddr) -> Option<&TopologyEntry> {
        self.entries.get(&originator)?.links.get(&neighbor)
    }

    /// Non-expired `(originator, neighbour, entry)` triples.
    pub fn edges(&self, t: f64) -> impl Iterator<Item = (NodeAddr, NodeAddr, &TopologyEntry)> + '_ {
        self.entries
            .iter()
            .filter(move |(_, e)| t < e.expires_at)
            .flat_map(|(o, e)| e.links.iter().map(move |(n, entry)| (*o, *n, entry)))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|e| e.links.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flooding duplicate filter keyed by `(originator, ansn, message sequence)`.
#[derive(Debug, Clone, Default)]
pub struct DuplicateSet {
    seen: HashMap<(NodeAddr, u16, u16), f64>,
}

impl DuplicateSet {
    /// Entries older than this are forgotten by [`DuplicateSet::purge`].
    pub const HOLD_TIME: f64 = 30.0;

    pub fn new() -> Self {
        Self::default()
    }

    /// True exactly once per triple.
    pub fn should_forward(&mut self, originator: NodeAddr, ansn: u16, msg_seq: u16, t: f64) -> bool {
        use std::collections::hash_map::Entry;
        match self.seen.entry((originator, ansn, msg_seq)) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(t);
                true
            }
        }
    }

    pub fn contains(&self, originator: NodeAddr, ansn: u16, msg_seq: u16) -> bool {
        self.seen.contains_key(&(originator, ansn, msg_seq))
    }

    pub fn purge(&mut self, t: f64) {
        self.seen.retain(|_, seen_at| t - *seen_at < Self::HOLD_TIME);
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub next_hop: NodeAddr,
    pub metric: f64,
    pub hops: u32,
}

/// One exported routing-table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRow {
    pub time: f64,
    pub node: NodeAddr,
    pub destination: NodeAddr,
    pub next_hop: NodeAddr,
    pub metric: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingTable {
    pub routes: BTreeMap<NodeAddr, Route>,
}

impl RoutingTable {
    pub fn get(&self, dest: NodeAddr) -> Option<&Route> {
        self.routes.get(&dest)
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn rows(&self, time: f64, node: NodeAddr) -> Vec<RouteRow> {
        self.routes
            .iter()
            .map(|(dest, r)| RouteRow { time, node, destination: *dest, next_hop: r.next_hop, metric: r.metric })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Label {
    metric: f64,
    hops: u32,
    first: NodeAddr,
    node: NodeAddr,
}

impl Label {
    fn key(&self) -> (u32, NodeAddr) {
        (self.hops, self.first)
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.metric
            .total_cmp(&other.metric)
            .then_with(|| self.key().cmp(&other.key()))
            .then_with(|| self.node.cmp(&other.node))
    }
}

/// Dijkstra from `me` over directed weighted edges.
///
/// Ties on total metric go to fewer hops, then to the lower next-hop
/// address. Non-finite or non-positive edges are ignored.
pub fn shortest_paths(me: NodeAddr, edges: &[(NodeAddr, NodeAddr, f64)]) -> RoutingTable {
    let mut adj: BTreeMap<NodeAddr, Vec<(NodeAddr, f64)>> = BTreeMap::new();
    for &(from, to, w) in edges {
        if w.is_finite() && w > 0.0 && from != to && to != me {
            adj.entry(from).or_default().push((to, w));
        }
    }
    let mut best: BTreeMap<NodeAddr, Label> = BTreeMap::new();
    let mut done: BTreeSet<NodeAddr> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    for &(to, w) in adj.get(&me).into_iter().flatten() {
        let l = Label { metric: w, hops: 1, first: to, node: to };
        if best.get(&to).is_none_or(|b| l < *b) {
            best.insert(to, l);
            heap.push(Reverse(l));
        }
    }
    while let Some(Reverse(l)) = heap.pop() {
        if !done.insert(l.node) {
            continue;
        }
        for &(to, w) in adj.get(&l.node).into_iter().flatten() {
            if done.contains(&to) {
                continue;
            }
            let cand = Label { metric: l.metric + w, hops: l.hops + 1, first: l.first, node: to };
            if cand.metric.is_finite() && best.get(&to).is_none_or(|b| cand < *b) {
                best.insert(to, cand);
                heap.push(Reverse(cand));
            }
        }
    }
    RoutingTable {
        routes: best
            .into_iter()
            .map(|(dest, l)| (dest, Route { next_hop: l.first, metric: l.metric, hops: l.hops }))
            .collect(),
    }
}

/// Weighted edges of the metric graph seen by `me`: usable local links at
/// full precision, remote links from the topology set as advertised.
pub fn metric_edges<'a>(
    me: NodeAddr,
    neighbors: impl IntoIterator<Item = &'a LinkState>,
    ts: &TopologySet,
    p: &LqParams,
    t: f64,
) -> Vec<(NodeAddr, NodeAddr, f64)> {
    let mut edges: Vec<_> = neighbors
        .into_iter()
        .filter(|l| l.usable(t))
        .map(|l| (me, l.neighbor, l.metric(p.beta)))
        .collect();
    edges.extend(
        ts.edges(t)
            .filter(|(o, n, _)| *o != me && *n != me)
            .map(|(o, n, e)| (o, n, e.metric(p.beta))),
    );
    edges
}

pub fn compute_routes<'a>(
    me: NodeAddr,
    neighbors: impl IntoIterator<Item = &'a LinkState>,
    ts: &TopologySet,
    p: &LqParams,
    t: f64,
) -> RoutingTable {
    shortest_paths(me, &metric_edges(me, neighbors, ts, p, t))
}

/// A TC ready to flood, with the envelope sequence number used for dedup.
#[derive(Debug, Clone, PartialEq)]
pub struct OutgoingTc {
    pub msg: TcMessage,
    pub msg_seq: u16,
}

/// Protocol state of one node.
#[derive(Debug, Clone)]
pub struct Router {
    pub addr: NodeAddr,
    pub variant: Variant,
    pub params: LqParams,
    /// TC validity in seconds.
    pub tc_validity: f64,
    pub links: BTreeMap<NodeAddr, LinkState>,
    pub topology: TopologySet,
    pub dedup: DuplicateSet,
    hello_seq: u16,
    tc_seq: u16,
    ansn: u16,
    advertised: BTreeSet<NodeAddr>,
    table: RoutingTable,
    /// The cached table stays exact until this time (earliest input expiry).
    valid_until: f64,
    dirty: bool,
}

impl Router {
    pub const WILLINGNESS: u8 = 3;

    pub fn new(addr: NodeAddr, variant: Variant, params: LqParams, tc_validity: f64) -> Self {
        Router {
            addr,
            variant,
            params,
            tc_validity,
            links: BTreeMap::new(),
            topology: TopologySet::new(),
            dedup: DuplicateSet::new(),
            hello_seq: 0,
            tc_seq: 0,
            ansn: 0,
            advertised: BTreeSet::new(),
            table: RoutingTable::default(),
            valid_until: f64::INFINITY,
            dirty: false,
        }
    }

    pub fn speed_aware(&self) -> bool {
        self.variant == Variant::Modified
    }

    pub fn ansn(&self) -> u16 {
        self.ansn
    }

    fn block(&self, l: &LinkState) -> NeighborBlock {
        NeighborBlock {
            addr: l.neighbor,
            lq: ratio_byte(l.rho_ema),
            nlq: ratio_byte(l.phi_reported),
            speed: if self.speed_aware() { quantize_speed_saturating(l.v_ema) } else { 0 },
        }
    }

    /// Builds the next Hello. `own_pos` is the node's GPS fix, used only by
    /// the modified variant.
    pub fn generate_hello(&mut self, t: f64, own_pos: Option<GeoPosition>) -> HelloMessage {
        let neighbors = self.links.values().filter(|l| !l.is_expired(t)).map(|l| self.block(l)).collect();
        let seq = self.hello_seq;
        self.hello_seq = self.hello_seq.wrapping_add(1);
        HelloMessage {
            variant: self.variant,
            originator: self.addr,
            seq,
            htime: encode_vtime(self.params.hello_interval),
            willingness: Self::WILLINGNESS,
            position: if self.speed_aware() { own_pos } else { None },
            neighbors,
        }
    }

    /// Builds the next TC, bumping the ANSN when the advertised set changed.
    pub fn generate_tc(&mut self, t: f64) -> OutgoingTc {
        let usable: Vec<&LinkState> = self.links.values().filter(|l| l.usable(t)).collect();
        let set: BTreeSet<NodeAddr> = usable.iter().map(|l| l.neighbor).collect();
        if set != self.advertised {
            self.ansn = self.ansn.wrapping_add(1);
            self.advertised = set;
        }
        let advertised = usable.into_iter().map(|l| self.block(l)).collect();
        let msg_seq = self.tc_seq;
        self.tc_seq = self.tc_seq.wrapping_add(1);
        self.dedup.should_forward(self.addr, self.ansn, msg_seq, t);
        OutgoingTc { msg: TcMessage { variant: self.variant, originator: self.addr, ansn: self.ansn, advertised }, msg_seq }
    }

    pub fn receive_hello(&mut self, hello: &HelloMessage, my_pos: Option<&GeoPosition>, t: f64) -> Result<(), LinkError> {
        let (me, p, aware) = (self.addr, self.params, self.speed_aware());
        let link = self.links.entry(hello.originator).or_insert_with(|| LinkState::new(hello.originator));
        link.on_hello(hello, me, my_pos, t, &p, aware)?;
        self.dirty = true;
        Ok(())
    }

    /// Absorbs a TC and reports whether it should be re-flooded.
    pub fn receive_tc(&mut self, tc: &TcMessage, msg_seq: u16, t: f64) -> bool {
        if tc.originator == self.addr || !self.dedup.should_forward(tc.originator, tc.ansn, msg_seq, t) {
            return false;
        }
        self.topology.absorb_tc(tc, t, self.tc_validity);
        self.dirty = true;
        true
    }

    /// Silence checks, neighbour expiry and table purges.
    pub fn housekeeping(&mut self, t: f64) {
        let p = self.params;
        for l in self.links.values_mut() {
            if l.on_silence_check(t, &p) > 0 {
                self.dirty = true;
            }
        }
        let before = self.links.len();
        self.links.retain(|_, l| !l.is_expired(t));
        if self.links.len() != before || self.topology.purge(t) {
            self.dirty = true;
        }
        self.dedup.purge(t);
    }

    pub fn needs_recompute(&self, t: f64) -> bool {
        self.dirty || t >= self.valid_until
    }

    /// Current routing table, recomputed first if any input changed.
    pub fn routes(&mut self, t: f64) -> &RoutingTable {
        if self.needs_recompute(t) {
            self.table = compute_routes(self.addr, self.links.values(), &self.topology, &self.params, t);
            let links = self.links.values().filter(|l| l.usable(t)).map(|l| l.expires_at);
            let topo = self.topology.edges(t).map(|(o, _, _)| self.topology.originator(o).map_or(f64::INFINITY, |e| e.expires_at));
            self.valid_until = links.chain(topo).fold(f64::INFINITY, f64::min);
            self.dirty = false;
        }
        &self.table
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::dequantize_ratio;

    fn a(n: u32) -> NodeAddr {
        NodeAddr(n)
    }

    fn tc(orig: u32, ansn: u16, nbrs: &[u32]) -> TcMessage {
        TcMessage {
            variant: Variant::Original,
            originator: a(orig),
            ansn,
            advertised: nbrs.iter().map(|&n| NeighborBlock { addr: a(n), lq: 255, nlq: 255, speed: 0 }).collect(),
        }
    }

    fn link(n: u32, phi: f64, rho: f64) -> LinkState {
        let mut l = LinkState::new(a(n));
        l.phi_reported = phi;
        l.rho_ema = rho;
        l.symmetric = true;
        l.expires_at = 100.0;
        l
    }

    #[test]
    fn serial_number_comparison() {
        assert!(seq_newer(1, 0));
        assert!(seq_newer(0, 65535));
        assert!(!seq_newer(65535, 0));
        assert!(!seq_newer(5, 5));
        assert!(seq_newer(0x7fff, 0));
        assert!(!seq_newer(0x8000, 0));
    }

    #[test]
    fn absorb_fresh_stale_and_wrapped() {
        let mut ts = TopologySet::new();
        assert!(ts.absorb_tc(&tc(5, 65535, &[1, 2, 3]), 0.0, 6.0));
        assert_eq!(ts.len(), 3);
        let snapshot = ts.clone();
        assert!(!ts.absorb_tc(&tc(5, 65534, &[9]), 1.0, 6.0));
        assert_eq!(ts, snapshot);
        assert!(ts.absorb_tc(&tc(5, 0, &[4]), 2.0, 6.0));
        assert!(ts.get(a(5), a(4)).is_some());
        assert!(ts.get(a(5), a(1)).is_none());
        assert_eq!(ts.originator(a(5)).unwrap().expires_at, 8.0);
        assert_eq!(ts.edges(8.0).count(), 0);
        assert!(ts.purge(8.0));
        assert!(ts.is_empty());
    }

    #[test]
    fn dedup_forwards_once() {
        let mut d = DuplicateSet::new();
        assert!(d.should_forward(a(1), 3, 10, 0.0));
        assert!(!d.should_forward(a(1), 3, 10, 0.1));
        assert!(d.should_forward(a(1), 4, 11, 0.2));
        d.purge(100.0);
        assert!(d.is_empty());
    }

    #[test]
    fn chain_of_errorless_links() {
        let mut ts = TopologySet::new();
        ts.absorb_tc(&tc(2, 1, &[1, 3]), 0.0, 10.0);
        let links = [link(2, 1.0, 1.0)];
        let rt = compute_routes(a(1), links.iter(), &ts, &LqParams::default(), 1.0);
        let r = rt.get(a(3)).unwrap();
        assert_eq!((r.next_hop, r.metric, r.hops), (a(2), 2.0, 2));
    }

    #[test]
    fn lossy_direct_link_loses_to_two_clean_hops() {
        let edges = [(a(1), a(3), 5.0), (a(1), a(2), 1.0), (a(2), a(3), 1.0)];
        let rt = shortest_paths(a(1), &edges);
        assert_eq!(rt.get(a(3)).unwrap().next_hop, a(2));
        assert_eq!(rt.get(a(3)).unwrap().metric, 2.0);
    }

    #[test]
    fn ties_prefer_fewer_hops_then_lower_next_hop() {
        let edges = [
            (a(1), a(4), 2.0),
            (a(1), a(2), 1.0),
            (a(2), a(4), 1.0),
            (a(1), a(6), 1.0),
            (a(1), a(5), 1.0),
            (a(5), a(7), 1.0),
            (a(6), a(7), 1.0),
        ];
        let rt = shortest_paths(a(1), &edges);
        assert_eq!(rt.get(a(4)).unwrap().next_hop, a(4));
        assert_eq!(rt.get(a(7)).unwrap().next_hop, a(5));
    }

    #[test]
    fn unusable_links_are_skipped() {
        let mut asym = link(2, 1.0, 1.0);
        asym.symmetric = false;
        let dead = link(3, 0.0, 1.0);
        let mut stale = link(4, 1.0, 1.0);
        stale.expires_at = 0.5;
        let rt = compute_routes(a(1), [asym, dead, stale].iter(), &TopologySet::new(), &LqParams::default(), 1.0);
        assert!(rt.is_empty());
    }

    #[test]
    fn router_hello_and_tc_generation() {
        let mut r = Router::new(a(1), Variant::Original, LqParams::default(), 6.0);
        let h = r.generate_hello(0.0, None);
        assert!(h.neighbors.is_empty());
        assert_eq!(h.encoded_len(), 8);

        let mut l = link(2, 0.9, 0.712);
        l.expires_at = 10.0;
        r.links.insert(a(2), l);
        let h = r.generate_hello(1.0, None);
        assert_eq!(h.neighbors[0].lq, 182);
        assert_eq!(dequantize_ratio(h.neighbors[0].nlq), dequantize_ratio(ratio_byte(0.9)));

        let first = r.generate_tc(1.0);
        let second = r.generate_tc(2.0);
        assert_eq!(first.msg.ansn, second.msg.ansn);
        assert_ne!(first.msg_seq, second.msg_seq);
        r.links.remove(&a(2));
        assert_eq!(r.generate_tc(3.0).msg.ansn, first.msg.ansn.wrapping_add(1));
    }

    #[test]
    fn router_ignores_duplicates_and_own_tcs() {
        let mut r = Router::new(a(1), Variant::Original, LqParams::default(), 6.0);
        assert!(r.receive_tc(&tc(2, 1, &[3]), 0, 0.0));
        assert!(!r.receive_tc(&tc(2, 1, &[3]), 0, 0.1));
        assert!(!r.receive_tc(&tc(1, 1, &[3]), 0, 0.1));
        let own = r.generate_tc(0.2);
        assert!(!r.receive_tc(&own.msg, own.msg_seq, 0.3));
    }

    #[test]
    fn routing_table_rows() {
        let rt = shortest_paths(a(1), &[(a(1), a(2), 1.5)]);
        let rows = rt.rows(3.0, a(1));
        assert_eq!(rows, vec![RouteRow { time: 3.0, node: a(1), destination: a(2), next_hop: a(2), metric: 1.5 }]);
    }
}
