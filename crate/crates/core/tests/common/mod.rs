#![allow(dead_code)]

use std::collections::BTreeMap;

use polsr::linkmetrics::hop_etx;
use polsr::routing::Route;
use polsr::wire::NodeAddr;
use rand::Rng;

pub type Edge = (NodeAddr, NodeAddr, f64);

pub fn addr(i: u32) -> NodeAddr {
    NodeAddr(0x0a00_0000 | i)
}

/// Random directed graph on `n` nodes. Dyadic weights make exact ties common.
pub fn random_graph<R: Rng>(rng: &mut R, n: u32, dyadic: bool) -> Vec<Edge> {
    let density = rng.gen_range(0.2..0.9);
    let mut edges = Vec::new();
    for a in 1..=n {
        for b in 1..=n {
            if a != b && rng.gen_bool(density) {
                let w = if dyadic {
                    f64::from(rng.gen_range(4u32..=16)) / 4.0
                } else {
                    let q = |r: &mut R| f64::from(r.gen_range(1u8..=255)) / 255.0;
                    hop_etx(q(rng), q(rng), rng.gen_range(-15.0..15.0), rng.gen_range(0.0..1.0))
                };
                edges.push((addr(a), addr(b), w));
            }
        }
    }
    edges
}

/// Minimum (metric, hops, first hop) over every simple path, by enumeration.
pub fn brute_force(me: NodeAddr, edges: &[Edge]) -> BTreeMap<NodeAddr, Route> {
    let mut best: BTreeMap<NodeAddr, Route> = BTreeMap::new();
    let mut path = vec![me];
    walk(edges, &mut path, 0.0, &mut best);
    best
}

fn walk(edges: &[Edge], path: &mut Vec<NodeAddr>, metric: f64, best: &mut BTreeMap<NodeAddr, Route>) {
    let here = *path.last().unwrap();
    for &(from, to, w) in edges {
        if from != here || path.contains(&to) || !(w.is_finite() && w > 0.0) {
            continue;
        }
        let m = metric + w;
        path.push(to);
        let cand = Route { next_hop: path[1], metric: m, hops: (path.len() - 1) as u32 };
        let better = best.get(&to).is_none_or(|b| {
            (cand.metric, cand.hops, cand.next_hop) < (b.metric, b.hops, b.next_hop)
        });
        if better {
            best.insert(to, cand);
        }
        walk(edges, path, m, best);
        path.pop();
    }
}
