//! Browser bindings for the demo page in `www/`. Every function returns a JSON
//! string so the page can stay plain JavaScript.

use polsr::analysis::{bin_dlr_by_distance, fit_logistic, logistic_loss};
use polsr::channel::ChannelKind;
use polsr::linkmetrics::hop_etx;
use polsr::{preset, Protocol};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(msg: impl ToString) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Speed-weighted hop metric against relative speed for a few weights.
///
/// Returns `{"speeds": [...], "series": [{"beta": b, "etx": [...]}, ...]}`.
#[wasm_bindgen]
pub fn hop_metric_curve(phi: f64, rho: f64, max_speed: f64, betas: &[f64]) -> String {
    if !(phi > 0.0 && phi <= 1.0 && rho > 0.0 && rho <= 1.0) {
        return error("phi and rho must lie in (0, 1]");
    }
    if !(max_speed > 0.0 && max_speed.is_finite()) {
        return error("max speed must be positive");
    }
    let n = 81;
    let speeds: Vec<f64> = (0..n).map(|k| -max_speed + 2.0 * max_speed * k as f64 / (n - 1) as f64).collect();
    let series: Vec<Value> = betas
        .iter()
        .map(|&beta| json!({ "beta": beta, "etx": speeds.iter().map(|&v| hop_etx(phi, rho, v, beta)).collect::<Vec<_>>() }))
        .collect();
    json!({ "speeds": speeds, "series": series }).to_string()
}

/// Flies the two-node shuttle experiment over a logistic channel with the
/// given parameters, bins the per-second loss by distance and refits it.
#[wasm_bindgen]
pub fn shuttle_fit(p1: f64, p2: f64, seed: u64) -> String {
    let mut sc = preset("shuttle2", Protocol::Olsr).expect("preset exists");
    sc.channel.kind = ChannelKind::LogisticDlr { p1, p2 };
    let r = match polsr::run(&sc, seed) {
        Ok(r) => r,
        Err(e) => return error(e),
    };
    let pts: Vec<(f64, f64)> = r.source_distance.iter().copied().zip(r.dlr_series.iter().copied()).collect();
    let bins = bin_dlr_by_distance(&pts, 20.0);
    let fit = fit_logistic(&pts);
    let dmax = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    let curve = |a: f64, b: f64| -> Vec<[f64; 2]> {
        (0..=60).map(|k| dmax * f64::from(k) / 60.0).map(|d| [d, logistic_loss(a, b, d)]).collect()
    };
    json!({
        "bins": bins.iter().map(|b| json!({ "center": b.center, "dlr": b.mean_dlr, "count": b.count })).collect::<Vec<_>>(),
        "fit": { "p1": fit.p1, "p2": fit.p2, "converged": fit.converged },
        "true_curve": curve(p1, p2),
        "fit_curve": curve(fit.p1, fit.p2),
    })
    .to_string()
}

/// One run of the three-node relay scenario: per-second loss, hop count and
/// source-to-ground distance, plus the headline numbers.
#[wasm_bindgen]
pub fn three_node_run(protocol: &str, seed: u64, beta: f64) -> String {
    let protocol: Protocol = match protocol.parse() {
        Ok(p) => p,
        Err(e) => return error(e),
    };
    let mut sc = preset("threenode", protocol).expect("preset exists");
    if protocol == Protocol::Polsr {
        sc.params.beta = beta;
    }
    match polsr::run(&sc, seed) {
        Ok(r) => json!({
            "protocol": protocol.to_string(),
            "hash": sc.hash(),
            "dlr": r.dlr_series,
            "hops": r.source_hops,
            "distance": r.source_distance,
            "outage_s": r.outage_time,
            "goodput_bps": r.mean_goodput,
            "route_changes": r.route_changes.len(),
        })
        .to_string(),
        Err(e) => error(e),
    }
}
