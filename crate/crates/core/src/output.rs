//! CSV and JSON artefacts written for runs, campaigns and sweeps.
//!
//! File names derive from the scenario hash and seed, so equal inputs always
//! land in (and overwrite with identical bytes) the same files.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{DistanceBin, SweepRow};
use crate::engine::{CampaignResult, RunResult};
use crate::scenario::Scenario;
use crate::VERSION;

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn fmt_addr(a: Option<crate::wire::NodeAddr>) -> String {
    a.map_or_else(|| "-".to_string(), |a| a.to_string())
}

/// `second,dlr,goodput_bits`.
pub fn write_run_csv<W: Write>(w: W, r: &RunResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["second", "dlr", "goodput_bits"]).map_err(csv_err)?;
    for (s, (dlr, g)) in r.dlr_series.iter().zip(&r.goodput_series).enumerate() {
        out.write_record([s.to_string(), format!("{dlr:.6}"), format!("{g:.0}")]).map_err(csv_err)?;
    }
    out.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct RunCsvRow {
    pub second: u32,
    pub dlr: f64,
    pub goodput_bits: f64,
}

pub fn read_run_csv<R: Read>(r: R) -> io::Result<Vec<RunCsvRow>> {
    csv::Reader::from_reader(r).deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// `time,node,destination,old_next_hop,new_next_hop`; `-` marks no route.
pub fn write_route_changes_csv<W: Write>(w: W, r: &RunResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "node", "destination", "old_next_hop", "new_next_hop"]).map_err(csv_err)?;
    for c in &r.route_changes {
        out.write_record([
            format!("{:.6}", c.time),
            c.node.to_string(),
            c.destination.to_string(),
            fmt_addr(c.old_next_hop),
            fmt_addr(c.new_next_hop),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

/// Per-second source view: `second,distance_m,hops,dlr` (hops empty when unrouted).
pub fn write_trace_csv<W: Write>(w: W, r: &RunResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["second", "distance_m", "hops", "dlr"]).map_err(csv_err)?;
    for (s, dlr) in r.dlr_series.iter().enumerate() {
        let d = r.source_distance.get(s).copied().unwrap_or(f64::NAN);
        let h = r.source_hops.get(s).copied().flatten().map_or(String::new(), |h| h.to_string());
        out.write_record([s.to_string(), format!("{d:.3}"), h, format!("{dlr:.6}")]).map_err(csv_err)?;
    }
    out.flush()
}

/// `config,seed,outage_s,mean_goodput_bps` per run plus a `mean` row.
pub fn write_campaign_csv<W: Write>(w: W, config: &str, c: &CampaignResult) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["config", "seed", "outage_s", "mean_goodput_bps"]).map_err(csv_err)?;
    for r in &c.runs {
        out.write_record([config.to_string(), r.seed.to_string(), format!("{:.1}", r.outage_time), format!("{:.3}", r.mean_goodput)])
            .map_err(csv_err)?;
    }
    out.write_record([config.to_string(), "mean".into(), format!("{:.3}", c.mean_outage), format!("{:.3}", c.mean_goodput)])
        .map_err(csv_err)?;
    out.flush()
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "protocol", "hello_interval", "alpha", "beta", "gamma", "repetitions", "mean_outage_s", "mean_goodput_bps",
        "outage_reduction",
    ])
    .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.protocol.to_string(),
            r.hello_interval.to_string(),
            r.alpha.to_string(),
            r.beta.to_string(),
            r.gamma.to_string(),
            r.repetitions.to_string(),
            format!("{:.3}", r.mean_outage),
            format!("{:.3}", r.mean_goodput),
            format!("{:.4}", r.outage_reduction),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

/// `bin_center_m,mean_dlr,count`.
pub fn write_bins_csv<W: Write>(w: W, bins: &[DistanceBin]) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_center_m", "mean_dlr", "count"]).map_err(csv_err)?;
    for b in bins {
        out.write_record([format!("{}", b.center), format!("{:.6}", b.mean_dlr), b.count.to_string()]).map_err(csv_err)?;
    }
    out.flush()
}

/// Provenance record written next to every set of result files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub protocol: String,
    pub seeds: Vec<u64>,
    pub repetitions: u32,
    pub files: Vec<String>,
    /// Headline numbers, keyed by name.
    pub summary: serde_json::Map<String, serde_json::Value>,
    pub scenario: Scenario,
}

impl Manifest {
    pub fn new(command: &str, sc: &Scenario, seeds: Vec<u64>) -> Self {
        Manifest {
            tool: "polsr".into(),
            version: VERSION.into(),
            command: command.into(),
            scenario_name: sc.name.clone(),
            scenario_hash: sc.hash(),
            protocol: sc.protocol.to_string(),
            repetitions: seeds.len() as u32,
            seeds,
            files: Vec::new(),
            summary: serde_json::Map::new(),
            scenario: sc.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }
}

/// Common stem of a run's files: `<name>-<protocol>-<hash>-s<seed>`.
pub fn run_stem(sc: &Scenario, seed: u64) -> String {
    format!("{}-{}-{}-s{}", sc.name, sc.protocol, sc.hash(), seed)
}

/// Writes the per-second, route-change and trace CSVs plus a manifest for one run.
/// Returns the paths written.
pub fn write_run_artifacts(dir: &Path, sc: &Scenario, r: &RunResult) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = run_stem(sc, r.seed);
    let files = [
        (format!("{stem}.csv"), write_run_csv as fn(fs::File, &RunResult) -> io::Result<()>),
        (format!("{stem}-routes.csv"), write_route_changes_csv),
        (format!("{stem}-trace.csv"), write_trace_csv),
    ];
    let mut written = Vec::new();
    let mut manifest = Manifest::new("run", sc, vec![r.seed]);
    for (name, f) in files {
        let path = dir.join(&name);
        f(fs::File::create(&path)?, r)?;
        manifest.files.push(name);
        written.push(path);
    }
    manifest.summary.insert("outage_s".into(), r.outage_time.into());
    manifest.summary.insert("mean_goodput_bps".into(), r.mean_goodput.into());
    manifest.summary.insert("counters".into(), serde_json::to_value(r.counters).expect("counters serialise"));
    let path = dir.join(format!("{stem}.manifest.json"));
    manifest.write(&path)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Counters, RouteChange};
    use crate::wire::NodeAddr;

    fn result() -> RunResult {
        RunResult {
            seed: 4,
            dlr_series: vec![0.0, 0.5],
            goodput_series: vec![999_600.0, 499_800.0],
            outage_time: 1.0,
            mean_goodput: 749_700.0,
            route_changes: vec![RouteChange {
                time: 1.25,
                node: 2,
                destination: 1,
                old_next_hop: None,
                new_next_hop: Some(NodeAddr(0x0a00_0001)),
            }],
            counters: Counters::default(),
            source_hops: vec![Some(1), None],
            source_distance: vec![10.0, 20.0],
            hello_bytes: 0,
            tc_bytes: 0,
        }
    }

    #[test]
    fn run_csv_round_trips() {
        let mut buf = Vec::new();
        write_run_csv(&mut buf, &result()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("second,dlr,goodput_bits\n0,0.000000,999600\n"));
        let rows = read_run_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].dlr, 0.5);
    }

    #[test]
    fn route_change_csv_marks_missing_routes() {
        let mut buf = Vec::new();
        write_route_changes_csv(&mut buf, &result()).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("1.250000,2,1,-,10.0.0.1"));
    }
}
