use std::fmt;
use std::fs;
use std::path::Path;

use polsr::analysis::{relative_reduction, sweep_table, SweepEntry, SweepRow};
use polsr::output::{run_stem, write_campaign_csv, write_run_artifacts, write_sweep_csv, Manifest};
use polsr::scenario::{ScenarioError, PRESET_NAMES};
use polsr::{preset, run_campaign, Protocol, Scenario, VERSION};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Resolves a preset name or a scenario file, applying a protocol override.
fn load(arg: &str, protocol: Option<Protocol>) -> Result<Scenario, CliError> {
    let sc = if PRESET_NAMES.contains(&arg) {
        preset(arg, protocol.unwrap_or(Protocol::Olsr))?
    } else {
        let path = Path::new(arg);
        if !path.exists() && !arg.contains(['.', '/', '\\']) {
            return Err(ScenarioError::UnknownPreset(arg.into()).into());
        }
        let sc = Scenario::load(path)?;
        match protocol {
            Some(p) => sc.with_protocol(p),
            None => sc,
        }
    };
    sc.validate()?;
    Ok(sc)
}

fn header(sc: &Scenario, seeds: &str) {
    println!(
        "polsr {VERSION} scenario {} protocol {} hash {} seeds {seeds}",
        sc.name,
        sc.protocol,
        sc.hash()
    );
}

pub fn validate(file: &Path) -> Result<(), CliError> {
    let sc = Scenario::load(file)?;
    sc.validate()?;
    println!("{}", sc.to_json());
    println!("OK {} (hash {}, polsr {VERSION})", sc.name, sc.hash());
    Ok(())
}

pub fn run(arg: &str, protocol: Option<Protocol>, seed: Option<u64>, reps: Option<u32>, out: &Path) -> Result<(), CliError> {
    let sc = load(arg, protocol)?;
    let seed = seed.unwrap_or(sc.base_seed);
    let Some(reps) = reps else {
        header(&sc, &seed.to_string());
        let r = polsr::run(&sc, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
        let files = write_run_artifacts(out, &sc, &r)?;
        println!("outage_time_s {:.1}", r.outage_time);
        println!("mean_goodput_bps {:.0}", r.mean_goodput);
        for f in files {
            println!("wrote {}", f.display());
        }
        return Ok(());
    };
    if reps == 0 {
        return Err(CliError::Validation("--reps must be at least 1".into()));
    }
    header(&sc, &format!("{seed}..{}", seed + u64::from(reps) - 1));
    let c = run_campaign(&sc, reps, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in &c.runs {
        write_run_artifacts(out, &sc, r)?;
        println!("seed {} outage_time_s {:.1} mean_goodput_bps {:.0}", r.seed, r.outage_time, r.mean_goodput);
    }
    let stem = format!("{}-campaign-n{reps}", run_stem(&sc, seed));
    let csv = out.join(format!("{stem}.csv"));
    write_campaign_csv(fs::File::create(&csv)?, &sc.protocol.to_string(), &c)?;
    let mut m = Manifest::new("run", &sc, c.runs.iter().map(|r| r.seed).collect());
    m.files.push(format!("{stem}.csv"));
    m.summary.insert("mean_outage_s".into(), c.mean_outage.into());
    m.summary.insert("mean_goodput_bps".into(), c.mean_goodput.into());
    m.write(&out.join(format!("{stem}.manifest.json")))?;
    println!("mean_outage_time_s {:.1}", c.mean_outage);
    println!("mean_goodput_bps {:.0}", c.mean_goodput);
    println!("wrote {}", csv.display());
    Ok(())
}

pub struct Grid {
    pub hi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub protocols: Vec<Protocol>,
}

impl Grid {
    /// `(protocol, hi, alpha, beta, gamma)` for every configuration. OLSR
    /// ignores the speed weighting, so it gets one configuration per
    /// `(hi, alpha)` with beta and gamma reported as zero.
    fn configs(&self) -> Vec<(Protocol, f64, f64, f64, f64)> {
        let mut out = Vec::new();
        for &p in &self.protocols {
            for &hi in &self.hi {
                for &alpha in &self.alpha {
                    if p == Protocol::Olsr {
                        out.push((p, hi, alpha, 0.0, 0.0));
                        continue;
                    }
                    for &beta in &self.beta {
                        for &gamma in &self.gamma {
                            out.push((p, hi, alpha, beta, gamma));
                        }
                    }
                }
            }
        }
        out
    }
}

fn unmatched_rows(entries: &[SweepEntry]) -> Vec<SweepRow> {
    entries
        .iter()
        .map(|e| {
            let base = entries
                .iter()
                .find(|b| b.protocol == Protocol::Olsr && b.hello_interval == e.hello_interval && b.alpha == e.alpha);
            SweepRow {
                protocol: e.protocol,
                hello_interval: e.hello_interval,
                alpha: e.alpha,
                beta: e.beta,
                gamma: e.gamma,
                repetitions: e.repetitions,
                mean_outage: e.mean_outage,
                mean_goodput: e.mean_goodput,
                outage_reduction: base.map_or(f64::NAN, |b| relative_reduction(e.mean_outage, b.mean_outage)),
            }
        })
        .collect()
}

pub fn sweep(arg: &str, grid: &Grid, reps: Option<u32>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    if grid.protocols.is_empty() {
        return Err(CliError::Validation("--protocols must name at least one protocol".into()));
    }
    let mut bases = Vec::new();
    for &p in &grid.protocols {
        bases.push((p, load(arg, Some(p))?));
    }
    let base = &bases[0].1;
    let reps = reps.unwrap_or(base.repetitions);
    let seed = seed.unwrap_or(base.base_seed);
    if reps == 0 {
        return Err(CliError::Validation("--reps must be at least 1".into()));
    }
    header(base, &format!("{seed}..{}", seed + u64::from(reps) - 1));

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (p, hi, alpha, beta, gamma) in grid.configs() {
        let mut sc = bases.iter().find(|b| b.0 == p).expect("protocol loaded").1.clone();
        sc.params.hello_interval = hi;
        sc.params.alpha = alpha;
        if p == Protocol::Polsr {
            sc.params.beta = beta;
            sc.params.gamma = gamma;
        }
        let label = format!("{p} hi={hi} alpha={alpha} beta={beta} gamma={gamma}");
        match run_campaign(&sc, reps, seed) {
            Ok(c) => {
                println!("{label}: outage_s {:.1} goodput_bps {:.0}", c.mean_outage, c.mean_goodput);
                entries.push(SweepEntry::from_campaign(p, hi, alpha, beta, gamma, &c));
            }
            Err(e) => {
                eprintln!("{label}: failed: {e}");
                failures.push(format!("{label}: {e}"));
            }
        }
    }

    fs::create_dir_all(out)?;
    let rows = sweep_table(&entries).unwrap_or_else(|_| unmatched_rows(&entries));
    let stem = format!("{}-{}-sweep-s{seed}-n{reps}", base.name, base.hash());
    let csv = out.join(format!("{stem}.csv"));
    write_sweep_csv(fs::File::create(&csv)?, &rows)?;
    let mut m = Manifest::new("sweep", base, (seed..seed + u64::from(reps)).collect());
    m.protocol = grid.protocols.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
    m.files.push(format!("{stem}.csv"));
    m.summary.insert("configurations".into(), grid.configs().len().into());
    m.summary.insert("completed".into(), entries.len().into());
    m.summary.insert("failures".into(), failures.clone().into());
    m.write(&out.join(format!("{stem}.manifest.json")))?;
    println!("wrote {}", csv.display());

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} configurations failed; completed rows kept in {}",
            failures.len(),
            grid.configs().len(),
            csv.display()
        )))
    }
}

pub fn presets_list() -> Result<(), CliError> {
    for name in PRESET_NAMES {
        let sc = preset(name, Protocol::Olsr)?;
        println!("{name:<10} {} nodes, {} s", sc.nodes.len(), sc.duration);
    }
    Ok(())
}

pub fn presets_show(name: &str, protocol: Protocol) -> Result<(), CliError> {
    println!("{}", preset(name, protocol)?.to_json());
    Ok(())
}
