//! Scenario runs, the variant matrix, summary tables and figure data.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::collectives::{plan_allreduce_1d, plan_allreduce_2d, plan_alltoall, plan_incast, CollectivePlan, PlanError, PlanExecutor};
use crate::config::{RunConfig, Scenario};
use crate::topology::{NodeKind, Topology, TopologyError};
use crate::transport::cc::CcVariant;
use crate::workload::{build_dlrm, IterationReport, IterationRunner, WorkloadError, WorkloadGraph};
use crate::{SimConfig, SimError, Simulator};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Io(String),
    #[error("run ended with {0} bytes undelivered")]
    Conservation(u64),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub cc: CcVariant,
    pub completion_ns: Option<u64>,
    pub pfc_pause_total: u64,
    pub peak_queue_bytes: u64,
    pub compute_ns: Option<u64>,
    pub exposed_ns: Option<u64>,
    pub error: Option<String>,
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "scenario",
    "cc",
    "completion_ns",
    "pfc_pause_total",
    "peak_queue_bytes",
    "compute_ns",
    "exposed_ns",
    "status",
];

/// Occupancy samples of one switch.
#[derive(Debug, Clone)]
pub struct SwitchTrace {
    pub name: String,
    pub kind: NodeKind,
    pub points: Vec<(u64, u64)>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub row: SummaryRow,
    pub switches: Vec<SwitchTrace>,
    pub iteration: Option<IterationReport>,
    pub injected_bytes: u64,
    pub delivered_bytes: u64,
    pub drops: u64,
}

impl RunResult {
    /// Per-bucket sum over every switch of `kind`.
    pub fn aggregate(&self, kind: NodeKind) -> Vec<(u64, u64)> {
        let mut all: Vec<(u64, u64)> = self
            .switches
            .iter()
            .filter(|s| s.kind == kind)
            .flat_map(|s| s.points.iter().copied())
            .collect();
        all.sort_unstable();
        let mut out: Vec<(u64, u64)> = Vec::new();
        for (t, b) in all {
            match out.last_mut() {
                Some((lt, lb)) if *lt == t => *lb += b,
                _ => out.push((t, b)),
            }
        }
        out
    }
}

pub fn build_plan(cfg: &RunConfig, topo: &Topology) -> Result<CollectivePlan, RunError> {
    let npus: Vec<u32> = (0..topo.num_npus() as u32).collect();
    Ok(match cfg.scenario {
        Scenario::Incast => {
            let senders: Vec<u32> = (1..=cfg.incast_senders).collect();
            plan_incast(&senders, 0, cfg.bytes)?
        }
        Scenario::AllToAll => plan_alltoall(&npus, cfg.bytes, cfg.chunks)?,
        Scenario::AllReduce1d => plan_allreduce_1d(&npus, cfg.bytes, cfg.chunks)?,
        Scenario::AllReduce2d => plan_allreduce_2d(topo.scale_up_groups(), cfg.bytes, cfg.chunks)?,
        Scenario::Dlrm => unreachable!("dlrm runs a workload graph"),
    })
}

pub fn workload_graph(cfg: &RunConfig) -> Result<WorkloadGraph, RunError> {
    match &cfg.workload_file {
        Some(p) => {
            let f = File::open(p).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?;
            Ok(WorkloadGraph::parse(BufReader::new(f))?)
        }
        None => Ok(build_dlrm(&cfg.dlrm, &cfg.compute)),
    }
}

/// One simulation of `cfg` under `cc`. With `out`, per-run CSVs go to
/// `out/<label>_<cc>/`.
pub fn run_one(cfg: &RunConfig, cc: CcVariant, label: &str, out: Option<&Path>) -> Result<RunResult, RunError> {
    let topo = Arc::new(cfg.topology.build()?);
    let sim_cfg = SimConfig {
        cc,
        cc_params: cfg.cc_params.clone(),
        fabric: cfg.fabric.clone(),
        seed: cfg.seed,
        record_flows: out.is_some(),
    };
    let mut sim = Simulator::new(topo.clone(), sim_cfg);
    let (completion, iteration) = if cfg.scenario == Scenario::Dlrm {
        let graph = workload_graph(cfg)?;
        let mut app = IterationRunner::new(&graph, cfg.dlrm_mode, cfg.chunks)?;
        let t = sim.run(&mut app)?;
        (t.as_ns(), app.report())
    } else {
        let mut app = PlanExecutor::new(build_plan(cfg, &topo)?);
        let t = sim.run(&mut app)?;
        (app.run.completion_ns().unwrap_or(t.as_ns()), None)
    };
    let c = sim.counters();
    if c.injected_bytes != c.delivered_bytes {
        return Err(RunError::Conservation(c.injected_bytes - c.delivered_bytes));
    }
    let row = SummaryRow {
        scenario: label.to_string(),
        cc,
        completion_ns: Some(completion),
        pfc_pause_total: sim.total_pause_sent(),
        peak_queue_bytes: sim.peak_queue(None),
        compute_ns: iteration.as_ref().map(|r| r.total_compute_ns),
        exposed_ns: iteration.as_ref().map(|r| r.exposed_comm_ns),
        error: None,
    };
    if let Some(dir) = out {
        let dir = dir.join(format!("{label}_{}", cc.name()));
        fs::create_dir_all(&dir)?;
        sim.write_queue_timeline(BufWriter::new(File::create(dir.join("queue_timeline.csv"))?))?;
        sim.write_pfc_counts(BufWriter::new(File::create(dir.join("pfc_counts.csv"))?))?;
        sim.write_flows(BufWriter::new(File::create(dir.join("flows.csv"))?))?;
        if let Some(r) = &iteration {
            let mut w = BufWriter::new(File::create(dir.join("iteration.csv"))?);
            r.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    let switches = sim
        .switch_nodes()
        .map(|n| {
            let id = topo.node(n);
            SwitchTrace {
                name: id.to_string(),
                kind: id.kind,
                points: sim.node_state(n).timeline.points.clone(),
            }
        })
        .collect();
    Ok(RunResult {
        row,
        switches,
        iteration,
        injected_bytes: c.injected_bytes,
        delivered_bytes: c.delivered_bytes,
        drops: sim.total_drops(),
    })
}

/// Every configured variant as an isolated run; a failing run becomes an
/// error row and the others still complete. Writes `summary.csv` under
/// `out` when given.
pub fn run_matrix(cfg: &RunConfig, label: &str, out: Option<&Path>) -> Result<Vec<Result<RunResult, SummaryRow>>, RunError> {
    let results: Vec<Result<RunResult, SummaryRow>> = cfg
        .variants
        .par_iter()
        .map(|&cc| {
            run_one(cfg, cc, label, out).map_err(|e| SummaryRow {
                scenario: label.to_string(),
                cc,
                completion_ns: None,
                pfc_pause_total: 0,
                peak_queue_bytes: 0,
                compute_ns: None,
                exposed_ns: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let rows: Vec<&SummaryRow> = results.iter().map(|r| r.as_ref().map_or_else(|e| e, |r| &r.row)).collect();
        write_summary(File::create(dir.join("summary.csv"))?, rows)?;
    }
    Ok(results)
}

fn opt(v: Option<u64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn write_summary<'a, W: Write>(w: W, rows: impl IntoIterator<Item = &'a SummaryRow>) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.cc.name().to_string(),
            opt(r.completion_ns),
            r.pfc_pause_total.to_string(),
            r.peak_queue_bytes.to_string(),
            opt(r.compute_ns),
            opt(r.exposed_ns),
            r.error.as_ref().map_or("ok".to_string(), |e| format!("error: {e}")),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Scenarios each figure draws on.
pub fn figure_presets(figure: u32) -> Option<&'static [&'static str]> {
    Some(match figure {
        3 => &["incast"],
        4 => &["ss_alltoall_8", "ss_allreduce_8", "ss_alltoall_128", "ss_allreduce_128"],
        5 | 6 => &["clos_alltoall"],
        7 | 8 => &["clos_alltoall", "clos_allreduce_1d", "clos_allreduce_2d"],
        10 => &["dlrm_1d", "dlrm_2d"],
        _ => return None,
    })
}

pub const FIGURES: [u32; 7] = [3, 4, 5, 6, 7, 8, 10];

/// Tidy CSV for one figure. Variants that have no successful run in
/// `runs` are listed in a leading `#` comment.
pub fn emit_figure_data(figure: u32, runs: &[RunResult]) -> Option<String> {
    let presets = figure_presets(figure)?;
    let mut s = String::new();
    if !runs.is_empty() {
        let mut missing = Vec::new();
        for p in presets {
            for v in CcVariant::ALL {
                if !runs.iter().any(|r| r.row.scenario == *p && r.row.cc == v) {
                    missing.push(format!("{p}/{}", v.name()));
                }
            }
        }
        if !missing.is_empty() {
            let _ = writeln!(s, "# missing: {}", missing.join(" "));
        }
    }
    let relevant = runs.iter().filter(|r| presets.contains(&r.row.scenario.as_str()));
    match figure {
        3..=6 => {
            let kinds: &[NodeKind] = match figure {
                5 => &[NodeKind::Tor],
                6 => &[NodeKind::Spine],
                _ => &[NodeKind::Tor, NodeKind::Spine, NodeKind::ScaleUp],
            };
            s.push_str("scenario,cc,switch_id,time_ns,total_queue_bytes\n");
            for r in relevant {
                for sw in r.switches.iter().filter(|sw| kinds.contains(&sw.kind)) {
                    for (t, b) in &sw.points {
                        let _ = writeln!(s, "{},{},{},{t},{b}", r.row.scenario, r.row.cc.name(), sw.name);
                    }
                }
            }
        }
        7 => {
            s.push_str("scenario,cc,completion_ns\n");
            for r in relevant {
                let _ = writeln!(s, "{},{},{}", r.row.scenario, r.row.cc.name(), opt(r.row.completion_ns));
            }
        }
        8 => {
            s.push_str("scenario,cc,pfc_pause_total\n");
            for r in relevant {
                let _ = writeln!(s, "{},{},{}", r.row.scenario, r.row.cc.name(), r.row.pfc_pause_total);
            }
        }
        10 => {
            s.push_str("scenario,cc,iteration_ns,compute_ns,exposed_ns\n");
            for r in relevant {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.row.scenario,
                    r.row.cc.name(),
                    opt(r.row.completion_ns),
                    opt(r.row.compute_ns),
                    opt(r.row.exposed_ns)
                );
            }
        }
        _ => unreachable!(),
    }
    Some(s)
}

/// Number of excursions above `high * max` that fall back below
/// `low * max` (or end the trace) in between.
pub fn count_peaks(points: &[(u64, u64)], high: f64, low: f64) -> usize {
    let max = points.iter().map(|p| p.1).max().unwrap_or(0) as f64;
    if max == 0.0 {
        return 0;
    }
    let mut peaks = 0;
    let mut above = false;
    for &(_, b) in points {
        let b = b as f64;
        if !above && b >= high * max {
            above = true;
            peaks += 1;
        } else if above && b <= low * max {
            above = false;
        }
    }
    peaks
}

/// Largest ratio between the fullest and the emptiest of `traces` in one
/// sampling bucket, considering only buckets where the fullest holds at
/// least `floor` bytes. Switches absent from a bucket count as empty.
pub fn max_instant_imbalance(traces: &[&SwitchTrace], floor: u64) -> f64 {
    let mut all: Vec<(u64, usize, u64)> = traces
        .iter()
        .enumerate()
        .flat_map(|(i, t)| t.points.iter().map(move |&(time, b)| (time, i, b)))
        .collect();
    all.sort_unstable();
    let mut best: f64 = 1.0;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let mut vals = vec![0u64; traces.len()];
        while i < all.len() && all[i].0 == t {
            vals[all[i].1] = all[i].2;
            i += 1;
        }
        let hi = *vals.iter().max().unwrap();
        let lo = *vals.iter().min().unwrap();
        if hi >= floor {
            best = best.max(if lo == 0 { f64::INFINITY } else { hi as f64 / lo as f64 });
        }
    }
    best
}
