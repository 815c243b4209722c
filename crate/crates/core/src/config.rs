//! `key = value` run configuration.
//!
//! Quantities take unit suffixes (`200Gbps`, `32MB`, `500ns`). `#` starts a
//! comment. Unknown keys are errors, and every error carries its line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::fabric::{FabricConfig, PfcAccounting, TimelineMode};
use crate::topology::{ClosParams, LinkSpec, Topology, TopologyError};
use crate::transport::cc::{CcParams, CcVariant};
use crate::units::{format_bytes, format_duration, parse_bytes, parse_duration_ns, Bandwidth};
use crate::workload::{AllReduceMode, ComputeProfile, DlrmParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("line {line}: {source}")]
    Topology { line: usize, source: TopologyError },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Incast,
    AllToAll,
    AllReduce1d,
    AllReduce2d,
    Dlrm,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Incast => "incast",
            Scenario::AllToAll => "alltoall",
            Scenario::AllReduce1d => "allreduce_1d",
            Scenario::AllReduce2d => "allreduce_2d",
            Scenario::Dlrm => "dlrm",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "incast" => Ok(Scenario::Incast),
            "alltoall" | "all_to_all" => Ok(Scenario::AllToAll),
            "allreduce_1d" | "allreduce" => Ok(Scenario::AllReduce1d),
            "allreduce_2d" => Ok(Scenario::AllReduce2d),
            "dlrm" => Ok(Scenario::Dlrm),
            other => Err(format!(
                "unknown scenario `{other}` (expected incast, alltoall, allreduce_1d, allreduce_2d, dlrm)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub enum TopologySpec {
    SingleSwitch { npus: usize, link: LinkSpec, buffer: u64 },
    Clos(ClosParams),
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology, TopologyError> {
        match self {
            TopologySpec::SingleSwitch { npus, link, buffer } => Topology::build_single_switch(*npus, *link, *buffer),
            TopologySpec::Clos(p) => Topology::build_clos(p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub topology: TopologySpec,
    pub variants: Vec<CcVariant>,
    pub cc_params: CcParams,
    pub fabric: FabricConfig,
    /// Collective size; bytes per sender for incast.
    pub bytes: u64,
    pub chunks: u32,
    pub incast_senders: u32,
    pub dlrm: DlrmParams,
    pub compute: ComputeProfile,
    pub dlrm_mode: AllReduceMode,
    /// Layer table replacing the built-in DLRM graph.
    pub workload_file: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    /// Platform defaults for `scenario`: the 128-NPU CLOS, untuned
    /// controller parameters, 128 MB collectives in 4 chunks.
    pub fn new(scenario: Scenario) -> Self {
        RunConfig {
            scenario,
            topology: TopologySpec::Clos(ClosParams::default()),
            variants: CcVariant::ALL.to_vec(),
            cc_params: CcParams::default(),
            fabric: FabricConfig::default(),
            bytes: 128_000_000,
            chunks: 4,
            incast_senders: 7,
            dlrm: DlrmParams::default(),
            compute: ComputeProfile::default(),
            dlrm_mode: AllReduceMode::OneD,
            workload_file: None,
            seed: 1,
            out: PathBuf::from("out"),
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "incast",
            "ss_alltoall_8",
            "ss_allreduce_8",
            "ss_alltoall_128",
            "ss_allreduce_128",
            "clos_alltoall",
            "clos_allreduce_1d",
            "clos_allreduce_2d",
            "dlrm_1d",
            "dlrm_2d",
        ]
    }

    /// The experiment setups, with the controller tuning each one uses.
    pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
        let star = |npus| TopologySpec::SingleSwitch {
            npus,
            link: ClosParams::default().nic_link,
            buffer: 32_000_000,
        };
        let mut c = match name {
            "incast" => {
                let mut c = RunConfig::new(Scenario::Incast);
                c.topology = star(8);
                c.bytes = 10_000_000;
                c.chunks = 1;
                c
            }
            "ss_alltoall_8" | "ss_allreduce_8" | "ss_alltoall_128" | "ss_allreduce_128" => {
                let big = name.ends_with("128");
                let mut c = RunConfig::new(if name.contains("alltoall") {
                    Scenario::AllToAll
                } else {
                    Scenario::AllReduce1d
                });
                c.topology = star(if big { 128 } else { 8 });
                c.bytes = if big { 128_000_000 } else { 10_000_000 };
                c
            }
            "clos_alltoall" => RunConfig::new(Scenario::AllToAll),
            "clos_allreduce_1d" => RunConfig::new(Scenario::AllReduce1d),
            "clos_allreduce_2d" => RunConfig::new(Scenario::AllReduce2d),
            "dlrm_1d" | "dlrm_2d" => {
                let mut c = RunConfig::new(Scenario::Dlrm);
                c.dlrm_mode = if name == "dlrm_2d" {
                    AllReduceMode::TwoD
                } else {
                    AllReduceMode::OneD
                };
                c
            }
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        c.tune(name);
        c.out = PathBuf::from("out").join(name);
        Ok(c)
    }

    /// Controller parameters that keep each variant stable on these
    /// fabrics; the untuned defaults react too slowly at 200 Gbps.
    fn tune(&mut self, name: &str) {
        let p = &mut self.cc_params;
        p.dcqcn.cnp_interval_ns = 4_000;
        p.dcqcn.alpha_timer_ns = 5_000;
        p.dcqcn.fast_recovery_rounds = 1;
        self.fabric.ecn.kmin = 40_000;
        self.fabric.ecn.kmax = 160_000;
        p.timely.segment_bytes = 1_000;
        p.timely.t_low_ns = 5_000;
        p.timely.t_high_ns = 40_000;
        p.timely.additive_step = 1e9;
        p.timely.min_rtt_ns = 2_000;
        p.hpcc.w_ai = 2_000.0;
        let _ = name;
    }

    pub fn npus(&self) -> usize {
        match &self.topology {
            TopologySpec::SingleSwitch { npus, .. } => *npus,
            TopologySpec::Clos(p) => p.racks * p.servers_per_rack * p.npus_per_server,
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::new(Scenario::AllToAll);
        let mut seen: Vec<String> = Vec::new();
        let mut scenario = None;
        let mut topo_kind: Option<String> = None;
        let mut star_npus = 8usize;
        let mut clos = ClosParams::default();
        let mut topo_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax { line });
            };
            let key = k.trim().to_ascii_lowercase();
            let v = v.trim();
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate { line, key });
            }
            seen.push(key.clone());
            let bad = |msg: String| ConfigError::BadValue {
                line,
                key: key.clone(),
                msg,
            };
            let bytes = |v: &str| parse_bytes(v).map_err(|e| bad(e.to_string()));
            let dur = |v: &str| parse_duration_ns(v).map_err(|e| bad(e.to_string()));
            let bw = |v: &str| v.parse::<Bandwidth>().map_err(|e| bad(e.to_string()));
            let f64v = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
            let u64v = |v: &str| v.replace('_', "").parse::<u64>().map_err(|e| bad(e.to_string()));
            let boolv = |v: &str| match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(bad(format!("expected true or false, got `{v}`"))),
            };
            let bits = |v: &str| bw(v).map(|b| b.as_bps() as f64);
            if key.starts_with("topology")
                || matches!(
                    key.as_str(),
                    "npus" | "racks" | "servers_per_rack" | "npus_per_server" | "spines" | "allow_oversubscription"
                )
                || key.ends_with("_bw")
                || key.ends_with("_latency")
                || key == "buffer"
            {
                topo_line = line;
            }
            match key.as_str() {
                "scenario" => scenario = Some(v.parse::<Scenario>().map_err(bad)?),
                "topology" => match v.to_ascii_lowercase().as_str() {
                    "clos" | "single_switch" => topo_kind = Some(v.to_ascii_lowercase()),
                    _ => return Err(bad(format!("expected clos or single_switch, got `{v}`"))),
                },
                "npus" => star_npus = u64v(v)? as usize,
                "racks" => clos.racks = u64v(v)? as usize,
                "servers_per_rack" => clos.servers_per_rack = u64v(v)? as usize,
                "npus_per_server" => clos.npus_per_server = u64v(v)? as usize,
                "spines" => clos.spines = u64v(v)? as usize,
                "nic_bw" => clos.nic_link.bandwidth = bw(v)?,
                "nic_latency" => clos.nic_link.latency_ns = dur(v)?,
                "uplink_bw" => clos.uplink.bandwidth = bw(v)?,
                "uplink_latency" => clos.uplink.latency_ns = dur(v)?,
                "scale_up_bw" => clos.scale_up.bandwidth = bw(v)?,
                "scale_up_latency" => clos.scale_up.latency_ns = dur(v)?,
                "buffer" => clos.buffer_bytes = bytes(v)?,
                "allow_oversubscription" => clos.allow_oversubscription = boolv(v)?,
                "cc" => {
                    cfg.variants = if v.eq_ignore_ascii_case("all") {
                        CcVariant::ALL.to_vec()
                    } else {
                        parse_variants(v).map_err(bad)?
                    }
                }
                "bytes" => cfg.bytes = bytes(v)?,
                "chunks" => cfg.chunks = u64v(v)? as u32,
                "incast.senders" => cfg.incast_senders = u64v(v)? as u32,
                "seed" => cfg.seed = u64v(v)?,
                "out" => cfg.out = PathBuf::from(v),
                "mtu" => cfg.fabric.mtu = bytes(v)? as u32,
                "scale_up_mtu" => cfg.fabric.scale_up_mtu = bytes(v)? as u32,
                "header" => cfg.fabric.header = bytes(v)? as u32,
                "ack_bytes" => cfg.fabric.ack_bytes = bytes(v)? as u32,
                "ack_per_packet" => cfg.fabric.ack_per_packet = boolv(v)?,
                "timeline" => {
                    cfg.fabric.timeline = match v.to_ascii_lowercase().as_str() {
                        "off" => TimelineMode::Off,
                        "raw" => TimelineMode::Raw,
                        _ => TimelineMode::Coalesced(dur(v)?.max(1)),
                    }
                }
                "ecn.kmin" => cfg.fabric.ecn.kmin = bytes(v)?,
                "ecn.kmax" => cfg.fabric.ecn.kmax = bytes(v)?,
                "ecn.pmax" => cfg.fabric.ecn.pmax = f64v(v)?,
                "ecn.reference_bw" => cfg.fabric.ecn.reference = bw(v)?,
                "pfc.enabled" => cfg.fabric.pfc.enabled = boolv(v)?,
                "pfc.accounting" => {
                    cfg.fabric.pfc.accounting = match v.to_ascii_lowercase().as_str() {
                        "shared" => PfcAccounting::Shared,
                        "per_ingress" => PfcAccounting::PerIngress,
                        _ => return Err(bad(format!("expected shared or per_ingress, got `{v}`"))),
                    }
                }
                "pfc.xoff" => cfg.fabric.pfc.xoff = bytes(v)?,
                "pfc.xon" => cfg.fabric.pfc.xon = bytes(v)?,
                "pfc.headroom" => cfg.fabric.pfc.headroom = bytes(v)?,
                "pfc.nic_rx_rate" => {
                    cfg.fabric.pfc.nic_rx_rate = if v.eq_ignore_ascii_case("none") { None } else { Some(bw(v)?) }
                }
                "pfc.nic_xoff" => cfg.fabric.pfc.nic_xoff = bytes(v)?,
                "pfc.nic_xon" => cfg.fabric.pfc.nic_xon = bytes(v)?,
                "dcqcn.g" => cfg.cc_params.dcqcn.g = f64v(v)?,
                "dcqcn.rate_ai" => cfg.cc_params.dcqcn.rate_ai = bits(v)?,
                "dcqcn.rate_hai" => cfg.cc_params.dcqcn.rate_hai = bits(v)?,
                "dcqcn.alpha_timer" => cfg.cc_params.dcqcn.alpha_timer_ns = dur(v)?,
                "dcqcn.cnp_interval" => cfg.cc_params.dcqcn.cnp_interval_ns = dur(v)?,
                "dcqcn.fast_recovery_rounds" => cfg.cc_params.dcqcn.fast_recovery_rounds = u64v(v)? as u32,
                "dcqcn.initial_alpha" => cfg.cc_params.dcqcn.initial_alpha = f64v(v)?,
                "dcqcn.min_rate" => cfg.cc_params.dcqcn.min_rate = bits(v)?,
                "dctcp.g" => cfg.cc_params.dctcp.g = f64v(v)?,
                "dctcp.initial_alpha" => cfg.cc_params.dctcp.initial_alpha = f64v(v)?,
                "timely.t_low" => cfg.cc_params.timely.t_low_ns = dur(v)?,
                "timely.t_high" => cfg.cc_params.timely.t_high_ns = dur(v)?,
                "timely.additive_step" => cfg.cc_params.timely.additive_step = bits(v)?,
                "timely.beta" => cfg.cc_params.timely.beta = f64v(v)?,
                "timely.hai_factor" => cfg.cc_params.timely.hai_factor = u64v(v)? as u32,
                "timely.ewma_alpha" => cfg.cc_params.timely.ewma_alpha = f64v(v)?,
                "timely.min_rtt" => cfg.cc_params.timely.min_rtt_ns = dur(v)?,
                "timely.min_rate" => cfg.cc_params.timely.min_rate = bits(v)?,
                "timely.segment" => cfg.cc_params.timely.segment_bytes = bytes(v)?,
                "hpcc.eta" => cfg.cc_params.hpcc.eta = f64v(v)?,
                "hpcc.max_stage" => cfg.cc_params.hpcc.max_stage = u64v(v)? as u32,
                "hpcc.w_ai" => cfg.cc_params.hpcc.w_ai = bytes(v)? as f64,
                "pint.feedback_period" => cfg.cc_params.pint.feedback_period = u64v(v)? as u32,
                "dlrm.mode" => {
                    cfg.dlrm_mode = match v.to_ascii_lowercase().as_str() {
                        "1d" => AllReduceMode::OneD,
                        "2d" => AllReduceMode::TwoD,
                        _ => return Err(bad(format!("expected 1d or 2d, got `{v}`"))),
                    }
                }
                "dlrm.allreduce_bytes" => cfg.dlrm.allreduce_bytes = bytes(v)?,
                "dlrm.alltoall_fwd_bytes" => cfg.dlrm.alltoall_fwd_bytes = bytes(v)?,
                "dlrm.alltoall_bwd_bytes" => cfg.dlrm.alltoall_bwd_bytes = bytes(v)?,
                "dlrm.workload" => {
                    cfg.workload_file = if v.eq_ignore_ascii_case("none") { None } else { Some(PathBuf::from(v)) }
                }
                "dlrm.embedding_fwd" => cfg.compute.embedding.0 = dur(v)?,
                "dlrm.embedding_bwd" => cfg.compute.embedding.1 = dur(v)?,
                "dlrm.bottom_mlp_fwd" => cfg.compute.bottom_mlp.0 = dur(v)?,
                "dlrm.bottom_mlp_bwd" => cfg.compute.bottom_mlp.1 = dur(v)?,
                "dlrm.interaction_fwd" => cfg.compute.interaction.0 = dur(v)?,
                "dlrm.interaction_bwd" => cfg.compute.interaction.1 = dur(v)?,
                "dlrm.top_mlp_fwd" => cfg.compute.top_mlp.0 = dur(v)?,
                "dlrm.top_mlp_bwd" => cfg.compute.top_mlp.1 = dur(v)?,
                _ => return Err(ConfigError::UnknownKey { line, key }),
            }
        }
        cfg.scenario = scenario.ok_or(ConfigError::Missing("scenario"))?;
        cfg.topology = match topo_kind.as_deref() {
            Some("single_switch") => TopologySpec::SingleSwitch {
                npus: star_npus,
                link: clos.nic_link,
                buffer: clos.buffer_bytes,
            },
            _ => TopologySpec::Clos(clos),
        };
        if let Err(source) = cfg.topology.build() {
            return Err(ConfigError::Topology { line: topo_line, source });
        }
        if cfg.chunks == 0 {
            return Err(ConfigError::BadValue {
                line: 0,
                key: "chunks".into(),
                msg: "must be at least 1".into(),
            });
        }
        if cfg.fabric.pfc.xon >= cfg.fabric.pfc.xoff {
            return Err(ConfigError::BadValue {
                line: 0,
                key: "pfc.xon".into(),
                msg: "must be below pfc.xoff".into(),
            });
        }
        Ok(cfg)
    }

    /// Every key with its current value, in a form [`RunConfig::parse`]
    /// reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let mut clos = ClosParams::default();
        kv("scenario", self.scenario.name().into());
        match &self.topology {
            TopologySpec::SingleSwitch { npus, link, buffer } => {
                kv("topology", "single_switch".into());
                kv("npus", npus.to_string());
                clos.nic_link = *link;
                clos.buffer_bytes = *buffer;
            }
            TopologySpec::Clos(p) => {
                kv("topology", "clos".into());
                clos = p.clone();
                kv("racks", p.racks.to_string());
                kv("servers_per_rack", p.servers_per_rack.to_string());
                kv("npus_per_server", p.npus_per_server.to_string());
                kv("spines", p.spines.to_string());
            }
        }
        kv("nic_bw", clos.nic_link.bandwidth.to_string());
        kv("nic_latency", format_duration(clos.nic_link.latency_ns));
        if matches!(self.topology, TopologySpec::Clos(_)) {
            kv("uplink_bw", clos.uplink.bandwidth.to_string());
            kv("uplink_latency", format_duration(clos.uplink.latency_ns));
            kv("scale_up_bw", clos.scale_up.bandwidth.to_string());
            kv("scale_up_latency", format_duration(clos.scale_up.latency_ns));
            kv("allow_oversubscription", clos.allow_oversubscription.to_string());
        }
        kv("buffer", format_bytes(clos.buffer_bytes));
        kv(
            "cc",
            self.variants.iter().map(|v| v.name()).collect::<Vec<_>>().join(","),
        );
        kv("bytes", format_bytes(self.bytes));
        kv("chunks", self.chunks.to_string());
        kv("incast.senders", self.incast_senders.to_string());
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        let f = &self.fabric;
        kv("mtu", format!("{}B", f.mtu));
        kv("scale_up_mtu", format!("{}B", f.scale_up_mtu));
        kv("header", format!("{}B", f.header));
        kv("ack_bytes", format!("{}B", f.ack_bytes));
        kv("ack_per_packet", f.ack_per_packet.to_string());
        kv(
            "timeline",
            match f.timeline {
                TimelineMode::Off => "off".into(),
                TimelineMode::Raw => "raw".into(),
                TimelineMode::Coalesced(ns) => format_duration(ns),
            },
        );
        kv("ecn.kmin", format_bytes(f.ecn.kmin));
        kv("ecn.kmax", format_bytes(f.ecn.kmax));
        kv("ecn.pmax", f.ecn.pmax.to_string());
        kv("ecn.reference_bw", f.ecn.reference.to_string());
        kv("pfc.enabled", f.pfc.enabled.to_string());
        kv(
            "pfc.accounting",
            match f.pfc.accounting {
                PfcAccounting::Shared => "shared".into(),
                PfcAccounting::PerIngress => "per_ingress".into(),
            },
        );
        kv("pfc.xoff", format_bytes(f.pfc.xoff));
        kv("pfc.xon", format_bytes(f.pfc.xon));
        kv("pfc.headroom", format_bytes(f.pfc.headroom));
        kv(
            "pfc.nic_rx_rate",
            f.pfc.nic_rx_rate.map_or("none".into(), |b| b.to_string()),
        );
        kv("pfc.nic_xoff", format_bytes(f.pfc.nic_xoff));
        kv("pfc.nic_xon", format_bytes(f.pfc.nic_xon));
        let p = &self.cc_params;
        let rate = |r: f64| Bandwidth::bps(r.round() as u64).to_string();
        kv("dcqcn.g", p.dcqcn.g.to_string());
        kv("dcqcn.rate_ai", rate(p.dcqcn.rate_ai));
        kv("dcqcn.rate_hai", rate(p.dcqcn.rate_hai));
        kv("dcqcn.alpha_timer", format_duration(p.dcqcn.alpha_timer_ns));
        kv("dcqcn.cnp_interval", format_duration(p.dcqcn.cnp_interval_ns));
        kv("dcqcn.fast_recovery_rounds", p.dcqcn.fast_recovery_rounds.to_string());
        kv("dcqcn.initial_alpha", p.dcqcn.initial_alpha.to_string());
        kv("dcqcn.min_rate", rate(p.dcqcn.min_rate));
        kv("dctcp.g", p.dctcp.g.to_string());
        kv("dctcp.initial_alpha", p.dctcp.initial_alpha.to_string());
        kv("timely.t_low", format_duration(p.timely.t_low_ns));
        kv("timely.t_high", format_duration(p.timely.t_high_ns));
        kv("timely.additive_step", rate(p.timely.additive_step));
        kv("timely.beta", p.timely.beta.to_string());
        kv("timely.hai_factor", p.timely.hai_factor.to_string());
        kv("timely.ewma_alpha", p.timely.ewma_alpha.to_string());
        kv("timely.min_rtt", format_duration(p.timely.min_rtt_ns));
        kv("timely.min_rate", rate(p.timely.min_rate));
        kv("timely.segment", format!("{}B", p.timely.segment_bytes));
        kv("hpcc.eta", p.hpcc.eta.to_string());
        kv("hpcc.max_stage", p.hpcc.max_stage.to_string());
        kv("hpcc.w_ai", format!("{}B", p.hpcc.w_ai.round() as u64));
        kv("pint.feedback_period", p.pint.feedback_period.to_string());
        kv("dlrm.mode", self.dlrm_mode.name().into());
        kv("dlrm.allreduce_bytes", format_bytes(self.dlrm.allreduce_bytes));
        kv("dlrm.alltoall_fwd_bytes", format_bytes(self.dlrm.alltoall_fwd_bytes));
        kv("dlrm.alltoall_bwd_bytes", format_bytes(self.dlrm.alltoall_bwd_bytes));
        kv(
            "dlrm.workload",
            self.workload_file.as_ref().map_or("none".into(), |p| p.display().to_string()),
        );
        let c = &self.compute;
        kv("dlrm.embedding_fwd", format_duration(c.embedding.0));
        kv("dlrm.embedding_bwd", format_duration(c.embedding.1));
        kv("dlrm.bottom_mlp_fwd", format_duration(c.bottom_mlp.0));
        kv("dlrm.bottom_mlp_bwd", format_duration(c.bottom_mlp.1));
        kv("dlrm.interaction_fwd", format_duration(c.interaction.0));
        kv("dlrm.interaction_bwd", format_duration(c.interaction.1));
        kv("dlrm.top_mlp_fwd", format_duration(c.top_mlp.0));
        kv("dlrm.top_mlp_bwd", format_duration(c.top_mlp.1));
        s
    }
}

pub fn parse_variants(s: &str) -> Result<Vec<CcVariant>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v = part.parse::<CcVariant>().map_err(|e| e.to_string())?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err("no congestion-control variant given".into());
    }
    Ok(out)
}
