//! Per-flow congestion controllers.
//!
//! Every controller is a set of pure transition functions over [`CcState`],
//! so each update rule can be driven by a scripted feedback trace without a
//! fabric underneath.

pub mod dcqcn;
pub mod dctcp;
pub mod hpcc;
pub mod timely;

use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;
use thiserror::Error;

use crate::engine::SimTime;
use crate::fabric::packet::{IntRecord, MAX_HOPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcError {
    #[error("non-positive RTT sample {0} ns")]
    BadRtt(i64),
    #[error("ACK carries no INT records")]
    EmptyIntStack,
    #[error("INT stack length changed from {prev} to {now} within one flow")]
    IntStackMismatch { prev: usize, now: usize },
    #[error("unknown congestion-control variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CcVariant {
    PfcOnly,
    Dcqcn,
    Dctcp,
    Timely,
    Hpcc,
    HpccPint,
}

impl CcVariant {
    pub const ALL: [CcVariant; 6] = [
        CcVariant::PfcOnly,
        CcVariant::Dcqcn,
        CcVariant::Dctcp,
        CcVariant::Timely,
        CcVariant::Hpcc,
        CcVariant::HpccPint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CcVariant::PfcOnly => "pfc",
            CcVariant::Dcqcn => "dcqcn",
            CcVariant::Dctcp => "dctcp",
            CcVariant::Timely => "timely",
            CcVariant::Hpcc => "hpcc",
            CcVariant::HpccPint => "hpcc_pint",
        }
    }

    pub fn is_window_based(self) -> bool {
        matches!(self, CcVariant::Dctcp | CcVariant::Hpcc | CcVariant::HpccPint)
    }

    /// Whether switches need to ECN-mark for this variant.
    pub fn uses_ecn(self) -> bool {
        matches!(self, CcVariant::Dcqcn | CcVariant::Dctcp)
    }
}

impl fmt::Display for CcVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CcVariant {
    type Err = CcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pfc" | "pfc_only" | "pfconly" | "none" => Ok(CcVariant::PfcOnly),
            "dcqcn" => Ok(CcVariant::Dcqcn),
            "dctcp" => Ok(CcVariant::Dctcp),
            "timely" => Ok(CcVariant::Timely),
            "hpcc" => Ok(CcVariant::Hpcc),
            "hpcc_pint" | "hpcc-pint" | "pint" => Ok(CcVariant::HpccPint),
            other => Err(CcError::UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcqcnParams {
    pub g: f64,
    /// Additive increase step, bits/s.
    pub rate_ai: f64,
    /// Hyper increase step, bits/s.
    pub rate_hai: f64,
    /// Quiet period after which alpha decays and one recovery round runs.
    pub alpha_timer_ns: u64,
    /// Minimum spacing of CNPs per flow at the receiver.
    pub cnp_interval_ns: u64,
    pub fast_recovery_rounds: u32,
    pub initial_alpha: f64,
    pub min_rate: f64,
}

impl Default for DcqcnParams {
    fn default() -> Self {
        DcqcnParams {
            g: 1.0 / 256.0,
            rate_ai: 200e6,
            rate_hai: 500e6,
            alpha_timer_ns: 55_000,
            cnp_interval_ns: 50_000,
            fast_recovery_rounds: 5,
            initial_alpha: 1.0,
            min_rate: 100e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DctcpParams {
    pub g: f64,
    pub initial_alpha: f64,
}

impl Default for DctcpParams {
    fn default() -> Self {
        DctcpParams {
            g: 1.0 / 16.0,
            initial_alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelyParams {
    pub t_low_ns: u64,
    pub t_high_ns: u64,
    /// Additive step, bits/s.
    pub additive_step: f64,
    pub beta: f64,
    /// Consecutive non-positive gradients before hyper-active increase;
    /// also the multiplier applied to the step once there.
    pub hai_factor: u32,
    /// EWMA weight of the newest RTT difference.
    pub ewma_alpha: f64,
    /// Normalizer for the RTT gradient.
    pub min_rtt_ns: u64,
    pub min_rate: f64,
    /// Acked bytes between rate updates; 0 updates once per RTT.
    pub segment_bytes: u64,
}

impl Default for TimelyParams {
    fn default() -> Self {
        TimelyParams {
            t_low_ns: 50_000,
            t_high_ns: 500_000,
            additive_step: 10e6,
            beta: 0.8,
            hai_factor: 5,
            ewma_alpha: 0.875,
            min_rtt_ns: 20_000,
            min_rate: 100e6,
            segment_bytes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpccParams {
    /// Target utilization.
    pub eta: f64,
    pub max_stage: u32,
    /// Additive window step, bytes.
    pub w_ai: f64,
}

impl Default for HpccParams {
    fn default() -> Self {
        HpccParams {
            eta: 0.95,
            max_stage: 5,
            w_ai: 80.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PintParams {
    /// Every n-th DATA packet of a flow carries a utilization sample.
    pub feedback_period: u32,
}

impl Default for PintParams {
    fn default() -> Self {
        PintParams { feedback_period: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CcParams {
    pub dcqcn: DcqcnParams,
    pub dctcp: DctcpParams,
    pub timely: TimelyParams,
    pub hpcc: HpccParams,
    pub pint: PintParams,
}

/// Static context a controller needs besides its own state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathContext {
    /// Sender line rate, bits/s.
    pub line_rate: f64,
    pub base_rtt_ns: u64,
    /// Payload bytes per full DATA packet.
    pub mtu: u64,
}

impl PathContext {
    /// Bandwidth-delay product in bytes.
    pub fn bdp(&self) -> f64 {
        self.line_rate / 8e9 * self.base_rtt_ns as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DcqcnScratch {
    pub target: f64,
    /// Recovery rounds since the last CNP.
    pub rounds: u32,
    /// Bumped on every CNP; invalidates the pending recovery timer.
    pub timer_gen: u32,
    pub timer_armed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DctcpScratch {
    /// Cumulative ack that closes the current observation window.
    pub window_end: u64,
    pub acked: u64,
    pub marked: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimelyScratch {
    pub prev_rtt: Option<u64>,
    pub rtt_diff: f64,
    pub negative_streak: u32,
    pub next_update_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HpccScratch {
    /// Reference window, updated once per RTT.
    pub ref_window: f64,
    pub inc_stage: u32,
    pub last_update_seq: u64,
    /// Smoothed bottleneck utilization.
    pub util: f64,
    pub last_hops: ArrayVec<IntRecord, MAX_HOPS>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum CcScratch {
    #[default]
    None,
    Dcqcn(DcqcnScratch),
    Dctcp(DctcpScratch),
    Timely(TimelyScratch),
    Hpcc(HpccScratch),
}

/// Rate/window controller state for one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct CcState {
    pub variant: CcVariant,
    /// Pacing rate, bits/s.
    pub rate: f64,
    /// Inflight limit, bytes (window-based variants).
    pub window: f64,
    pub alpha: f64,
    pub last_update: SimTime,
    pub scratch: CcScratch,
}

impl CcState {
    /// Start at line rate; window variants open with one BDP.
    pub fn new(variant: CcVariant, params: &CcParams, ctx: &PathContext) -> Self {
        let bdp = ctx.bdp().max(ctx.mtu as f64);
        let (alpha, scratch) = match variant {
            CcVariant::PfcOnly => (0.0, CcScratch::None),
            CcVariant::Dcqcn => (
                params.dcqcn.initial_alpha,
                CcScratch::Dcqcn(DcqcnScratch {
                    target: ctx.line_rate,
                    ..Default::default()
                }),
            ),
            CcVariant::Dctcp => (
                params.dctcp.initial_alpha,
                CcScratch::Dctcp(DctcpScratch::default()),
            ),
            CcVariant::Timely => (0.0, CcScratch::Timely(TimelyScratch::default())),
            CcVariant::Hpcc | CcVariant::HpccPint => (
                0.0,
                CcScratch::Hpcc(HpccScratch {
                    ref_window: bdp,
                    ..Default::default()
                }),
            ),
        };
        CcState {
            variant,
            rate: ctx.line_rate,
            window: if variant.is_window_based() { bdp } else { f64::INFINITY },
            alpha,
            last_update: SimTime::ZERO,
            scratch,
        }
    }

    pub fn dcqcn(&mut self) -> &mut DcqcnScratch {
        match &mut self.scratch {
            CcScratch::Dcqcn(s) => s,
            _ => panic!("not a DCQCN flow"),
        }
    }

    pub fn dctcp(&mut self) -> &mut DctcpScratch {
        match &mut self.scratch {
            CcScratch::Dctcp(s) => s,
            _ => panic!("not a DCTCP flow"),
        }
    }

    pub fn timely(&mut self) -> &mut TimelyScratch {
        match &mut self.scratch {
            CcScratch::Timely(s) => s,
            _ => panic!("not a TIMELY flow"),
        }
    }

    pub fn hpcc(&mut self) -> &mut HpccScratch {
        match &mut self.scratch {
            CcScratch::Hpcc(s) => s,
            _ => panic!("not an HPCC flow"),
        }
    }
}
