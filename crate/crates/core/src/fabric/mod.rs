//! Switch and link dataplane: shared-buffer output queues, store-and-forward
//! serialization, ECN marking, INT insertion and PFC PAUSE/RESUME.
//!
//! The per-event handlers live in [`switch`] as methods of the simulator;
//! this module holds configuration and per-port/per-node state.

pub mod packet;
pub mod switch;

use std::collections::{BinaryHeap, VecDeque};
use std::cmp::Reverse;

use crate::transport::cc::hpcc::PortUtilization;
use crate::units::Bandwidth;

/// RED-style marking profile, given for a reference link rate and scaled
/// linearly to each port's bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct EcnConfig {
    pub kmin: u64,
    pub kmax: u64,
    pub pmax: f64,
    pub reference: Bandwidth,
}

impl Default for EcnConfig {
    fn default() -> Self {
        EcnConfig {
            kmin: 400_000,
            kmax: 1_600_000,
            pmax: 0.2,
            reference: Bandwidth::gbps(200),
        }
    }
}

impl EcnConfig {
    /// `(kmin, kmax)` for a port of bandwidth `bw`.
    pub fn thresholds(&self, bw: Bandwidth) -> (u64, u64) {
        let s = bw.as_bps() as f64 / self.reference.as_bps() as f64;
        ((self.kmin as f64 * s) as u64, (self.kmax as f64 * s) as u64)
    }

    /// Marking probability at egress depth `depth` given scaled thresholds.
    pub fn mark_probability(&self, depth: u64, kmin: u64, kmax: u64) -> f64 {
        if depth <= kmin {
            0.0
        } else if depth > kmax {
            1.0
        } else {
            self.pmax * (depth - kmin) as f64 / (kmax - kmin).max(1) as f64
        }
    }
}

/// What `xoff`/`xon` are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfcAccounting {
    /// Total bytes held by the switch; crossing `xoff` pauses every ingress
    /// that has bytes queued, and all resume together below `xon`.
    Shared,
    /// Bytes held from one ingress link, which alone is paused. A guard at
    /// the whole buffer minus per-port headroom still pauses everyone.
    PerIngress,
}

/// PFC thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct PfcConfig {
    pub enabled: bool,
    pub accounting: PfcAccounting,
    pub xoff: u64,
    pub xon: u64,
    /// Bytes reserved per port for traffic already on the wire when a
    /// PAUSE goes out.
    pub headroom: u64,
    /// Receive-side drain rate of a NIC. `None` means the host absorbs
    /// packets instantly and never pauses its TOR.
    pub nic_rx_rate: Option<Bandwidth>,
    pub nic_xoff: u64,
    pub nic_xon: u64,
}

impl Default for PfcConfig {
    fn default() -> Self {
        PfcConfig {
            enabled: true,
            accounting: PfcAccounting::PerIngress,
            xoff: 1_700_000,
            xon: 1_673_000,
            headroom: 27_000,
            nic_rx_rate: None,
            nic_xoff: 200_000,
            nic_xon: 150_000,
        }
    }
}

/// Queue-occupancy timeline resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimelineMode {
    Off,
    /// One point per bucket of this many ns holding the bucket's maximum.
    Coalesced(u64),
    /// Every occupancy change.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FabricConfig {
    pub ecn: EcnConfig,
    pub pfc: PfcConfig,
    /// DATA payload bytes on NIC paths.
    pub mtu: u32,
    /// DATA payload bytes on scale-up paths.
    pub scale_up_mtu: u32,
    pub header: u32,
    pub ack_bytes: u32,
    /// ACK every DATA packet on NIC paths, whatever the variant. When off,
    /// only variants that feed on ACKs get one per packet; the rest get a
    /// single ACK for the last byte.
    pub ack_per_packet: bool,
    pub timeline: TimelineMode,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            ecn: EcnConfig::default(),
            pfc: PfcConfig::default(),
            mtu: 1000,
            scale_up_mtu: 4000,
            header: 48,
            ack_bytes: 64,
            ack_per_packet: true,
            timeline: TimelineMode::Coalesced(1000),
        }
    }
}

/// Runtime state of one direction of a link, owned by the sending node.
#[derive(Debug, Default)]
pub struct PortState {
    pub node: u32,
    pub peer: u32,
    pub peer_port: u32,
    pub bandwidth: u64,
    pub latency: u64,
    pub kmin: u64,
    pub kmax: u64,
    pub owner_is_npu: bool,

    pub data: VecDeque<u32>,
    pub ctrl: VecDeque<u32>,
    /// Bytes waiting in `data` and `ctrl`.
    pub depth: u64,
    pub busy_until: u64,
    /// Remainder of the serialization-time division, in bit-ns units.
    carry: u64,
    /// Time of the pending TxDone, if any.
    pub tx_at: Option<u64>,
    /// Downstream sent PAUSE; DATA may not start.
    pub paused: bool,
    pub tx_bytes: u64,

    /// Bytes this node holds that arrived over this port's link.
    pub ingress_bytes: u64,
    /// We sent PAUSE upstream over this link and have not resumed it.
    pub upstream_paused: bool,

    // NIC scheduling (NPU-owned ports only)
    pub ready: VecDeque<u32>,
    pub pacing: BinaryHeap<Reverse<(u64, u32)>>,
    pub wake_token: u32,
    pub wake_at: u64,

    pub util: PortUtilization,
}

impl PortState {
    pub fn new(node: u32, peer: u32, peer_port: u32, bandwidth: Bandwidth, latency: u64, ecn: &EcnConfig, owner_is_npu: bool) -> Self {
        let (kmin, kmax) = ecn.thresholds(bandwidth);
        PortState {
            node,
            peer,
            peer_port,
            bandwidth: bandwidth.as_bps(),
            latency,
            kmin,
            kmax,
            owner_is_npu,
            wake_at: u64::MAX,
            ..Default::default()
        }
    }

    /// Serialization time of `bytes`, carrying the fractional nanosecond
    /// into the next packet so long-run throughput is exact.
    #[inline]
    pub fn serialize_ns(&mut self, bytes: u32) -> u64 {
        let num = bytes as u64 * 8_000_000_000 + self.carry;
        self.carry = num % self.bandwidth;
        num / self.bandwidth
    }

    pub fn is_idle(&self, now: u64) -> bool {
        self.busy_until <= now
    }
}

/// Aggregate occupancy samples for one switch.
#[derive(Debug, Default, Clone)]
pub struct Timeline {
    pub points: Vec<(u64, u64)>,
}

impl Timeline {
    #[inline]
    pub fn record(&mut self, mode: TimelineMode, now: u64, bytes: u64) {
        match mode {
            TimelineMode::Off => {}
            TimelineMode::Raw => self.points.push((now, bytes)),
            TimelineMode::Coalesced(res) => {
                let bucket = now / res * res;
                match self.points.last_mut() {
                    Some((t, v)) if *t == bucket => *v = (*v).max(bytes),
                    _ => self.points.push((bucket, bytes)),
                }
            }
        }
    }
}

/// Per-node counters and shared-buffer state.
#[derive(Debug, Default)]
pub struct NodeState {
    pub occupancy: u64,
    pub peak: u64,
    pub pause_sent: u64,
    pub pause_received: u64,
    pub guard_active: bool,
    pub drops: u64,
    pub timeline: Timeline,
    /// NIC receive buffer (only with a finite `nic_rx_rate`).
    pub rx_queue: VecDeque<(u32, u32)>,
    pub rx_bytes: u64,
    pub rx_busy: bool,
    pub rx_carry: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marking_profile() {
        let e = EcnConfig::default();
        let (kmin, kmax) = e.thresholds(Bandwidth::gbps(200));
        assert_eq!((kmin, kmax), (400_000, 1_600_000));
        assert_eq!(e.thresholds(Bandwidth::gbps(100)), (200_000, 800_000));
        assert_eq!(e.mark_probability(100_000, kmin, kmax), 0.0);
        assert_eq!(e.mark_probability(400_000, kmin, kmax), 0.0);
        assert!((e.mark_probability(1_000_000, kmin, kmax) - 0.1).abs() < 1e-12);
        assert_eq!(e.mark_probability(1_600_001, kmin, kmax), 1.0);
    }

    #[test]
    fn serialization_carry_is_exact() {
        let mut p = PortState::new(0, 1, 1, Bandwidth::gbps(200), 500, &EcnConfig::default(), false);
        assert_eq!(p.serialize_ns(1000), 40);
        let total: u64 = (0..1000).map(|_| p.serialize_ns(1048)).sum();
        // 1000 packets of 1048 B at 25 B/ns
        assert_eq!(total, 41_920);
    }

    #[test]
    fn coalesced_timeline_keeps_bucket_max() {
        let mut t = Timeline::default();
        let m = TimelineMode::Coalesced(1000);
        t.record(m, 10, 5);
        t.record(m, 900, 9);
        t.record(m, 950, 2);
        t.record(m, 1500, 1);
        assert_eq!(t.points, vec![(0, 9), (1000, 1)]);
        let mut r = Timeline::default();
        r.record(TimelineMode::Raw, 10, 5);
        r.record(TimelineMode::Raw, 10, 6);
        assert_eq!(r.points.len(), 2);
    }
}
