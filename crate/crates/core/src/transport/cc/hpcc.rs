//! HPCC window control from per-hop INT records, and the PINT variant that
//! replaces the INT stack with one quantized utilization byte.

use super::{CcError, CcState, HpccParams, PathContext};
use crate::fabric::packet::IntRecord;

/// Smallest non-zero utilization a PINT code can carry.
pub const PINT_MIN_UTIL: f64 = 1.0 / 256.0;
/// Largest utilization a PINT code can carry.
pub const PINT_MAX_UTIL: f64 = 4.0;
const PINT_LOG_SPAN: f64 = 10.0; // log2(4) - log2(2^-8)

/// Normalized inflight estimate of one hop between two INT snapshots.
pub fn hop_utilization(prev: &IntRecord, now: &IntRecord, base_rtt_ns: u64) -> Option<f64> {
    let dt = now.timestamp.checked_sub(prev.timestamp)?;
    if dt == 0 || now.link_bandwidth == 0 {
        return None;
    }
    let b = now.link_bandwidth as f64 / 8e9; // bytes per ns
    let tx_rate = now.tx_bytes.saturating_sub(prev.tx_bytes) as f64 / dt as f64;
    let q = now.queue_len.min(prev.queue_len) as f64;
    Some(q / (b * base_rtt_ns as f64) + tx_rate / b)
}

/// Bottleneck utilization across the path, folded into the flow's EWMA.
pub fn measure_inflight(cc: &mut CcState, stack: &[IntRecord], base_rtt_ns: u64) -> f64 {
    let s = cc.hpcc();
    let mut best: Option<(f64, u64)> = None;
    for (prev, now) in s.last_hops.iter().zip(stack) {
        if let Some(v) = hop_utilization(prev, now, base_rtt_ns) {
            if best.is_none_or(|(u, _)| v > u) {
                best = Some((v, now.timestamp - prev.timestamp));
            }
        }
    }
    let Some((u, tau)) = best else {
        return s.util;
    };
    let w = tau.min(base_rtt_ns) as f64 / base_rtt_ns as f64;
    s.util = (1.0 - w) * s.util + w * u;
    s.util
}

/// Window for utilization `u`; commits the reference window when
/// `update_ref` is set.
pub fn compute_window(cc: &mut CcState, u: f64, update_ref: bool, p: &HpccParams, ctx: &PathContext) -> f64 {
    let s = cc.hpcc();
    let multiplicative = u >= p.eta || s.inc_stage >= p.max_stage;
    let w = if multiplicative {
        s.ref_window / (u / p.eta) + p.w_ai
    } else {
        s.ref_window + p.w_ai
    };
    let w = w.clamp(ctx.mtu as f64, ctx.bdp().max(ctx.mtu as f64));
    if update_ref {
        if multiplicative {
            s.inc_stage = 0;
        } else {
            s.inc_stage += 1;
        }
        s.ref_window = w;
    }
    apply_window(cc, w, ctx);
    w
}

fn apply_window(cc: &mut CcState, w: f64, ctx: &PathContext) {
    cc.window = w;
    cc.rate = (w * 8e9 / ctx.base_rtt_ns as f64).min(ctx.line_rate);
}

/// ACK carrying the full INT stack.
pub fn on_ack(
    cc: &mut CcState,
    ack_seq: u64,
    snd_nxt: u64,
    stack: &[IntRecord],
    p: &HpccParams,
    ctx: &PathContext,
) -> Result<(), CcError> {
    if stack.is_empty() {
        return Err(CcError::EmptyIntStack);
    }
    let s = cc.hpcc();
    if s.last_hops.is_empty() {
        s.last_hops = stack.iter().copied().collect();
        return Ok(());
    }
    if s.last_hops.len() != stack.len() {
        return Err(CcError::IntStackMismatch {
            prev: s.last_hops.len(),
            now: stack.len(),
        });
    }
    let u = measure_inflight(cc, stack, ctx.base_rtt_ns);
    let s = cc.hpcc();
    let update_ref = ack_seq > s.last_update_seq;
    if update_ref {
        s.last_update_seq = snd_nxt;
    }
    s.last_hops = stack.iter().copied().collect();
    compute_window(cc, u, update_ref, p, ctx);
    Ok(())
}

/// ACK carrying a PINT code. The switches already smoothed the value, so it
/// drives the window directly.
pub fn on_pint_feedback(cc: &mut CcState, code: u8, ack_seq: u64, snd_nxt: u64, p: &HpccParams, ctx: &PathContext) {
    let u = pint_decode(code);
    let s = cc.hpcc();
    s.util = u;
    let update_ref = ack_seq > s.last_update_seq;
    if update_ref {
        s.last_update_seq = snd_nxt;
    }
    compute_window(cc, u, update_ref, p, ctx);
}

/// Log-scale 8-bit encoding: 0 means below [`PINT_MIN_UTIL`], codes 1..=255
/// span log2(u) from -8 to 2.
pub fn pint_encode(u: f64) -> u8 {
    if !(u >= PINT_MIN_UTIL) {
        return 0;
    }
    let x = (u.min(PINT_MAX_UTIL).log2() + 8.0) / PINT_LOG_SPAN;
    1 + (x * 254.0).round() as u8
}

pub fn pint_decode(code: u8) -> f64 {
    if code == 0 {
        return 0.0;
    }
    let x = (code - 1) as f64 / 254.0;
    (x * PINT_LOG_SPAN - 8.0).exp2()
}

/// Switch-side running utilization of one egress port for PINT.
#[derive(Debug, Clone, Default)]
pub struct PortUtilization {
    last: Option<IntRecord>,
    util: f64,
}

impl PortUtilization {
    pub fn observe(&mut self, now: IntRecord, base_rtt_ns: u64) -> f64 {
        if let Some(prev) = self.last {
            if let Some(u) = hop_utilization(&prev, &now, base_rtt_ns) {
                let dt = (now.timestamp - prev.timestamp).min(base_rtt_ns) as f64;
                let w = dt / base_rtt_ns as f64;
                self.util = (1.0 - w) * self.util + w * u;
            }
        }
        self.last = Some(now);
        self.util
    }

    pub fn util(&self) -> f64 {
        self.util
    }
}
