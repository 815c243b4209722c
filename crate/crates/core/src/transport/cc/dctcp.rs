//! DCTCP on RoCE: a byte window cut in proportion to the marked fraction.

use super::{CcState, DctcpParams};

/// Apply one observation window: `acked` bytes acknowledged, `marked` of
/// them carried an ECN echo.
pub fn on_ack_window(cc: &mut CcState, acked: u64, marked: u64, p: &DctcpParams, mtu: u64) {
    if acked == 0 {
        return;
    }
    let frac = marked as f64 / acked as f64;
    cc.alpha = ((1.0 - p.g) * cc.alpha + p.g * frac).clamp(0.0, 1.0);
    if marked > 0 {
        cc.window = (cc.window * (1.0 - cc.alpha / 2.0)).max(mtu as f64);
    } else {
        cc.window += mtu as f64;
    }
}

/// Per-ACK bookkeeping; closes the observation window once the cumulative
/// ack passes the sequence that was outstanding when it opened.
pub fn on_ack(
    cc: &mut CcState,
    newly_acked: u64,
    ecn_echo: bool,
    ack_seq: u64,
    snd_nxt: u64,
    p: &DctcpParams,
    mtu: u64,
) {
    let s = cc.dctcp();
    s.acked += newly_acked;
    if ecn_echo {
        s.marked += newly_acked;
    }
    if ack_seq >= s.window_end {
        let (acked, marked) = (s.acked, s.marked);
        s.acked = 0;
        s.marked = 0;
        s.window_end = snd_nxt.max(ack_seq + 1);
        on_ack_window(cc, acked, marked, p, mtu);
    }
}
