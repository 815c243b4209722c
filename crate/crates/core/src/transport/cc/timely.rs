//! TIMELY: RTT thresholds plus a normalized RTT-gradient rule.

use super::{CcError, CcState, TimelyParams};

pub fn on_rtt(cc: &mut CcState, rtt_ns: i64, p: &TimelyParams, line_rate: f64) -> Result<(), CcError> {
    if rtt_ns <= 0 {
        return Err(CcError::BadRtt(rtt_ns));
    }
    let rtt = rtt_ns as u64;
    let rate = cc.rate;
    let s = cc.timely();
    let prev = s.prev_rtt.replace(rtt).unwrap_or(rtt);
    let new_diff = rtt as f64 - prev as f64;
    s.rtt_diff = (1.0 - p.ewma_alpha) * s.rtt_diff + p.ewma_alpha * new_diff;
    let gradient = s.rtt_diff / p.min_rtt_ns as f64;

    let next = if rtt < p.t_low_ns {
        s.negative_streak = 0;
        rate + p.additive_step
    } else if rtt > p.t_high_ns {
        s.negative_streak = 0;
        rate * (1.0 - p.beta * (1.0 - p.t_high_ns as f64 / rtt as f64))
    } else if gradient <= 0.0 {
        s.negative_streak += 1;
        let n = if s.negative_streak >= p.hai_factor {
            p.hai_factor as f64
        } else {
            1.0
        };
        rate + n * p.additive_step
    } else {
        s.negative_streak = 0;
        rate * (1.0 - p.beta * gradient)
    };
    cc.rate = next.clamp(p.min_rate, line_rate);
    Ok(())
}
