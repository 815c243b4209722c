//! DCQCN: rate cut on each CNP, timer-driven recovery.
//!
//! Recovery runs `fast_recovery_rounds` rounds that move the rate halfway
//! back to the target, then raises the target by `rate_ai` per round, and
//! by `rate_hai` once another `fast_recovery_rounds` rounds have passed.

use super::{CcState, DcqcnParams};
use crate::engine::SimTime;

pub fn on_cnp(cc: &mut CcState, p: &DcqcnParams, now: SimTime) {
    let rate = cc.rate;
    let alpha = cc.alpha;
    let s = cc.dcqcn();
    s.target = rate;
    s.rounds = 0;
    s.timer_gen = s.timer_gen.wrapping_add(1);
    cc.rate = (rate * (1.0 - alpha / 2.0)).max(p.min_rate);
    cc.alpha = (1.0 - p.g) * alpha + p.g;
    cc.last_update = now;
}

/// One `alpha_timer` period elapsed with no CNP.
pub fn recover(cc: &mut CcState, p: &DcqcnParams, line_rate: f64, now: SimTime) {
    cc.alpha *= 1.0 - p.g;
    let s = cc.dcqcn();
    let f = p.fast_recovery_rounds;
    if s.rounds >= 2 * f {
        s.target += p.rate_hai;
    } else if s.rounds >= f {
        s.target += p.rate_ai;
    }
    s.target = s.target.min(line_rate);
    let target = s.target;
    s.rounds += 1;
    cc.rate = ((cc.rate + target) / 2.0).min(line_rate);
    cc.last_update = now;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::cc::{CcParams, CcVariant, PathContext};

    const LINE: f64 = 100e9;

    fn fresh(alpha: f64) -> (CcState, DcqcnParams) {
        let p = CcParams::default();
        let ctx = PathContext {
            line_rate: LINE,
            base_rtt_ns: 4000,
            mtu: 1000,
        };
        let mut cc = CcState::new(CcVariant::Dcqcn, &p, &ctx);
        cc.alpha = alpha;
        (cc, p.dcqcn)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * b.abs().max(1.0)
    }

    #[test]
    fn cnp_with_full_alpha_halves() {
        let (mut cc, p) = fresh(1.0);
        on_cnp(&mut cc, &p, SimTime(10));
        assert_eq!(cc.rate, 50e9);
        assert!(close(cc.alpha, 1.0));
        assert_eq!(cc.dcqcn().target, 100e9);
    }

    #[test]
    fn cnp_with_zero_alpha_keeps_rate() {
        let (mut cc, p) = fresh(0.0);
        on_cnp(&mut cc, &p, SimTime(0));
        assert_eq!(cc.rate, LINE);
        assert_eq!(cc.alpha, p.g);
    }

    #[test]
    fn one_recovery_round_moves_halfway() {
        let (mut cc, p) = fresh(1.0);
        on_cnp(&mut cc, &p, SimTime(0));
        recover(&mut cc, &p, LINE, SimTime(55_000));
        assert_eq!(cc.rate, 75e9);
    }

    /// Independent oracle: straight-line arithmetic over a scripted trace of
    /// CNP ('c') and quiet-timer ('t') events.
    fn oracle(script: &str, p: &DcqcnParams) -> Vec<(f64, f64, f64)> {
        let (mut rc, mut rt, mut a, mut i) = (LINE, LINE, 1.0f64, 0u32);
        let mut out = vec![];
        for ev in script.chars() {
            if ev == 'c' {
                rt = rc;
                rc = f64::max(rc - rc * a * 0.5, p.min_rate);
                a = a - a * p.g + p.g;
                i = 0;
            } else {
                a -= a * p.g;
                let step = match i {
                    n if n < p.fast_recovery_rounds => 0.0,
                    n if n < 2 * p.fast_recovery_rounds => p.rate_ai,
                    _ => p.rate_hai,
                };
                rt = f64::min(rt + step, LINE);
                rc = f64::min(0.5 * rc + 0.5 * rt, LINE);
                i += 1;
            }
            out.push((rc, rt, a));
        }
        out
    }

    #[test]
    fn scripted_trace_matches_oracle() {
        let script = "cttcctttttttttttttcttt";
        let (mut cc, p) = fresh(1.0);
        let want = oracle(script, &p);
        for (k, ev) in script.chars().enumerate() {
            let now = SimTime(k as u64 * 1000);
            if ev == 'c' {
                on_cnp(&mut cc, &p, now);
            } else {
                recover(&mut cc, &p, LINE, now);
            }
            let (rc, rt, a) = want[k];
            let target = cc.dcqcn().target;
            assert!(close(cc.rate, rc), "step {k}: rate {} vs {rc}", cc.rate);
            assert!(close(target, rt), "step {k}: target {target} vs {rt}");
            assert!(close(cc.alpha, a), "step {k}: alpha {} vs {a}", cc.alpha);
        }
        // frozen hand values for the first three steps
        assert!(close(want[0].0, 50e9));
        assert!(close(want[1].0, 75e9));
        assert!(close(want[2].0, 87.5e9));
    }

    #[test]
    fn rate_never_exceeds_line_or_drops_below_floor() {
        let (mut cc, p) = fresh(1.0);
        for _ in 0..40 {
            on_cnp(&mut cc, &p, SimTime(0));
        }
        assert_eq!(cc.rate, p.min_rate);
        for _ in 0..500 {
            recover(&mut cc, &p, LINE, SimTime(0));
            assert!(cc.rate <= LINE && cc.rate > 0.0);
            assert!((0.0..=1.0).contains(&cc.alpha));
        }
        assert!(close(cc.rate, LINE));
    }
}
