//! End-host transport: segmentation, the NIC scheduler, per-packet ACKs and
//! dispatch into the congestion controllers.

pub mod cc;

use std::cmp::Reverse;

use crate::engine::SimTime;
use crate::fabric::packet::{Packet, PacketKind, Telemetry, INT_RECORD_WIRE_BYTES, PINT_WIRE_BYTES};
use crate::sim::{Event, SimError, Simulator};
use crate::topology::{FlowKey, NodeId, NodeKind};
use cc::{dcqcn, dctcp, hpcc, timely, CcState, CcVariant, PathContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendState {
    /// In the NIC's round-robin list.
    Ready,
    /// Waiting for its pacing time.
    Pacing,
    /// Window full; woken by an ACK.
    Blocked,
    /// Everything sent.
    Drained,
}

#[derive(Debug, Clone)]
pub struct Flow {
    pub key: FlowKey,
    pub uid: u64,
    pub src: u32,
    pub dst: u32,
    pub total: u64,
    /// Next byte to send.
    pub sent: u64,
    /// Cumulative bytes acknowledged.
    pub acked: u64,
    /// In-order bytes the receiver holds.
    pub received: u64,
    pub start: SimTime,
    pub finish: Option<SimTime>,
    pub cc: CcState,
    /// Runs the configured controller (false on scale-up paths and for
    /// PFC-only).
    pub controlled: bool,
    pub per_packet_ack: bool,
    pub port: u32,
    pub hash: u64,
    pub ack_hash: u64,
    pub mtu: u32,
    pub header: u32,
    pub ack_size: u32,
    pub telemetry: Telemetry,
    pub ctx: PathContext,
    /// Earliest time the pacer lets the next packet out, fractional ns.
    pub next_send: f64,
    pub state: SendState,
    pub last_cnp: Option<u64>,
    pub packets_sent: u64,
    pub timer_token: u32,
}

impl Flow {
    fn window_open(&self) -> bool {
        ((self.sent - self.acked) as f64) < self.cc.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowRecord {
    pub id: u64,
    pub src: u32,
    pub dst: u32,
    pub bytes: u64,
    pub start_ns: u64,
    pub finish_ns: u64,
}

/// Live flows in reusable slots plus completion records.
#[derive(Debug, Default)]
pub struct FlowTable {
    slots: Vec<Option<Flow>>,
    free: Vec<u32>,
    active: usize,
    next_uid: u64,
    records: Vec<FlowRecord>,
}

impl FlowTable {
    pub fn active(&self) -> usize {
        self.active
    }

    pub fn started(&self) -> u64 {
        self.next_uid
    }

    pub fn records(&self) -> &[FlowRecord] {
        &self.records
    }

    pub fn get(&self, id: u32) -> Option<&Flow> {
        self.slots.get(id as usize).and_then(|f| f.as_ref())
    }

    pub(crate) fn get_mut(&mut self, id: u32) -> Option<&mut Flow> {
        self.slots.get_mut(id as usize).and_then(|f| f.as_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Flow> {
        self.slots.iter().flatten()
    }

    fn insert(&mut self, f: Flow) -> u32 {
        self.active += 1;
        match self.free.pop() {
            Some(id) => {
                self.slots[id as usize] = Some(f);
                id
            }
            None => {
                self.slots.push(Some(f));
                (self.slots.len() - 1) as u32
            }
        }
    }

    #[inline]
    fn at(&mut self, id: u32) -> &mut Flow {
        self.slots[id as usize].as_mut().expect("stale flow id")
    }

    fn remove(&mut self, id: u32) -> Flow {
        self.active -= 1;
        self.free.push(id);
        self.slots[id as usize].take().expect("stale flow id")
    }
}

impl Simulator {
    /// Register a message of `bytes` from NPU `src` to NPU `dst`. `tag` is
    /// reported back through `Application::on_flow_done` and feeds the ECMP
    /// hash.
    pub fn start_flow(&mut self, src: u32, dst: u32, bytes: u64, tag: u64) -> Result<u32, SimError> {
        let n = self.topo.num_npus() as u32;
        if bytes == 0 {
            return Err(SimError::InvalidFlow(format!("zero-size flow {src}->{dst}")));
        }
        if src >= n || dst >= n || src == dst {
            return Err(SimError::InvalidFlow(format!("bad endpoints {src}->{dst}")));
        }
        let now = self.engine.now();
        let key = FlowKey::new(NodeId::npu(src), NodeId::npu(dst), tag);
        let hash = key.hash64();
        let port = self.topo.next_port(src as usize, dst, hash);
        let scale_up = self.topo.node(self.ports[port as usize].peer as usize).kind == NodeKind::ScaleUp;
        let variant = self.cfg.cc;
        let controlled = !scale_up && variant != CcVariant::PfcOnly;
        let fab = &self.cfg.fabric;
        let hops = self.topo.switch_hops(src, dst) as u32;
        let (telemetry, extra) = match (controlled, variant) {
            (true, CcVariant::Hpcc) => (Telemetry::Int, hops * INT_RECORD_WIRE_BYTES),
            (true, CcVariant::HpccPint) => (Telemetry::Pint, PINT_WIRE_BYTES),
            _ => (Telemetry::None, 0),
        };
        let mtu = if scale_up { fab.scale_up_mtu } else { fab.mtu };
        let ctx = PathContext {
            line_rate: self.ports[port as usize].bandwidth as f64,
            base_rtt_ns: self.base_rtt,
            mtu: mtu as u64,
        };
        let cc = CcState::new(if controlled { variant } else { CcVariant::PfcOnly }, &self.cfg.cc_params, &ctx);
        let uid = self.flows.next_uid;
        self.flows.next_uid += 1;
        let flow = Flow {
            key,
            uid,
            src,
            dst,
            total: bytes,
            sent: 0,
            acked: 0,
            received: 0,
            start: now,
            finish: None,
            cc,
            controlled,
            per_packet_ack: !scale_up
                && (self.cfg.fabric.ack_per_packet
                    || controlled
                        && matches!(
                            variant,
                            CcVariant::Dctcp | CcVariant::Timely | CcVariant::Hpcc | CcVariant::HpccPint
                        )),
            port,
            hash,
            ack_hash: key.reversed().hash64(),
            mtu,
            header: fab.header + extra,
            ack_size: fab.ack_bytes + extra,
            telemetry,
            ctx,
            next_send: now.as_ns() as f64,
            state: SendState::Ready,
            last_cnp: None,
            packets_sent: 0,
            timer_token: 0,
        };
        let id = self.flows.insert(flow);
        self.ports[port as usize].ready.push_back(id);
        self.nic_kick(port);
        Ok(id)
    }

    /// Ask for a NIC wake-up at absolute time `at` unless one is already due
    /// no later than that.
    fn schedule_wake(&mut self, port: u32, at: u64) {
        let now = self.engine.now().as_ns();
        let p = &mut self.ports[port as usize];
        if p.wake_at <= at && p.wake_at >= now {
            return;
        }
        self.next_token = self.next_token.wrapping_add(1);
        let token = self.next_token;
        let p = &mut self.ports[port as usize];
        p.wake_token = token;
        p.wake_at = at;
        self.engine.schedule_in(at - now, Event::NicWake { port, token });
    }

    /// NIC egress service: control first, then DATA round-robin over flows
    /// whose pacer and window allow it.
    pub(crate) fn nic_kick(&mut self, port: u32) {
        let now = self.engine.now().as_ns();
        let p = &mut self.ports[port as usize];
        if p.busy_until > now {
            if !p.ctrl.is_empty() || !p.ready.is_empty() || !p.pacing.is_empty() {
                let at = p.busy_until;
                self.schedule_wake(port, at);
            }
            return;
        }
        if let Some(pkt) = p.ctrl.pop_front() {
            p.depth -= self.pool.get(pkt).size as u64;
            self.nic_transmit(port, pkt);
        } else {
            if p.paused {
                return;
            }
            while let Some(&Reverse((t, f))) = p.pacing.peek() {
                if t > now {
                    break;
                }
                p.pacing.pop();
                p.ready.push_back(f);
                self.flows.at(f).state = SendState::Ready;
            }
            match p.ready.pop_front() {
                Some(f) => self.send_data(port, f),
                None => {
                    if let Some(&Reverse((t, _))) = p.pacing.peek() {
                        self.schedule_wake(port, t);
                    }
                    return;
                }
            }
        }
        let p = &self.ports[port as usize];
        if !p.ctrl.is_empty() || (!p.paused && !p.ready.is_empty()) {
            let at = p.busy_until;
            self.schedule_wake(port, at);
        } else if !p.paused {
            if let Some(&Reverse((t, _))) = p.pacing.peek() {
                let at = t.max(p.busy_until);
                self.schedule_wake(port, at);
            }
        }
    }

    fn nic_transmit(&mut self, port: u32, pkt: u32) {
        let now = self.engine.now().as_ns();
        let p = &mut self.ports[port as usize];
        let size = self.pool.get(pkt).size;
        p.tx_bytes += size as u64;
        let ser = p.serialize_ns(size);
        p.busy_until = now + ser;
        let at = ser + p.latency;
        self.engine.schedule_in(at, Event::Arrive { pkt, port });
    }

    /// Segment and send the next packet of flow `id`, then requeue it.
    fn send_data(&mut self, port: u32, id: u32) {
        let now = self.engine.now().as_ns();
        let period = self.cfg.cc_params.pint.feedback_period.max(1) as u64;
        let f = self.flows.at(id);
        let payload = (f.total - f.sent).min(f.mtu as u64) as u32;
        let mut pkt = Packet::data(f.key, id, f.sent, payload, f.header, f.hash);
        pkt.sent_at = SimTime(now);
        pkt.telemetry = f.telemetry;
        if f.telemetry == Telemetry::Pint && f.packets_sent.is_multiple_of(period) {
            pkt.pint = Some(0);
        }
        let size = pkt.size;
        f.sent += payload as u64;
        f.packets_sent += 1;
        let gap = size as f64 * 8e9 / f.cc.rate;
        f.next_send = f.next_send.max(now as f64) + gap;
        self.counters.injected_bytes += payload as u64;
        self.counters.data_packets += 1;
        let pkt = self.pool.insert(pkt);
        self.nic_transmit(port, pkt);
        let busy_until = self.ports[port as usize].busy_until;
        self.requeue(port, id, busy_until);
    }

    /// Put flow `id` back where its pacer and window say it belongs.
    fn requeue(&mut self, port: u32, id: u32, busy_until: u64) {
        let f = self.flows.at(id);
        if f.sent == f.total {
            f.state = SendState::Drained;
            return;
        }
        if !f.window_open() {
            f.state = SendState::Blocked;
            return;
        }
        let t = f.next_send.floor() as u64;
        let p = &mut self.ports[port as usize];
        if t <= busy_until {
            f.state = SendState::Ready;
            p.ready.push_back(id);
        } else {
            f.state = SendState::Pacing;
            p.pacing.push(Reverse((t, id)));
        }
    }

    /// A packet reached NPU `node` over its port `ingress`.
    pub(crate) fn host_receive(&mut self, node: u32, ingress: u32, pkt: u32) -> Result<(), SimError> {
        let Some(rate) = self.cfg.fabric.pfc.nic_rx_rate else {
            return self.deliver(node, pkt);
        };
        if self.pool.get(pkt).kind != PacketKind::Data {
            return self.deliver(node, pkt);
        }
        let size = self.pool.get(pkt).size as u64;
        let pfc = &self.cfg.fabric.pfc;
        let (xoff, enabled) = (pfc.nic_xoff, pfc.enabled);
        let n = &mut self.nodes[node as usize];
        n.rx_queue.push_back((pkt, ingress));
        n.rx_bytes += size;
        self.ports[ingress as usize].ingress_bytes += size;
        if enabled && !self.ports[ingress as usize].upstream_paused && self.nodes[node as usize].rx_bytes > xoff {
            self.send_pfc(ingress, true);
        }
        let n = &mut self.nodes[node as usize];
        if !n.rx_busy {
            n.rx_busy = true;
            let d = rx_time(&mut n.rx_carry, size, rate.as_bps());
            self.engine.schedule_in(d, Event::RxDrain { node });
        }
        Ok(())
    }

    pub(crate) fn on_rx_drain(&mut self, node: u32) -> Result<(), SimError> {
        let rate = self.cfg.fabric.pfc.nic_rx_rate.expect("rx drain without rx rate").as_bps();
        let (xon, enabled) = (self.cfg.fabric.pfc.nic_xon, self.cfg.fabric.pfc.enabled);
        let n = &mut self.nodes[node as usize];
        let (pkt, ingress) = n.rx_queue.pop_front().expect("rx drain on empty queue");
        let size = self.pool.get(pkt).size as u64;
        n.rx_bytes -= size;
        let rx_bytes = n.rx_bytes;
        if let Some(&(next, _)) = n.rx_queue.front() {
            let next_size = self.pool.get(next).size as u64;
            let d = rx_time(&mut n.rx_carry, next_size, rate);
            self.engine.schedule_in(d, Event::RxDrain { node });
        } else {
            n.rx_busy = false;
        }
        self.ports[ingress as usize].ingress_bytes -= size;
        if enabled && self.ports[ingress as usize].upstream_paused && rx_bytes <= xon {
            self.send_pfc(ingress, false);
        }
        self.deliver(node, pkt)
    }

    fn deliver(&mut self, node: u32, pkt: u32) -> Result<(), SimError> {
        match self.pool.get(pkt).kind {
            PacketKind::Data => {
                self.on_data(node, pkt);
                Ok(())
            }
            PacketKind::Ack => self.on_ack(pkt),
            PacketKind::Cnp => {
                self.on_cnp(pkt);
                Ok(())
            }
            PacketKind::Pause | PacketKind::Resume => Ok(()),
        }
    }

    /// Receiver side: in-order delivery, CNP pacing and ACK generation.
    fn on_data(&mut self, node: u32, pkt: u32) {
        let now = self.engine.now().as_ns();
        let p = self.pool.remove(pkt);
        let cnp_interval = self.cfg.cc_params.dcqcn.cnp_interval_ns;
        let dcqcn = self.cfg.cc == CcVariant::Dcqcn;
        let f = self.flows.at(p.flow_id);
        if p.seq != f.received {
            self.counters.out_of_order += 1;
        }
        f.received += p.payload as u64;
        self.counters.delivered_bytes += p.payload as u64;
        let cnp = dcqcn
            && f.controlled
            && p.ecn_marked
            && f.last_cnp.is_none_or(|t| now >= t + cnp_interval);
        if cnp {
            f.last_cnp = Some(now);
        }
        let ack = f.per_packet_ack || f.received == f.total;
        let (ack_size, ack_hash, received, src) = (f.ack_size, f.ack_hash, f.received, f.src);
        if cnp {
            let c = Packet::control_for(PacketKind::Cnp, &p, self.cfg.fabric.ack_bytes, ack_hash);
            self.counters.cnps_sent += 1;
            self.host_send_control(node, src, c);
        }
        if ack {
            let mut a = Packet::control_for(PacketKind::Ack, &p, ack_size, ack_hash);
            a.seq = received;
            a.ecn_echo = p.ecn_marked;
            a.int_stack = p.int_stack;
            a.pint = p.pint;
            self.counters.acks_sent += 1;
            self.host_send_control(node, src, a);
        }
    }

    fn host_send_control(&mut self, node: u32, dst: u32, c: Packet) {
        let port = self.topo.next_port(node as usize, dst, c.hash);
        let size = c.size as u64;
        let id = self.pool.insert(c);
        let p = &mut self.ports[port as usize];
        p.ctrl.push_back(id);
        p.depth += size;
        self.nic_kick(port);
    }

    /// Sender side: cumulative ACK, controller update, completion.
    fn on_ack(&mut self, pkt: u32) -> Result<(), SimError> {
        let now = self.engine.now();
        let a = self.pool.remove(pkt);
        let params = &self.cfg.cc_params;
        let f = self.flows.at(a.flow_id);
        if a.seq <= f.acked {
            self.counters.duplicate_acks += 1;
            return Ok(());
        }
        let newly = a.seq - f.acked;
        f.acked = a.seq;
        if f.controlled {
            match f.cc.variant {
                CcVariant::Dctcp => {
                    dctcp::on_ack(&mut f.cc, newly, a.ecn_echo, a.seq, f.sent, &params.dctcp, f.mtu as u64);
                }
                CcVariant::Timely => {
                    if a.seq > f.cc.timely().next_update_seq {
                        let seg = params.timely.segment_bytes;
                        f.cc.timely().next_update_seq = if seg == 0 { f.sent } else { a.seq + seg };
                        let rtt = now.as_ns() as i64 - a.sent_at.as_ns() as i64;
                        timely::on_rtt(&mut f.cc, rtt, &params.timely, f.ctx.line_rate)?;
                    }
                }
                CcVariant::Hpcc => {
                    hpcc::on_ack(&mut f.cc, a.seq, f.sent, &a.int_stack, &params.hpcc, &f.ctx)?;
                }
                CcVariant::HpccPint => {
                    if let Some(code) = a.pint {
                        hpcc::on_pint_feedback(&mut f.cc, code, a.seq, f.sent, &params.hpcc, &f.ctx);
                    }
                }
                CcVariant::Dcqcn | CcVariant::PfcOnly => {}
            }
            f.cc.last_update = now;
        }
        if f.acked == f.total {
            self.finish_flow(a.flow_id);
            return Ok(());
        }
        if f.state == SendState::Blocked && f.window_open() {
            let port = f.port;
            let busy = self.ports[port as usize].busy_until.max(now.as_ns());
            self.requeue(port, a.flow_id, busy);
            self.nic_kick(port);
        }
        Ok(())
    }

    fn finish_flow(&mut self, id: u32) {
        let now = self.engine.now();
        let mut f = self.flows.remove(id);
        f.finish = Some(now);
        if self.cfg.record_flows {
            self.flows.records.push(FlowRecord {
                id: f.uid,
                src: f.src,
                dst: f.dst,
                bytes: f.total,
                start_ns: f.start.as_ns(),
                finish_ns: now.as_ns(),
            });
        }
        self.completed.push(f.key.flow_tag);
    }

    fn on_cnp(&mut self, pkt: u32) {
        let now = self.engine.now();
        let c = self.pool.remove(pkt);
        let timer = self.cfg.cc_params.dcqcn.alpha_timer_ns;
        let token = self.token();
        let params = &self.cfg.cc_params.dcqcn;
        let Some(f) = self.flows.slots.get_mut(c.flow_id as usize).and_then(|f| f.as_mut()) else {
            return;
        };
        dcqcn::on_cnp(&mut f.cc, params, now);
        f.timer_token = token;
        self.engine.schedule_in(timer, Event::DcqcnTimer { flow: c.flow_id, token });
    }

    pub(crate) fn on_dcqcn_timer(&mut self, flow: u32, token: u32) {
        let now = self.engine.now();
        let timer = self.cfg.cc_params.dcqcn.alpha_timer_ns;
        let params = &self.cfg.cc_params.dcqcn;
        let Some(f) = self.flows.slots.get_mut(flow as usize).and_then(|f| f.as_mut()) else {
            return;
        };
        if f.timer_token != token {
            return;
        }
        dcqcn::recover(&mut f.cc, params, f.ctx.line_rate, now);
        if f.cc.rate < f.ctx.line_rate || f.cc.alpha > 1e-3 {
            self.engine.schedule_in(timer, Event::DcqcnTimer { flow, token });
        }
    }
}

fn rx_time(carry: &mut u64, bytes: u64, bps: u64) -> u64 {
    let num = bytes * 8_000_000_000 + *carry;
    *carry = num % bps;
    num / bps
}
