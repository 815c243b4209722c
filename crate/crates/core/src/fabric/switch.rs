//! Per-packet dataplane handlers.

use rand::Rng;

use super::packet::{IntRecord, PacketKind, Telemetry};
use super::PfcAccounting;
use crate::sim::{Event, SimError, Simulator};
use crate::transport::cc::hpcc::pint_encode;

impl Simulator {
    /// A packet sent on egress `via` reached the other end of the link.
    pub(crate) fn on_arrive(&mut self, pkt: u32, via: u32) -> Result<(), SimError> {
        let (node, ingress) = {
            let p = &self.ports[via as usize];
            (p.peer, p.peer_port)
        };
        if self.topo.is_switch(node as usize) {
            self.on_packet_arrival(node, ingress, pkt)
        } else {
            self.host_receive(node, ingress, pkt)
        }
    }

    /// Route, mark and enqueue at switch `sw`.
    pub(crate) fn on_packet_arrival(&mut self, sw: u32, ingress: u32, pkt: u32) -> Result<(), SimError> {
        let now = self.engine.now().as_ns();
        let (size, kind, egress) = {
            let p = self.pool.get_mut(pkt);
            p.ingress = ingress;
            (p.size as u64, p.kind, self.topo.next_port(sw as usize, p.dst, p.hash))
        };
        let node = &mut self.nodes[sw as usize];
        if node.occupancy + size > self.topo.buffer_bytes() {
            node.drops += 1;
            if self.cfg.fabric.pfc.enabled {
                return Err(SimError::BufferOverflow {
                    node: self.topo.node(sw as usize).to_string(),
                });
            }
            self.pool.remove(pkt);
            return Ok(());
        }
        let port = &mut self.ports[egress as usize];
        if kind == PacketKind::Data && self.cfg.cc.uses_ecn() {
            let prob = self.cfg.fabric.ecn.mark_probability(port.depth, port.kmin, port.kmax);
            if prob >= 1.0 || (prob > 0.0 && self.rng.gen::<f64>() < prob) {
                self.pool.get_mut(pkt).ecn_marked = true;
            }
        }
        port.depth += size;
        if kind.is_control() {
            port.ctrl.push_back(pkt);
        } else {
            port.data.push_back(pkt);
        }
        self.ports[ingress as usize].ingress_bytes += size;
        let node = &mut self.nodes[sw as usize];
        node.occupancy += size;
        node.peak = node.peak.max(node.occupancy);
        node.timeline.record(self.cfg.fabric.timeline, now, node.occupancy);
        self.pfc_check_enqueue(sw, ingress);
        self.port_kick(egress);
        Ok(())
    }

    /// Start the next packet on switch egress `port` if it is free.
    pub(crate) fn port_kick(&mut self, port: u32) {
        let now = self.engine.now().as_ns();
        let p = &mut self.ports[port as usize];
        if p.busy_until <= now {
            let next = match p.ctrl.pop_front() {
                Some(id) => id,
                None if !p.paused => match p.data.pop_front() {
                    Some(id) => id,
                    None => return,
                },
                None => return,
            };
            self.switch_transmit(port, next);
        }
        let p = &mut self.ports[port as usize];
        let at = p.busy_until;
        if p.tx_at != Some(at) && (!p.ctrl.is_empty() || (!p.paused && !p.data.is_empty())) {
            p.tx_at = Some(at);
            self.engine.schedule_in(at - now, Event::TxDone { port });
        }
    }

    pub(crate) fn on_tx_done(&mut self, port: u32) {
        let now = self.engine.now().as_ns();
        let p = &mut self.ports[port as usize];
        if p.tx_at != Some(now) {
            return;
        }
        p.tx_at = None;
        self.port_kick(port);
    }

    /// Dequeue accounting, telemetry and serialization of `pkt` leaving a
    /// switch on `port`.
    fn switch_transmit(&mut self, port: u32, pkt: u32) {
        let now = self.engine.now().as_ns();
        let base_rtt = self.base_rtt;
        let p = &mut self.ports[port as usize];
        let packet = self.pool.get_mut(pkt);
        let size = packet.size;
        p.depth -= size as u64;
        p.tx_bytes += size as u64;
        match packet.telemetry {
            Telemetry::None => {}
            Telemetry::Int => {
                let _ = packet.int_stack.try_push(IntRecord {
                    timestamp: now,
                    queue_len: p.depth,
                    tx_bytes: p.tx_bytes,
                    link_bandwidth: p.bandwidth,
                });
            }
            Telemetry::Pint => {
                let u = p.util.observe(
                    IntRecord {
                        timestamp: now,
                        queue_len: p.depth,
                        tx_bytes: p.tx_bytes,
                        link_bandwidth: p.bandwidth,
                    },
                    base_rtt,
                );
                if let Some(code) = packet.pint.as_mut() {
                    *code = (*code).max(pint_encode(u));
                }
            }
        }
        let ingress = packet.ingress;
        let ser = p.serialize_ns(size);
        p.busy_until = now + ser;
        let arrive = ser + p.latency;
        let sw = p.node;
        self.engine.schedule_in(arrive, Event::Arrive { pkt, port });

        let node = &mut self.nodes[sw as usize];
        node.occupancy -= size as u64;
        node.timeline.record(self.cfg.fabric.timeline, now, node.occupancy);
        self.ports[ingress as usize].ingress_bytes -= size as u64;
        self.pfc_check_dequeue(sw, ingress);
    }

    /// Thresholds of the all-ports pause for switch `sw`.
    fn shared_thresholds(&self, sw: u32) -> (u64, u64) {
        let pfc = &self.cfg.fabric.pfc;
        match pfc.accounting {
            PfcAccounting::Shared => (pfc.xoff, pfc.xon),
            PfcAccounting::PerIngress => (self.guard_xoff[sw as usize], self.guard_xon[sw as usize]),
        }
    }

    /// PAUSE the upstream of `ingress` if it holds too much, or everyone
    /// contributing once the shared pool crosses its threshold.
    pub(crate) fn pfc_check_enqueue(&mut self, sw: u32, ingress: u32) {
        let pfc = &self.cfg.fabric.pfc;
        if !pfc.enabled {
            return;
        }
        let i = &self.ports[ingress as usize];
        if pfc.accounting == PfcAccounting::PerIngress && !i.upstream_paused && i.ingress_bytes > pfc.xoff {
            self.send_pfc(ingress, true);
        }
        let (xoff, _) = self.shared_thresholds(sw);
        let node = &mut self.nodes[sw as usize];
        if node.occupancy > xoff {
            if !node.guard_active {
                node.guard_active = true;
                for k in 0..self.topo.node_ports(sw as usize).len() {
                    let q = self.topo.node_ports(sw as usize)[k];
                    let qs = &self.ports[q as usize];
                    if !qs.upstream_paused && qs.ingress_bytes > 0 {
                        self.send_pfc(q, true);
                    }
                }
            } else if !self.ports[ingress as usize].upstream_paused {
                self.send_pfc(ingress, true);
            }
        }
    }

    pub(crate) fn pfc_check_dequeue(&mut self, sw: u32, ingress: u32) {
        let pfc = &self.cfg.fabric.pfc;
        if !pfc.enabled {
            return;
        }
        let per_ingress = pfc.accounting == PfcAccounting::PerIngress;
        let xon = pfc.xon;
        let (_, shared_xon) = self.shared_thresholds(sw);
        let node = &mut self.nodes[sw as usize];
        if node.guard_active {
            if node.occupancy > shared_xon {
                return;
            }
            node.guard_active = false;
            for k in 0..self.topo.node_ports(sw as usize).len() {
                let q = self.topo.node_ports(sw as usize)[k];
                let qs = &self.ports[q as usize];
                if qs.upstream_paused && (!per_ingress || qs.ingress_bytes <= xon) {
                    self.send_pfc(q, false);
                }
            }
            return;
        }
        let i = &self.ports[ingress as usize];
        if per_ingress && i.upstream_paused && i.ingress_bytes <= xon {
            self.send_pfc(ingress, false);
        }
    }

    /// Emit PAUSE (`pause`) or RESUME over the link behind local port
    /// `ingress`; it takes effect one propagation delay later.
    pub(crate) fn send_pfc(&mut self, ingress: u32, pause: bool) {
        let p = &mut self.ports[ingress as usize];
        p.upstream_paused = pause;
        let (upstream, lat, node) = (p.peer_port, p.latency, p.node);
        if pause {
            self.nodes[node as usize].pause_sent += 1;
        }
        self.engine.schedule_in(lat, Event::Pfc { port: upstream, pause });
    }

    pub(crate) fn on_pfc(&mut self, port: u32, pause: bool) {
        let p = &mut self.ports[port as usize];
        p.paused = pause;
        let (node, npu) = (p.node, p.owner_is_npu);
        if pause {
            self.nodes[node as usize].pause_received += 1;
        } else if npu {
            self.nic_kick(port);
        } else {
            self.port_kick(port);
        }
    }
}
