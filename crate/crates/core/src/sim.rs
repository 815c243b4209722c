//! One simulation instance: the event loop that ties the fabric, the hosts
//! and an [`Application`] driving flows together.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{Engine, EngineError, SimTime};
use crate::fabric::packet::{PacketPool, INT_RECORD_WIRE_BYTES};
use crate::fabric::{FabricConfig, NodeState, PortState};
use crate::topology::{NodeKind, Topology};
use crate::transport::cc::{CcError, CcParams, CcVariant};
use crate::transport::FlowTable;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Cc(#[from] CcError),
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("shared buffer of {node} overflowed with PFC enabled")]
    BufferOverflow { node: String },
    #[error("simulation went idle with {active} unfinished flows")]
    Stalled { active: usize },
    #[error("{0}")]
    App(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub cc: CcVariant,
    pub cc_params: CcParams,
    pub fabric: FabricConfig,
    pub seed: u64,
    /// Keep one completion record per flow.
    pub record_flows: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cc: CcVariant::PfcOnly,
            cc_params: CcParams::default(),
            fabric: FabricConfig::default(),
            seed: 1,
            record_flows: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Event {
    /// A packet finished crossing the link of egress `port`.
    Arrive { pkt: u32, port: u32 },
    /// Switch egress `port` finished serializing.
    TxDone { port: u32 },
    NicWake { port: u32, token: u32 },
    /// PAUSE or RESUME reaching the owner of egress `port`.
    Pfc { port: u32, pause: bool },
    DcqcnTimer { flow: u32, token: u32 },
    RxDrain { node: u32 },
    App { token: u64 },
}

/// Whatever issues flows: a collective executor, a training loop, a test.
pub trait Application {
    fn start(&mut self, sim: &mut Simulator) -> Result<(), SimError>;
    fn on_flow_done(&mut self, sim: &mut Simulator, tag: u64) -> Result<(), SimError>;
    fn on_timer(&mut self, _sim: &mut Simulator, _token: u64) -> Result<(), SimError> {
        Ok(())
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Counters {
    /// DATA payload bytes handed to the wire by senders.
    pub injected_bytes: u64,
    pub delivered_bytes: u64,
    pub data_packets: u64,
    pub acks_sent: u64,
    pub cnps_sent: u64,
    pub duplicate_acks: u64,
    pub out_of_order: u64,
}

pub struct Simulator {
    pub(crate) engine: Engine<Event>,
    pub(crate) topo: Arc<Topology>,
    pub(crate) cfg: SimConfig,
    pub(crate) ports: Vec<PortState>,
    pub(crate) nodes: Vec<NodeState>,
    pub(crate) pool: PacketPool,
    pub(crate) flows: FlowTable,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) base_rtt: u64,
    pub(crate) counters: Counters,
    pub(crate) completed: Vec<u64>,
    pub(crate) guard_xoff: Vec<u64>,
    pub(crate) guard_xon: Vec<u64>,
    pub(crate) next_token: u32,
}

impl Simulator {
    pub fn new(topo: Arc<Topology>, cfg: SimConfig) -> Self {
        let ports = topo
            .ports()
            .iter()
            .map(|p| {
                PortState::new(
                    p.node as u32,
                    p.peer as u32,
                    p.peer_port,
                    p.link.bandwidth,
                    p.link.latency_ns,
                    &cfg.fabric.ecn,
                    !topo.is_switch(p.node),
                )
            })
            .collect();
        let nodes = (0..topo.num_nodes()).map(|_| NodeState::default()).collect();
        let (guard_xoff, guard_xon) = (0..topo.num_nodes())
            .map(|n| {
                let reserve = topo.node_ports(n).len() as u64 * cfg.fabric.pfc.headroom;
                let xoff = topo.buffer_bytes().saturating_sub(reserve);
                (xoff, xoff.saturating_sub(reserve))
            })
            .unzip();
        let f = &cfg.fabric;
        let int_bytes = if cfg.cc == CcVariant::Hpcc {
            topo.switch_hops(0, topo.num_npus() as u32 - 1) as u32 * INT_RECORD_WIRE_BYTES
        } else {
            0
        };
        let base_rtt = topo.base_rtt_ns((f.mtu + f.header + int_bytes) as u64, (f.ack_bytes + int_bytes) as u64);
        Simulator {
            engine: Engine::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            topo,
            cfg,
            ports,
            nodes,
            pool: PacketPool::default(),
            flows: FlowTable::default(),
            base_rtt,
            counters: Counters::default(),
            completed: Vec::new(),
            guard_xoff,
            guard_xon,
            next_token: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Round trip used to size windows and normalize telemetry.
    pub fn base_rtt_ns(&self) -> u64 {
        self.base_rtt
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn events_executed(&self) -> u64 {
        self.engine.executed()
    }

    pub fn flows(&self) -> &FlowTable {
        &self.flows
    }

    /// Controller state of a live flow, for experiments that pin a rate or
    /// window by hand.
    pub fn flow_cc_mut(&mut self, id: u32) -> Option<&mut crate::transport::cc::CcState> {
        self.flows.get_mut(id).map(|f| &mut f.cc)
    }

    pub fn node_state(&self, node: usize) -> &NodeState {
        &self.nodes[node]
    }

    pub fn port_state(&self, port: u32) -> &PortState {
        &self.ports[port as usize]
    }

    pub fn packets_in_flight(&self) -> usize {
        self.pool.live()
    }

    /// Record every executed `(time, seq)` pair.
    pub fn record_trace(&mut self, on: bool) {
        self.engine.record_trace(on);
    }

    pub fn trace(&self) -> &[(SimTime, u64)] {
        self.engine.trace()
    }

    /// Fire [`Application::on_timer`] with `token` after `delay_ns`.
    pub fn schedule_app(&mut self, delay_ns: u64, token: u64) {
        self.engine.schedule_in(delay_ns, Event::App { token });
    }

    pub(crate) fn token(&mut self) -> u32 {
        self.next_token = self.next_token.wrapping_add(1);
        self.next_token
    }

    /// Drive `app` until no events remain. Fails if flows are left
    /// unfinished.
    pub fn run(&mut self, app: &mut dyn Application) -> Result<SimTime, SimError> {
        app.start(self)?;
        self.notify(app)?;
        while let Some(ev) = self.engine.pop() {
            match ev {
                Event::Arrive { pkt, port } => self.on_arrive(pkt, port)?,
                Event::TxDone { port } => self.on_tx_done(port),
                Event::NicWake { port, token } => {
                    let p = &mut self.ports[port as usize];
                    if p.wake_token == token {
                        p.wake_at = u64::MAX;
                        self.nic_kick(port);
                    }
                }
                Event::Pfc { port, pause } => self.on_pfc(port, pause),
                Event::DcqcnTimer { flow, token } => self.on_dcqcn_timer(flow, token),
                Event::RxDrain { node } => self.on_rx_drain(node)?,
                Event::App { token } => app.on_timer(self, token)?,
            }
            if !self.completed.is_empty() {
                self.notify(app)?;
            }
        }
        if self.flows.active() > 0 {
            return Err(SimError::Stalled {
                active: self.flows.active(),
            });
        }
        Ok(self.engine.now())
    }

    fn notify(&mut self, app: &mut dyn Application) -> Result<(), SimError> {
        while !self.completed.is_empty() {
            let done = std::mem::take(&mut self.completed);
            for tag in done {
                app.on_flow_done(self, tag)?;
            }
        }
        Ok(())
    }

    pub fn switch_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.topo.num_nodes()).filter(|&n| self.topo.is_switch(n))
    }

    pub fn total_pause_sent(&self) -> u64 {
        self.nodes.iter().map(|n| n.pause_sent).sum()
    }

    pub fn total_drops(&self) -> u64 {
        self.nodes.iter().map(|n| n.drops).sum()
    }

    /// Largest aggregate occupancy any switch of `kind` reached.
    pub fn peak_queue(&self, kind: Option<NodeKind>) -> u64 {
        self.switch_nodes()
            .filter(|&n| kind.is_none_or(|k| self.topo.node(n).kind == k))
            .map(|n| self.nodes[n].peak)
            .max()
            .unwrap_or(0)
    }

    /// `time_ns,switch_id,total_queue_bytes`
    pub fn write_queue_timeline<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_ns", "switch_id", "total_queue_bytes"])?;
        for n in self.switch_nodes() {
            let name = self.topo.node(n).to_string();
            for &(t, b) in &self.nodes[n].timeline.points {
                out.write_record([t.to_string(), name.clone(), b.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `switch_id,pause_sent,pause_received`, NICs included.
    pub fn write_pfc_counts<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["switch_id", "pause_sent", "pause_received"])?;
        for (n, s) in self.nodes.iter().enumerate() {
            out.write_record([
                self.topo.node(n).to_string(),
                s.pause_sent.to_string(),
                s.pause_received.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// `flow_id,src,dst,bytes,start_ns,finish_ns`
    pub fn write_flows<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["flow_id", "src", "dst", "bytes", "start_ns", "finish_ns"])?;
        for r in self.flows.records() {
            out.write_record([
                r.id.to_string(),
                self.topo.node(r.src as usize).to_string(),
                self.topo.node(r.dst as usize).to_string(),
                r.bytes.to_string(),
                r.start_ns.to_string(),
                r.finish_ns.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
