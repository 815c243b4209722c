//! Fabric construction: the single-switch star and the two-level CLOS
//! (NPU -> TOR -> spine), plus per-flow ECMP path selection.
//!
//! Every NPU owns one NIC link to exactly one switch. In the CLOS build the
//! NPUs of a server additionally share one logical scale-up switch that
//! stands in for the server's NVSwitch complex; traffic between NPUs of the
//! same server never leaves it.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::units::Bandwidth;

pub type PortId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("a star needs at least 2 NPUs, got {0}")]
    TooFewNpus(usize),
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("link bandwidth must be positive")]
    ZeroBandwidth,
    #[error(
        "TOR subscription is not 1:1: downlink {down_bps} bps vs uplink capacity {up_bps} bps per spine set"
    )]
    Oversubscribed { down_bps: u128, up_bps: u128 },
    #[error("ECMP group is empty")]
    EmptyGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Npu,
    Tor,
    Spine,
    /// One logical NVSwitch-style scale-up switch per server.
    ScaleUp,
}

impl NodeKind {
    fn prefix(self) -> &'static str {
        match self {
            NodeKind::Npu => "npu",
            NodeKind::Tor => "tor",
            NodeKind::Spine => "spine",
            NodeKind::ScaleUp => "scaleup",
        }
    }

    fn code(self) -> u64 {
        match self {
            NodeKind::Npu => 0,
            NodeKind::Tor => 1,
            NodeKind::Spine => 2,
            NodeKind::ScaleUp => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u32,
}

impl NodeId {
    pub const fn npu(index: u32) -> Self {
        NodeId {
            kind: NodeKind::Npu,
            index,
        }
    }

    pub const fn new(kind: NodeKind, index: u32) -> Self {
        NodeId { kind, index }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkSpec {
    pub bandwidth: Bandwidth,
    pub latency_ns: u64,
}

impl LinkSpec {
    pub fn new(bandwidth: Bandwidth, latency_ns: u64) -> Result<Self, TopologyError> {
        if bandwidth.as_bps() == 0 {
            return Err(TopologyError::ZeroBandwidth);
        }
        Ok(LinkSpec {
            bandwidth,
            latency_ns,
        })
    }
}

/// Identifies a flow for routing: stable for the flow's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub flow_tag: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl FlowKey {
    pub fn new(src: NodeId, dst: NodeId, flow_tag: u64) -> Self {
        FlowKey { src, dst, flow_tag }
    }

    /// The key with source and destination swapped (the ACK direction).
    pub fn reversed(&self) -> Self {
        FlowKey {
            src: self.dst,
            dst: self.src,
            flow_tag: self.flow_tag,
        }
    }

    /// Fixed, seedless 64-bit mix of (src, dst, flow_tag).
    pub fn hash64(&self) -> u64 {
        let s = (self.src.kind.code() << 32) | self.src.index as u64;
        let d = (self.dst.kind.code() << 32) | self.dst.index as u64;
        let mut h = splitmix64(s);
        h = splitmix64(h ^ d.rotate_left(17));
        splitmix64(h ^ self.flow_tag.rotate_left(41))
    }
}

/// Map a flow hash onto `[0, n)`. `salt` decorrelates successive switches
/// on the same path.
#[inline]
pub fn ecmp_index(hash: u64, salt: u64, n: usize) -> usize {
    let h = if salt == 0 {
        hash
    } else {
        splitmix64(hash ^ salt.wrapping_mul(0xD6E8_FEB8_6659_FD93))
    };
    ((h as u128 * n as u128) >> 64) as usize
}

/// Choose one member of an ECMP group for `key`.
pub fn ecmp_select(key: &FlowKey, group: &[PortId]) -> Result<usize, TopologyError> {
    if group.is_empty() {
        return Err(TopologyError::EmptyGroup);
    }
    Ok(ecmp_index(key.hash64(), 0, group.len()))
}

/// One direction of a full-duplex link, owned by `node`.
#[derive(Debug, Clone, Copy)]
pub struct Port {
    pub node: usize,
    pub peer: usize,
    pub peer_port: PortId,
    pub link: LinkSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    SingleSwitch,
    Clos,
}

/// Parameters of the two-level CLOS build. Defaults are the platform table
/// values at the 128-NPU experiment scale.
#[derive(Debug, Clone)]
pub struct ClosParams {
    pub racks: usize,
    pub servers_per_rack: usize,
    pub npus_per_server: usize,
    pub spines: usize,
    pub nic_link: LinkSpec,
    pub uplink: LinkSpec,
    /// Per-NPU attachment to the server's scale-up switch.
    pub scale_up: LinkSpec,
    pub buffer_bytes: u64,
    pub allow_oversubscription: bool,
}

impl Default for ClosParams {
    fn default() -> Self {
        ClosParams {
            racks: 8,
            servers_per_rack: 2,
            npus_per_server: 8,
            spines: 8,
            nic_link: LinkSpec {
                bandwidth: Bandwidth::gbps(200),
                latency_ns: 500,
            },
            uplink: LinkSpec {
                bandwidth: Bandwidth::gbps(200),
                latency_ns: 500,
            },
            scale_up: LinkSpec {
                bandwidth: Bandwidth::gbytes_per_sec(200),
                latency_ns: 25,
            },
            buffer_bytes: 32_000_000,
            allow_oversubscription: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    kind: TopologyKind,
    nodes: Vec<NodeId>,
    ports: Vec<Port>,
    node_ports: Vec<Vec<PortId>>,
    n_npus: usize,
    n_tors: usize,
    n_spines: usize,
    npu_nic: Vec<PortId>,
    npu_scale_up: Vec<Option<PortId>>,
    npu_server: Vec<u32>,
    npu_rack: Vec<u32>,
    tor_down: Vec<PortId>,
    scale_up_down: Vec<Option<PortId>>,
    uplink_groups: Vec<Vec<PortId>>,
    spine_down: Vec<Vec<Vec<PortId>>>,
    scale_up_groups: Vec<Vec<u32>>,
    buffer_bytes: u64,
    links_per_spine: usize,
}

struct Builder {
    nodes: Vec<NodeId>,
    ports: Vec<Port>,
    node_ports: Vec<Vec<PortId>>,
}

impl Builder {
    fn add_node(&mut self, id: NodeId) -> usize {
        self.nodes.push(id);
        self.node_ports.push(Vec::new());
        self.nodes.len() - 1
    }

    /// Returns (port at a, port at b).
    fn connect(&mut self, a: usize, b: usize, link: LinkSpec) -> (PortId, PortId) {
        let pa = self.ports.len() as PortId;
        let pb = pa + 1;
        self.ports.push(Port {
            node: a,
            peer: b,
            peer_port: pb,
            link,
        });
        self.ports.push(Port {
            node: b,
            peer: a,
            peer_port: pa,
            link,
        });
        self.node_ports[a].push(pa);
        self.node_ports[b].push(pb);
        (pa, pb)
    }
}

impl Topology {
    /// A star of `n_npus` NPUs on one switch; all links identical.
    pub fn build_single_switch(
        n_npus: usize,
        link: LinkSpec,
        buffer_bytes: u64,
    ) -> Result<Topology, TopologyError> {
        if n_npus < 2 {
            return Err(TopologyError::TooFewNpus(n_npus));
        }
        LinkSpec::new(link.bandwidth, link.latency_ns)?;
        let mut b = Builder {
            nodes: Vec::new(),
            ports: Vec::new(),
            node_ports: Vec::new(),
        };
        for i in 0..n_npus {
            b.add_node(NodeId::npu(i as u32));
        }
        let sw = b.add_node(NodeId::new(NodeKind::Tor, 0));
        let mut npu_nic = Vec::with_capacity(n_npus);
        let mut tor_down = Vec::with_capacity(n_npus);
        for i in 0..n_npus {
            let (pn, ps) = b.connect(i, sw, link);
            npu_nic.push(pn);
            tor_down.push(ps);
        }
        Ok(Topology {
            kind: TopologyKind::SingleSwitch,
            nodes: b.nodes,
            ports: b.ports,
            node_ports: b.node_ports,
            n_npus,
            n_tors: 1,
            n_spines: 0,
            npu_nic,
            npu_scale_up: vec![None; n_npus],
            npu_server: (0..n_npus as u32).collect(),
            npu_rack: vec![0; n_npus],
            tor_down,
            scale_up_down: vec![None; n_npus],
            uplink_groups: vec![Vec::new()],
            spine_down: Vec::new(),
            scale_up_groups: Vec::new(),
            buffer_bytes,
            links_per_spine: 0,
        })
    }

    /// Two-level CLOS: one TOR per rack, every TOR wired to every spine.
    ///
    /// Each TOR-spine pair gets as many parallel uplinks as needed for the
    /// rack's uplink capacity to equal its NIC capacity; anything other than
    /// an exact 1:1 ratio is rejected unless `allow_oversubscription` is set.
    pub fn build_clos(p: &ClosParams) -> Result<Topology, TopologyError> {
        for (name, v) in [
            ("racks", p.racks),
            ("servers_per_rack", p.servers_per_rack),
            ("npus_per_server", p.npus_per_server),
            ("spines", p.spines),
        ] {
            if v == 0 {
                return Err(TopologyError::ZeroCount(name));
            }
        }
        for l in [p.nic_link, p.uplink, p.scale_up] {
            LinkSpec::new(l.bandwidth, l.latency_ns)?;
        }
        let npus_per_rack = p.servers_per_rack * p.npus_per_server;
        let down_bps = npus_per_rack as u128 * p.nic_link.bandwidth.as_bps() as u128;
        let per_spine_bps = p.spines as u128 * p.uplink.bandwidth.as_bps() as u128;
        let links_per_spine = if down_bps.is_multiple_of(per_spine_bps) {
            (down_bps / per_spine_bps) as usize
        } else if p.allow_oversubscription {
            ((down_bps / per_spine_bps) as usize).max(1)
        } else {
            return Err(TopologyError::Oversubscribed {
                down_bps,
                up_bps: per_spine_bps,
            });
        };
        if links_per_spine == 0 && !p.allow_oversubscription {
            return Err(TopologyError::Oversubscribed {
                down_bps,
                up_bps: per_spine_bps,
            });
        }
        let links_per_spine = links_per_spine.max(1);

        let n_npus = p.racks * npus_per_rack;
        let n_servers = p.racks * p.servers_per_rack;
        let mut b = Builder {
            nodes: Vec::new(),
            ports: Vec::new(),
            node_ports: Vec::new(),
        };
        for i in 0..n_npus {
            b.add_node(NodeId::npu(i as u32));
        }
        let tors: Vec<usize> = (0..p.racks)
            .map(|r| b.add_node(NodeId::new(NodeKind::Tor, r as u32)))
            .collect();
        let spines: Vec<usize> = (0..p.spines)
            .map(|s| b.add_node(NodeId::new(NodeKind::Spine, s as u32)))
            .collect();
        let scale_ups: Vec<usize> = (0..n_servers)
            .map(|s| b.add_node(NodeId::new(NodeKind::ScaleUp, s as u32)))
            .collect();

        let mut npu_nic = Vec::with_capacity(n_npus);
        let mut tor_down = Vec::with_capacity(n_npus);
        let mut npu_scale_up = Vec::with_capacity(n_npus);
        let mut scale_up_down = Vec::with_capacity(n_npus);
        let mut npu_server = Vec::with_capacity(n_npus);
        let mut npu_rack = Vec::with_capacity(n_npus);
        let mut scale_up_groups = vec![Vec::new(); n_servers];
        for npu in 0..n_npus {
            let server = npu / p.npus_per_server;
            let rack = server / p.servers_per_rack;
            let (pn, pt) = b.connect(npu, tors[rack], p.nic_link);
            npu_nic.push(pn);
            tor_down.push(pt);
            let (pu, ps) = b.connect(npu, scale_ups[server], p.scale_up);
            npu_scale_up.push(Some(pu));
            scale_up_down.push(Some(ps));
            npu_server.push(server as u32);
            npu_rack.push(rack as u32);
            scale_up_groups[server].push(npu as u32);
        }
        let mut uplink_groups = vec![Vec::new(); p.racks];
        let mut spine_down = vec![vec![Vec::new(); p.racks]; p.spines];
        for (r, &tor) in tors.iter().enumerate() {
            for (s, &spine) in spines.iter().enumerate() {
                for _ in 0..links_per_spine {
                    let (pt, ps) = b.connect(tor, spine, p.uplink);
                    uplink_groups[r].push(pt);
                    spine_down[s][r].push(ps);
                }
            }
        }
        Ok(Topology {
            kind: TopologyKind::Clos,
            nodes: b.nodes,
            ports: b.ports,
            node_ports: b.node_ports,
            n_npus,
            n_tors: p.racks,
            n_spines: p.spines,
            npu_nic,
            npu_scale_up,
            npu_server,
            npu_rack,
            tor_down,
            scale_up_down,
            uplink_groups,
            spine_down,
            scale_up_groups,
            buffer_bytes: p.buffer_bytes,
            links_per_spine,
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn num_npus(&self) -> usize {
        self.n_npus
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> NodeId {
        self.nodes[idx]
    }

    /// Dense index of a node id.
    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        let i = id.index as usize;
        let base = match id.kind {
            NodeKind::Npu => (i < self.n_npus).then_some(0)?,
            NodeKind::Tor => (i < self.n_tors).then_some(self.n_npus)?,
            NodeKind::Spine => (i < self.n_spines).then_some(self.n_npus + self.n_tors)?,
            NodeKind::ScaleUp => {
                (i < self.scale_up_groups.len()).then_some(self.n_npus + self.n_tors + self.n_spines)?
            }
        };
        Some(base + i)
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    pub fn port(&self, id: PortId) -> &Port {
        &self.ports[id as usize]
    }

    pub fn node_ports(&self, node: usize) -> &[PortId] {
        &self.node_ports[node]
    }

    /// Number of full-duplex links.
    pub fn num_links(&self) -> usize {
        self.ports.len() / 2
    }

    pub fn is_switch(&self, node: usize) -> bool {
        node >= self.n_npus
    }

    /// Dense indices of all switch nodes of the given kind.
    pub fn switches_of(&self, kind: NodeKind) -> Vec<usize> {
        (self.n_npus..self.nodes.len())
            .filter(|&i| self.nodes[i].kind == kind)
            .collect()
    }

    pub fn buffer_bytes(&self) -> u64 {
        self.buffer_bytes
    }

    pub fn nic_port(&self, npu: u32) -> PortId {
        self.npu_nic[npu as usize]
    }

    pub fn nic_link(&self, npu: u32) -> LinkSpec {
        self.ports[self.npu_nic[npu as usize] as usize].link
    }

    pub fn scale_up_port(&self, npu: u32) -> Option<PortId> {
        self.npu_scale_up[npu as usize]
    }

    pub fn server_of(&self, npu: u32) -> u32 {
        self.npu_server[npu as usize]
    }

    pub fn rack_of(&self, npu: u32) -> u32 {
        self.npu_rack[npu as usize]
    }

    pub fn scale_up_groups(&self) -> &[Vec<u32>] {
        &self.scale_up_groups
    }

    /// Spine-facing ports of TOR `rack`, in build order.
    pub fn uplink_group(&self, rack: usize) -> &[PortId] {
        &self.uplink_groups[rack]
    }

    pub fn links_per_spine(&self) -> usize {
        self.links_per_spine
    }

    /// Whether traffic between two NPUs stays on the scale-up switch.
    pub fn same_server_scale_up(&self, a: u32, b: u32) -> bool {
        self.npu_scale_up[a as usize].is_some() && self.npu_server[a as usize] == self.npu_server[b as usize]
    }

    /// Egress port at `node` for a packet headed to NPU `dst` whose flow
    /// hashes to `hash`.
    #[inline]
    pub fn next_port(&self, node: usize, dst: u32, hash: u64) -> PortId {
        if node < self.n_npus {
            let src = node as u32;
            return if self.same_server_scale_up(src, dst) {
                self.npu_scale_up[node].unwrap()
            } else {
                self.npu_nic[node]
            };
        }
        match self.nodes[node].kind {
            NodeKind::ScaleUp => self.scale_up_down[dst as usize].unwrap(),
            NodeKind::Tor => {
                let rack = self.nodes[node].index;
                if self.npu_rack[dst as usize] == rack {
                    self.tor_down[dst as usize]
                } else {
                    let g = &self.uplink_groups[rack as usize];
                    g[ecmp_index(hash, node as u64, g.len())]
                }
            }
            NodeKind::Spine => {
                let s = self.nodes[node].index as usize;
                let g = &self.spine_down[s][self.npu_rack[dst as usize] as usize];
                g[ecmp_index(hash, node as u64, g.len())]
            }
            NodeKind::Npu => unreachable!(),
        }
    }

    /// Number of switches between two NPUs.
    pub fn switch_hops(&self, src: u32, dst: u32) -> usize {
        if self.same_server_scale_up(src, dst) || self.npu_rack[src as usize] == self.npu_rack[dst as usize] {
            1
        } else {
            3
        }
    }

    /// Full sequence of egress ports from `key.src` to `key.dst`.
    pub fn route(&self, key: &FlowKey) -> Vec<PortId> {
        let dst = key.dst.index;
        let hash = key.hash64();
        let mut node = key.src.index as usize;
        let mut path = Vec::with_capacity(4);
        while node != dst as usize {
            let p = self.next_port(node, dst, hash);
            path.push(p);
            node = self.ports[p as usize].peer;
        }
        path
    }

    /// Longest NIC-path round trip: propagation plus store-and-forward
    /// serialization of one data packet out and one ACK back.
    pub fn base_rtt_ns(&self, data_wire_bytes: u64, ack_bytes: u64) -> u64 {
        let far = match self.kind {
            TopologyKind::SingleSwitch => 1,
            TopologyKind::Clos => self.n_npus - 1,
        };
        // npu 0 and the last NPU sit in different racks whenever racks > 1
        let fwd = self.route(&FlowKey::new(NodeId::npu(0), NodeId::npu(far as u32), 0));
        fwd.iter()
            .map(|&p| {
                let l = self.ports[p as usize].link;
                2 * l.latency_ns
                    + l.bandwidth.tx_time_ns(data_wire_bytes)
                    + l.bandwidth.tx_time_ns(ack_bytes)
            })
            .sum()
    }

    /// Node/link listing as CSV: `entity,name,peer,bandwidth_bps,latency_ns`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "entity,name,peer,bandwidth_bps,latency_ns")?;
        for n in &self.nodes {
            writeln!(w, "node,{n},,,")?;
        }
        for p in self.ports.iter().step_by(2) {
            writeln!(
                w,
                "link,{},{},{},{}",
                self.nodes[p.node],
                self.nodes[p.peer],
                p.link.bandwidth.as_bps(),
                p.link.latency_ns
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn nic() -> LinkSpec {
        LinkSpec::new(Bandwidth::gbps(200), 500).unwrap()
    }

    #[test]
    fn star_of_eight() {
        let t = Topology::build_single_switch(8, nic(), 32_000_000).unwrap();
        assert_eq!(t.num_npus(), 8);
        assert_eq!(t.num_links(), 8);
        assert_eq!(t.switches_of(NodeKind::Tor).len(), 1);
        assert!(t.ports().iter().all(|p| p.link == nic()));
        assert_eq!(t.buffer_bytes(), 32_000_000);
    }

    #[test]
    fn star_of_128_and_minimal() {
        let t = Topology::build_single_switch(128, nic(), 32_000_000).unwrap();
        assert_eq!(t.num_links(), 128);
        assert_eq!(t.num_nodes(), 129);
        let t = Topology::build_single_switch(2, nic(), 32_000_000).unwrap();
        assert_eq!(t.num_links(), 2);
        assert_eq!(
            Topology::build_single_switch(1, nic(), 1).unwrap_err(),
            TopologyError::TooFewNpus(1)
        );
    }

    #[test]
    fn clos_sixteen_racks() {
        let p = ClosParams {
            racks: 16,
            ..Default::default()
        };
        let t = Topology::build_clos(&p).unwrap();
        assert_eq!(t.num_npus(), 256);
        assert_eq!(t.switches_of(NodeKind::Tor).len(), 16);
        assert_eq!(t.switches_of(NodeKind::Spine).len(), 8);
    }

    #[test]
    fn clos_default_is_128_npus_full_bisection() {
        let t = Topology::build_clos(&ClosParams::default()).unwrap();
        assert_eq!(t.num_npus(), 128);
        assert_eq!(t.switches_of(NodeKind::Tor).len(), 8);
        assert_eq!(t.switches_of(NodeKind::Spine).len(), 8);
        for r in 0..8 {
            let up: u64 = t
                .uplink_group(r)
                .iter()
                .map(|&p| t.port(p).link.bandwidth.as_bps())
                .sum();
            let tor = t.node_index(NodeId::new(NodeKind::Tor, r as u32)).unwrap();
            let down: u64 = t
                .node_ports(tor)
                .iter()
                .filter(|&&p| t.port(p).peer < t.num_npus())
                .map(|&p| t.port(p).link.bandwidth.as_bps())
                .sum();
            assert_eq!(up, down);
        }
        // exactly one NIC link per NPU, to exactly one TOR
        for npu in 0..128u32 {
            let tor_links = t
                .node_ports(npu as usize)
                .iter()
                .filter(|&&p| t.node(t.port(p).peer).kind == NodeKind::Tor)
                .count();
            assert_eq!(tor_links, 1);
        }
        assert!(t.scale_up_groups().iter().all(|g| g.len() == 8));
        let su = t.port(t.scale_up_port(0).unwrap()).link;
        assert_eq!(su.bandwidth, Bandwidth::gbytes_per_sec(200));
        assert_eq!(su.latency_ns, 25);
    }

    #[test]
    fn oversubscription_rejected_unless_allowed() {
        let p = ClosParams {
            spines: 3,
            ..Default::default()
        };
        assert!(matches!(
            Topology::build_clos(&p),
            Err(TopologyError::Oversubscribed { .. })
        ));
        let p = ClosParams {
            spines: 3,
            allow_oversubscription: true,
            ..Default::default()
        };
        assert!(Topology::build_clos(&p).is_ok());
    }

    #[test]
    fn degenerate_single_rack_still_has_spines() {
        let p = ClosParams {
            racks: 1,
            ..Default::default()
        };
        let t = Topology::build_clos(&p).unwrap();
        assert_eq!(t.switches_of(NodeKind::Spine).len(), 8);
        for dst in 1..16u32 {
            let path = t.route(&FlowKey::new(NodeId::npu(0), NodeId::npu(dst), 3));
            assert!(path
                .iter()
                .all(|&p| t.node(t.port(p).peer).kind != NodeKind::Spine));
        }
    }

    #[test]
    fn path_shapes() {
        let t = Topology::build_clos(&ClosParams::default()).unwrap();
        let kinds = |src: u32, dst: u32| -> Vec<NodeKind> {
            t.route(&FlowKey::new(NodeId::npu(src), NodeId::npu(dst), 9))
                .iter()
                .map(|&p| t.node(t.port(p).peer).kind)
                .collect()
        };
        assert_eq!(kinds(0, 5), vec![NodeKind::ScaleUp, NodeKind::Npu]);
        assert_eq!(kinds(0, 9), vec![NodeKind::Tor, NodeKind::Npu]);
        assert_eq!(
            kinds(0, 127),
            vec![NodeKind::Tor, NodeKind::Spine, NodeKind::Tor, NodeKind::Npu]
        );
    }

    #[test]
    fn inter_rack_pairs_see_every_spine() {
        let t = Topology::build_clos(&ClosParams::default()).unwrap();
        let spines: HashSet<usize> = (0..5000u64)
            .map(|tag| {
                let path = t.route(&FlowKey::new(NodeId::npu(3), NodeId::npu(100), tag));
                t.port(path[1]).peer
            })
            .collect();
        assert_eq!(spines.len(), 8);
    }

    #[test]
    fn ecmp_single_member_and_empty() {
        let k = FlowKey::new(NodeId::npu(1), NodeId::npu(2), 7);
        assert_eq!(ecmp_select(&k, &[42]).unwrap(), 0);
        assert_eq!(ecmp_select(&k, &[]), Err(TopologyError::EmptyGroup));
        let g = [0, 1, 2, 3, 4, 5, 6, 7];
        assert_eq!(ecmp_select(&k, &g).unwrap(), ecmp_select(&k, &g).unwrap());
    }

    #[test]
    fn ecmp_spreads_keys_evenly() {
        let g: Vec<PortId> = (0..8).collect();
        let mut counts = [0usize; 8];
        let mut n = 0;
        'outer: for src in 0..128u32 {
            for dst in 0..128u32 {
                if src == dst {
                    continue;
                }
                let k = FlowKey::new(NodeId::npu(src), NodeId::npu(dst), (src * 7 + dst) as u64);
                counts[ecmp_select(&k, &g).unwrap()] += 1;
                n += 1;
                if n == 10_000 {
                    break 'outer;
                }
            }
        }
        for c in counts {
            assert!((1000..=1500).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn csv_listing() {
        let t = Topology::build_single_switch(2, nic(), 1000).unwrap();
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(
            s,
            "entity,name,peer,bandwidth_bps,latency_ns\nnode,npu0,,,\nnode,npu1,,,\nnode,tor0,,,\n\
             link,npu0,tor0,200000000000,500\nlink,npu1,tor0,200000000000,500\n"
        );
    }

    #[test]
    fn base_rtt_covers_longest_path() {
        let t = Topology::build_clos(&ClosParams::default()).unwrap();
        // 4 hops, 500 ns each way, 42 ns data + 3 ns ack serialization per hop
        assert_eq!(t.base_rtt_ns(1048, 64), 4 * (1000 + 42 + 3));
        let s = Topology::build_single_switch(8, nic(), 1).unwrap();
        assert_eq!(s.base_rtt_ns(1048, 64), 2 * (1000 + 42 + 3));
    }
}
