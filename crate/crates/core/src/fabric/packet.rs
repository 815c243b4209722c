//! Wire units carried through the fabric.

use arrayvec::ArrayVec;

use crate::engine::SimTime;
use crate::topology::FlowKey;

/// Most switches any path crosses (NPU -> TOR -> spine -> TOR -> NPU).
pub const MAX_HOPS: usize = 4;

/// Bytes a switch adds to a DATA packet when it appends one INT record.
pub const INT_RECORD_WIRE_BYTES: u32 = 16;

/// Bytes a PINT sender adds to every DATA packet.
pub const PINT_WIRE_BYTES: u32 = 1;

/// What a switch writes into a DATA packet on the way through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Telemetry {
    #[default]
    None,
    /// Append one [`IntRecord`] per hop.
    Int,
    /// Keep the per-port utilization estimate current; carriers also take
    /// the path maximum in [`Packet::pint`].
    Pint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Data,
    Ack,
    Cnp,
    Pause,
    Resume,
}

impl PacketKind {
    /// Control traffic rides a strict-priority class that PFC never pauses.
    pub fn is_control(self) -> bool {
        !matches!(self, PacketKind::Data)
    }
}

/// Per-hop telemetry appended by a switch on the egress it selected.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntRecord {
    pub timestamp: u64,
    pub queue_len: u64,
    /// Cumulative bytes transmitted on the egress port.
    pub tx_bytes: u64,
    pub link_bandwidth: u64,
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub kind: PacketKind,
    pub flow: FlowKey,
    /// Index of the flow in the simulator's flow table.
    pub flow_id: u32,
    pub src: u32,
    pub dst: u32,
    /// Byte offset for DATA, cumulative acknowledged bytes for ACK.
    pub seq: u64,
    pub payload: u32,
    /// Bytes on the wire, headers and telemetry included.
    pub size: u32,
    pub ecn_marked: bool,
    /// ACK only: the acknowledged packet carried an ECN mark.
    pub ecn_echo: bool,
    /// When the DATA packet left the sender (echoed back in the ACK).
    pub sent_at: SimTime,
    pub hash: u64,
    pub telemetry: Telemetry,
    pub int_stack: ArrayVec<IntRecord, MAX_HOPS>,
    /// PINT carrier packets hold the max quantized utilization seen so far.
    pub pint: Option<u8>,
    /// Port of the current switch this packet entered through.
    pub ingress: u32,
}

impl Packet {
    pub fn data(flow: FlowKey, flow_id: u32, seq: u64, payload: u32, header: u32, hash: u64) -> Self {
        Packet {
            kind: PacketKind::Data,
            flow,
            flow_id,
            src: flow.src.index,
            dst: flow.dst.index,
            seq,
            payload,
            size: payload + header,
            ecn_marked: false,
            ecn_echo: false,
            sent_at: SimTime::ZERO,
            hash,
            telemetry: Telemetry::None,
            int_stack: ArrayVec::new(),
            pint: None,
            ingress: u32::MAX,
        }
    }

    /// A control packet (ACK/CNP) travelling from `data`'s receiver back to
    /// its sender.
    pub fn control_for(kind: PacketKind, data: &Packet, size: u32, reverse_hash: u64) -> Self {
        Packet {
            kind,
            flow: data.flow,
            flow_id: data.flow_id,
            src: data.dst,
            dst: data.src,
            seq: 0,
            payload: 0,
            size,
            ecn_marked: false,
            ecn_echo: false,
            sent_at: data.sent_at,
            hash: reverse_hash,
            telemetry: Telemetry::None,
            int_stack: ArrayVec::new(),
            pint: None,
            ingress: u32::MAX,
        }
    }
}

/// Slab of in-flight packets, addressed by `u32` ids so events stay small.
#[derive(Default)]
pub struct PacketPool {
    slots: Vec<Option<Packet>>,
    free: Vec<u32>,
    live: usize,
}

impl PacketPool {
    pub fn insert(&mut self, p: Packet) -> u32 {
        self.live += 1;
        if let Some(id) = self.free.pop() {
            self.slots[id as usize] = Some(p);
            id
        } else {
            self.slots.push(Some(p));
            (self.slots.len() - 1) as u32
        }
    }

    #[inline]
    pub fn get(&self, id: u32) -> &Packet {
        self.slots[id as usize].as_ref().expect("stale packet id")
    }

    #[inline]
    pub fn get_mut(&mut self, id: u32) -> &mut Packet {
        self.slots[id as usize].as_mut().expect("stale packet id")
    }

    pub fn remove(&mut self, id: u32) -> Packet {
        self.live -= 1;
        self.free.push(id);
        self.slots[id as usize].take().expect("stale packet id")
    }

    pub fn live(&self) -> usize {
        self.live
    }
}
