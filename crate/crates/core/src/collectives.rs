//! Collectives as dependency graphs of point-to-point sends.
//!
//! A dependency is either a single op or a barrier (a set of ops), so that
//! "after every send into NPU i" costs one edge instead of P.

use std::io::Write;

use thiserror::Error;

use crate::fabric::FabricConfig;
use crate::sim::{Application, SimError, Simulator};
use crate::topology::{FlowKey, NodeId, Topology};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("need at least {need} NPUs, got {got}")]
    TooFewNpus { need: usize, got: usize },
    #[error("incast needs at least one sender")]
    NoSenders,
    #[error("incast target {0} is also a sender")]
    TargetIsSender(u32),
    #[error("chunk count must be at least 1")]
    ZeroChunks,
    #[error("collective size must be positive")]
    ZeroBytes,
    #[error("scale-up groups must all have the same size")]
    UnevenGroups,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollectiveKind {
    Incast,
    AllToAll,
    AllReduce1d,
    AllReduce2d,
    ReduceScatter,
    AllGather,
}

impl CollectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            CollectiveKind::Incast => "incast",
            CollectiveKind::AllToAll => "alltoall",
            CollectiveKind::AllReduce1d => "allreduce_1d",
            CollectiveKind::AllReduce2d => "allreduce_2d",
            CollectiveKind::ReduceScatter => "reduce_scatter",
            CollectiveKind::AllGather => "all_gather",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dep {
    Op(u32),
    Barrier(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendOp {
    pub id: u32,
    pub src: u32,
    pub dst: u32,
    pub bytes: u64,
    pub stage: u32,
    pub chunk: u32,
    pub deps: Vec<Dep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectivePlan {
    pub kind: CollectiveKind,
    pub ops: Vec<SendOp>,
    /// Member ops of each barrier.
    pub barriers: Vec<Vec<u32>>,
    /// Payload after padding.
    pub total_bytes: u64,
    pub requested_bytes: u64,
    pub n_chunks: u32,
    pub npus: Vec<u32>,
}

/// Round `bytes` up so it splits evenly into `parts` pieces of whole
/// `grain`s.
pub fn pad_bytes(bytes: u64, parts: u64, grain: u64) -> u64 {
    let q = parts * grain;
    bytes.div_ceil(q) * q
}

/// Byte granularity used when padding collective buffers.
pub const PAD_GRAIN: u64 = 1000;

/// Peers of position `i` among `n`, starting at `i+1` and wrapping, so that
/// the k-th sends of all NPUs form a permutation.
fn rotated_peers(i: usize, n: usize) -> impl Iterator<Item = usize> {
    (1..n).map(move |k| (i + k) % n)
}

struct Builder {
    ops: Vec<SendOp>,
    barriers: Vec<Vec<u32>>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            ops: Vec::new(),
            barriers: Vec::new(),
        }
    }

    fn op(&mut self, src: u32, dst: u32, bytes: u64, stage: u32, deps: Vec<Dep>) -> u32 {
        let id = self.ops.len() as u32;
        self.ops.push(SendOp {
            id,
            src,
            dst,
            bytes,
            stage,
            chunk: 0,
            deps,
        });
        id
    }

    fn barrier(&mut self, members: Vec<u32>) -> u32 {
        self.barriers.push(members);
        (self.barriers.len() - 1) as u32
    }
}

pub fn plan_incast(senders: &[u32], target: u32, bytes_each: u64) -> Result<CollectivePlan, PlanError> {
    if senders.is_empty() {
        return Err(PlanError::NoSenders);
    }
    if senders.contains(&target) {
        return Err(PlanError::TargetIsSender(target));
    }
    if bytes_each == 0 {
        return Err(PlanError::ZeroBytes);
    }
    let mut b = Builder::new();
    for &s in senders {
        b.op(s, target, bytes_each, 0, Vec::new());
    }
    let mut npus = senders.to_vec();
    npus.push(target);
    Ok(CollectivePlan {
        kind: CollectiveKind::Incast,
        ops: b.ops,
        barriers: b.barriers,
        total_bytes: bytes_each * senders.len() as u64,
        requested_bytes: bytes_each * senders.len() as u64,
        n_chunks: 1,
        npus,
    })
}

/// Direct All-To-All: every NPU sends `total/P` to every other NPU.
pub fn plan_alltoall(npus: &[u32], total_bytes: u64, n_chunks: u32) -> Result<CollectivePlan, PlanError> {
    let p = npus.len();
    check(p, 2, total_bytes, n_chunks)?;
    let padded = pad_bytes(total_bytes, (p as u64) * n_chunks as u64, PAD_GRAIN);
    let seg = padded / p as u64;
    let mut b = Builder::new();
    for (i, &s) in npus.iter().enumerate() {
        for j in rotated_peers(i, p) {
            b.op(s, npus[j], seg, 0, Vec::new());
        }
    }
    let plan = CollectivePlan {
        kind: CollectiveKind::AllToAll,
        ops: b.ops,
        barriers: b.barriers,
        total_bytes: padded,
        requested_bytes: total_bytes,
        n_chunks: 1,
        npus: npus.to_vec(),
    };
    chunk_pipeline(&plan, n_chunks)
}

fn check(p: usize, need: usize, bytes: u64, n_chunks: u32) -> Result<(), PlanError> {
    if p < need {
        return Err(PlanError::TooFewNpus { need, got: p });
    }
    if bytes == 0 {
        return Err(PlanError::ZeroBytes);
    }
    if n_chunks == 0 {
        return Err(PlanError::ZeroChunks);
    }
    Ok(())
}

/// Direct reduce-scatter among `npus` on `seg`-byte segments, then
/// all-gather of each reduced segment once every send into its owner is
/// done. Returns the barrier ids of the two phases ("all sends into
/// npus[i]").
fn direct_rs_ag(
    b: &mut Builder,
    npus: &[u32],
    seg: u64,
    rs_stage: u32,
    ag_stage: u32,
    rs_deps: &dyn Fn(usize) -> Vec<Dep>,
) -> Vec<u32> {
    let p = npus.len();
    let mut into = vec![Vec::with_capacity(p.saturating_sub(1)); p];
    for (i, &s) in npus.iter().enumerate() {
        for j in rotated_peers(i, p) {
            let id = b.op(s, npus[j], seg, rs_stage, rs_deps(i));
            into[j].push(id);
        }
    }
    let rs_into: Vec<u32> = into.into_iter().map(|m| b.barrier(m)).collect();
    let mut ag_into = vec![Vec::with_capacity(p.saturating_sub(1)); p];
    for (i, &s) in npus.iter().enumerate() {
        for j in rotated_peers(i, p) {
            let id = b.op(s, npus[j], seg, ag_stage, vec![Dep::Barrier(rs_into[i])]);
            ag_into[j].push(id);
        }
    }
    ag_into.into_iter().map(|m| b.barrier(m)).collect()
}

/// Flat direct All-Reduce over all `npus`.
pub fn plan_allreduce_1d(npus: &[u32], total_bytes: u64, n_chunks: u32) -> Result<CollectivePlan, PlanError> {
    let p = npus.len();
    check(p, 2, total_bytes, n_chunks)?;
    let padded = pad_bytes(total_bytes, (p as u64) * n_chunks as u64, PAD_GRAIN);
    let mut b = Builder::new();
    direct_rs_ag(&mut b, npus, padded / p as u64, 0, 1, &|_| Vec::new());
    let plan = CollectivePlan {
        kind: CollectiveKind::AllReduce1d,
        ops: b.ops,
        barriers: b.barriers,
        total_bytes: padded,
        requested_bytes: total_bytes,
        n_chunks: 1,
        npus: npus.to_vec(),
    };
    chunk_pipeline(&plan, n_chunks)
}

/// Hierarchical All-Reduce: reduce-scatter inside each group, reduce-scatter
/// across groups among same-position NPUs, then the two all-gathers in
/// reverse order. Empty stages (groups of one, or a single group) are
/// skipped, so one-NPU groups give exactly the flat plan.
pub fn plan_allreduce_2d(groups: &[Vec<u32>], total_bytes: u64, n_chunks: u32) -> Result<CollectivePlan, PlanError> {
    let l = groups.first().map_or(0, |g| g.len());
    if groups.iter().any(|g| g.len() != l) || l == 0 {
        return Err(PlanError::UnevenGroups);
    }
    let n = groups.len();
    let p = n * l;
    check(p, 2, total_bytes, n_chunks)?;
    let padded = pad_bytes(total_bytes, (p as u64) * n_chunks as u64, PAD_GRAIN);
    let shard = padded / l as u64;
    let seg = shard / n as u64;
    let mut b = Builder::new();
    let mut stage = 0;

    // local reduce-scatter; barrier per NPU of everything it receives
    let mut local_in: Option<Vec<Vec<u32>>> = None;
    if l > 1 {
        let mut into = vec![vec![Vec::new(); l]; n];
        for (g, grp) in groups.iter().enumerate() {
            for (a, &s) in grp.iter().enumerate() {
                for c in rotated_peers(a, l) {
                    into[g][c].push(b.op(s, grp[c], shard, stage, Vec::new()));
                }
            }
        }
        let bars = into
            .into_iter()
            .map(|per| per.into_iter().map(|m| b.barrier(m)).collect())
            .collect();
        local_in = Some(bars);
        stage += 1;
    }

    // cross-group phases among NPUs at the same position
    let mut global_in: Option<Vec<Vec<u32>>> = None;
    if n > 1 {
        let mut per_pos = vec![vec![0u32; l]; n];
        for pos in 0..l {
            let ring: Vec<u32> = groups.iter().map(|g| g[pos]).collect();
            let deps = |i: usize| match &local_in {
                Some(li) => vec![Dep::Barrier(li[i][pos])],
                None => Vec::new(),
            };
            let ag = direct_rs_ag(&mut b, &ring, seg, stage, stage + 1, &deps);
            for (g, bar) in ag.into_iter().enumerate() {
                per_pos[g][pos] = bar;
            }
        }
        global_in = Some(per_pos);
        stage += 2;
    }

    // local all-gather of each NPU's complete shard
    if l > 1 {
        for (g, grp) in groups.iter().enumerate() {
            for (a, &s) in grp.iter().enumerate() {
                let dep = match (&global_in, &local_in) {
                    (Some(gi), _) => Dep::Barrier(gi[g][a]),
                    (None, Some(li)) => Dep::Barrier(li[g][a]),
                    (None, None) => unreachable!(),
                };
                for c in rotated_peers(a, l) {
                    b.op(s, grp[c], shard, stage, vec![dep]);
                }
            }
        }
    }

    let plan = CollectivePlan {
        kind: if l == 1 {
            CollectiveKind::AllReduce1d
        } else {
            CollectiveKind::AllReduce2d
        },
        ops: b.ops,
        barriers: b.barriers,
        total_bytes: padded,
        requested_bytes: total_bytes,
        n_chunks: 1,
        npus: groups.iter().flatten().copied().collect(),
    };
    chunk_pipeline(&plan, n_chunks)
}

/// Split every op of an unchunked plan into `n_chunks` equal pieces.
///
/// Chunk `c` keeps the plan's own dependencies among chunk-`c` copies. On
/// top of that, All-To-All chunks are separated by a full barrier, while
/// other collectives only wait for the same send of chunk `c-1`, so
/// different stages of consecutive chunks overlap.
pub fn chunk_pipeline(plan: &CollectivePlan, n_chunks: u32) -> Result<CollectivePlan, PlanError> {
    if n_chunks == 0 {
        return Err(PlanError::ZeroChunks);
    }
    if n_chunks == 1 || plan.n_chunks != 1 {
        return Ok(plan.clone());
    }
    let m = plan.ops.len() as u32;
    let nb = plan.barriers.len() as u32;
    let k = n_chunks as u64;
    let mut ops = Vec::with_capacity(plan.ops.len() * n_chunks as usize);
    let mut barriers = Vec::with_capacity((plan.barriers.len() + 1) * n_chunks as usize);
    for c in 0..n_chunks {
        for bar in &plan.barriers {
            barriers.push(bar.iter().map(|&o| c * m + o).collect());
        }
    }
    let full_barrier = plan.kind == CollectiveKind::AllToAll;
    if full_barrier {
        for c in 0..n_chunks {
            barriers.push((c * m..(c + 1) * m).collect());
        }
    }
    for c in 0..n_chunks {
        for op in &plan.ops {
            let mut deps: Vec<Dep> = op
                .deps
                .iter()
                .map(|d| match *d {
                    Dep::Op(o) => Dep::Op(c * m + o),
                    Dep::Barrier(b) => Dep::Barrier(c * nb + b),
                })
                .collect();
            if c > 0 {
                if full_barrier {
                    deps.push(Dep::Barrier(n_chunks * nb + c - 1));
                } else {
                    deps.push(Dep::Op((c - 1) * m + op.id));
                }
            }
            ops.push(SendOp {
                id: c * m + op.id,
                src: op.src,
                dst: op.dst,
                bytes: op.bytes / k,
                stage: op.stage,
                chunk: c,
                deps,
            });
        }
    }
    Ok(CollectivePlan {
        kind: plan.kind,
        ops,
        barriers,
        total_bytes: plan.total_bytes,
        requested_bytes: plan.requested_bytes,
        n_chunks,
        npus: plan.npus.clone(),
    })
}

impl CollectivePlan {
    /// Bytes each NPU sends, indexed by NPU id.
    pub fn sent_bytes(&self, n_npus: usize) -> Vec<u64> {
        let mut v = vec![0; n_npus];
        for op in &self.ops {
            v[op.src as usize] += op.bytes;
        }
        v
    }

    /// Bytes each NPU sends through its NIC (scale-up traffic excluded).
    pub fn nic_bytes(&self, topo: &Topology) -> Vec<u64> {
        let mut v = vec![0; topo.num_npus()];
        for op in &self.ops {
            if !topo.same_server_scale_up(op.src, op.dst) {
                v[op.src as usize] += op.bytes;
            }
        }
        v
    }

    /// Check that dependencies only point at earlier ops, which rules out
    /// cycles.
    pub fn is_topologically_ordered(&self) -> bool {
        self.ops.iter().all(|op| {
            op.deps.iter().all(|d| match *d {
                Dep::Op(o) => o < op.id,
                Dep::Barrier(b) => self.barriers[b as usize].iter().all(|&o| o < op.id),
            })
        })
    }

    /// `op_id,src,dst,bytes,stage,chunk,deps`; deps are `;`-separated op ids,
    /// barriers as `b<id>`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["op_id", "src", "dst", "bytes", "stage", "chunk", "deps"])?;
        for op in &self.ops {
            let deps: Vec<String> = op
                .deps
                .iter()
                .map(|d| match d {
                    Dep::Op(o) => o.to_string(),
                    Dep::Barrier(b) => format!("b{b}"),
                })
                .collect();
            out.write_record([
                op.id.to_string(),
                op.src.to_string(),
                op.dst.to_string(),
                op.bytes.to_string(),
                op.stage.to_string(),
                op.chunk.to_string(),
                deps.join(";"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// No schedule can finish sooner than the busiest link needs to carry
    /// its payload plus per-packet headers. `tag_base` must match the one
    /// used to run the plan so routes agree.
    pub fn link_lower_bound_ns(&self, topo: &Topology, fabric: &FabricConfig, tag_base: u64) -> u64 {
        let mut bytes = vec![0u128; topo.ports().len()];
        for op in &self.ops {
            let key = FlowKey::new(NodeId::npu(op.src), NodeId::npu(op.dst), tag_base + op.id as u64);
            let mtu = if topo.same_server_scale_up(op.src, op.dst) {
                fabric.scale_up_mtu
            } else {
                fabric.mtu
            } as u64;
            let wire = op.bytes + op.bytes.div_ceil(mtu) * fabric.header as u64;
            for p in topo.route(&key) {
                bytes[p as usize] += wire as u128;
            }
        }
        bytes
            .iter()
            .enumerate()
            .map(|(p, &b)| {
                let bw = topo.ports()[p].link.bandwidth.as_bps() as u128;
                (b * 8_000_000_000 / bw) as u64
            })
            .max()
            .unwrap_or(0)
    }
}

/// Bytes each NPU sends in a direct All-Reduce of `s` bytes over `p` NPUs.
pub fn analytic_allreduce_1d_bytes(p: u64, s: u64) -> u64 {
    2 * (p - 1) * s / p
}

/// NIC bytes per NPU in the hierarchical All-Reduce with groups of `l`
/// over `n` groups.
pub fn analytic_allreduce_2d_nic_bytes(l: u64, n: u64, s: u64) -> u64 {
    2 * (n - 1) * s / (l * n)
}

/// Progress of one plan inside a running simulation.
#[derive(Debug)]
pub struct PlanRun {
    pub plan: CollectivePlan,
    pub tag_base: u64,
    waiting: Vec<u32>,
    op_dependents: Vec<Vec<u32>>,
    op_barriers: Vec<Vec<u32>>,
    barrier_left: Vec<u32>,
    barrier_dependents: Vec<Vec<u32>>,
    pub op_start: Vec<u64>,
    pub op_finish: Vec<u64>,
    done: usize,
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

impl PlanRun {
    pub fn new(plan: CollectivePlan, tag_base: u64) -> Self {
        let n = plan.ops.len();
        let mut waiting = vec![0u32; n];
        let mut op_dependents = vec![Vec::new(); n];
        let mut op_barriers = vec![Vec::new(); n];
        let mut barrier_dependents = vec![Vec::new(); plan.barriers.len()];
        let barrier_left = plan.barriers.iter().map(|m| m.len() as u32).collect();
        for (b, members) in plan.barriers.iter().enumerate() {
            for &o in members {
                op_barriers[o as usize].push(b as u32);
            }
        }
        for op in &plan.ops {
            for d in &op.deps {
                waiting[op.id as usize] += 1;
                match *d {
                    Dep::Op(o) => op_dependents[o as usize].push(op.id),
                    Dep::Barrier(b) => barrier_dependents[b as usize].push(op.id),
                }
            }
        }
        PlanRun {
            plan,
            tag_base,
            waiting,
            op_dependents,
            op_barriers,
            barrier_left,
            barrier_dependents,
            op_start: vec![u64::MAX; n],
            op_finish: vec![u64::MAX; n],
            done: 0,
            started_at: 0,
            finished_at: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.finished_at.is_some()
    }

    pub fn owns(&self, tag: u64) -> bool {
        tag >= self.tag_base && tag < self.tag_base + self.plan.ops.len() as u64
    }

    pub fn completion_ns(&self) -> Option<u64> {
        self.finished_at.map(|f| f - self.started_at)
    }

    pub fn launch(&mut self, sim: &mut Simulator) -> Result<(), SimError> {
        self.started_at = sim.now().as_ns();
        if self.plan.ops.is_empty() {
            self.finished_at = Some(self.started_at);
            return Ok(());
        }
        for id in 0..self.plan.ops.len() {
            if self.waiting[id] == 0 {
                self.start_op(sim, id as u32)?;
            }
        }
        Ok(())
    }

    fn start_op(&mut self, sim: &mut Simulator, id: u32) -> Result<(), SimError> {
        let op = &self.plan.ops[id as usize];
        self.op_start[id as usize] = sim.now().as_ns();
        sim.start_flow(op.src, op.dst, op.bytes, self.tag_base + id as u64)?;
        Ok(())
    }

    /// Record completion of the flow tagged `tag`; returns true once the
    /// whole plan is done.
    pub fn on_flow_done(&mut self, sim: &mut Simulator, tag: u64) -> Result<bool, SimError> {
        let id = (tag - self.tag_base) as usize;
        let now = sim.now().as_ns();
        self.op_finish[id] = now;
        self.done += 1;
        let mut ready = Vec::new();
        for &d in &self.op_dependents[id] {
            self.waiting[d as usize] -= 1;
            if self.waiting[d as usize] == 0 {
                ready.push(d);
            }
        }
        for &b in &self.op_barriers[id] {
            self.barrier_left[b as usize] -= 1;
            if self.barrier_left[b as usize] == 0 {
                for &d in &self.barrier_dependents[b as usize] {
                    self.waiting[d as usize] -= 1;
                    if self.waiting[d as usize] == 0 {
                        ready.push(d);
                    }
                }
            }
        }
        ready.sort_unstable();
        for d in ready {
            self.start_op(sim, d)?;
        }
        if self.done == self.plan.ops.len() {
            self.finished_at = Some(now);
            return Ok(true);
        }
        Ok(false)
    }
}

/// Runs a single plan from time zero.
pub struct PlanExecutor {
    pub run: PlanRun,
}

impl PlanExecutor {
    pub fn new(plan: CollectivePlan) -> Self {
        PlanExecutor {
            run: PlanRun::new(plan, 0),
        }
    }
}

impl Application for PlanExecutor {
    fn start(&mut self, sim: &mut Simulator) -> Result<(), SimError> {
        self.run.launch(sim)
    }

    fn on_flow_done(&mut self, sim: &mut Simulator, tag: u64) -> Result<(), SimError> {
        self.run.on_flow_done(sim, tag).map(|_| ())
    }
}
