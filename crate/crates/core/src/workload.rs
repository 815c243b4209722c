//! DLRM training iteration: per-layer compute on one compute stream, with
//! collectives issued to a communication stream.
//!
//! Collectives run one at a time on the network, in launch order, except
//! that a pending All-To-All goes ahead of pending All-Reduces because the
//! compute stream waits on it.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::collectives::{plan_allreduce_1d, plan_allreduce_2d, plan_alltoall, CollectivePlan, PlanError, PlanRun};
use crate::sim::{Application, SimError, Simulator};
use crate::units::{parse_bytes, parse_duration_ns};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("layer `{layer}` waits on unknown layer `{target}`")]
    UnknownConsumer { layer: String, target: String },
    #[error("layer `{0}` has a collective of zero bytes")]
    ZeroComm(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommKind {
    AllToAll,
    AllReduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllReduceMode {
    OneD,
    TwoD,
}

impl AllReduceMode {
    pub fn name(self) -> &'static str {
        match self {
            AllReduceMode::OneD => "1d",
            AllReduceMode::TwoD => "2d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    /// After the layer's forward; awaited before the forward of `consumer`
    /// (default: the next layer).
    Fwd { consumer: Option<String> },
    /// After the layer's backward; awaited before the backward of
    /// `consumer` (default: the layer before it).
    Bwd { consumer: Option<String> },
    /// Weight update after the layer's backward; awaited at iteration end.
    WeightUpdate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommSpec {
    pub kind: CommKind,
    pub bytes: u64,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub fwd_ns: u64,
    pub bwd_ns: u64,
    pub comm: Option<CommSpec>,
}

/// Model dimensions the DLRM builder derives sizes from.
#[derive(Debug, Clone, PartialEq)]
pub struct DlrmParams {
    pub embedding_bits: u32,
    pub pooling_factor: u32,
    pub top_mlp_layers: usize,
    pub bottom_mlp_layers: usize,
    pub dense_features: u64,
    pub top_mlp_size: u64,
    pub bottom_mlp_size: u64,
    pub sparse_features: u32,
    pub embedding_dim: u32,
    pub allreduce_bytes: u64,
    pub alltoall_fwd_bytes: u64,
    pub alltoall_bwd_bytes: u64,
}

impl Default for DlrmParams {
    fn default() -> Self {
        DlrmParams {
            embedding_bits: 16,
            pooling_factor: 60,
            top_mlp_layers: 12,
            bottom_mlp_layers: 7,
            dense_features: 1600,
            top_mlp_size: 2048,
            bottom_mlp_size: 1024,
            sparse_features: 64,
            embedding_dim: 64,
            allreduce_bytes: 109_500_000,
            alltoall_fwd_bytes: 4_000_000,
            alltoall_bwd_bytes: 4_000_000,
        }
    }
}

/// Per-layer compute durations, ns. Placeholder numbers, not measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct ComputeProfile {
    pub embedding: (u64, u64),
    pub bottom_mlp: (u64, u64),
    pub interaction: (u64, u64),
    pub top_mlp: (u64, u64),
}

impl Default for ComputeProfile {
    fn default() -> Self {
        ComputeProfile {
            embedding: (300_000, 300_000),
            bottom_mlp: (50_000, 100_000),
            interaction: (50_000, 50_000),
            top_mlp: (100_000, 200_000),
        }
    }
}

impl ComputeProfile {
    pub fn zero() -> Self {
        ComputeProfile {
            embedding: (0, 0),
            bottom_mlp: (0, 0),
            interaction: (0, 0),
            top_mlp: (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadGraph {
    /// Forward execution order; backward runs it reversed.
    pub layers: Vec<LayerSpec>,
    pub params: Option<DlrmParams>,
}

/// Split `total` over `weights` proportionally, largest remainder first, so
/// the parts add up exactly.
pub fn proportional_split(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut parts: Vec<u64> = weights.iter().map(|&w| (total as u128 * w as u128 / sum) as u64).collect();
    let mut rem: Vec<(u128, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (total as u128 * w as u128 % sum, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - parts.iter().sum::<u64>();
    for &(_, i) in rem.iter().take(short as usize) {
        parts[i] += 1;
    }
    parts
}

/// Embedding, bottom MLP, interaction, top MLP. The forward All-To-All
/// leaves the embedding and feeds the interaction; the backward one leaves
/// the interaction and feeds the embedding's backward. Each MLP layer
/// all-reduces its gradients.
pub fn build_dlrm(params: &DlrmParams, compute: &ComputeProfile) -> WorkloadGraph {
    let mut weights = Vec::new();
    let mut fan_in = params.dense_features;
    for _ in 0..params.bottom_mlp_layers {
        weights.push(fan_in * params.bottom_mlp_size);
        fan_in = params.bottom_mlp_size;
    }
    for _ in 0..params.top_mlp_layers {
        weights.push(params.top_mlp_size * params.top_mlp_size);
    }
    let ar = proportional_split(params.allreduce_bytes, &weights);

    let mut layers = vec![LayerSpec {
        name: "embedding".into(),
        fwd_ns: compute.embedding.0,
        bwd_ns: compute.embedding.1,
        comm: Some(CommSpec {
            kind: CommKind::AllToAll,
            bytes: params.alltoall_fwd_bytes,
            placement: Placement::Fwd {
                consumer: Some("interaction".into()),
            },
        }),
    }];
    for i in 0..params.bottom_mlp_layers {
        layers.push(LayerSpec {
            name: format!("bottom_mlp_{i}"),
            fwd_ns: compute.bottom_mlp.0,
            bwd_ns: compute.bottom_mlp.1,
            comm: Some(CommSpec {
                kind: CommKind::AllReduce,
                bytes: ar[i],
                placement: Placement::WeightUpdate,
            }),
        });
    }
    layers.push(LayerSpec {
        name: "interaction".into(),
        fwd_ns: compute.interaction.0,
        bwd_ns: compute.interaction.1,
        comm: Some(CommSpec {
            kind: CommKind::AllToAll,
            bytes: params.alltoall_bwd_bytes,
            placement: Placement::Bwd {
                consumer: Some("embedding".into()),
            },
        }),
    });
    for i in 0..params.top_mlp_layers {
        layers.push(LayerSpec {
            name: format!("top_mlp_{i}"),
            fwd_ns: compute.top_mlp.0,
            bwd_ns: compute.top_mlp.1,
            comm: Some(CommSpec {
                kind: CommKind::AllReduce,
                bytes: ar[params.bottom_mlp_layers + i],
                placement: Placement::WeightUpdate,
            }),
        });
    }
    WorkloadGraph {
        layers,
        params: Some(params.clone()),
    }
}

impl WorkloadGraph {
    pub fn total_bytes(&self, kind: CommKind) -> u64 {
        self.layers
            .iter()
            .filter_map(|l| l.comm.as_ref())
            .filter(|c| c.kind == kind)
            .map(|c| c.bytes)
            .sum()
    }

    pub fn total_compute_ns(&self) -> u64 {
        self.layers.iter().map(|l| l.fwd_ns + l.bwd_ns).sum()
    }

    /// Read `name,fwd_ns,bwd_ns,comm_kind,comm_bytes,placement` rows.
    ///
    /// `comm_kind` is `none`, `alltoall` or `allreduce`; `placement` is
    /// `fwd`, `bwd` or `wu`, and `fwd`/`bwd` may name the waiting layer as
    /// `fwd>layer`. Durations and sizes accept unit suffixes. Blank lines,
    /// `#` comments and a header row starting with `name` are skipped.
    pub fn parse<R: BufRead>(r: R) -> Result<WorkloadGraph, WorkloadError> {
        let mut layers = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| WorkloadError::Parse { line: line_no, msg };
            let line = line.map_err(|e| err(e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with("name,") {
                continue;
            }
            let f: Vec<&str> = t.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", f.len())));
            }
            let dur = |v: &str| v.parse::<u64>().or_else(|_| parse_duration_ns(v)).map_err(|e| err(e.to_string()));
            let fwd_ns = dur(f[1])?;
            let bwd_ns = dur(f[2])?;
            let kind = match f[3].to_ascii_lowercase().as_str() {
                "none" | "" => None,
                "alltoall" | "all_to_all" | "a2a" => Some(CommKind::AllToAll),
                "allreduce" | "all_reduce" | "ar" => Some(CommKind::AllReduce),
                other => return Err(err(format!("unknown collective `{other}`"))),
            };
            let comm = match kind {
                None => None,
                Some(kind) => {
                    let bytes = parse_bytes(f[4]).map_err(|e| err(e.to_string()))?;
                    if bytes == 0 {
                        return Err(WorkloadError::ZeroComm(f[0].to_string()));
                    }
                    let (p, consumer) = match f[5].split_once('>') {
                        Some((p, c)) => (p, Some(c.trim().to_string())),
                        None => (f[5], None),
                    };
                    let placement = match (p.trim().to_ascii_lowercase().as_str(), consumer) {
                        ("fwd", consumer) => Placement::Fwd { consumer },
                        ("bwd", consumer) => Placement::Bwd { consumer },
                        ("wu", None) | ("weight_update", None) => Placement::WeightUpdate,
                        (other, _) => return Err(err(format!("bad placement `{other}`"))),
                    };
                    Some(CommSpec { kind, bytes, placement })
                }
            };
            layers.push(LayerSpec {
                name: f[0].to_string(),
                fwd_ns,
                bwd_ns,
                comm,
            });
        }
        let g = WorkloadGraph { layers, params: None };
        g.program()?;
        Ok(g)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "name,fwd_ns,bwd_ns,comm_kind,comm_bytes,placement")?;
        for l in &self.layers {
            let (kind, bytes, place) = match &l.comm {
                None => ("none", 0, String::new()),
                Some(c) => (
                    match c.kind {
                        CommKind::AllToAll => "alltoall",
                        CommKind::AllReduce => "allreduce",
                    },
                    c.bytes,
                    match &c.placement {
                        Placement::Fwd { consumer: None } => "fwd".into(),
                        Placement::Fwd { consumer: Some(c) } => format!("fwd>{c}"),
                        Placement::Bwd { consumer: None } => "bwd".into(),
                        Placement::Bwd { consumer: Some(c) } => format!("bwd>{c}"),
                        Placement::WeightUpdate => "wu".into(),
                    },
                ),
            };
            writeln!(w, "{},{},{},{},{},{}", l.name, l.fwd_ns, l.bwd_ns, kind, bytes, place)?;
        }
        Ok(())
    }

    /// Flatten into the compute stream's instruction list.
    fn program(&self) -> Result<Vec<Step>, WorkloadError> {
        let n = self.layers.len();
        let index = |layer: &str, target: &str| {
            self.layers
                .iter()
                .position(|l| l.name == target)
                .ok_or_else(|| WorkloadError::UnknownConsumer {
                    layer: layer.to_string(),
                    target: target.to_string(),
                })
        };
        // waits[phase][layer]: collectives to await before that compute
        let mut fwd_waits = vec![Vec::new(); n];
        let mut bwd_waits = vec![Vec::new(); n];
        let mut comm_of = vec![None; n];
        let mut comms = 0usize;
        for (i, l) in self.layers.iter().enumerate() {
            let Some(c) = &l.comm else { continue };
            let id = comms;
            comms += 1;
            comm_of[i] = Some(id);
            match &c.placement {
                Placement::Fwd { consumer } => {
                    let at = match consumer {
                        Some(t) => index(&l.name, t)?,
                        None => i + 1,
                    };
                    if at < n {
                        fwd_waits[at].push(id);
                    } else {
                        bwd_waits[n - 1].push(id);
                    }
                }
                Placement::Bwd { consumer } => {
                    match consumer {
                        Some(t) => bwd_waits[index(&l.name, t)?].push(id),
                        None if i > 0 => bwd_waits[i - 1].push(id),
                        None => {}
                    };
                }
                Placement::WeightUpdate => {}
            }
        }
        let mut prog = Vec::new();
        for i in 0..n {
            prog.extend(fwd_waits[i].iter().map(|&c| Step::Wait(c)));
            prog.push(Step::Compute(self.layers[i].fwd_ns));
            if let (Some(c), Some(Placement::Fwd { .. })) = (comm_of[i], self.layers[i].comm.as_ref().map(|c| &c.placement)) {
                prog.push(Step::Launch(c));
            }
        }
        for i in (0..n).rev() {
            prog.extend(bwd_waits[i].iter().map(|&c| Step::Wait(c)));
            prog.push(Step::Compute(self.layers[i].bwd_ns));
            if let (Some(c), Some(p)) = (comm_of[i], self.layers[i].comm.as_ref().map(|c| &c.placement)) {
                if !matches!(p, Placement::Fwd { .. }) {
                    prog.push(Step::Launch(c));
                }
            }
        }
        prog.push(Step::WaitAll);
        Ok(prog)
    }

    fn comm_layers(&self) -> Vec<(String, CommSpec)> {
        self.layers
            .iter()
            .filter_map(|l| l.comm.clone().map(|c| (l.name.clone(), c)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Compute(u64),
    Launch(usize),
    Wait(usize),
    WaitAll,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectiveRecord {
    pub layer: String,
    pub kind: CommKind,
    pub bytes: u64,
    /// When the compute stream handed it to the communication stream.
    pub ready_ns: u64,
    pub start_ns: u64,
    pub finish_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationReport {
    pub mode: AllReduceMode,
    pub iteration_ns: u64,
    pub total_compute_ns: u64,
    pub exposed_comm_ns: u64,
    pub collectives: Vec<CollectiveRecord>,
}

impl IterationReport {
    /// `layer,kind,bytes,ready_ns,start_ns,finish_ns` rows, then a blank
    /// line and the `iteration_ns,total_compute_ns,exposed_comm_ns` totals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "layer,kind,bytes,ready_ns,start_ns,finish_ns")?;
        for c in &self.collectives {
            let kind = match c.kind {
                CommKind::AllToAll => "alltoall",
                CommKind::AllReduce => "allreduce",
            };
            writeln!(w, "{},{},{},{},{},{}", c.layer, kind, c.bytes, c.ready_ns, c.start_ns, c.finish_ns)?;
        }
        writeln!(w)?;
        writeln!(w, "iteration_ns,total_compute_ns,exposed_comm_ns")?;
        writeln!(w, "{},{},{}", self.iteration_ns, self.total_compute_ns, self.exposed_comm_ns)
    }
}

const TIMER_COMPUTE: u64 = 0;

/// One training iteration as a simulator [`Application`].
pub struct IterationRunner {
    program: Vec<Step>,
    pc: usize,
    comms: Vec<(String, CommSpec)>,
    mode: AllReduceMode,
    n_chunks: u32,
    ready_at: Vec<Option<u64>>,
    done_at: Vec<Option<u64>>,
    started_at: Vec<Option<u64>>,
    pending: VecDeque<usize>,
    running: Option<(usize, PlanRun)>,
    next_tag: u64,
    compute_ns: u64,
    /// Waiting on a collective.
    blocked: bool,
    /// A compute step is in progress; only its timer may resume the stream.
    computing: bool,
    finished: Option<u64>,
}

impl IterationRunner {
    pub fn new(graph: &WorkloadGraph, mode: AllReduceMode, n_chunks: u32) -> Result<Self, WorkloadError> {
        let program = graph.program()?;
        let comms = graph.comm_layers();
        let n = comms.len();
        Ok(IterationRunner {
            program,
            pc: 0,
            comms,
            mode,
            n_chunks,
            ready_at: vec![None; n],
            done_at: vec![None; n],
            started_at: vec![None; n],
            pending: VecDeque::new(),
            running: None,
            next_tag: 0,
            compute_ns: 0,
            blocked: false,
            computing: false,
            finished: None,
        })
    }

    pub fn report(&self) -> Option<IterationReport> {
        let end = self.finished?;
        Some(IterationReport {
            mode: self.mode,
            iteration_ns: end,
            total_compute_ns: self.compute_ns,
            exposed_comm_ns: end - self.compute_ns,
            collectives: self
                .comms
                .iter()
                .enumerate()
                .map(|(i, (layer, c))| CollectiveRecord {
                    layer: layer.clone(),
                    kind: c.kind,
                    bytes: c.bytes,
                    ready_ns: self.ready_at[i].unwrap_or(0),
                    start_ns: self.started_at[i].unwrap_or(0),
                    finish_ns: self.done_at[i].unwrap_or(0),
                })
                .collect(),
        })
    }

    fn plan(&self, sim: &Simulator, c: &CommSpec) -> Result<CollectivePlan, PlanError> {
        let topo = sim.topology();
        let npus: Vec<u32> = (0..topo.num_npus() as u32).collect();
        match (c.kind, self.mode) {
            (CommKind::AllToAll, _) => plan_alltoall(&npus, c.bytes, self.n_chunks),
            (CommKind::AllReduce, AllReduceMode::OneD) => plan_allreduce_1d(&npus, c.bytes, self.n_chunks),
            (CommKind::AllReduce, AllReduceMode::TwoD) => {
                if topo.scale_up_groups().is_empty() {
                    plan_allreduce_1d(&npus, c.bytes, self.n_chunks)
                } else {
                    plan_allreduce_2d(topo.scale_up_groups(), c.bytes, self.n_chunks)
                }
            }
        }
    }

    /// Start the next collective if the network is free.
    fn pump_comm(&mut self, sim: &mut Simulator) -> Result<(), SimError> {
        while self.running.is_none() {
            let pick = self
                .pending
                .iter()
                .position(|&c| self.comms[c].1.kind == CommKind::AllToAll)
                .unwrap_or(0);
            let Some(c) = self.pending.remove(pick) else {
                return Ok(());
            };
            let plan = self.plan(sim, &self.comms[c].1).map_err(|e| SimError::App(e.to_string()))?;
            let ops = plan.ops.len() as u64;
            let mut run = PlanRun::new(plan, self.next_tag);
            self.next_tag += ops;
            self.started_at[c] = Some(sim.now().as_ns());
            run.launch(sim)?;
            if run.is_done() {
                self.done_at[c] = Some(sim.now().as_ns());
            } else {
                self.running = Some((c, run));
            }
        }
        Ok(())
    }

    /// Advance the compute stream until it blocks or ends.
    fn step(&mut self, sim: &mut Simulator) -> Result<(), SimError> {
        let now = sim.now().as_ns();
        while self.pc < self.program.len() {
            match self.program[self.pc] {
                Step::Compute(ns) => {
                    self.pc += 1;
                    self.compute_ns += ns;
                    if ns > 0 {
                        self.computing = true;
                        sim.schedule_app(ns, TIMER_COMPUTE);
                        return Ok(());
                    }
                }
                Step::Launch(c) => {
                    self.pc += 1;
                    self.ready_at[c] = Some(now);
                    self.pending.push_back(c);
                    self.pump_comm(sim)?;
                }
                Step::Wait(c) => {
                    if self.done_at[c].is_none() {
                        self.blocked = true;
                        return Ok(());
                    }
                    self.pc += 1;
                }
                Step::WaitAll => {
                    if self.done_at.iter().any(Option::is_none) {
                        self.blocked = true;
                        return Ok(());
                    }
                    self.pc += 1;
                }
            }
        }
        self.finished = Some(now);
        Ok(())
    }
}

impl Application for IterationRunner {
    fn start(&mut self, sim: &mut Simulator) -> Result<(), SimError> {
        self.step(sim)
    }

    fn on_flow_done(&mut self, sim: &mut Simulator, tag: u64) -> Result<(), SimError> {
        let Some((c, run)) = self.running.as_mut() else {
            return Err(SimError::App(format!("flow {tag} finished with no collective running")));
        };
        if !run.owns(tag) {
            return Err(SimError::App(format!("flow {tag} does not belong to the running collective")));
        }
        if run.on_flow_done(sim, tag)? {
            let c = *c;
            self.done_at[c] = Some(sim.now().as_ns());
            self.running = None;
            self.pump_comm(sim)?;
            if self.blocked {
                self.blocked = false;
                self.step(sim)?;
            }
        }
        Ok(())
    }

    fn on_timer(&mut self, sim: &mut Simulator, _token: u64) -> Result<(), SimError> {
        self.computing = false;
        self.step(sim)
    }
}
