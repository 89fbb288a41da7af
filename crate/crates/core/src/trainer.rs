//! Joint embedding training by edge-sampled negative-sampling SGD.
//!
//! Every iteration draws one edge from each non-empty graph, with probability
//! proportional to its weight, and takes one ascent step on
//!
//! ```text
//! log σ(v_dst · v_src) + Σ_{n=1..N} log σ(-v_neg_n · v_src)
//! ```
//!
//! where negatives come from the graph's `degree^{3/4}` noise table over the
//! destination namespace. The edge weight only sets how often an edge is
//! drawn; it never scales the gradient. All five namespaces live in one
//! latent space of dimension `d`, and each node has a single vector.
//!
//! With `workers > 1`, threads update the shared store without locks. Row
//! reads and writes are individually atomic per coordinate but a whole
//! read-modify-write is not, so concurrent steps may overwrite each other.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::graphs::{Cardinalities, GraphKind, GraphSet, Namespace, NodeRef, NoiseDistribution, build_noise};
use crate::{Error, Result};

pub const DEFAULT_INITIAL_LR: f64 = 0.025;
pub const DEFAULT_NEGATIVES: usize = 5;
pub const DEFAULT_DIM: usize = 100;
/// 150 million iterations.
pub const DEFAULT_SAMPLES: u64 = 150_000_000;
/// Learning rate never decays below this fraction of the initial rate.
pub const LR_FLOOR_RATIO: f64 = 1e-4;

/// Dense per-namespace embedding matrices sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    data: [Vec<f64>; 5],
}

impl EmbeddingStore {
    pub fn zeros(cards: Cardinalities, dim: usize) -> Self {
        EmbeddingStore {
            dim,
            data: Namespace::ALL.map(|ns| vec![0.0; cards.get(ns) * dim]),
        }
    }

    /// Entries i.i.d. uniform in `[-0.5/d, 0.5/d]`.
    pub fn init(cards: Cardinalities, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let mut store = Self::zeros(cards, dim);
        for m in &mut store.data {
            for v in m.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self, ns: Namespace) -> usize {
        self.data[ns.index()].len() / self.dim.max(1)
    }

    pub fn cardinalities(&self) -> Cardinalities {
        Cardinalities(Namespace::ALL.map(|ns| self.rows(ns)))
    }

    pub fn row(&self, node: NodeRef) -> &[f64] {
        let start = node.index as usize * self.dim;
        &self.data[node.ns.index()][start..start + self.dim]
    }

    pub fn row_mut(&mut self, node: NodeRef) -> &mut [f64] {
        let start = node.index as usize * self.dim;
        &mut self.data[node.ns.index()][start..start + self.dim]
    }

    pub fn matrix(&self, ns: Namespace) -> &[f64] {
        &self.data[ns.index()]
    }

    /// First non-finite entry, as `(namespace, row)`.
    pub fn first_non_finite(&self) -> Option<(Namespace, usize)> {
        Namespace::ALL.into_iter().find_map(|ns| {
            self.data[ns.index()]
                .iter()
                .position(|v| !v.is_finite())
                .map(|p| (ns, p / self.dim))
        })
    }

    pub fn dot(&self, a: NodeRef, b: NodeRef) -> f64 {
        dot(self.row(a), self.row(b))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln σ(x)`, stable for large `|x|`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Row storage a training step can read and update.
pub trait RowAccess {
    fn dim(&self) -> usize;
    fn read(&self, node: NodeRef, out: &mut [f64]);
    fn add(&mut self, node: NodeRef, delta: &[f64]);
}

impl RowAccess for EmbeddingStore {
    fn dim(&self) -> usize {
        self.dim
    }
    fn read(&self, node: NodeRef, out: &mut [f64]) {
        out.copy_from_slice(self.row(node));
    }
    fn add(&mut self, node: NodeRef, delta: &[f64]) {
        for (v, d) in self.row_mut(node).iter_mut().zip(delta) {
            *v += d;
        }
    }
}

/// Lock-free shared store for asynchronous workers.
pub struct SharedStore {
    dim: usize,
    data: [Vec<AtomicU64>; 5],
}

impl SharedStore {
    pub fn from_store(store: &EmbeddingStore) -> Self {
        SharedStore {
            dim: store.dim,
            data: Namespace::ALL.map(|ns| {
                store.data[ns.index()]
                    .iter()
                    .map(|v| AtomicU64::new(v.to_bits()))
                    .collect()
            }),
        }
    }

    pub fn to_store(&self) -> EmbeddingStore {
        EmbeddingStore {
            dim: self.dim,
            data: Namespace::ALL.map(|ns| {
                self.data[ns.index()]
                    .iter()
                    .map(|a| f64::from_bits(a.load(Ordering::Relaxed)))
                    .collect()
            }),
        }
    }

    pub fn first_non_finite(&self) -> Option<(Namespace, usize)> {
        Namespace::ALL.into_iter().find_map(|ns| {
            self.data[ns.index()]
                .iter()
                .position(|a| !f64::from_bits(a.load(Ordering::Relaxed)).is_finite())
                .map(|p| (ns, p / self.dim))
        })
    }
}

/// A worker's handle on a [`SharedStore`].
pub struct SharedRows<'a>(pub &'a SharedStore);

impl RowAccess for SharedRows<'_> {
    fn dim(&self) -> usize {
        self.0.dim
    }
    fn read(&self, node: NodeRef, out: &mut [f64]) {
        let start = node.index as usize * self.0.dim;
        let row = &self.0.data[node.ns.index()][start..start + self.0.dim];
        for (o, a) in out.iter_mut().zip(row) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }
    fn add(&mut self, node: NodeRef, delta: &[f64]) {
        let start = node.index as usize * self.0.dim;
        let row = &self.0.data[node.ns.index()][start..start + self.0.dim];
        for (a, d) in row.iter().zip(delta) {
            let v = f64::from_bits(a.load(Ordering::Relaxed)) + d;
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

/// Reusable buffers for [`sgns_step`].
#[derive(Default)]
pub struct Scratch {
    src: Vec<f64>,
    dst: Vec<f64>,
    neg: Vec<f64>,
    grad_src: Vec<f64>,
    delta: Vec<f64>,
    negatives: Vec<NodeRef>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            src: vec![0.0; dim],
            dst: vec![0.0; dim],
            neg: Vec::new(),
            grad_src: vec![0.0; dim],
            delta: vec![0.0; dim],
            negatives: Vec::new(),
        }
    }
}

/// One ascent step on the negative-sampling objective for the pair
/// `(src, dst)` with the given negatives. All gradients are taken at the
/// pre-step values and applied together, so the step equals
/// `lr · ∇(objective)` exactly. Returns the loss `-(objective)` before the step.
pub fn sgns_step<S: RowAccess>(
    store: &mut S,
    src: NodeRef,
    dst: NodeRef,
    negatives: &[NodeRef],
    lr: f64,
    scratch: &mut Scratch,
) -> f64 {
    let d = store.dim();
    if scratch.src.len() != d {
        *scratch = Scratch::new(d);
    }
    scratch.neg.resize(negatives.len() * d, 0.0);
    store.read(src, &mut scratch.src);
    store.read(dst, &mut scratch.dst);
    for (k, &n) in negatives.iter().enumerate() {
        store.read(n, &mut scratch.neg[k * d..(k + 1) * d]);
    }

    let x = dot(&scratch.src, &scratch.dst);
    let mut loss = -log_sigmoid(x);
    let g = lr * (1.0 - sigmoid(x));
    for i in 0..d {
        scratch.grad_src[i] = g * scratch.dst[i];
        scratch.delta[i] = g * scratch.src[i];
    }
    store.add(dst, &scratch.delta);

    for (k, &n) in negatives.iter().enumerate() {
        let vn = &scratch.neg[k * d..(k + 1) * d];
        let xn = dot(&scratch.src, vn);
        loss -= log_sigmoid(-xn);
        let gn = -lr * sigmoid(xn);
        for i in 0..d {
            scratch.grad_src[i] += gn * vn[i];
            scratch.delta[i] = gn * scratch.src[i];
        }
        store.add(n, &scratch.delta);
    }
    store.add(src, &scratch.grad_src);
    loss
}

/// Draws `count` negatives for `dst` from `noise`, resampling collisions with
/// `dst`. Gives up after `10 · count` draws.
pub fn draw_negatives<R: Rng + ?Sized>(
    noise: &NoiseDistribution,
    dst: NodeRef,
    count: usize,
    rng: &mut R,
    out: &mut Vec<NodeRef>,
) {
    out.clear();
    let Some(table) = noise.table(dst.ns) else {
        return;
    };
    let mut attempts = 0;
    while out.len() < count && attempts < count * 10 {
        attempts += 1;
        let n = table.sample(rng);
        if n != dst {
            out.push(n);
        }
    }
}

/// Samples negatives and applies [`sgns_step`]. The edge weight is not an input.
#[allow(clippy::too_many_arguments)]
pub fn sgns_update<S: RowAccess, R: Rng + ?Sized>(
    store: &mut S,
    src: NodeRef,
    dst: NodeRef,
    noise: &NoiseDistribution,
    negatives: usize,
    lr: f64,
    rng: &mut R,
    scratch: &mut Scratch,
) -> f64 {
    let mut negs = std::mem::take(&mut scratch.negatives);
    draw_negatives(noise, dst, negatives, rng, &mut negs);
    let loss = sgns_step(store, src, dst, &negs, lr, scratch);
    scratch.negatives = negs;
    loss
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Iterations; each draws one edge from every non-empty graph.
    pub samples: u64,
    pub negatives: usize,
    pub dim: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub workers: usize,
    /// Count how often every edge is drawn.
    pub record_edge_counts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            samples: DEFAULT_SAMPLES,
            negatives: DEFAULT_NEGATIVES,
            dim: DEFAULT_DIM,
            initial_lr: DEFAULT_INITIAL_LR,
            seed: 0,
            workers: 1,
            record_edge_counts: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::InvalidArgument("negatives must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr <= 1.0) {
            return Err(Error::InvalidArgument("initial learning rate must be in (0, 1]".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        Ok(())
    }

    /// Linearly decayed learning rate at `iteration`.
    pub fn learning_rate(&self, iteration: u64) -> f64 {
        let frac = if self.samples == 0 {
            1.0
        } else {
            1.0 - iteration as f64 / self.samples as f64
        };
        (self.initial_lr * frac).max(self.initial_lr * LR_FLOOR_RATIO)
    }

    pub fn checkpoint_interval(&self) -> u64 {
        (self.samples / 100).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Iterations completed.
    pub iteration: u64,
    pub learning_rate: f64,
    /// Mean loss per graph kind since the previous record of the same worker.
    pub loss: [Option<f64>; 8],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Per graph kind, how often each edge was drawn (when enabled).
    pub edge_counts: Option<Vec<Vec<u64>>>,
}

impl TrainTrace {
    /// Tab-separated table: iteration, learning rate, then one loss column per kind.
    pub fn render(&self) -> String {
        let mut s = String::from("iteration\tlr");
        for k in GraphKind::ALL {
            s.push('\t');
            s.push_str(k.as_str());
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!("{}\t{}", r.iteration, r.learning_rate));
            for l in &r.loss {
                match l {
                    Some(v) => s.push_str(&format!("\t{v}")),
                    None => s.push_str("\t-"),
                }
            }
            s.push('\n');
        }
        s
    }
}

struct Prepared<'g> {
    kind: GraphKind,
    edges: &'g [crate::graphs::Edge],
    sampler: AliasTable,
    noise: NoiseDistribution,
}

/// Trains from a fresh initialization seeded by `config.seed`.
pub fn train(graphs: &GraphSet, cards: Cardinalities, config: &TrainConfig) -> Result<(EmbeddingStore, TrainTrace)> {
    config.validate()?;
    let store = EmbeddingStore::init(cards, config.dim, config.seed)?;
    train_from(graphs, store, 0, config)
}

/// Continues training `store` from iteration `start` (a checkpoint resume).
pub fn train_from(
    graphs: &GraphSet,
    store: EmbeddingStore,
    start: u64,
    config: &TrainConfig,
) -> Result<(EmbeddingStore, TrainTrace)> {
    train_range(graphs, store, start, config.samples, config)
}

/// Runs iterations `start..end` of a `config.samples`-iteration schedule.
pub fn train_range(
    graphs: &GraphSet,
    store: EmbeddingStore,
    start: u64,
    end: u64,
    config: &TrainConfig,
) -> Result<(EmbeddingStore, TrainTrace)> {
    config.validate()?;
    let end = end.min(config.samples);
    if store.dim() != config.dim {
        return Err(Error::InvalidArgument(format!(
            "store dimension {} does not match config dimension {}",
            store.dim(),
            config.dim
        )));
    }
    let cards = store.cardinalities();
    let mut prepared = Vec::new();
    for g in graphs.iter().filter(|g| !g.is_empty()) {
        for e in g.edges() {
            for n in [e.src, e.dst] {
                if n.index as usize >= cards.get(n.ns) {
                    return Err(Error::InvalidArgument(format!(
                        "{} edge references {} {} beyond the store's {} rows",
                        g.kind(),
                        n.ns,
                        n.index,
                        cards.get(n.ns)
                    )));
                }
            }
        }
        prepared.push(Prepared {
            kind: g.kind(),
            edges: g.edges(),
            sampler: g.edge_sampler()?,
            noise: build_noise(g)?,
        });
    }
    if prepared.is_empty() {
        return Err(Error::Empty("every graph is empty; nothing to train".into()));
    }
    if start >= end {
        return Ok((store, TrainTrace::default()));
    }

    let shared = SharedStore::from_store(&store);
    let next = AtomicU64::new(start);
    let abort = AtomicBool::new(false);
    let results: Vec<Result<WorkerOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.workers)
            .map(|w| {
                let (shared, next, abort, prepared) = (&shared, &next, &abort, &prepared);
                scope.spawn(move || run_worker(w, shared, next, abort, prepared, config, start, end))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
    });

    let mut trace = TrainTrace::default();
    let mut counts: Option<Vec<Vec<u64>>> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(out) => {
                trace.records.extend(out.records);
                if let Some(c) = out.edge_counts {
                    let acc = counts.get_or_insert_with(|| vec![Vec::new(); 8]);
                    for (kind, kind_counts) in c.into_iter().enumerate() {
                        if acc[kind].is_empty() {
                            acc[kind] = kind_counts;
                        } else {
                            for (a, b) in acc[kind].iter_mut().zip(kind_counts) {
                                *a += b;
                            }
                        }
                    }
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    trace.records.sort_by_key(|r| r.iteration);
    trace.edge_counts = counts;
    let store = shared.to_store();
    if let Some((ns, row)) = store.first_non_finite() {
        return Err(Error::NonFinite {
            iteration: end,
            namespace: ns.as_str(),
            row,
        });
    }
    Ok((store, trace))
}

struct WorkerOutput {
    records: Vec<TraceRecord>,
    edge_counts: Option<Vec<Vec<u64>>>,
}

fn worker_rng(seed: u64, worker: usize, start: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    rng.set_stream(worker as u64 + (start << 16));
    rng
}

#[allow(clippy::too_many_arguments)]
fn run_worker(
    worker: usize,
    shared: &SharedStore,
    next: &AtomicU64,
    abort: &AtomicBool,
    prepared: &[Prepared<'_>],
    config: &TrainConfig,
    start: u64,
    end: u64,
) -> Result<WorkerOutput> {
    let mut rng = worker_rng(config.seed, worker, start);
    let mut rows = SharedRows(shared);
    let mut scratch = Scratch::new(config.dim);
    let interval = config.checkpoint_interval();
    let mut loss_sum = [0.0f64; 8];
    let mut loss_n = [0u64; 8];
    let mut records = Vec::new();
    let mut edge_counts = config.record_edge_counts.then(|| {
        let mut v = vec![Vec::new(); 8];
        for p in prepared {
            v[p.kind as usize] = vec![0u64; p.edges.len()];
        }
        v
    });

    loop {
        if abort.load(Ordering::Relaxed) {
            break;
        }
        let it = next.fetch_add(1, Ordering::Relaxed);
        if it >= end {
            break;
        }
        let lr = config.learning_rate(it);
        for p in prepared {
            let e = p.sampler.sample(&mut rng);
            if let Some(c) = edge_counts.as_mut() {
                c[p.kind as usize][e] += 1;
            }
            let edge = &p.edges[e];
            let loss = sgns_update(&mut rows, edge.src, edge.dst, &p.noise, config.negatives, lr, &mut rng, &mut scratch);
            loss_sum[p.kind as usize] += loss;
            loss_n[p.kind as usize] += 1;
        }
        let done = it + 1;
        if done.is_multiple_of(interval) || done == end {
            if let Some((ns, row)) = shared.first_non_finite() {
                abort.store(true, Ordering::Relaxed);
                return Err(Error::NonFinite {
                    iteration: done,
                    namespace: ns.as_str(),
                    row,
                });
            }
            let mut loss = [None; 8];
            for k in 0..8 {
                if loss_n[k] > 0 {
                    loss[k] = Some(loss_sum[k] / loss_n[k] as f64);
                }
            }
            records.push(TraceRecord {
                iteration: done,
                learning_rate: lr,
                loss,
            });
            loss_sum = [0.0; 8];
            loss_n = [0; 8];
        }
    }
    Ok(WorkerOutput { records, edge_counts })
}

/// Model variants that embed progressively more graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum ModelVersion {
    /// Social influence only: UU, UL, LU.
    V1,
    /// V1 plus geographical influence: LL, UR.
    V2,
    /// V2 plus temporal influence: UT, LT.
    V3,
    /// All eight graphs.
    #[default]
    Full,
}

impl ModelVersion {
    pub fn graphs(self) -> Vec<GraphKind> {
        use GraphKind::*;
        let mut g = vec![UU, UL, LU];
        if matches!(self, ModelVersion::V2 | ModelVersion::V3 | ModelVersion::Full) {
            g.extend([LL, UR]);
        }
        if matches!(self, ModelVersion::V3 | ModelVersion::Full) {
            g.extend([UT, LT]);
        }
        if self == ModelVersion::Full {
            g.push(LST);
        }
        g.sort();
        g
    }

    /// Which scoring terms (user, route, period, stay point) the version uses.
    pub fn score_terms(self) -> [bool; 4] {
        match self {
            ModelVersion::V1 => [true, false, false, false],
            ModelVersion::V2 => [true, true, false, false],
            ModelVersion::V3 => [true, true, true, false],
            ModelVersion::Full => [true; 4],
        }
    }
}

/// Graph subset trained by `version`.
pub fn ablation_mask(graphs: &GraphSet, version: ModelVersion) -> GraphSet {
    graphs.masked(&version.graphs())
}

impl FromStr for ModelVersion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(ModelVersion::V1),
            "v2" => Ok(ModelVersion::V2),
            "v3" => Ok(ModelVersion::V3),
            "full" => Ok(ModelVersion::Full),
            _ => Err(Error::Unknown {
                kind: "model version",
                value: s.into(),
            }),
        }
    }
}

impl fmt::Display for ModelVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVersion::V1 => "v1",
            ModelVersion::V2 => "v2",
            ModelVersion::V3 => "v3",
            ModelVersion::Full => "full",
        })
    }
}
