//! The eight weighted information graphs over five node namespaces, and the
//! per-graph noise distributions used for negative sampling.
//!
//! | kind | edges            | weight of `src → dst`                                   |
//! |------|------------------|---------------------------------------------------------|
//! | UU   | user → user      | `1 / deg(src)` over friendships                         |
//! | UL   | user → poi       | visits of `src` at `dst` / all visits of `src`          |
//! | UT   | user → period    | check-ins of `src` in `dst` / all check-ins of `src`    |
//! | UR   | user → route     | instances of `dst` by `src` / all instances by `src`    |
//! | LL   | poi ↔ poi        | `1 - dist / Rg` for pairs co-visited in one period      |
//! | LU   | poi → user       | visits of `dst` at `src` / all visits at `src`          |
//! | LT   | poi → period     | check-ins at `src` in `dst` / all check-ins at `src`    |
//! | LST  | poi ↔ staypoint  | route co-occurrence fraction, normalized per source     |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::corpus::{Dataset, TimeBinning};
use crate::geo::haversine_km;
use crate::mobility::{RouteSet, StayPoints};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Namespace {
    User,
    Poi,
    Route,
    Period,
    StayPoint,
}

impl Namespace {
    pub const ALL: [Namespace; 5] = [
        Namespace::User,
        Namespace::Poi,
        Namespace::Route,
        Namespace::Period,
        Namespace::StayPoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::User => "user",
            Namespace::Poi => "poi",
            Namespace::Route => "route",
            Namespace::Period => "period",
            Namespace::StayPoint => "staypoint",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Namespace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Namespace::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "namespace",
                value: s.into(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub ns: Namespace,
    pub index: u32,
}

impl NodeRef {
    pub const fn new(ns: Namespace, index: u32) -> Self {
        NodeRef { ns, index }
    }
    pub const fn user(i: u32) -> Self {
        Self::new(Namespace::User, i)
    }
    pub const fn poi(i: u32) -> Self {
        Self::new(Namespace::Poi, i)
    }
    pub const fn route(i: u32) -> Self {
        Self::new(Namespace::Route, i)
    }
    pub const fn period(i: u32) -> Self {
        Self::new(Namespace::Period, i)
    }
    pub const fn staypoint(i: u32) -> Self {
        Self::new(Namespace::StayPoint, i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GraphKind {
    UU,
    UL,
    UT,
    UR,
    LL,
    LU,
    LT,
    LST,
}

impl GraphKind {
    pub const ALL: [GraphKind; 8] = [
        GraphKind::UU,
        GraphKind::UL,
        GraphKind::UT,
        GraphKind::UR,
        GraphKind::LL,
        GraphKind::LU,
        GraphKind::LT,
        GraphKind::LST,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::UU => "UU",
            GraphKind::UL => "UL",
            GraphKind::UT => "UT",
            GraphKind::UR => "UR",
            GraphKind::LL => "LL",
            GraphKind::LU => "LU",
            GraphKind::LT => "LT",
            GraphKind::LST => "LST",
        }
    }

    /// Allowed `(src, dst)` namespace pairs.
    pub fn signatures(self) -> &'static [(Namespace, Namespace)] {
        use Namespace::*;
        match self {
            GraphKind::UU => &[(User, User)],
            GraphKind::UL => &[(User, Poi)],
            GraphKind::UT => &[(User, Period)],
            GraphKind::UR => &[(User, Route)],
            GraphKind::LL => &[(Poi, Poi)],
            GraphKind::LU => &[(Poi, User)],
            GraphKind::LT => &[(Poi, Period)],
            GraphKind::LST => &[(Poi, StayPoint), (StayPoint, Poi)],
        }
    }

    /// Kinds whose per-source out-weights sum to one.
    pub fn is_stochastic(self) -> bool {
        !matches!(self, GraphKind::LL)
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GraphKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                kind: "graph kind",
                value: s.into(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeRef,
    pub dst: NodeRef,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfoGraph {
    kind: GraphKind,
    edges: Vec<Edge>,
    out_weight: BTreeMap<NodeRef, f64>,
}

impl InfoGraph {
    /// Validates weights and namespaces and sorts edges by `(src, dst)`.
    pub fn new(kind: GraphKind, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidArgument(format!("{kind} edge weight {} is not positive", e.weight)));
            }
            if !kind.signatures().contains(&(e.src.ns, e.dst.ns)) {
                return Err(Error::InvalidArgument(format!(
                    "{kind} edge {} -> {} violates the graph signature",
                    e.src.ns, e.dst.ns
                )));
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        if let Some(w) = edges.windows(2).find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
            return Err(Error::InvalidArgument(format!("{kind} has duplicate edge {:?} -> {:?}", w[0].src, w[0].dst)));
        }
        let mut out_weight = BTreeMap::new();
        for e in &edges {
            *out_weight.entry(e.src).or_insert(0.0) += e.weight;
        }
        Ok(InfoGraph { kind, edges, out_weight })
    }

    pub fn empty(kind: GraphKind) -> Self {
        InfoGraph {
            kind,
            edges: Vec::new(),
            out_weight: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Sum of out-weights of every source node.
    pub fn out_weight_sums(&self) -> &BTreeMap<NodeRef, f64> {
        &self.out_weight
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn weight(&self, src: NodeRef, dst: NodeRef) -> Option<f64> {
        self.edges
            .binary_search_by(|e| (e.src, e.dst).cmp(&(src, dst)))
            .ok()
            .map(|i| self.edges[i].weight)
    }

    /// Alias table over this graph's edges, in edge order.
    pub fn edge_sampler(&self) -> Result<AliasTable> {
        AliasTable::new(&self.edges.iter().map(|e| e.weight).collect::<Vec<_>>())
    }
}

/// Number of nodes in each namespace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinalities(pub [usize; 5]);

impl Cardinalities {
    pub fn new(dataset: &Dataset, binning: &TimeBinning, routes: &RouteSet, stays: &StayPoints) -> Self {
        Cardinalities([
            dataset.user_count(),
            dataset.poi_count(),
            routes.route_count(),
            binning.bin_count as usize,
            stays.len(),
        ])
    }

    pub fn get(&self, ns: Namespace) -> usize {
        self.0[ns.index()]
    }
}

/// Fraction edges `src → dst = count / Σ_dst count` from `(src, dst)` counts.
fn fraction_edges(counts: &BTreeMap<(NodeRef, NodeRef), u64>) -> Vec<Edge> {
    let mut totals: BTreeMap<NodeRef, u64> = BTreeMap::new();
    for (&(s, _), &c) in counts {
        *totals.entry(s).or_default() += c;
    }
    counts
        .iter()
        .map(|(&(src, dst), &c)| Edge {
            src,
            dst,
            weight: c as f64 / totals[&src] as f64,
        })
        .collect()
}

fn count_pairs(pairs: impl Iterator<Item = (NodeRef, NodeRef)>) -> BTreeMap<(NodeRef, NodeRef), u64> {
    let mut counts = BTreeMap::new();
    for p in pairs {
        *counts.entry(p).or_default() += 1;
    }
    counts
}

pub fn build_uu(dataset: &Dataset) -> InfoGraph {
    let mut edges = Vec::new();
    for (u, friends) in dataset.friends_of().iter().enumerate() {
        let w = 1.0 / friends.len() as f64;
        edges.extend(friends.iter().map(|&v| Edge {
            src: NodeRef::user(u as u32),
            dst: NodeRef::user(v),
            weight: w,
        }));
    }
    InfoGraph::new(GraphKind::UU, edges).expect("valid UU edges")
}

pub fn build_ul(dataset: &Dataset) -> InfoGraph {
    let counts = count_pairs(dataset.checkins.iter().map(|c| (NodeRef::user(c.user), NodeRef::poi(c.poi))));
    InfoGraph::new(GraphKind::UL, fraction_edges(&counts)).expect("valid UL edges")
}

pub fn build_ut(dataset: &Dataset, binning: &TimeBinning) -> InfoGraph {
    let counts = count_pairs(
        dataset
            .checkins
            .iter()
            .map(|c| (NodeRef::user(c.user), NodeRef::period(binning.bin_of(c.timestamp)))),
    );
    InfoGraph::new(GraphKind::UT, fraction_edges(&counts)).expect("valid UT edges")
}

pub fn build_ur(routes: &RouteSet) -> InfoGraph {
    let counts = count_pairs(
        routes
            .instances
            .iter()
            .map(|i| (NodeRef::user(i.user), NodeRef::route(i.route))),
    );
    InfoGraph::new(GraphKind::UR, fraction_edges(&counts)).expect("valid UR edges")
}

pub fn build_lu(dataset: &Dataset) -> InfoGraph {
    let counts = count_pairs(dataset.checkins.iter().map(|c| (NodeRef::poi(c.poi), NodeRef::user(c.user))));
    InfoGraph::new(GraphKind::LU, fraction_edges(&counts)).expect("valid LU edges")
}

pub fn build_lt(dataset: &Dataset, binning: &TimeBinning) -> InfoGraph {
    let counts = count_pairs(
        dataset
            .checkins
            .iter()
            .map(|c| (NodeRef::poi(c.poi), NodeRef::period(binning.bin_of(c.timestamp)))),
    );
    InfoGraph::new(GraphKind::LT, fraction_edges(&counts)).expect("valid LT edges")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlParams {
    pub rg_km: f64,
    /// Groups with more distinct POIs are subsampled to this many.
    pub group_cap: usize,
    pub seed: u64,
}

impl Default for LlParams {
    fn default() -> Self {
        LlParams {
            rg_km: 10.0,
            group_cap: 500,
            seed: 0,
        }
    }
}

/// POI–POI proximity graph over pairs co-visited by one user inside one period.
pub fn build_ll(dataset: &Dataset, binning: &TimeBinning, params: &LlParams) -> Result<InfoGraph> {
    if !(params.rg_km.is_finite() && params.rg_km > 0.0) {
        return Err(Error::InvalidArgument(format!("Rg must be positive, got {}", params.rg_km)));
    }
    if params.group_cap < 2 {
        return Err(Error::InvalidArgument("LL group cap must be at least 2".into()));
    }
    let mut groups: BTreeMap<(u32, u32), BTreeSet<u32>> = BTreeMap::new();
    for c in &dataset.checkins {
        groups
            .entry((c.user, binning.bin_of(c.timestamp)))
            .or_default()
            .insert(c.poi);
    }
    let mut pairs: BTreeSet<(u32, u32)> = BTreeSet::new();
    for (&(user, bin), pois) in &groups {
        let mut pois: Vec<u32> = pois.iter().copied().collect();
        if pois.len() > params.group_cap {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ ((user as u64) << 32 | bin as u64));
            let mut picked: Vec<u32> = sample(&mut rng, pois.len(), params.group_cap)
                .into_iter()
                .map(|i| pois[i])
                .collect();
            picked.sort_unstable();
            pois = picked;
        }
        for (i, &a) in pois.iter().enumerate() {
            for &b in &pois[i + 1..] {
                pairs.insert((a, b));
            }
        }
    }
    let mut edges = Vec::new();
    for (a, b) in pairs {
        let d = haversine_km(dataset.poi_coords(a), dataset.poi_coords(b));
        let w = 1.0 - d / params.rg_km;
        if w > 0.0 {
            edges.push(Edge {
                src: NodeRef::poi(a),
                dst: NodeRef::poi(b),
                weight: w,
            });
            edges.push(Edge {
                src: NodeRef::poi(b),
                dst: NodeRef::poi(a),
                weight: w,
            });
        }
    }
    InfoGraph::new(GraphKind::LL, edges)
}

/// POI ↔ stay-point graph from route membership.
///
/// Every distinct POI of an instance co-occurs once with that instance's
/// stay point. `w(l → st)` is the share of `l`'s co-occurrences that involve
/// `st`; `w(st → l)` is the share of `st`'s co-occurrences that involve `l`.
pub fn build_lst(routes: &RouteSet, stays: &StayPoints) -> InfoGraph {
    let mut co: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for (inst, sp) in routes.instances.iter().zip(&stays.per_instance) {
        let st = stays.index_of(sp.poi).expect("stay point in namespace");
        let distinct: BTreeSet<u32> = inst.pois.iter().copied().collect();
        for l in distinct {
            *co.entry((l, st)).or_default() += 1;
        }
    }
    let forward = co.iter().map(|(&(l, st), &c)| ((NodeRef::poi(l), NodeRef::staypoint(st)), c));
    let backward = co.iter().map(|(&(l, st), &c)| ((NodeRef::staypoint(st), NodeRef::poi(l)), c));
    let counts: BTreeMap<(NodeRef, NodeRef), u64> = forward.chain(backward).collect();
    InfoGraph::new(GraphKind::LST, fraction_edges(&counts)).expect("valid LST edges")
}

/// All eight graphs, indexed by [`GraphKind`].
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSet {
    graphs: Vec<InfoGraph>,
}

impl GraphSet {
    pub fn new(mut graphs: Vec<InfoGraph>) -> Result<Self> {
        graphs.sort_by_key(|g| g.kind());
        let kinds: Vec<GraphKind> = graphs.iter().map(|g| g.kind()).collect();
        if kinds != GraphKind::ALL {
            return Err(Error::InvalidArgument(format!("graph set must hold each kind once, got {kinds:?}")));
        }
        Ok(GraphSet { graphs })
    }

    pub fn get(&self, kind: GraphKind) -> &InfoGraph {
        &self.graphs[kind as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &InfoGraph> {
        self.graphs.iter()
    }

    /// Copy with every kind outside `keep` emptied.
    pub fn masked(&self, keep: &[GraphKind]) -> GraphSet {
        GraphSet {
            graphs: self
                .graphs
                .iter()
                .map(|g| {
                    if keep.contains(&g.kind()) {
                        g.clone()
                    } else {
                        InfoGraph::empty(g.kind())
                    }
                })
                .collect(),
        }
    }
}

pub fn build_all(
    dataset: &Dataset,
    binning: &TimeBinning,
    routes: &RouteSet,
    stays: &StayPoints,
    ll: &LlParams,
) -> Result<GraphSet> {
    GraphSet::new(vec![
        build_uu(dataset),
        build_ul(dataset),
        build_ut(dataset, binning),
        build_ur(routes),
        build_ll(dataset, binning, ll)?,
        build_lu(dataset),
        build_lt(dataset, binning),
        build_lst(routes, stays),
    ])
}

/// Negative-sampling table over the nodes of one namespace.
#[derive(Clone, Debug)]
pub struct NoiseTable {
    pub ns: Namespace,
    pub nodes: Vec<u32>,
    pub degrees: Vec<u64>,
    table: AliasTable,
}

impl NoiseTable {
    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> NodeRef {
        NodeRef::new(self.ns, self.nodes[self.table.sample(rng)])
    }

    /// Exact sampling probability of each entry of `nodes`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.table.implied_distribution()
    }
}

/// Noise tables for every destination namespace of one graph. A node's mass
/// is `degree^{3/4}`, counting the edges incident to it in that graph.
#[derive(Clone, Debug)]
pub struct NoiseDistribution {
    tables: Vec<NoiseTable>,
}

impl NoiseDistribution {
    pub fn table(&self, ns: Namespace) -> Option<&NoiseTable> {
        self.tables.iter().find(|t| t.ns == ns)
    }

    pub fn tables(&self) -> &[NoiseTable] {
        &self.tables
    }
}

pub const NOISE_EXPONENT: f64 = 0.75;

pub fn build_noise(graph: &InfoGraph) -> Result<NoiseDistribution> {
    if graph.is_empty() {
        return Err(Error::Empty(format!("{} graph has no edges", graph.kind())));
    }
    let dst_namespaces: BTreeSet<Namespace> = graph.kind().signatures().iter().map(|s| s.1).collect();
    let mut degree: BTreeMap<NodeRef, u64> = BTreeMap::new();
    for e in graph.edges() {
        *degree.entry(e.src).or_default() += 1;
        *degree.entry(e.dst).or_default() += 1;
    }
    let mut tables = Vec::new();
    for ns in dst_namespaces {
        let (nodes, degrees): (Vec<u32>, Vec<u64>) = degree
            .iter()
            .filter(|(n, _)| n.ns == ns)
            .map(|(n, &d)| (n.index, d))
            .unzip();
        let mass: Vec<f64> = degrees.iter().map(|&d| (d as f64).powf(NOISE_EXPONENT)).collect();
        tables.push(NoiseTable {
            ns,
            nodes,
            degrees,
            table: AliasTable::new(&mass)?,
        });
    }
    Ok(NoiseDistribution { tables })
}

/// Text edge list, one edge per line: `kind src_ns src dst_ns dst weight`.
/// Weights use the shortest decimal that round-trips exactly.
pub fn export_graphs(graphs: &GraphSet) -> String {
    let mut out = String::new();
    for g in graphs.iter() {
        for e in g.edges() {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                g.kind(),
                e.src.ns,
                e.src.index,
                e.dst.ns,
                e.dst.index,
                e.weight
            );
        }
    }
    out
}

pub fn import_graphs(text: &str) -> Result<GraphSet> {
    let mut edges: BTreeMap<GraphKind, Vec<Edge>> = GraphKind::ALL.iter().map(|&k| (k, Vec::new())).collect();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |m: &str| Error::Parse {
            line: n + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(parse_err("expected 6 fields"));
        }
        let kind: GraphKind = f[0].parse()?;
        let src = NodeRef::new(f[1].parse()?, f[2].parse().map_err(|_| parse_err("bad src index"))?);
        let dst = NodeRef::new(f[3].parse()?, f[4].parse().map_err(|_| parse_err("bad dst index"))?);
        let weight: f64 = f[5].parse().map_err(|_| parse_err("bad weight"))?;
        edges.get_mut(&kind).unwrap().push(Edge { src, dst, weight });
    }
    GraphSet::new(
        edges
            .into_iter()
            .map(|(k, e)| InfoGraph::new(k, e))
            .collect::<Result<Vec<_>>>()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CheckinFormat, RawCheckIn, parse_checkins};
    use crate::mobility::{extract_routes, extract_stay_points};

    fn dataset(text: &str, friends: &[(&str, &str)]) -> Dataset {
        let (rows, _) = parse_checkins(text, &CheckinFormat::default());
        let friends = friends.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        Dataset::from_records(rows, friends).0
    }

    fn day_binning(bins: u32) -> TimeBinning {
        TimeBinning {
            origin: 0,
            bin_width_days: 1,
            bin_count: bins,
        }
    }

    #[test]
    fn uu_one_over_degree() {
        let ds = dataset("u,p,0,0,0\n", &[("u", "a"), ("u", "b"), ("u", "c"), ("a", "x"), ("a", "y"), ("a", "z")]);
        let g = build_uu(&ds);
        let u = NodeRef::user(ds.users.get("u").unwrap());
        for v in ["a", "b", "c"] {
            assert_eq!(g.weight(u, NodeRef::user(ds.users.get(v).unwrap())), Some(1.0 / 3.0));
        }
        let a = NodeRef::user(ds.users.get("a").unwrap());
        let b = NodeRef::user(ds.users.get("b").unwrap());
        assert_eq!(g.weight(b, u), Some(1.0));
        assert_eq!(g.weight(u, a), Some(1.0 / 3.0));
        assert_eq!(g.weight(a, u), Some(0.25));
    }

    #[test]
    fn ul_fractions() {
        let ds = dataset("u,l1,0,0,0\nu,l1,0,0,1\nu,l1,0,0,2\nu,l2,0,0,3\nv,l1,0,0,0\n", &[]);
        let g = build_ul(&ds);
        assert_eq!(g.weight(NodeRef::user(0), NodeRef::poi(0)), Some(0.75));
        assert_eq!(g.weight(NodeRef::user(0), NodeRef::poi(1)), Some(0.25));
        assert_eq!(g.weight(NodeRef::user(1), NodeRef::poi(0)), Some(1.0));
    }

    #[test]
    fn ut_fractions() {
        let d = 86_400;
        let text = format!("u,l,0,0,0\nu,l,0,0,1\nu,l,0,0,2\nu,l,0,0,3\nu,l,0,0,{}\n", 2 * d);
        let g = build_ut(&dataset(&text, &[]), &day_binning(3));
        assert_eq!(g.weight(NodeRef::user(0), NodeRef::period(0)), Some(0.8));
        assert_eq!(g.weight(NodeRef::user(0), NodeRef::period(2)), Some(0.2));
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn ur_instance_fractions() {
        let d = 86_400;
        let text = format!(
            "u,a,0,0,0\nu,b,0,0,10\nu,a,0,0,{}\nu,b,0,0,{}\nu,b,0,0,{}\nu,c,0,0,{}\n",
            d,
            d + 10,
            2 * d,
            2 * d + 10
        );
        let ds = dataset(&text, &[]);
        let routes = extract_routes(&ds, &day_binning(3));
        let g = build_ur(&routes);
        assert_eq!(g.weight(NodeRef::user(0), NodeRef::route(0)), Some(2.0 / 3.0));
        assert_eq!(g.weight(NodeRef::user(0), NodeRef::route(1)), Some(1.0 / 3.0));
    }

    #[test]
    fn ur_user_without_routes_has_no_edges() {
        let ds = dataset("u,a,0,0,0\n", &[]);
        let routes = extract_routes(&ds, &day_binning(1));
        assert!(build_ur(&routes).is_empty());
    }

    #[test]
    fn lu_and_lt_fractions() {
        let d = 86_400;
        let text = format!("u1,l,0,0,0\nu1,l,0,0,1\nu1,l,0,0,{d}\nu2,l,0,0,{}\n", d + 5);
        let ds = dataset(&text, &[]);
        let lu = build_lu(&ds);
        assert_eq!(lu.weight(NodeRef::poi(0), NodeRef::user(0)), Some(0.75));
        assert_eq!(lu.weight(NodeRef::poi(0), NodeRef::user(1)), Some(0.25));
        let lt = build_lt(&ds, &day_binning(2));
        assert_eq!(lt.weight(NodeRef::poi(0), NodeRef::period(0)), Some(0.5));
        assert_eq!(lt.weight(NodeRef::poi(0), NodeRef::period(1)), Some(0.5));
    }

    fn ll_fixture(lat_b: f64) -> InfoGraph {
        let rows = vec![
            RawCheckIn {
                user: "u".into(),
                poi: "a".into(),
                lat: 0.0,
                lon: 0.0,
                timestamp: 0,
            },
            RawCheckIn {
                user: "u".into(),
                poi: "b".into(),
                lat: lat_b,
                lon: 0.0,
                timestamp: 10,
            },
        ];
        let ds = Dataset::from_records(rows, vec![]).0;
        build_ll(&ds, &day_binning(1), &LlParams::default()).unwrap()
    }

    #[test]
    fn ll_distance_weight() {
        // 2.5 km due north
        let lat = (2.5 / crate::geo::EARTH_RADIUS_KM).to_degrees();
        let g = ll_fixture(lat);
        let w = g.weight(NodeRef::poi(0), NodeRef::poi(1)).unwrap();
        assert!((w - 0.75).abs() < 1e-12);
        assert_eq!(g.weight(NodeRef::poi(1), NodeRef::poi(0)), Some(w));
    }

    #[test]
    fn ll_identical_coordinates_weight_one() {
        let g = ll_fixture(0.0);
        assert_eq!(g.weight(NodeRef::poi(0), NodeRef::poi(1)), Some(1.0));
    }

    #[test]
    fn ll_out_of_range_no_edge() {
        let lat = (12.0 / crate::geo::EARTH_RADIUS_KM).to_degrees();
        assert!(ll_fixture(lat).is_empty());
    }

    #[test]
    fn ll_rejects_nonpositive_rg() {
        let ds = dataset("u,a,0,0,0\n", &[]);
        let p = LlParams {
            rg_km: 0.0,
            ..LlParams::default()
        };
        assert!(build_ll(&ds, &day_binning(1), &p).is_err());
    }

    #[test]
    fn lst_membership_edges() {
        // route (l1, l2, l3) with stay point l2
        let ds = dataset("u,l1,0,0,0\nu,l2,0,0,10\nu,l3,0,0,500\n", &[]);
        let routes = extract_routes(&ds, &day_binning(1));
        let stays = extract_stay_points(&routes);
        let g = build_lst(&routes, &stays);
        let st = NodeRef::staypoint(stays.index_of(1).unwrap());
        for l in 0..3 {
            assert_eq!(g.weight(NodeRef::poi(l), st), Some(1.0));
            assert_eq!(g.weight(st, NodeRef::poi(l)), Some(1.0 / 3.0));
        }
        assert_eq!(g.len(), 6);
    }

    #[test]
    fn lst_co_occurrence_fractions() {
        // l appears in 4 instances: stay point s1 three times, s2 once
        let d = 86_400;
        let mut text = String::new();
        for day in 0..3 {
            text += &format!("u,s1,0,0,{}\nu,l,0,0,{}\n", day * d, day * d + 100);
        }
        text += &format!("u,s2,0,0,{}\nu,l,0,0,{}\n", 3 * d, 3 * d + 100);
        let ds = dataset(&text, &[]);
        let routes = extract_routes(&ds, &day_binning(4));
        let stays = extract_stay_points(&routes);
        let g = build_lst(&routes, &stays);
        let l = NodeRef::poi(ds.poi_keys.get("l").unwrap());
        let s1 = NodeRef::staypoint(stays.index_of(ds.poi_keys.get("s1").unwrap()).unwrap());
        let s2 = NodeRef::staypoint(stays.index_of(ds.poi_keys.get("s2").unwrap()).unwrap());
        assert_eq!(g.weight(l, s1), Some(0.75));
        assert_eq!(g.weight(l, s2), Some(0.25));
    }

    #[test]
    fn noise_mass_ratio() {
        // destination degrees 1 and 16 in UL
        let mut edges = vec![Edge {
            src: NodeRef::user(0),
            dst: NodeRef::poi(0),
            weight: 1.0,
        }];
        for u in 0..16 {
            edges.push(Edge {
                src: NodeRef::user(u + 1),
                dst: NodeRef::poi(1),
                weight: 1.0,
            });
        }
        let g = InfoGraph::new(GraphKind::UL, edges).unwrap();
        let noise = build_noise(&g).unwrap();
        let t = noise.table(Namespace::Poi).unwrap();
        let p = t.probabilities();
        assert!((p[1] / p[0] - 8.0).abs() < 1e-9);
        assert!(noise.table(Namespace::User).is_none());
    }

    #[test]
    fn noise_single_node() {
        let g = InfoGraph::new(
            GraphKind::UT,
            vec![Edge {
                src: NodeRef::user(3),
                dst: NodeRef::period(2),
                weight: 1.0,
            }],
        )
        .unwrap();
        let noise = build_noise(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = noise.table(Namespace::Period).unwrap();
        assert!((0..100).all(|_| t.sample(&mut rng) == NodeRef::period(2)));
    }

    #[test]
    fn noise_on_empty_graph_fails() {
        assert!(build_noise(&InfoGraph::empty(GraphKind::UU)).is_err());
    }

    #[test]
    fn signature_enforced() {
        let bad = InfoGraph::new(
            GraphKind::UL,
            vec![Edge {
                src: NodeRef::poi(0),
                dst: NodeRef::user(0),
                weight: 1.0,
            }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn text_round_trip_exact() {
        let ds = dataset(
            "u,a,40.0,22.0,0\nu,b,40.01,22.01,7\nu,c,40.02,22.0,100\nv,a,40.0,22.0,3\nv,c,40.02,22.0,9\n",
            &[("u", "v")],
        );
        let b = day_binning(1);
        let routes = extract_routes(&ds, &b);
        let stays = extract_stay_points(&routes);
        let set = build_all(&ds, &b, &routes, &stays, &LlParams::default()).unwrap();
        let text = export_graphs(&set);
        let back = import_graphs(&text).unwrap();
        assert_eq!(back, set);
        assert_eq!(export_graphs(&back), text);
    }
}
