//! Geo-filtered top-n POI recommendation.
//!
//! A query `(user, anchor, time)` is scored against every POI within the
//! radius of the anchor that the user has not visited in training:
//!
//! ```text
//! score(l) = α·(u·l) + β·(r·l) + γ·(t·l) + δ·(st·l)
//! ```
//!
//! `t` is the query's time period. `r` is the user's most recent route whose
//! period is not after the query's, falling back to the user's most followed
//! route. `st` is that route's stay point, falling back to the user's most
//! frequent stay point. A term whose vector is absent contributes 0.

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TimeBinning};
use crate::geo::{GridIndex, haversine_km};
use crate::graphs::NodeRef;
use crate::mobility::{RouteSet, StayPoints};
use crate::trainer::{EmbeddingStore, dot};
use crate::{Error, Result};

pub const DEFAULT_RADIUS_KM: f64 = 10.0;
pub const DEFAULT_TOP_N: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub radius_km: f64,
    pub top_n: usize,
}

impl Default for RecConfig {
    fn default() -> Self {
        RecConfig {
            alpha: 0.25,
            beta: 0.25,
            gamma: 0.25,
            delta: 0.25,
            radius_km: DEFAULT_RADIUS_KM,
            top_n: DEFAULT_TOP_N,
        }
    }
}

impl RecConfig {
    pub fn weights(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn with_weights(&self, w: [f64; 4]) -> RecConfig {
        RecConfig {
            alpha: w[0],
            beta: w[1],
            gamma: w[2],
            delta: w[3],
            ..self.clone()
        }
    }

    /// Zeroes the terms switched off in `mask`.
    pub fn masked(&self, mask: [bool; 4]) -> RecConfig {
        let w = self.weights();
        self.with_weights(std::array::from_fn(|i| if mask[i] { w[i] } else { 0.0 }))
    }

    /// Field-level problems, empty when valid.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        for (name, w) in ["alpha", "beta", "gamma", "delta"].iter().zip(self.weights()) {
            if !(w.is_finite() && w >= 0.0) {
                v.push((format!("recommender.{name}"), format!("must be a non-negative number, got {w}")));
            }
        }
        if self.weights().iter().all(|&w| w == 0.0) {
            v.push(("recommender.alpha".into(), "at least one of alpha, beta, gamma, delta must be positive".into()));
        }
        if !(self.radius_km.is_finite() && self.radius_km > 0.0) {
            v.push(("recommender.radius_km".into(), format!("must be positive, got {}", self.radius_km)));
        }
        if self.top_n == 0 {
            v.push(("recommender.top_n".into(), "must be positive".into()));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::InvalidArgument(format!("{field}: {msg}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Anchor {
    Poi(u32),
    Coords(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Query {
    pub user: u32,
    pub anchor: Anchor,
    pub timestamp: i64,
}

/// Query-time context rows; `None` means the term is absent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Context {
    pub period: Option<u32>,
    pub route: Option<u32>,
    pub stay_point: Option<u32>,
}

/// Spatial index plus each user's training-visited POIs.
#[derive(Clone, Debug)]
pub struct CandidateIndex {
    grid: GridIndex,
    visited: Vec<Vec<u32>>,
}

impl CandidateIndex {
    /// `dataset` must hold the training check-ins only.
    pub fn new(dataset: &Dataset) -> Self {
        let grid = GridIndex::new((0..dataset.poi_count() as u32).map(|p| dataset.poi_coords(p)).collect());
        let mut visited = vec![Vec::new(); dataset.user_count()];
        for c in &dataset.checkins {
            visited[c.user as usize].push(c.poi);
        }
        for v in &mut visited {
            v.sort_unstable();
            v.dedup();
        }
        CandidateIndex { grid, visited }
    }

    pub fn coords(&self, poi: u32) -> (f64, f64) {
        self.grid.point(poi)
    }

    pub fn resolve(&self, anchor: Anchor) -> Result<(f64, f64)> {
        match anchor {
            Anchor::Poi(p) if (p as usize) < self.grid.len() => Ok(self.grid.point(p)),
            Anchor::Poi(p) => Err(Error::InvalidArgument(format!("anchor POI {p} is unknown"))),
            Anchor::Coords(lat, lon) => {
                crate::geo::geodist((lat, lon), (lat, lon))?;
                Ok((lat, lon))
            }
        }
    }

    pub fn has_visited(&self, user: u32, poi: u32) -> bool {
        self.visited
            .get(user as usize)
            .is_some_and(|v| v.binary_search(&poi).is_ok())
    }

    /// POIs within `radius_km` of `center` (inclusive) not visited by `user`, ascending.
    pub fn candidates_near(&self, user: u32, center: (f64, f64), radius_km: f64) -> Vec<u32> {
        let mut c = self.grid.within(center, radius_km);
        c.retain(|&p| !self.has_visited(user, p));
        c
    }
}

pub fn candidate_set(query: &Query, index: &CandidateIndex, radius_km: f64) -> Result<Vec<u32>> {
    let center = index.resolve(query.anchor)?;
    Ok(index.candidates_near(query.user, center, radius_km))
}

#[derive(Clone, Debug, Default)]
struct UserHistory {
    /// (bin, route, stay-point index), ascending bin.
    instances: Vec<(u32, u32, u32)>,
    top_route: Option<u32>,
    top_stay_point: Option<u32>,
}

/// Everything recommendation needs from a trained model.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub store: EmbeddingStore,
    pub binning: TimeBinning,
    pub candidates: CandidateIndex,
    history: Vec<UserHistory>,
}

fn argmax_count(items: impl Iterator<Item = u32>) -> Option<u32> {
    let mut counts = std::collections::BTreeMap::new();
    for i in items {
        *counts.entry(i).or_insert(0u64) += 1;
    }
    // highest count, lowest id on ties
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(i, _)| i)
}

impl ModelState {
    /// `train` is the dataset the graphs were built from; `routes` and
    /// `stays` must come from the same data.
    pub fn new(
        store: EmbeddingStore,
        train: &Dataset,
        binning: TimeBinning,
        routes: &RouteSet,
        stays: &StayPoints,
    ) -> Self {
        let mut history = vec![UserHistory::default(); train.user_count()];
        for (inst, sp) in routes.instances.iter().zip(&stays.per_instance) {
            let st = stays.index_of(sp.poi).expect("stay point in namespace");
            history[inst.user as usize].instances.push((inst.bin, inst.route, st));
        }
        for h in &mut history {
            h.instances.sort_unstable();
            h.top_route = argmax_count(h.instances.iter().map(|i| i.1));
            h.top_stay_point = argmax_count(h.instances.iter().map(|i| i.2));
        }
        ModelState {
            store,
            binning,
            candidates: CandidateIndex::new(train),
            history,
        }
    }

    pub fn user_count(&self) -> usize {
        self.history.len()
    }
}

pub fn query_context(user: u32, timestamp: i64, model: &ModelState) -> Context {
    let bin = model.binning.bin_of(timestamp);
    let mut ctx = Context {
        period: Some(bin),
        ..Context::default()
    };
    let Some(h) = model.history.get(user as usize) else {
        return ctx;
    };
    match h.instances.iter().rev().find(|i| i.0 <= bin) {
        Some(&(_, route, st)) => {
            ctx.route = Some(route);
            ctx.stay_point = Some(st);
        }
        None => {
            ctx.route = h.top_route;
            ctx.stay_point = h.top_stay_point;
        }
    }
    ctx
}

pub fn score(user: u32, poi: u32, ctx: &Context, config: &RecConfig, store: &EmbeddingStore) -> f64 {
    let l = store.row(NodeRef::poi(poi));
    let term = |w: f64, node: Option<NodeRef>| match node {
        Some(n) if w != 0.0 => w * dot(store.row(n), l),
        _ => 0.0,
    };
    term(config.alpha, Some(NodeRef::user(user)))
        + term(config.beta, ctx.route.map(NodeRef::route))
        + term(config.gamma, ctx.period.map(NodeRef::period))
        + term(config.delta, ctx.stay_point.map(NodeRef::staypoint))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scored {
    pub poi: u32,
    pub score: f64,
    pub distance_km: f64,
}

/// Sorts by descending score, ascending POI on ties.
pub fn rank(list: &mut [Scored]) {
    list.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.poi.cmp(&b.poi)));
}

pub fn recommend(query: &Query, config: &RecConfig, model: &ModelState) -> Result<Vec<Scored>> {
    if query.user as usize >= model.user_count() {
        return Err(Error::InvalidArgument(format!("user {} is unknown to the model", query.user)));
    }
    let center = model.candidates.resolve(query.anchor)?;
    let ctx = query_context(query.user, query.timestamp, model);
    let mut list: Vec<Scored> = model
        .candidates
        .candidates_near(query.user, center, config.radius_km)
        .into_iter()
        .map(|poi| Scored {
            poi,
            score: score(query.user, poi, &ctx, config, &model.store),
            distance_km: haversine_km(center, model.candidates.coords(poi)),
        })
        .collect();
    rank(&mut list);
    list.truncate(config.top_n);
    Ok(list)
}

/// Anything that can score candidate POIs for a user at a time.
pub trait Ranker {
    fn scores(&self, user: u32, timestamp: i64, candidates: &[u32]) -> Vec<f64>;
}

/// The embedding model under a fixed scoring configuration.
pub struct ModelRanker<'a> {
    pub model: &'a ModelState,
    pub config: RecConfig,
}

impl Ranker for ModelRanker<'_> {
    fn scores(&self, user: u32, timestamp: i64, candidates: &[u32]) -> Vec<f64> {
        let ctx = query_context(user, timestamp, self.model);
        candidates
            .iter()
            .map(|&p| score(user, p, &ctx, &self.config, &self.model.store))
            .collect()
    }
}

/// Scores every POI by its number of training check-ins.
pub struct PopularityRanker {
    pub counts: Vec<u64>,
}

impl PopularityRanker {
    pub fn new(train: &Dataset) -> Self {
        let mut counts = vec![0; train.poi_count()];
        for c in &train.checkins {
            counts[c.poi as usize] += 1;
        }
        PopularityRanker { counts }
    }
}

impl Ranker for PopularityRanker {
    fn scores(&self, _user: u32, _timestamp: i64, candidates: &[u32]) -> Vec<f64> {
        candidates.iter().map(|&p| self.counts[p as usize] as f64).collect()
    }
}
