//! Recommendation against an exhaustive re-scoring of every POI.

mod common;

use std::collections::BTreeMap;

use common::*;
use poi_embed::corpus::{Dataset, make_binning};
use poi_embed::graphs::{Cardinalities, Namespace, NodeRef};
use poi_embed::mobility::{RouteSet, StayPoints, extract_routes, extract_stay_points};
use poi_embed::recommender::{Anchor, ModelState, Query, RecConfig, recommend};
use poi_embed::trainer::EmbeddingStore;
use proptest::prelude::*;

struct Fixture {
    ds: Dataset,
    routes: RouteSet,
    stays: StayPoints,
    model: ModelState,
}

fn fixture(seed: u64, users: usize, pois: usize, checkins: usize) -> Fixture {
    let shape = CorpusShape {
        users,
        pois,
        checkins,
        spread: 0.3,
        ..CorpusShape::default()
    };
    let ds = random_corpus(&shape, seed);
    let b = make_binning(&ds, 15).unwrap();
    let routes = extract_routes(&ds, &b);
    let stays = extract_stay_points(&routes);
    let store = EmbeddingStore::init(Cardinalities::new(&ds, &b, &routes, &stays), 4, seed).unwrap();
    // spread the rows out so scores differ at the scale of the test
    let mut store = store;
    for ns in Namespace::ALL {
        for i in 0..store.rows(ns) {
            for v in store.row_mut(NodeRef::new(ns, i as u32)) {
                *v *= 40.0;
            }
        }
    }
    let model = ModelState::new(store, &ds, b, &routes, &stays);
    Fixture { ds, routes, stays, model }
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mode(items: impl Iterator<Item = u32>) -> Option<u32> {
    let mut c: BTreeMap<u32, usize> = BTreeMap::new();
    for i in items {
        *c.entry(i).or_default() += 1;
    }
    let best = *c.values().max()?;
    c.into_iter().find(|&(_, n)| n == best).map(|(i, _)| i)
}

/// Every POI of the corpus scored by hand, filtered and ordered.
fn exhaustive(f: &Fixture, user: u32, center: (f64, f64), ts: i64, cfg: &RecConfig) -> Vec<(u32, f64)> {
    let store = &f.model.store;
    let bin = f.model.binning.bin_of(ts);
    let mine: Vec<(u32, u32, u32)> = f
        .routes
        .instances
        .iter()
        .zip(&f.stays.per_instance)
        .filter(|(i, _)| i.user == user)
        .map(|(i, s)| (i.bin, i.route, f.stays.index_of(s.poi).unwrap()))
        .collect();
    let (route, stay) = match mine.iter().filter(|i| i.0 <= bin).max_by_key(|i| i.0) {
        Some(&(_, r, s)) => (Some(r), Some(s)),
        None => (mode(mine.iter().map(|i| i.1)), mode(mine.iter().map(|i| i.2))),
    };
    let visited = |p: u32| f.ds.checkins.iter().any(|c| c.user == user && c.poi == p);
    let mut out: Vec<(u32, f64)> = (0..f.ds.poi_count() as u32)
        .filter(|&p| !visited(p))
        .filter(|&p| oracle_haversine(center, f.ds.poi_coords(p)) <= cfg.radius_km)
        .map(|p| {
            let l = store.row(NodeRef::poi(p));
            let mut s = cfg.alpha * dotp(store.row(NodeRef::user(user)), l);
            if let Some(r) = route {
                s += cfg.beta * dotp(store.row(NodeRef::route(r)), l);
            }
            s += cfg.gamma * dotp(store.row(NodeRef::period(bin)), l);
            if let Some(st) = stay {
                s += cfg.delta * dotp(store.row(NodeRef::staypoint(st)), l);
            }
            (p, s)
        })
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out.truncate(cfg.top_n);
    out
}

fn weights() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(prop_oneof![Just(0.0), 0.0f64..1.0]).prop_filter("one active term", |w| w.iter().any(|&x| x > 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_exhaustive_scoring(seed in any::<u64>(), w in weights(), radius in 1.0f64..30.0, top_n in 1usize..25, day in -30i64..200) {
        let f = fixture(seed, 8, 30, 200);
        let cfg = RecConfig { radius_km: radius, top_n, ..RecConfig::default() }.with_weights(w);
        let ts = BASE + day * DAY;
        for user in 0..f.ds.user_count() as u32 {
            let anchor = f.ds.poi_coords(user % f.ds.poi_count() as u32);
            let got = recommend(&Query { user, anchor: Anchor::Coords(anchor.0, anchor.1), timestamp: ts }, &cfg, &f.model).unwrap();
            let want = exhaustive(&f, user, anchor, ts, &cfg);
            prop_assert_eq!(got.len(), want.len());
            for (g, (p, s)) in got.iter().zip(&want) {
                prop_assert_eq!(g.poi, *p);
                prop_assert!((g.score - s).abs() <= 1e-9 * (1.0 + s.abs()));
                prop_assert!(g.distance_km <= radius);
            }
        }
    }

    #[test]
    fn ranking_is_scale_invariant(seed in any::<u64>(), w in weights(), exp in -6i32..6) {
        let f = fixture(seed, 6, 30, 150);
        let base = RecConfig { radius_km: 50.0, top_n: 40, ..RecConfig::default() }.with_weights(w);
        let c = 2f64.powi(exp);
        let scaled = base.with_weights(w.map(|x| x * c));
        for user in 0..f.ds.user_count() as u32 {
            let q = Query { user, anchor: Anchor::Poi(0), timestamp: BASE + 40 * DAY };
            let a: Vec<u32> = recommend(&q, &base, &f.model).unwrap().iter().map(|s| s.poi).collect();
            let b: Vec<u32> = recommend(&q, &scaled, &f.model).unwrap().iter().map(|s| s.poi).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn never_recommends_visited(seed in any::<u64>()) {
        let f = fixture(seed, 6, 12, 150);
        let cfg = RecConfig { radius_km: 100.0, top_n: 100, ..RecConfig::default() };
        for user in 0..f.ds.user_count() as u32 {
            let q = Query { user, anchor: Anchor::Poi(0), timestamp: BASE };
            for s in recommend(&q, &cfg, &f.model).unwrap() {
                prop_assert!(!f.ds.checkins.iter().any(|c| c.user == user && c.poi == s.poi));
            }
        }
    }
}

#[test]
fn alpha_only_ranks_by_user_affinity() {
    let f = fixture(3, 6, 30, 150);
    let cfg = RecConfig {
        radius_km: 50.0,
        top_n: 100,
        ..RecConfig::default()
    }
    .with_weights([0.3, 0.0, 0.0, 0.0]);
    for user in 0..f.ds.user_count() as u32 {
        let q = Query {
            user,
            anchor: Anchor::Poi(0),
            timestamp: BASE,
        };
        let got = recommend(&q, &cfg, &f.model).unwrap();
        let u = f.model.store.row(NodeRef::user(user));
        let affinity: Vec<f64> = got.iter().map(|s| dotp(u, f.model.store.row(NodeRef::poi(s.poi)))).collect();
        assert!(affinity.windows(2).all(|p| p[0] >= p[1]));
    }
}
