//! Random corpora and brute-force reference computations shared by the
//! integration tests. Nothing here calls the library's graph or route code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use poi_embed::corpus::{Dataset, RawCheckIn};
use poi_embed::graphs::{GraphKind, Namespace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DAY: i64 = 86_400;
pub const BASE: i64 = 1_600_000_000;

#[derive(Clone, Copy, Debug)]
pub struct CorpusShape {
    pub users: usize,
    pub pois: usize,
    pub checkins: usize,
    pub days: i64,
    /// Box side in degrees; 0.15 is about 16 km, so some pairs exceed 10 km.
    pub spread: f64,
    /// Chance a check-in repeats the user's previous POI.
    pub repeat: f64,
    pub friend_prob: f64,
}

impl Default for CorpusShape {
    fn default() -> Self {
        CorpusShape {
            users: 15,
            pois: 40,
            checkins: 500,
            days: 120,
            spread: 0.15,
            repeat: 0.1,
            friend_prob: 0.15,
        }
    }
}

pub fn random_corpus(shape: &CorpusShape, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<(f64, f64)> = (0..shape.pois)
        .map(|_| {
            (
                35.0 + rng.random_range(0.0..shape.spread),
                139.0 + rng.random_range(0.0..shape.spread),
            )
        })
        .collect();
    let mut last: Vec<Option<usize>> = vec![None; shape.users];
    let mut rows = Vec::new();
    // coarse timestamps so that equal times occur now and then
    let mut events: Vec<(usize, i64)> = (0..shape.checkins)
        .map(|_| {
            (
                rng.random_range(0..shape.users),
                BASE + rng.random_range(0..shape.days * 48) * 1800,
            )
        })
        .collect();
    events.sort();
    for (u, t) in events {
        let p = match last[u] {
            Some(prev) if rng.random::<f64>() < shape.repeat => prev,
            _ => rng.random_range(0..shape.pois),
        };
        last[u] = Some(p);
        rows.push(RawCheckIn {
            user: format!("user{u}"),
            poi: format!("poi{p}"),
            lat: coords[p].0,
            lon: coords[p].1,
            timestamp: t,
        });
    }
    let mut friends = Vec::new();
    for a in 0..shape.users {
        for b in a + 1..shape.users {
            if rng.random::<f64>() < shape.friend_prob {
                friends.push((format!("user{a}"), format!("user{b}")));
            }
        }
    }
    Dataset::from_records(rows, friends).0
}

/// Period of a timestamp with the origin at the first check-in's UTC midnight.
pub fn oracle_bin(ds: &Dataset, ts: i64, delta_t_days: i64) -> u32 {
    let min = ds.checkins.iter().map(|c| c.timestamp).min().unwrap();
    let origin = min.div_euclid(DAY) * DAY;
    ((ts - origin) / (delta_t_days * DAY)) as u32
}

pub fn oracle_haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let r = 6371.0;
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().asin()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleInstance {
    pub user: u32,
    pub bin: u32,
    pub pois: Vec<u32>,
    pub times: Vec<i64>,
}

/// Per (user, period): the collapsed visit sequence, kept when it has at least two visits.
pub fn oracle_instances(ds: &Dataset, delta_t_days: i64) -> Vec<OracleInstance> {
    let mut groups: BTreeMap<(u32, u32), Vec<(i64, u32)>> = BTreeMap::new();
    for c in &ds.checkins {
        groups
            .entry((c.user, oracle_bin(ds, c.timestamp, delta_t_days)))
            .or_default()
            .push((c.timestamp, c.poi));
    }
    let mut out = Vec::new();
    for ((user, bin), mut visits) in groups {
        visits.sort();
        let mut pois: Vec<u32> = Vec::new();
        let mut times = Vec::new();
        for (t, p) in visits {
            if pois.last() != Some(&p) {
                pois.push(p);
                times.push(t);
            }
        }
        if pois.len() >= 2 {
            out.push(OracleInstance { user, bin, pois, times });
        }
    }
    out
}

/// Route id of each instance, numbered by first appearance.
pub fn oracle_route_ids(instances: &[OracleInstance]) -> (Vec<Vec<u32>>, Vec<u32>) {
    let mut routes: Vec<Vec<u32>> = Vec::new();
    let ids = instances
        .iter()
        .map(|i| match routes.iter().position(|r| *r == i.pois) {
            Some(k) => k as u32,
            None => {
                routes.push(i.pois.clone());
                (routes.len() - 1) as u32
            }
        })
        .collect();
    (routes, ids)
}

/// The POI with the longest time until the next visit, earliest on ties.
pub fn oracle_stay_point(inst: &OracleInstance) -> (u32, usize) {
    let dwell: Vec<i64> = inst.times.windows(2).map(|w| w[1] - w[0]).collect();
    let best = *dwell.iter().max().unwrap();
    let j = dwell.iter().position(|&d| d == best).unwrap();
    (inst.pois[j], j)
}

pub type EdgeMap = BTreeMap<((Namespace, u32), (Namespace, u32)), f64>;

/// Brute-force edge weights for one graph kind.
pub fn oracle_graph(ds: &Dataset, kind: GraphKind, delta_t_days: i64, rg_km: f64) -> EdgeMap {
    use Namespace::*;
    let mut w = EdgeMap::new();
    let count_fraction = |w: &mut EdgeMap, pairs: Vec<((Namespace, u32), (Namespace, u32))>| {
        for &(s, d) in &pairs {
            let num = pairs.iter().filter(|&&(a, b)| a == s && b == d).count();
            let den = pairs.iter().filter(|&&(a, _)| a == s).count();
            w.insert((s, d), num as f64 / den as f64);
        }
    };
    match kind {
        GraphKind::UU => {
            for u in 0..ds.user_count() as u32 {
                let friends: BTreeSet<u32> = ds
                    .friendships
                    .iter()
                    .filter_map(|f| {
                        if f.a == u {
                            Some(f.b)
                        } else if f.b == u {
                            Some(f.a)
                        } else {
                            None
                        }
                    })
                    .collect();
                for &v in &friends {
                    w.insert(((User, u), (User, v)), 1.0 / friends.len() as f64);
                }
            }
        }
        GraphKind::UL => count_fraction(&mut w, ds.checkins.iter().map(|c| ((User, c.user), (Poi, c.poi))).collect()),
        GraphKind::LU => count_fraction(&mut w, ds.checkins.iter().map(|c| ((Poi, c.poi), (User, c.user))).collect()),
        GraphKind::UT => count_fraction(
            &mut w,
            ds.checkins
                .iter()
                .map(|c| ((User, c.user), (Period, oracle_bin(ds, c.timestamp, delta_t_days))))
                .collect(),
        ),
        GraphKind::LT => count_fraction(
            &mut w,
            ds.checkins
                .iter()
                .map(|c| ((Poi, c.poi), (Period, oracle_bin(ds, c.timestamp, delta_t_days))))
                .collect(),
        ),
        GraphKind::UR => {
            let inst = oracle_instances(ds, delta_t_days);
            let (_, ids) = oracle_route_ids(&inst);
            count_fraction(
                &mut w,
                inst.iter().zip(&ids).map(|(i, &r)| ((User, i.user), (Route, r))).collect(),
            )
        }
        GraphKind::LL => {
            let n = ds.poi_count() as u32;
            let mut seen_in: Vec<BTreeSet<(u32, u32)>> = vec![BTreeSet::new(); n as usize];
            for c in &ds.checkins {
                seen_in[c.poi as usize].insert((c.user, oracle_bin(ds, c.timestamp, delta_t_days)));
            }
            for a in 0..n {
                for b in 0..n {
                    if a == b || seen_in[a as usize].is_disjoint(&seen_in[b as usize]) {
                        continue;
                    }
                    let p = (ds.pois[a as usize].lat, ds.pois[a as usize].lon);
                    let q = (ds.pois[b as usize].lat, ds.pois[b as usize].lon);
                    let v = 1.0 - oracle_haversine(p, q) / rg_km;
                    if v > 0.0 {
                        w.insert(((Poi, a), (Poi, b)), v);
                    }
                }
            }
        }
        GraphKind::LST => {
            let inst = oracle_instances(ds, delta_t_days);
            let mut stays: Vec<u32> = inst.iter().map(|i| oracle_stay_point(i).0).collect();
            stays.sort();
            stays.dedup();
            // one co-occurrence per (distinct POI of an instance, its stay point)
            let mut pairs = Vec::new();
            for i in &inst {
                let sp = oracle_stay_point(i).0;
                let st = stays.iter().position(|&s| s == sp).unwrap() as u32;
                let distinct: BTreeSet<u32> = i.pois.iter().copied().collect();
                for l in distinct {
                    pairs.push(((Poi, l), (StayPoint, st)));
                }
            }
            let backward: Vec<_> = pairs.iter().map(|&(a, b)| (b, a)).collect();
            count_fraction(&mut w, pairs);
            count_fraction(&mut w, backward);
        }
    }
    w
}
