//! Seeded synthetic check-in corpora with known structure.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, RawCheckIn, SECONDS_PER_DAY};

/// 2017-07-14T02:40:00Z, an arbitrary start for synthetic timelines.
pub const EPOCH_BASE: i64 = 1_500_000_000;

/// A corpus plus the ground-truth group of every user and POI.
#[derive(Clone, Debug)]
pub struct Planted {
    pub dataset: Dataset,
    pub friendships: Vec<(String, String)>,
    /// Indexed by dataset user index.
    pub user_group: Vec<usize>,
    /// Indexed by dataset POI index.
    pub poi_group: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoBlockParams {
    pub users: usize,
    pub pois: usize,
    pub checkins_per_user: usize,
    pub intra_fraction: f64,
    pub days: i64,
    pub seed: u64,
}

impl Default for TwoBlockParams {
    fn default() -> Self {
        TwoBlockParams {
            users: 40,
            pois: 40,
            checkins_per_user: 30,
            intra_fraction: 0.95,
            days: 60,
            seed: 7,
        }
    }
}

fn user_key(i: usize) -> String {
    format!("u{i:05}")
}

fn poi_key(i: usize) -> String {
    format!("p{i:05}")
}

/// Users and POIs split into two equal blocks. Each user checks in at
/// `round(intra_fraction · n)` POIs of its own block and the rest in the
/// other block, uniformly at random. All POIs lie within a few kilometres,
/// so every POI is a candidate for every query.
pub fn two_block(params: &TwoBlockParams) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let block = |i: usize, n: usize| usize::from(i >= n / 2);
    let coords: Vec<(f64, f64)> = (0..params.pois)
        .map(|_| (40.0 + rng.random_range(0.0..0.03), -74.0 + rng.random_range(0.0..0.03)))
        .collect();
    let mut rows = Vec::new();
    let intra = (params.intra_fraction * params.checkins_per_user as f64).round() as usize;
    for u in 0..params.users {
        let own = block(u, params.users);
        let own_pois: Vec<usize> = (0..params.pois).filter(|&p| block(p, params.pois) == own).collect();
        let other_pois: Vec<usize> = (0..params.pois).filter(|&p| block(p, params.pois) != own).collect();
        let mut picks: Vec<usize> = (0..params.checkins_per_user)
            .map(|k| {
                let pool = if k < intra { &own_pois } else { &other_pois };
                *pool.choose(&mut rng).unwrap()
            })
            .collect();
        // spread the inter-block visits over the timeline
        for i in (1..picks.len()).rev() {
            let j = rng.random_range(0..=i);
            picks.swap(i, j);
        }
        let mut times: Vec<i64> = (0..picks.len())
            .map(|_| EPOCH_BASE + rng.random_range(0..params.days * SECONDS_PER_DAY))
            .collect();
        times.sort_unstable();
        for (p, t) in picks.into_iter().zip(times) {
            rows.push(RawCheckIn {
                user: user_key(u),
                poi: poi_key(p),
                lat: coords[p].0,
                lon: coords[p].1,
                timestamp: t,
            });
        }
    }
    let dataset = Dataset::from_records(rows, vec![]).0;
    let user_group = dataset
        .users
        .keys()
        .iter()
        .map(|k| block(k[1..].parse().unwrap(), params.users))
        .collect();
    let poi_group = dataset
        .poi_keys
        .keys()
        .iter()
        .map(|k| block(k[1..].parse().unwrap(), params.pois))
        .collect();
    Planted {
        dataset,
        friendships: vec![],
        user_group,
        poi_group,
    }
}

/// Shape of [`structured`] corpora.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructuredParams {
    pub communities: usize,
    pub users_per_community: usize,
    pub hubs_per_community: usize,
    pub pois_per_hub: usize,
    pub periods: usize,
    pub period_days: i64,
    /// Chance a user is active in a period.
    pub activity: f64,
    /// Chance a user keeps the previous period's hub.
    pub hub_stickiness: f64,
    /// Chance a user follows the community's hub of the season instead.
    pub seasonal_pull: f64,
    pub friend_prob: f64,
    pub cross_friend_prob: f64,
    pub seed: u64,
}

impl StructuredParams {
    /// About 5,000 check-ins over 160 users.
    pub fn ablation(seed: u64) -> Self {
        StructuredParams {
            communities: 5,
            users_per_community: 32,
            hubs_per_community: 4,
            pois_per_hub: 10,
            periods: 8,
            period_days: 20,
            activity: 0.85,
            hub_stickiness: 0.7,
            seasonal_pull: 0.2,
            friend_prob: 0.15,
            cross_friend_prob: 0.005,
            seed,
        }
    }

    /// About 1,000 check-ins; the bundled smoke fixture.
    pub fn smoke() -> Self {
        StructuredParams {
            communities: 2,
            users_per_community: 18,
            hubs_per_community: 3,
            pois_per_hub: 6,
            periods: 6,
            ..StructuredParams::ablation(11)
        }
    }
}

/// Communities of friends living around a few hubs each.
///
/// Every active period a user walks one route: a long stay at a hub POI,
/// then 2 to 5 short visits to POIs clustered around that hub. Users drift
/// between the hubs of their community over time, and each period has a
/// seasonal hub that attracts extra visits. Communities are ~55 km apart, and
/// all POIs of one community lie within the 10 km query radius of each other.
/// Groups are communities.
pub fn structured(params: &StructuredParams) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let hubs = params.hubs_per_community;
    let per_hub = params.pois_per_hub + 1;
    // POI layout: community, hub, slot 0 is the hub itself
    let mut coords = Vec::new();
    let mut poi_group = Vec::new();
    for c in 0..params.communities {
        let center = (40.0 + 0.5 * c as f64, -74.0);
        for h in 0..hubs {
            let angle = std::f64::consts::TAU * h as f64 / hubs as f64;
            let hub = (center.0 + 0.02 * angle.sin(), center.1 + 0.02 * angle.cos());
            coords.push(hub);
            poi_group.push(c);
            for _ in 0..params.pois_per_hub {
                coords.push((
                    hub.0 + rng.random_range(-0.006..0.006),
                    hub.1 + rng.random_range(-0.006..0.006),
                ));
                poi_group.push(c);
            }
        }
    }
    let poi_index = |c: usize, h: usize, slot: usize| (c * hubs + h) * per_hub + slot;
    // popular cluster POIs come first
    let slot_weights: Vec<f64> = (1..=params.pois_per_hub).map(|i| (i as f64).powf(-0.8)).collect();
    let slot_dist = rand::distr::weighted::WeightedIndex::new(&slot_weights).expect("positive weights");

    let users = params.communities * params.users_per_community;
    let community = |u: usize| u / params.users_per_community;
    let mut friendships = Vec::new();
    for a in 0..users {
        for b in a + 1..users {
            let p = if community(a) == community(b) {
                params.friend_prob
            } else {
                params.cross_friend_prob
            };
            if rng.random::<f64>() < p {
                friendships.push((user_key(a), user_key(b)));
            }
        }
    }

    let mut rows = Vec::new();
    let period_secs = params.period_days * SECONDS_PER_DAY;
    for u in 0..users {
        let c = community(u);
        let mut hub = rng.random_range(0..hubs);
        for p in 0..params.periods {
            if rng.random::<f64>() >= params.hub_stickiness {
                hub = rng.random_range(0..hubs);
            }
            let seasonal = (p / 2) % hubs;
            let today = if rng.random::<f64>() < params.seasonal_pull { seasonal } else { hub };
            if rng.random::<f64>() >= params.activity {
                continue;
            }
            let day = rng.random_range(0..params.period_days);
            let mut t = EPOCH_BASE + p as i64 * period_secs + day * SECONDS_PER_DAY + rng.random_range(6 * 3600..10 * 3600);
            let mut push = |poi: usize, t: i64| {
                rows.push(RawCheckIn {
                    user: user_key(u),
                    poi: poi_key(poi),
                    lat: coords[poi].0,
                    lon: coords[poi].1,
                    timestamp: t,
                })
            };
            push(poi_index(c, today, 0), t);
            t += rng.random_range(3 * 3600..5 * 3600);
            let stops = rng.random_range(2..=5);
            let mut last = 0;
            for _ in 0..stops {
                let mut slot = rng.sample(&slot_dist) + 1;
                if slot == last {
                    slot = rng.sample(&slot_dist) + 1;
                }
                if slot == last {
                    continue;
                }
                push(poi_index(c, today, slot), t);
                last = slot;
                t += rng.random_range(20 * 60..60 * 60);
            }
        }
    }
    let dataset = Dataset::from_records(rows, friendships.clone()).0;
    let user_group = dataset
        .users
        .keys()
        .iter()
        .map(|k| community(k[1..].parse().unwrap()))
        .collect();
    let poi_group = dataset
        .poi_keys
        .keys()
        .iter()
        .map(|k| poi_group[k[1..].parse::<usize>().unwrap()])
        .collect();
    Planted {
        dataset,
        friendships,
        user_group,
        poi_group,
    }
}

/// Tab-separated `user poi lat lon timestamp` lines with a header.
pub fn checkins_tsv(dataset: &Dataset) -> String {
    let mut out = String::from("user\tpoi\tlat\tlon\ttimestamp\n");
    for r in dataset.raw_records() {
        let _ = writeln!(out, "{}\t{}\t{:?}\t{:?}\t{}", r.user, r.poi, r.lat, r.lon, r.timestamp);
    }
    out
}

/// Tab-separated friendship pairs.
pub fn friendships_tsv(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
}
