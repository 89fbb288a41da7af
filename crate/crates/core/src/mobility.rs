//! Route extraction inside time periods and stay-point detection.
//!
//! A route instance is the run of one user's consecutive check-ins that fall
//! into one time period, with repeated consecutive check-ins at the same POI
//! collapsed into one visit. Routes are identified by their POI sequence, so
//! the same sequence walked by different users or in different periods shares
//! one route id.
//!
//! The dwell at position `j` of an instance is `t[j+1] - t[j]`: the time spent
//! at a POI before checking in at the next one. The last POI has no dwell. The
//! stay point is the POI with the longest dwell, earliest position on ties.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TimeBinning};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteInstance {
    pub route: u32,
    pub user: u32,
    pub bin: u32,
    pub pois: Vec<u32>,
    pub timestamps: Vec<i64>,
}

/// How each input check-in was consumed by extraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    /// Check-ins that are a visit of some route instance.
    pub in_routes: usize,
    /// Check-ins that were alone in their (user, period) after collapsing.
    pub singletons: usize,
    /// Repeat check-ins merged into the preceding visit of the same POI.
    pub collapsed: usize,
}

impl Coverage {
    pub fn total(&self) -> usize {
        self.in_routes + self.singletons + self.collapsed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSet {
    /// Distinct POI sequences, indexed by route id.
    pub routes: Vec<Vec<u32>>,
    /// Instances in (user, bin) order; at most one per (user, bin).
    pub instances: Vec<RouteInstance>,
    pub coverage: Coverage,
}

impl RouteSet {
    pub fn route_count(&self) -> usize {
        self.routes.len()
    }
}

/// Extracts route instances from a dataset whose check-ins are sorted by
/// `(user, timestamp)`.
pub fn extract_routes(dataset: &Dataset, binning: &TimeBinning) -> RouteSet {
    let mut set = RouteSet::default();
    let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();

    let mut flush = |set: &mut RouteSet, user: u32, bin: u32, pois: Vec<u32>, ts: Vec<i64>| {
        if pois.len() < 2 {
            set.coverage.singletons += pois.len();
            return;
        }
        set.coverage.in_routes += pois.len();
        let next = ids.len() as u32;
        let route = *ids.entry(pois.clone()).or_insert_with(|| {
            set.routes.push(pois.clone());
            next
        });
        set.instances.push(RouteInstance {
            route,
            user,
            bin,
            pois,
            timestamps: ts,
        });
    };

    let mut current: Option<(u32, u32)> = None;
    let mut pois: Vec<u32> = Vec::new();
    let mut ts: Vec<i64> = Vec::new();
    for c in &dataset.checkins {
        let key = (c.user, binning.bin_of(c.timestamp));
        if current != Some(key) {
            if let Some((u, b)) = current {
                flush(&mut set, u, b, std::mem::take(&mut pois), std::mem::take(&mut ts));
            }
            current = Some(key);
        }
        if pois.last() == Some(&c.poi) {
            set.coverage.collapsed += 1;
            continue;
        }
        pois.push(c.poi);
        ts.push(c.timestamp);
    }
    if let Some((u, b)) = current {
        flush(&mut set, u, b, pois, ts);
    }
    set
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StayPoint {
    pub poi: u32,
    /// Position of the stay point inside its instance.
    pub position: usize,
    pub dwell_seconds: i64,
}

/// Stay points of every route instance plus the stay-point namespace: the
/// distinct POIs that serve as a stay point at least once, in ascending POI order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StayPoints {
    pub per_instance: Vec<StayPoint>,
    pub pois: Vec<u32>,
}

impl StayPoints {
    /// Stay-point namespace index of a POI, if it is ever a stay point.
    pub fn index_of(&self, poi: u32) -> Option<u32> {
        self.pois.binary_search(&poi).ok().map(|i| i as u32)
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }
}

/// The stay point of a single instance.
pub fn stay_point_of(instance: &RouteInstance) -> StayPoint {
    debug_assert!(instance.pois.len() >= 2);
    let mut best = StayPoint {
        poi: instance.pois[0],
        position: 0,
        dwell_seconds: instance.timestamps[1] - instance.timestamps[0],
    };
    for j in 1..instance.pois.len() - 1 {
        let dwell = instance.timestamps[j + 1] - instance.timestamps[j];
        if dwell > best.dwell_seconds {
            best = StayPoint {
                poi: instance.pois[j],
                position: j,
                dwell_seconds: dwell,
            };
        }
    }
    best
}

pub fn extract_stay_points(routes: &RouteSet) -> StayPoints {
    let per_instance: Vec<StayPoint> = routes.instances.iter().map(stay_point_of).collect();
    let mut pois: Vec<u32> = per_instance.iter().map(|s| s.poi).collect();
    pois.sort_unstable();
    pois.dedup();
    StayPoints { per_instance, pois }
}

/// One line per instance: `route_id<TAB>user<TAB>bin<TAB>poi1,poi2,...<TAB>stay_point`.
pub fn export_routes(dataset: &Dataset, routes: &RouteSet, stays: &StayPoints) -> String {
    let mut out = String::new();
    for (inst, sp) in routes.instances.iter().zip(&stays.per_instance) {
        let seq: Vec<&str> = inst.pois.iter().map(|&p| dataset.pois[p as usize].key.as_str()).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            inst.route,
            dataset.users.key(inst.user),
            inst.bin,
            seq.join(","),
            dataset.pois[sp.poi as usize].key
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CheckinFormat, parse_checkins};

    fn dataset(text: &str) -> Dataset {
        let (rows, _) = parse_checkins(text, &CheckinFormat::default());
        Dataset::from_records(rows, vec![]).0
    }

    fn binning(days: u32) -> TimeBinning {
        TimeBinning {
            origin: 0,
            bin_width_days: days,
            bin_count: 10,
        }
    }

    fn instance(pois: &[u32], ts: &[i64]) -> RouteInstance {
        RouteInstance {
            route: 0,
            user: 0,
            bin: 0,
            pois: pois.to_vec(),
            timestamps: ts.to_vec(),
        }
    }

    #[test]
    fn single_bin_single_route() {
        let ds = dataset("a,l1,0,0,0\na,l2,0,0,10\na,l3,0,0,20\n");
        let r = extract_routes(&ds, &binning(1));
        assert_eq!(r.instances.len(), 1);
        assert_eq!(r.routes, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn bin_split_leaves_singletons() {
        let ds = dataset("a,l1,0,0,0\na,l2,0,0,86400\n");
        let r = extract_routes(&ds, &binning(1));
        assert!(r.instances.is_empty());
        assert_eq!(r.coverage.singletons, 2);
    }

    #[test]
    fn repeated_sequence_shares_route_id() {
        let ds = dataset("a,l1,0,0,0\na,l2,0,0,10\nb,l1,0,0,5\nb,l2,0,0,50\na,l1,0,0,86400\na,l2,0,0,86410\n");
        let r = extract_routes(&ds, &binning(1));
        assert_eq!(r.routes.len(), 1);
        assert_eq!(r.instances.len(), 3);
        assert!(r.instances.iter().all(|i| i.route == 0));
    }

    #[test]
    fn consecutive_duplicates_collapse() {
        let ds = dataset("a,l1,0,0,0\na,l1,0,0,30\na,l2,0,0,100\n");
        let r = extract_routes(&ds, &binning(1));
        assert_eq!(r.instances[0].pois, vec![0, 1]);
        assert_eq!(r.instances[0].timestamps, vec![0, 100]);
        assert_eq!(r.coverage, Coverage { in_routes: 2, singletons: 0, collapsed: 1 });
    }

    #[test]
    fn stay_point_longest_dwell() {
        let sp = stay_point_of(&instance(&[1, 2, 3], &[0, 100, 500]));
        assert_eq!((sp.poi, sp.dwell_seconds), (2, 400));
    }

    #[test]
    fn stay_point_tie_goes_to_earliest() {
        let sp = stay_point_of(&instance(&[1, 2, 3], &[0, 50, 100]));
        assert_eq!((sp.poi, sp.position), (1, 0));
    }

    #[test]
    fn final_poi_never_stay_point() {
        let sp = stay_point_of(&instance(&[7, 8], &[0, 1000]));
        assert_eq!(sp.poi, 7);
    }

    #[test]
    fn stay_point_namespace_sorted() {
        let routes = RouteSet {
            routes: vec![],
            instances: vec![instance(&[9, 4], &[0, 10]), instance(&[4, 2, 9], &[0, 1, 100])],
            coverage: Coverage::default(),
        };
        let sp = extract_stay_points(&routes);
        assert_eq!(sp.pois, vec![2, 9]);
        assert_eq!(sp.index_of(9), Some(1));
        assert_eq!(sp.index_of(4), None);
    }

    #[test]
    fn export_format() {
        let ds = dataset("a,l1,0,0,0\na,l2,0,0,100\na,l3,0,0,150\n");
        let r = extract_routes(&ds, &binning(1));
        let sp = extract_stay_points(&r);
        assert_eq!(export_routes(&ds, &r, &sp), "0\ta\t0\tl1,l2,l3\tl1\n");
    }
}
