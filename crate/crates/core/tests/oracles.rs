//! Library outputs against the brute-force references in `common`.

mod common;

use common::*;
use poi_embed::corpus::make_binning;
use poi_embed::graphs::{GraphKind, GraphSet, LlParams, build_all};
use poi_embed::mobility::{extract_routes, extract_stay_points};
use proptest::prelude::*;

fn library_graphs(ds: &poi_embed::corpus::Dataset, delta_t: u32, rg_km: f64) -> GraphSet {
    let b = make_binning(ds, delta_t).unwrap();
    let routes = extract_routes(ds, &b);
    let stays = extract_stay_points(&routes);
    let ll = LlParams {
        rg_km,
        ..LlParams::default()
    };
    build_all(ds, &b, &routes, &stays, &ll).unwrap()
}

fn as_map(set: &GraphSet, kind: GraphKind) -> EdgeMap {
    set.get(kind)
        .edges()
        .iter()
        .map(|e| (((e.src.ns, e.src.index), (e.dst.ns, e.dst.index)), e.weight))
        .collect()
}

fn shape() -> impl Strategy<Value = (CorpusShape, u64, u32, f64)> {
    (1usize..12, 1usize..30, 1usize..250, 1i64..90, 0.0f64..0.4, any::<u64>(), 1u32..30, 2.0f64..20.0).prop_map(
        |(users, pois, checkins, days, repeat, seed, dt, rg)| {
            let shape = CorpusShape {
                users,
                pois,
                checkins,
                days,
                repeat,
                ..CorpusShape::default()
            };
            (shape, seed, dt, rg)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_weights_match_brute_force((shape, seed, dt, rg) in shape()) {
        let ds = random_corpus(&shape, seed);
        let set = library_graphs(&ds, dt, rg);
        for kind in GraphKind::ALL {
            let got = as_map(&set, kind);
            let want = oracle_graph(&ds, kind, dt as i64, rg);
            prop_assert_eq!(got.len(), want.len(), "{:?} edge count", kind);
            for ((k, w), (k2, w2)) in got.iter().zip(&want) {
                prop_assert_eq!(k, k2);
                prop_assert!((w - w2).abs() <= 1e-12, "{:?} {:?}: {} vs {}", kind, k, w, w2);
            }
        }
    }

    #[test]
    fn stochastic_rows_sum_to_one((shape, seed, dt, rg) in shape()) {
        let ds = random_corpus(&shape, seed);
        let set = library_graphs(&ds, dt, rg);
        for g in set.iter().filter(|g| g.kind().is_stochastic()) {
            for (src, s) in g.out_weight_sums() {
                prop_assert!((s - 1.0).abs() <= 1e-9, "{:?} {:?} sums to {}", g.kind(), src, s);
            }
        }
    }

    #[test]
    fn routes_and_stay_points_match_brute_force((shape, seed, dt, _rg) in shape()) {
        let ds = random_corpus(&shape, seed);
        let b = make_binning(&ds, dt).unwrap();
        let routes = extract_routes(&ds, &b);
        let stays = extract_stay_points(&routes);
        let want = oracle_instances(&ds, dt as i64);
        let (want_routes, want_ids) = oracle_route_ids(&want);
        prop_assert_eq!(&routes.routes, &want_routes);
        prop_assert_eq!(routes.instances.len(), want.len());
        for ((got, w), &id) in routes.instances.iter().zip(&want).zip(&want_ids) {
            prop_assert_eq!((got.user, got.bin, &got.pois, &got.timestamps), (w.user, w.bin, &w.pois, &w.times));
            prop_assert_eq!(got.route, id);
        }
        for (sp, w) in stays.per_instance.iter().zip(&want) {
            prop_assert_eq!((sp.poi, sp.position), oracle_stay_point(w));
        }
        prop_assert_eq!(routes.coverage.total(), ds.checkins.len());
    }
}
