//! Great-circle distances and a fixed-grid spatial index over POIs.

use std::collections::HashMap;

use crate::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Grid cell size of [`GridIndex`], in degrees.
pub const GRID_CELL_DEG: f64 = 0.1;

/// Haversine distance in kilometers between two `(lat, lon)` points in degrees.
/// Inputs are not range-checked; see [`geodist`].
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn check_coord((lat, lon): (f64, f64)) -> Result<()> {
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err(Error::InvalidArgument(format!("latitude {lat} out of range")));
    }
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::InvalidArgument(format!("longitude {lon} out of range")));
    }
    Ok(())
}

/// Range-checked haversine distance in kilometers.
pub fn geodist(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    check_coord(a)?;
    check_coord(b)?;
    Ok(haversine_km(a, b))
}

/// Buckets points into `GRID_CELL_DEG` cells; radius queries scan the
/// neighbouring cells and filter by exact haversine distance.
#[derive(Clone, Debug)]
pub struct GridIndex {
    cells: HashMap<(i32, i32), Vec<u32>>,
    points: Vec<(f64, f64)>,
}

const COLUMNS: i32 = 3600;

fn column_of(lon: f64) -> i32 {
    // lon = 180 and lon = -180 are the same meridian
    let c = (lon / GRID_CELL_DEG).floor() as i32;
    (c + COLUMNS / 2).rem_euclid(COLUMNS) - COLUMNS / 2
}

fn cell_of((lat, lon): (f64, f64)) -> (i32, i32) {
    ((lat / GRID_CELL_DEG).floor() as i32, column_of(lon))
}

impl GridIndex {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        let mut cells: HashMap<(i32, i32), Vec<u32>> = HashMap::new();
        for (i, &p) in points.iter().enumerate() {
            cells.entry(cell_of(p)).or_default().push(i as u32);
        }
        GridIndex { cells, points }
    }

    pub fn point(&self, i: u32) -> (f64, f64) {
        self.points[i as usize]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of all points within `radius_km` (inclusive) of `center`, ascending.
    pub fn within(&self, center: (f64, f64), radius_km: f64) -> Vec<u32> {
        let (lat, lon) = center;
        let delta = radius_km / EARTH_RADIUS_KM;
        let dlat = delta.to_degrees();
        let lat_lo = (lat - dlat).max(-90.0);
        let lat_hi = (lat + dlat).min(90.0);
        // widest longitude offset reachable within `delta` from latitude `lat`
        let ratio = delta.sin() / lat.to_radians().cos();

        let columns: Vec<i32> = if delta >= std::f64::consts::FRAC_PI_2 || !(ratio < 1.0) {
            (-COLUMNS / 2..COLUMNS / 2).collect()
        } else {
            let dlon = ratio.asin().to_degrees() + 1e-9;
            let lo = ((lon - dlon) / GRID_CELL_DEG).floor() as i32;
            let hi = ((lon + dlon) / GRID_CELL_DEG).floor() as i32;
            let mut cols: Vec<i32> = (lo..=hi)
                .map(|c| (c + COLUMNS / 2).rem_euclid(COLUMNS) - COLUMNS / 2)
                .collect();
            cols.sort_unstable();
            cols.dedup();
            cols
        };

        let rows = (lat_lo / GRID_CELL_DEG).floor() as i32..=(lat_hi / GRID_CELL_DEG).floor() as i32;
        let mut out = Vec::new();
        for r in rows {
            for &c in &columns {
                if let Some(ids) = self.cells.get(&(r, c)) {
                    out.extend(
                        ids.iter()
                            .copied()
                            .filter(|&i| haversine_km(center, self.points[i as usize]) <= radius_km),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_points_zero() {
        assert_eq!(geodist((40.6, 22.9), (40.6, 22.9)).unwrap(), 0.0);
    }

    #[test]
    fn one_degree_along_equator() {
        // R * (π / 180)
        let expected = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let d = geodist((0.0, 0.0), (0.0, 1.0)).unwrap();
        assert!((d - expected).abs() < 1e-9);
        assert!((d - 111.19).abs() < 0.01);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(geodist((91.0, 0.0), (0.0, 0.0)).is_err());
        assert!(geodist((0.0, 0.0), (0.0, -181.0)).is_err());
        assert!(geodist((f64::NAN, 0.0), (0.0, 0.0)).is_err());
    }

    fn coord() -> impl Strategy<Value = (f64, f64)> {
        (-90.0..=90.0f64, -180.0..=180.0f64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn symmetric(a in coord(), b in coord()) {
            prop_assert_eq!(geodist(a, b).unwrap(), geodist(b, a).unwrap());
        }

        #[test]
        fn nonnegative_and_bounded(a in coord(), b in coord()) {
            let d = geodist(a, b).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!(d <= EARTH_RADIUS_KM * std::f64::consts::PI + 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn grid_matches_linear_scan(
            center in coord(),
            offsets in prop::collection::vec((-0.5..0.5f64, -0.5..0.5f64), 1..150),
            radius in 0.1..40.0f64,
        ) {
            let points: Vec<(f64, f64)> = offsets
                .iter()
                .map(|(dl, dn)| {
                    let lat = (center.0 + dl).clamp(-90.0, 90.0);
                    let mut lon = center.1 + dn;
                    if lon > 180.0 { lon -= 360.0; }
                    if lon < -180.0 { lon += 360.0; }
                    (lat, lon)
                })
                .collect();
            let index = GridIndex::new(points.clone());
            let brute: Vec<u32> = (0..points.len() as u32)
                .filter(|&i| haversine_km(center, points[i as usize]) <= radius)
                .collect();
            prop_assert_eq!(index.within(center, radius), brute);
        }
    }

    #[test]
    fn antimeridian_neighbours_found() {
        let pts = vec![(10.0, 179.99), (10.0, -179.99), (10.0, 170.0)];
        let idx = GridIndex::new(pts);
        assert_eq!(idx.within((10.0, 179.995), 5.0), vec![0, 1]);
        assert_eq!(idx.within((10.0, -179.995), 5.0), vec![0, 1]);
    }

    #[test]
    fn polar_query() {
        let pts = vec![(89.99, 0.0), (89.99, 120.0), (89.0, 0.0)];
        let idx = GridIndex::new(pts);
        assert_eq!(idx.within((90.0, 0.0), 5.0), vec![0, 1]);
    }
}
