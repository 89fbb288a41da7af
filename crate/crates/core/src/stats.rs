//! Descriptive statistics of a corpus: activity histograms, weekly and daily
//! check-in profiles, and power-law tail fits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Datelike, Timelike};

use crate::corpus::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub pois: usize,
    pub checkins: usize,
    pub friendships: usize,
    /// Check-ins per user, indexed by user.
    pub per_user: Vec<u64>,
    /// Check-ins per POI, indexed by POI.
    pub per_poi: Vec<u64>,
    /// Number of users having exactly `k` check-ins, for every observed `k > 0`.
    pub user_histogram: BTreeMap<u64, u64>,
    pub poi_histogram: BTreeMap<u64, u64>,
    /// Monday = 0 … Sunday = 6 (UTC).
    pub day_of_week: [u64; 7],
    pub hour_of_day: [u64; 24],
    pub user_tail_exponent: Option<f64>,
    pub poi_tail_exponent: Option<f64>,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut per_user = vec![0u64; dataset.user_count()];
    let mut per_poi = vec![0u64; dataset.poi_count()];
    let mut day_of_week = [0u64; 7];
    let mut hour_of_day = [0u64; 24];
    for c in &dataset.checkins {
        per_user[c.user as usize] += 1;
        per_poi[c.poi as usize] += 1;
        let dt = DateTime::from_timestamp(c.timestamp, 0).expect("timestamp in chrono range");
        day_of_week[dt.weekday().num_days_from_monday() as usize] += 1;
        hour_of_day[dt.hour() as usize] += 1;
    }
    let histogram = |counts: &[u64]| {
        let mut h = BTreeMap::new();
        for &c in counts.iter().filter(|&&c| c > 0) {
            *h.entry(c).or_insert(0) += 1;
        }
        h
    };
    let active = |counts: &[u64]| counts.iter().copied().filter(|&c| c > 0).collect::<Vec<_>>();
    DatasetStats {
        users: dataset.user_count(),
        pois: dataset.poi_count(),
        checkins: dataset.checkins.len(),
        friendships: dataset.friendships.len(),
        user_histogram: histogram(&per_user),
        poi_histogram: histogram(&per_poi),
        user_tail_exponent: fit_power_law(&active(&per_user), 1),
        poi_tail_exponent: fit_power_law(&active(&per_poi), 1),
        per_user,
        per_poi,
        day_of_week,
        hour_of_day,
    }
}

impl DatasetStats {
    /// Human-readable summary followed by one `key=value` metric per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# {} users, {} POIs, {} check-ins, {} friendships",
            self.users, self.pois, self.checkins, self.friendships
        );
        let fmt_exp = |e: Option<f64>| e.map_or("nan".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "users={}", self.users);
        let _ = writeln!(s, "pois={}", self.pois);
        let _ = writeln!(s, "checkins={}", self.checkins);
        let _ = writeln!(s, "friendships={}", self.friendships);
        let _ = writeln!(s, "user_tail_exponent={}", fmt_exp(self.user_tail_exponent));
        let _ = writeln!(s, "poi_tail_exponent={}", fmt_exp(self.poi_tail_exponent));
        for (d, n) in self.day_of_week.iter().enumerate() {
            let _ = writeln!(s, "day_of_week.{d}={n}");
        }
        for (h, n) in self.hour_of_day.iter().enumerate() {
            let _ = writeln!(s, "hour_of_day.{h}={n}");
        }
        for (k, n) in &self.user_histogram {
            let _ = writeln!(s, "user_checkins.{k}={n}");
        }
        for (k, n) in &self.poi_histogram {
            let _ = writeln!(s, "poi_checkins.{k}={n}");
        }
        s
    }
}

/// Hurwitz zeta `ζ(s, q) = Σ_{k≥0} (q+k)^{-s}` for `s > 1`, `q ≥ 1`.
///
/// Direct summation of the head plus an Euler–Maclaurin tail.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const HEAD: usize = 64;
    let mut sum = 0.0;
    for k in 0..HEAD {
        sum += (q + k as f64).powf(-s);
    }
    let n = q + HEAD as f64;
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // Bernoulli terms B2, B4, B6
    let mut term = s * n.powf(-s - 1.0);
    sum += term / 12.0;
    term *= (s + 1.0) * (s + 2.0) / (n * n);
    sum -= term / 720.0;
    term *= (s + 3.0) * (s + 4.0) / (n * n);
    sum += term / 30240.0;
    sum
}

/// Discrete power-law MLE of the exponent over samples `>= x_min`.
///
/// Maximizes `-n ln ζ(α, x_min) - α Σ ln x` by golden-section search on
/// `α ∈ (1, 8]`. Returns `None` with fewer than two tail samples or when all
/// tail samples equal `x_min` (the likelihood has no interior maximum).
pub fn fit_power_law(samples: &[u64], x_min: u64) -> Option<f64> {
    let tail: Vec<f64> = samples.iter().filter(|&&x| x >= x_min.max(1)).map(|&x| x as f64).collect();
    if tail.len() < 2 || tail.iter().all(|&x| x == x_min.max(1) as f64) {
        return None;
    }
    let n = tail.len() as f64;
    let sum_ln: f64 = tail.iter().map(|x| x.ln()).sum();
    let q = x_min.max(1) as f64;
    let ll = |a: f64| -n * hurwitz_zeta(a, q).ln() - a * sum_ln;

    let (mut lo, mut hi) = (1.0 + 1e-6, 8.0);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (ll(x1), ll(x2));
    while hi - lo > 1e-7 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = ll(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = ll(x1);
        }
    }
    Some(0.5 * (lo + hi))
}
