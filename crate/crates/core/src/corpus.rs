//! Check-in and friendship ingest, dense key interning, and time-period binning.
//!
//! Every namespace (users, POIs) is indexed in sorted key order, so ingesting a
//! shuffled copy of the same rows produces an identical [`Dataset`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Largest share of malformed rows tolerated before ingest aborts.
pub const MALFORMED_ABORT_RATIO: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub key: String,
    pub lat: f64,
    pub lon: f64,
}

/// One check-in. Field order gives the canonical sort `(user, timestamp, poi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CheckIn {
    pub user: u32,
    pub timestamp: i64,
    pub poi: u32,
}

/// Undirected friendship, stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FriendEdge {
    pub a: u32,
    pub b: u32,
}

impl FriendEdge {
    pub fn new(x: u32, y: u32) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(FriendEdge { a: x, b: y }),
            std::cmp::Ordering::Greater => Some(FriendEdge { a: y, b: x }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

/// Bijection between string keys and dense indices `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Interner {
    keys: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    /// Builds an interner over the sorted, deduplicated keys.
    pub fn from_keys<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = keys.into_iter().map(Into::into).collect();
        Self::from(set.into_iter().collect::<Vec<_>>())
    }

    pub fn get(&self, key: &str) -> Option<u32> {
        self.index.get(key).copied()
    }

    pub fn key(&self, idx: u32) -> &str {
        &self.keys[idx as usize]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

impl From<Vec<String>> for Interner {
    fn from(keys: Vec<String>) -> Self {
        let index = keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
        Interner { keys, index }
    }
}

impl From<Interner> for Vec<String> {
    fn from(i: Interner) -> Self {
        i.keys
    }
}

/// Equal-width time periods of `bin_width_days` days starting at `origin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBinning {
    pub origin: i64,
    pub bin_width_days: u32,
    pub bin_count: u32,
}

impl TimeBinning {
    /// Binning covering `[min_ts, max_ts]`, with the origin floored to midnight UTC.
    pub fn covering(min_ts: i64, max_ts: i64, delta_t_days: u32) -> Result<Self> {
        if delta_t_days == 0 {
            return Err(Error::InvalidArgument("delta_t must be at least one day".into()));
        }
        if max_ts < min_ts {
            return Err(Error::InvalidArgument("empty time range".into()));
        }
        let origin = min_ts.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY;
        let width = delta_t_days as i64 * SECONDS_PER_DAY;
        let bin_count = ((max_ts - origin) / width + 1) as u32;
        Ok(TimeBinning {
            origin,
            bin_width_days: delta_t_days,
            bin_count,
        })
    }

    pub fn width_seconds(&self) -> i64 {
        self.bin_width_days as i64 * SECONDS_PER_DAY
    }

    /// Bin of `timestamp`; timestamps outside the covered span clamp to the
    /// first or last bin.
    pub fn bin_of(&self, timestamp: i64) -> u32 {
        let raw = (timestamp - self.origin).div_euclid(self.width_seconds());
        raw.clamp(0, self.bin_count as i64 - 1) as u32
    }
}

/// Builds the shared binning for a dataset.
pub fn make_binning(dataset: &Dataset, delta_t_days: u32) -> Result<TimeBinning> {
    let (min, max) = dataset
        .time_span()
        .ok_or_else(|| Error::Empty("dataset has no check-ins".into()))?;
    TimeBinning::covering(min, max, delta_t_days)
}

pub fn bin_of(timestamp: i64, binning: &TimeBinning) -> u32 {
    binning.bin_of(timestamp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Delimiter {
    #[default]
    Auto,
    Tab,
    Comma,
}

impl FromStr for Delimiter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Delimiter::Auto),
            "tab" | "\\t" => Ok(Delimiter::Tab),
            "comma" | "," => Ok(Delimiter::Comma),
            other => Err(Error::Unknown {
                kind: "delimiter",
                value: other.into(),
            }),
        }
    }
}

impl fmt::Display for Delimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Delimiter::Auto => "auto",
            Delimiter::Tab => "tab",
            Delimiter::Comma => "comma",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TimeFormat {
    #[default]
    Epoch,
    Iso8601,
}

impl FromStr for TimeFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epoch" => Ok(TimeFormat::Epoch),
            "iso8601" | "iso" => Ok(TimeFormat::Iso8601),
            other => Err(Error::Unknown {
                kind: "time format",
                value: other.into(),
            }),
        }
    }
}

impl fmt::Display for TimeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeFormat::Epoch => "epoch",
            TimeFormat::Iso8601 => "iso8601",
        })
    }
}

/// Parses an epoch-seconds or ISO-8601 timestamp. ISO values without an
/// offset are read as UTC.
pub fn parse_timestamp(s: &str, format: TimeFormat) -> Option<i64> {
    let s = s.trim();
    match format {
        TimeFormat::Epoch => s
            .parse::<i64>()
            .ok()
            .or_else(|| s.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v.floor() as i64)),
        TimeFormat::Iso8601 => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
                return Some(dt.timestamp());
            }
            for pattern in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
                if let Ok(dt) = NaiveDateTime::parse_from_str(s, pattern) {
                    return Some(dt.and_utc().timestamp());
                }
            }
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp())
        }
    }
}

/// Column layout of a check-in file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckinFormat {
    pub delimiter: Delimiter,
    pub time: TimeFormat,
    /// Column positions of user, poi, lat, lon, timestamp.
    pub columns: [usize; 5],
    /// Declared dataset span; rows outside it are rejected.
    pub span: Option<(i64, i64)>,
}

impl Default for CheckinFormat {
    fn default() -> Self {
        CheckinFormat {
            delimiter: Delimiter::Auto,
            time: TimeFormat::Epoch,
            columns: [0, 1, 2, 3, 4],
            span: None,
        }
    }
}

/// A validated check-in row, still keyed by strings.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCheckIn {
    pub user: String,
    pub poi: String,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub accepted: usize,
    pub header_skipped: bool,
    /// Rejected row counts by reason.
    pub rejected: BTreeMap<String, usize>,
    /// Rows whose POI coordinates disagree with the POI's canonical coordinates.
    pub coordinate_conflicts: usize,
}

impl IngestReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
    }
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && !k.chars().any(char::is_whitespace)
}

fn split_fields(line: &str, delim: Delimiter) -> Vec<&str> {
    match delim {
        Delimiter::Tab => line.split('\t').collect(),
        Delimiter::Comma => line.split(',').collect(),
        Delimiter::Auto => unreachable!("delimiter resolved before splitting"),
    }
}

fn parse_row(fields: &[&str], format: &CheckinFormat) -> std::result::Result<RawCheckIn, &'static str> {
    let [cu, cp, clat, clon, cts] = format.columns;
    let max_col = *format.columns.iter().max().unwrap();
    if fields.len() <= max_col {
        return Err("missing columns");
    }
    let user = fields[cu].trim();
    let poi = fields[cp].trim();
    if !valid_key(user) || !valid_key(poi) {
        return Err("bad key");
    }
    let lat: f64 = fields[clat].trim().parse().map_err(|_| "bad latitude")?;
    let lon: f64 = fields[clon].trim().parse().map_err(|_| "bad longitude")?;
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err("latitude out of range");
    }
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err("longitude out of range");
    }
    let timestamp = parse_timestamp(fields[cts], format.time).ok_or("bad timestamp")?;
    if let Some((lo, hi)) = format.span {
        if timestamp < lo || timestamp > hi {
            return Err("timestamp outside declared span");
        }
    }
    Ok(RawCheckIn {
        user: user.to_string(),
        poi: poi.to_string(),
        lat,
        lon,
        timestamp,
    })
}

/// Parses check-in text, counting rejected rows by reason.
///
/// A first line whose latitude and longitude columns are both non-numeric is
/// treated as a header.
pub fn parse_checkins(text: &str, format: &CheckinFormat) -> (Vec<RawCheckIn>, IngestReport) {
    let mut report = IngestReport::default();
    let mut out = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();

    let delim = match format.delimiter {
        Delimiter::Auto => match lines.peek() {
            Some(l) if l.contains('\t') => Delimiter::Tab,
            _ => Delimiter::Comma,
        },
        d => d,
    };

    if let Some(first) = lines.peek() {
        let fields = split_fields(first, delim);
        let [_, _, clat, clon, _] = format.columns;
        let numeric = |i: usize| fields.get(i).is_some_and(|f| f.trim().parse::<f64>().is_ok());
        if !numeric(clat) && !numeric(clon) {
            report.header_skipped = true;
            lines.next();
        }
    }

    for line in lines {
        report.rows += 1;
        match parse_row(&split_fields(line, delim), format) {
            Ok(row) => {
                report.accepted += 1;
                out.push(row);
            }
            Err(reason) => report.reject(reason),
        }
    }
    (out, report)
}

fn check_malformed(path: &Path, report: &IngestReport) -> Result<()> {
    let bad = report.rejected_total();
    if report.rows > 0 && bad as f64 > MALFORMED_ABORT_RATIO * report.rows as f64 {
        let first = report
            .rejected
            .iter()
            .max_by_key(|(_, c)| **c)
            .map(|(r, c)| format!("{r} ({c} rows)"))
            .unwrap_or_default();
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: bad,
            total: report.rows,
            first,
        });
    }
    Ok(())
}

/// Reads and indexes a check-in file.
pub fn ingest_checkins(path: &Path, format: &CheckinFormat) -> Result<(Dataset, IngestReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (rows, mut report) = parse_checkins(&text, format);
    check_malformed(path, &report)?;
    if rows.is_empty() {
        return Err(Error::Empty(format!("no valid check-ins in {}", path.display())));
    }
    let (dataset, conflicts) = Dataset::from_records(rows, Vec::new());
    report.coordinate_conflicts = conflicts;
    Ok((dataset, report))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendshipReport {
    pub rows: usize,
    pub accepted: usize,
    pub self_loops: usize,
    pub malformed: usize,
    /// Users that appear only in the friendship file.
    pub new_users: usize,
}

/// Parses friendship text: two keys per line separated by tab, comma or spaces.
pub fn parse_friendships(text: &str) -> (Vec<(String, String)>, FriendshipReport) {
    let mut report = FriendshipReport::default();
    let mut pairs = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        report.rows += 1;
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() < 2 || !valid_key(fields[0]) || !valid_key(fields[1]) {
            report.malformed += 1;
            continue;
        }
        if fields[0] == fields[1] {
            report.self_loops += 1;
            continue;
        }
        report.accepted += 1;
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    (pairs, report)
}

/// Reads a friendship file and merges it into `dataset`.
pub fn ingest_friendships(path: &Path, dataset: Dataset) -> Result<(Dataset, FriendshipReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (pairs, mut report) = parse_friendships(&text);
    if report.rows > 0 && (report.malformed as f64) > MALFORMED_ABORT_RATIO * report.rows as f64 {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: report.malformed,
            total: report.rows,
            first: "rows without two keys".into(),
        });
    }
    let before = dataset.users.len();
    let dataset = dataset.with_friendships(pairs);
    report.new_users = dataset.users.len() - before;
    Ok((dataset, report))
}

/// An indexed check-in corpus. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub users: Interner,
    pub poi_keys: Interner,
    pub pois: Vec<Poi>,
    /// Sorted by `(user, timestamp, poi)`.
    pub checkins: Vec<CheckIn>,
    pub friendships: Vec<FriendEdge>,
    /// Users with no check-ins (known only from friendships).
    pub friend_only: Vec<u32>,
}

impl Dataset {
    /// Assembles a dataset from validated rows and friendship key pairs.
    /// Returns the dataset and the number of rows whose coordinates
    /// disagree with the POI's canonical coordinates (taken from its
    /// earliest check-in).
    pub fn from_records(rows: Vec<RawCheckIn>, friends: Vec<(String, String)>) -> (Dataset, usize) {
        let mut canonical: BTreeMap<&str, (i64, f64, f64)> = BTreeMap::new();
        for r in &rows {
            let cand = (r.timestamp, r.lat, r.lon);
            canonical
                .entry(r.poi.as_str())
                .and_modify(|cur| {
                    if cand.partial_cmp(cur) == Some(std::cmp::Ordering::Less) {
                        *cur = cand;
                    }
                })
                .or_insert(cand);
        }
        let conflicts = rows
            .iter()
            .filter(|r| {
                let (_, lat, lon) = canonical[r.poi.as_str()];
                lat != r.lat || lon != r.lon
            })
            .count();

        let poi_keys = Interner::from_keys(canonical.keys().copied());
        let pois = canonical
            .iter()
            .map(|(k, (_, lat, lon))| Poi {
                key: k.to_string(),
                lat: *lat,
                lon: *lon,
            })
            .collect();

        let users = Interner::from_keys(
            rows.iter()
                .map(|r| r.user.as_str())
                .chain(friends.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()])),
        );

        let mut checkins: Vec<CheckIn> = rows
            .iter()
            .map(|r| CheckIn {
                user: users.get(&r.user).unwrap(),
                timestamp: r.timestamp,
                poi: poi_keys.get(&r.poi).unwrap(),
            })
            .collect();
        checkins.sort_unstable();

        let friendships: BTreeSet<FriendEdge> = friends
            .iter()
            .filter_map(|(a, b)| FriendEdge::new(users.get(a).unwrap(), users.get(b).unwrap()))
            .collect();

        let mut dataset = Dataset {
            users,
            poi_keys,
            pois,
            checkins,
            friendships: friendships.into_iter().collect(),
            friend_only: Vec::new(),
        };
        dataset.friend_only = dataset.compute_friend_only();
        (dataset, conflicts)
    }

    fn compute_friend_only(&self) -> Vec<u32> {
        let mut active = vec![false; self.users.len()];
        for c in &self.checkins {
            active[c.user as usize] = true;
        }
        (0..self.users.len() as u32).filter(|&u| !active[u as usize]).collect()
    }

    /// Merges friendship pairs, adding unknown users with zero check-ins.
    pub fn with_friendships(self, pairs: Vec<(String, String)>) -> Dataset {
        let rows = self.raw_records();
        let mut friends: Vec<(String, String)> = self
            .friendships
            .iter()
            .map(|e| (self.users.key(e.a).to_string(), self.users.key(e.b).to_string()))
            .collect();
        friends.extend(pairs);
        // users that were already friend-only must survive the rebuild
        for &u in &self.friend_only {
            if !friends.iter().any(|(a, b)| a == self.users.key(u) || b == self.users.key(u)) {
                friends.push((self.users.key(u).to_string(), self.users.key(u).to_string()));
            }
        }
        Dataset::from_records(rows, friends).0
    }

    /// The check-ins as string-keyed rows, using canonical POI coordinates.
    pub fn raw_records(&self) -> Vec<RawCheckIn> {
        self.checkins
            .iter()
            .map(|c| {
                let p = &self.pois[c.poi as usize];
                RawCheckIn {
                    user: self.users.key(c.user).to_string(),
                    poi: p.key.clone(),
                    lat: p.lat,
                    lon: p.lon,
                    timestamp: c.timestamp,
                }
            })
            .collect()
    }

    /// Same indices and friendships, keeping only check-ins with `keep[i]`.
    pub fn restrict(&self, keep: &[bool]) -> Dataset {
        assert_eq!(keep.len(), self.checkins.len());
        Dataset {
            users: self.users.clone(),
            poi_keys: self.poi_keys.clone(),
            pois: self.pois.clone(),
            checkins: self
                .checkins
                .iter()
                .zip(keep)
                .filter(|(_, k)| **k)
                .map(|(c, _)| *c)
                .collect(),
            friendships: self.friendships.clone(),
            friend_only: self.friend_only.clone(),
        }
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn poi_count(&self) -> usize {
        self.pois.len()
    }

    pub fn time_span(&self) -> Option<(i64, i64)> {
        let min = self.checkins.iter().map(|c| c.timestamp).min()?;
        let max = self.checkins.iter().map(|c| c.timestamp).max()?;
        Some((min, max))
    }

    /// Contiguous check-in ranges per user, indexed by user.
    pub fn user_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = vec![0..0; self.users.len()];
        let mut start = 0;
        while start < self.checkins.len() {
            let u = self.checkins[start].user;
            let mut end = start;
            while end < self.checkins.len() && self.checkins[end].user == u {
                end += 1;
            }
            ranges[u as usize] = start..end;
            start = end;
        }
        ranges
    }

    /// Adjacency lists of the friendship graph.
    pub fn friends_of(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.users.len()];
        for e in &self.friendships {
            adj[e.a as usize].push(e.b);
            adj[e.b as usize].push(e.a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn poi_coords(&self, poi: u32) -> (f64, f64) {
        let p = &self.pois[poi as usize];
        (p.lat, p.lon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(text: &str) -> (Dataset, IngestReport) {
        let (rows, report) = parse_checkins(text, &CheckinFormat::default());
        (Dataset::from_records(rows, vec![]).0, report)
    }

    #[test]
    fn three_rows_two_users_two_pois() {
        let (ds, rep) = rows("a\tp1\t10.0\t20.0\t100\nb\tp2\t10.1\t20.1\t200\na\tp2\t10.1\t20.1\t300\n");
        assert_eq!(ds.user_count(), 2);
        assert_eq!(ds.poi_count(), 2);
        assert_eq!(ds.checkins.len(), 3);
        assert_eq!(rep.rejected_total(), 0);
    }

    #[test]
    fn latitude_91_rejected() {
        let (ds, rep) = rows("a,p1,91,20,100\na,p2,10,20,200\nb,p1,10,20,300\n");
        assert_eq!(rep.rejected_total(), 1);
        assert_eq!(rep.rejected["latitude out of range"], 1);
        assert_eq!(ds.checkins.len(), 2);
    }

    #[test]
    fn header_detected_and_skipped() {
        let (_, rep) = rows("user,poi,lat,lon,ts\na,p1,1,2,3\n");
        assert!(rep.header_skipped);
        assert_eq!(rep.rows, 1);
        assert_eq!(rep.accepted, 1);
    }

    #[test]
    fn iso_timestamps() {
        assert_eq!(parse_timestamp("1970-01-02T00:00:00Z", TimeFormat::Iso8601), Some(86_400));
        assert_eq!(parse_timestamp("1970-01-01T01:00:00", TimeFormat::Iso8601), Some(3_600));
        assert_eq!(parse_timestamp("1970-01-01T02:00:00+01:00", TimeFormat::Iso8601), Some(3_600));
        assert_eq!(parse_timestamp("yesterday", TimeFormat::Iso8601), None);
    }

    #[test]
    fn mostly_malformed_file_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        std::fs::write(&path, "a\tp\t1\t1\t1\nb\tp\tx\t1\t1\nc\tp\t1\tx\t1\n").unwrap();
        let err = ingest_checkins(&path, &CheckinFormat::default()).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { malformed: 2, total: 3, .. }));
    }

    #[test]
    fn unreadable_file() {
        let err = ingest_checkins(Path::new("/nonexistent/x.tsv"), &CheckinFormat::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn friendships_canonical_and_deduplicated() {
        let (pairs, rep) = parse_friendships("a b\nb a\na,b\nc\tc\n");
        assert_eq!(rep.self_loops, 1);
        let (ds, _) = Dataset::from_records(
            vec![RawCheckIn {
                user: "a".into(),
                poi: "p".into(),
                lat: 0.0,
                lon: 0.0,
                timestamp: 0,
            }],
            pairs,
        );
        assert_eq!(ds.friendships, vec![FriendEdge { a: 0, b: 1 }]);
        assert_eq!(ds.friend_only, vec![1]);
    }

    #[test]
    fn friend_only_users_kept_through_merge() {
        let (ds, _) = rows("a,p,0,0,0\n");
        let ds = ds.with_friendships(vec![("a".into(), "z".into())]);
        let ds = ds.with_friendships(vec![("a".into(), "m".into())]);
        assert_eq!(ds.users.keys(), ["a", "m", "z"]);
        assert_eq!(ds.friend_only, vec![1, 2]);
        assert_eq!(ds.friendships.len(), 2);
    }

    #[test]
    fn binning_counts() {
        let day = SECONDS_PER_DAY;
        let b = TimeBinning::covering(0, 99 * day + 5, 20).unwrap();
        assert_eq!(b.bin_count, 5);
        let b = TimeBinning::covering(0, 99 * day + 5, 30).unwrap();
        assert_eq!(b.bin_count, 4);
        assert!(TimeBinning::covering(0, 10, 0).is_err());
    }

    #[test]
    fn bin_boundaries_and_clamping() {
        let day = SECONDS_PER_DAY;
        let b = TimeBinning::covering(0, 99 * day, 10).unwrap();
        assert_eq!(b.bin_of(0), 0);
        assert_eq!(b.bin_of(10 * day - 1), 0);
        assert_eq!(b.bin_of(3 * 10 * day + 1), 3);
        assert_eq!(b.bin_of(10_000 * day), b.bin_count - 1);
        assert_eq!(b.bin_of(-5 * day), 0);
    }

    #[test]
    fn origin_floors_to_midnight() {
        let b = TimeBinning::covering(86_400 * 3 + 500, 86_400 * 4, 1).unwrap();
        assert_eq!(b.origin, 86_400 * 3);
        assert_eq!(b.bin_count, 2);
    }

    #[test]
    fn poi_coordinates_from_earliest_checkin() {
        let (ds, _) = rows("a,p,1,1,50\nb,p,2,2,10\n");
        assert_eq!(ds.poi_coords(0), (2.0, 2.0));
    }
}
