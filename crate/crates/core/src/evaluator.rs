//! Chronological splits, Accuracy@n and the cold-start probe subsets.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::recommender::{CandidateIndex, Ranker};
use crate::{Error, Result};

pub const ACCURACY_CUTOFFS: [usize; 5] = [1, 5, 10, 15, 20];
pub const COLD_USER_MAX_TRAIN: usize = 5;
pub const COLD_POI_MIN_CHECKINS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Train,
    Probe,
    Validation,
}

/// Assignment of every check-in (by its index in `Dataset::checkins`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub parts: Vec<Part>,
}

/// Per-user probe and validation sizes: `max(1, ⌊n/10⌋)` each for users with
/// at least 3 check-ins, zero otherwise. The rest is train.
pub fn held_out_size(n: usize) -> usize {
    if n < 3 {
        0
    } else {
        (n / 10).max(1)
    }
}

/// Per user, the earliest check-ins train, the next probe, the latest validate.
pub fn make_split(dataset: &Dataset) -> Split {
    let mut parts = vec![Part::Train; dataset.checkins.len()];
    for range in dataset.user_ranges() {
        let k = held_out_size(range.len());
        let (start, end) = (range.start, range.end);
        for p in &mut parts[end - 2 * k..end - k] {
            *p = Part::Probe;
        }
        for p in &mut parts[end - k..end] {
            *p = Part::Validation;
        }
        debug_assert!(end - 2 * k >= start);
    }
    Split { parts }
}

impl Split {
    pub fn indices(&self, part: Part) -> Vec<usize> {
        (0..self.parts.len()).filter(|&i| self.parts[i] == part).collect()
    }

    pub fn train_mask(&self) -> Vec<bool> {
        self.parts.iter().map(|&p| p == Part::Train).collect()
    }

    pub fn count(&self, part: Part) -> usize {
        self.parts.iter().filter(|&&p| p == part).count()
    }
}

/// The training partition with the full dataset's indices.
pub fn train_dataset(dataset: &Dataset, split: &Split) -> Dataset {
    dataset.restrict(&split.train_mask())
}

/// One held-out check-in to predict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub index: usize,
    pub user: u32,
    pub poi: u32,
    pub timestamp: i64,
}

pub fn probes(dataset: &Dataset, split: &Split, part: Part) -> Vec<Probe> {
    split
        .indices(part)
        .into_iter()
        .map(|i| {
            let c = dataset.checkins[i];
            Probe {
                index: i,
                user: c.user,
                poi: c.poi,
                timestamp: c.timestamp,
            }
        })
        .collect()
}

/// Probes of users with at most `max_train` training check-ins.
pub fn cold_start_users(dataset: &Dataset, split: &Split, probes: &[Probe], max_train: usize) -> Vec<Probe> {
    let mut train = vec![0usize; dataset.user_count()];
    for (c, &p) in dataset.checkins.iter().zip(&split.parts) {
        if p == Part::Train {
            train[c.user as usize] += 1;
        }
    }
    probes
        .iter()
        .filter(|p| train[p.user as usize] <= max_train)
        .copied()
        .collect()
}

/// Probes of users with a training check-in at some POI that has fewer than
/// `min_checkins` training check-ins.
pub fn cold_start_pois(dataset: &Dataset, split: &Split, probes: &[Probe], min_checkins: usize) -> Vec<Probe> {
    let mut per_poi = vec![0usize; dataset.poi_count()];
    for (c, &p) in dataset.checkins.iter().zip(&split.parts) {
        if p == Part::Train {
            per_poi[c.poi as usize] += 1;
        }
    }
    let mut qualifies = vec![false; dataset.user_count()];
    for (c, &p) in dataset.checkins.iter().zip(&split.parts) {
        if p == Part::Train && per_poi[c.poi as usize] < min_checkins {
            qualifies[c.user as usize] = true;
        }
    }
    probes.iter().filter(|p| qualifies[p.user as usize]).copied().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    All,
    ColdUser,
    ColdPoi,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::All, Scenario::ColdUser, Scenario::ColdPoi];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::All => "all",
            Scenario::ColdUser => "cold_user",
            Scenario::ColdPoi => "cold_poi",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub cutoffs: Vec<usize>,
    pub hits: Vec<usize>,
    pub total: usize,
    /// `key=value` lines describing the run.
    pub fingerprint: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn skipped(&self) -> bool {
        self.total == 0
    }

    pub fn accuracy(&self) -> Vec<f64> {
        self.hits
            .iter()
            .map(|&h| if self.total == 0 { 0.0 } else { h as f64 / self.total as f64 })
            .collect()
    }

    pub fn accuracy_at(&self, n: usize) -> Option<f64> {
        let i = self.cutoffs.iter().position(|&c| c == n)?;
        Some(self.accuracy()[i])
    }

    /// `scenario n accuracy hits total` lines, then the fingerprint block.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.skipped() {
            let _ = writeln!(out, "{} skipped no-probes", self.scenario.as_str());
        } else {
            for ((n, a), h) in self.cutoffs.iter().zip(self.accuracy()).zip(&self.hits) {
                let _ = writeln!(out, "{} {} {:.6} {} {}", self.scenario.as_str(), n, a, h, self.total);
            }
        }
        out.push_str("# fingerprint\n");
        for (k, v) in &self.fingerprint {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }
}

/// 0-based position of `target` among `candidates` under descending score,
/// ascending POI on ties.
pub fn rank_of(target: u32, candidates: &[u32], scores: &[f64]) -> usize {
    let t = candidates.iter().position(|&c| c == target).expect("target among candidates");
    let st = scores[t];
    candidates
        .iter()
        .zip(scores)
        .filter(|&(&c, &s)| s.total_cmp(&st).is_gt() || (s.total_cmp(&st).is_eq() && c < target))
        .count()
}

/// Accuracy@n over `probes`. Each probe is anchored at its ground-truth POI;
/// the candidates are the user's unvisited POIs within `radius_km` plus the
/// ground truth itself.
pub fn accuracy_at_n(
    ranker: &dyn Ranker,
    index: &CandidateIndex,
    probes: &[Probe],
    radius_km: f64,
    cutoffs: &[usize],
    scenario: Scenario,
) -> EvalReport {
    let mut hits = vec![0usize; cutoffs.len()];
    for p in probes {
        let mut cands = index.candidates_near(p.user, index.coords(p.poi), radius_km);
        if let Err(pos) = cands.binary_search(&p.poi) {
            cands.insert(pos, p.poi);
        }
        let scores = ranker.scores(p.user, p.timestamp, &cands);
        let r = rank_of(p.poi, &cands, &scores);
        for (h, &n) in hits.iter_mut().zip(cutoffs) {
            if r < n {
                *h += 1;
            }
        }
    }
    EvalReport {
        scenario,
        cutoffs: cutoffs.to_vec(),
        hits,
        total: probes.len(),
        fingerprint: BTreeMap::new(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub radius_km: f64,
    pub cold_user_max_train: usize,
    pub cold_poi_min_checkins: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            radius_km: crate::recommender::DEFAULT_RADIUS_KM,
            cold_user_max_train: COLD_USER_MAX_TRAIN,
            cold_poi_min_checkins: COLD_POI_MIN_CHECKINS,
        }
    }
}

/// Reports for all three scenarios over the probes of `part`.
pub fn evaluate_all(
    ranker: &dyn Ranker,
    dataset: &Dataset,
    split: &Split,
    index: &CandidateIndex,
    part: Part,
    params: &EvalParams,
) -> Result<Vec<EvalReport>> {
    let all = probes(dataset, split, part);
    if all.is_empty() {
        return Err(Error::Empty("no probe check-ins to evaluate".into()));
    }
    let radius_km = params.radius_km;
    let cold_u = cold_start_users(dataset, split, &all, params.cold_user_max_train);
    let cold_p = cold_start_pois(dataset, split, &all, params.cold_poi_min_checkins);
    Ok(vec![
        accuracy_at_n(ranker, index, &all, radius_km, &ACCURACY_CUTOFFS, Scenario::All),
        accuracy_at_n(ranker, index, &cold_u, radius_km, &ACCURACY_CUTOFFS, Scenario::ColdUser),
        accuracy_at_n(ranker, index, &cold_p, radius_km, &ACCURACY_CUTOFFS, Scenario::ColdPoi),
    ])
}

/// Scoring weights when one of α, β, γ, δ is set to `p` and the other
/// three share the rest equally.
pub fn coupled_weights(which: usize, p: f64) -> [f64; 4] {
    let rest = (1.0 - p) / 3.0;
    std::array::from_fn(|i| if i == which { p } else { rest })
}
