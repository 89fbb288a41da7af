//! Run configuration: a flat `key = value` file with namespaced keys, plus
//! command-line overrides of the same keys.
//!
//! ```text
//! # comments and blank lines are ignored
//! paths.checkins = data/checkins.tsv
//! binning.delta_t_days = 20
//! trainer.samples = 2000000
//! recommender.alpha = 0.4
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CheckinFormat, Delimiter, TimeFormat};
use crate::evaluator::{COLD_POI_MIN_CHECKINS, COLD_USER_MAX_TRAIN};
use crate::graphs::LlParams;
use crate::recommender::RecConfig;
use crate::trainer::{ModelVersion, TrainConfig};
use crate::{Error, Result};

pub const DEFAULT_DELTA_T_DAYS: u32 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub checkins: Option<PathBuf>,
    pub friendships: Option<PathBuf>,
    pub workdir: PathBuf,
    pub delimiter: Delimiter,
    pub time_format: TimeFormat,
    /// Only `UTC` is supported; timestamps are stored as UTC epoch seconds.
    pub timezone: String,
    pub delta_t_days: u32,
    pub ll: LlParams,
    pub trainer: TrainConfig,
    pub recommender: RecConfig,
    pub version: ModelVersion,
    pub cold_user_max_train: usize,
    pub cold_poi_min_checkins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            checkins: None,
            friendships: None,
            workdir: PathBuf::from("work"),
            delimiter: Delimiter::Auto,
            time_format: TimeFormat::Epoch,
            timezone: "UTC".into(),
            delta_t_days: DEFAULT_DELTA_T_DAYS,
            ll: LlParams::default(),
            trainer: TrainConfig::default(),
            recommender: RecConfig::default(),
            version: ModelVersion::Full,
            cold_user_max_train: COLD_USER_MAX_TRAIN,
            cold_poi_min_checkins: COLD_POI_MIN_CHECKINS,
        }
    }
}

/// Every recognised key, in rendering order.
pub const KEYS: &[&str] = &[
    "paths.checkins",
    "paths.friendships",
    "paths.workdir",
    "corpus.delimiter",
    "corpus.time_format",
    "corpus.timezone",
    "binning.delta_t_days",
    "graphs.rg_km",
    "graphs.ll_group_cap",
    "graphs.seed",
    "trainer.samples",
    "trainer.negatives",
    "trainer.dim",
    "trainer.initial_lr",
    "trainer.seed",
    "trainer.workers",
    "recommender.alpha",
    "recommender.beta",
    "recommender.gamma",
    "recommender.delta",
    "recommender.radius_km",
    "recommender.top_n",
    "model.version",
    "evaluator.cold_user_max_train",
    "evaluator.cold_poi_min_checkins",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse {value:?}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "paths.checkins" => self.checkins = opt_path(v),
            "paths.friendships" => self.friendships = opt_path(v),
            "paths.workdir" => self.workdir = PathBuf::from(v),
            "corpus.delimiter" => self.delimiter = parse(key, v)?,
            "corpus.time_format" => self.time_format = parse(key, v)?,
            "corpus.timezone" => self.timezone = v.to_string(),
            "binning.delta_t_days" => self.delta_t_days = parse(key, v)?,
            "graphs.rg_km" => self.ll.rg_km = parse(key, v)?,
            "graphs.ll_group_cap" => self.ll.group_cap = parse(key, v)?,
            "graphs.seed" => self.ll.seed = parse(key, v)?,
            "trainer.samples" => self.trainer.samples = parse(key, v)?,
            "trainer.negatives" => self.trainer.negatives = parse(key, v)?,
            "trainer.dim" => self.trainer.dim = parse(key, v)?,
            "trainer.initial_lr" => self.trainer.initial_lr = parse(key, v)?,
            "trainer.seed" => self.trainer.seed = parse(key, v)?,
            "trainer.workers" => self.trainer.workers = parse(key, v)?,
            "recommender.alpha" => self.recommender.alpha = parse(key, v)?,
            "recommender.beta" => self.recommender.beta = parse(key, v)?,
            "recommender.gamma" => self.recommender.gamma = parse(key, v)?,
            "recommender.delta" => self.recommender.delta = parse(key, v)?,
            "recommender.radius_km" => self.recommender.radius_km = parse(key, v)?,
            "recommender.top_n" => self.recommender.top_n = parse(key, v)?,
            "model.version" => self.version = parse(key, v)?,
            "evaluator.cold_user_max_train" => self.cold_user_max_train = parse(key, v)?,
            "evaluator.cold_poi_min_checkins" => self.cold_poi_min_checkins = parse(key, v)?,
            _ => {
                return Err(Error::Unknown {
                    kind: "config key",
                    value: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "paths.checkins" => path(&self.checkins),
            "paths.friendships" => path(&self.friendships),
            "paths.workdir" => self.workdir.display().to_string(),
            "corpus.delimiter" => self.delimiter.to_string(),
            "corpus.time_format" => self.time_format.to_string(),
            "corpus.timezone" => self.timezone.clone(),
            "binning.delta_t_days" => self.delta_t_days.to_string(),
            "graphs.rg_km" => format!("{:?}", self.ll.rg_km),
            "graphs.ll_group_cap" => self.ll.group_cap.to_string(),
            "graphs.seed" => self.ll.seed.to_string(),
            "trainer.samples" => self.trainer.samples.to_string(),
            "trainer.negatives" => self.trainer.negatives.to_string(),
            "trainer.dim" => self.trainer.dim.to_string(),
            "trainer.initial_lr" => format!("{:?}", self.trainer.initial_lr),
            "trainer.seed" => self.trainer.seed.to_string(),
            "trainer.workers" => self.trainer.workers.to_string(),
            "recommender.alpha" => format!("{:?}", self.recommender.alpha),
            "recommender.beta" => format!("{:?}", self.recommender.beta),
            "recommender.gamma" => format!("{:?}", self.recommender.gamma),
            "recommender.delta" => format!("{:?}", self.recommender.delta),
            "recommender.radius_km" => format!("{:?}", self.recommender.radius_km),
            "recommender.top_n" => self.recommender.top_n.to_string(),
            "model.version" => self.version.to_string(),
            "evaluator.cold_user_max_train" => self.cold_user_max_train.to_string(),
            "evaluator.cold_poi_min_checkins" => self.cold_poi_min_checkins.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Defaults overridden by a config file. Relative paths in the file are
    /// resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.checkins.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.friendships.as_mut() {
            rebase(p);
        }
        if text.lines().any(|l| l.trim_start().starts_with("paths.workdir")) {
            rebase(&mut cfg.workdir);
        }
        Ok(cfg)
    }

    /// Every key with its current value, one `key = value` line each.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap()))
            .collect()
    }

    pub fn checkin_format(&self) -> CheckinFormat {
        CheckinFormat {
            delimiter: self.delimiter,
            time: self.time_format,
            ..CheckinFormat::default()
        }
    }

    /// All invariant violations as `(field, message)`; never stops early.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = Vec::new();
        let mut push = |f: &str, m: String| v.push((f.to_string(), m));
        if self.delta_t_days == 0 {
            push("binning.delta_t_days", "must be at least 1".into());
        }
        if !self.timezone.eq_ignore_ascii_case("utc") {
            push("corpus.timezone", format!("only UTC is supported, got {:?}", self.timezone));
        }
        if !(self.ll.rg_km.is_finite() && self.ll.rg_km > 0.0) {
            push("graphs.rg_km", format!("must be positive, got {}", self.ll.rg_km));
        }
        if self.ll.group_cap < 2 {
            push("graphs.ll_group_cap", "must be at least 2".into());
        }
        let t = &self.trainer;
        if t.samples == 0 {
            push("trainer.samples", "must be positive".into());
        }
        if t.negatives == 0 {
            push("trainer.negatives", "must be positive".into());
        }
        if t.dim == 0 {
            push("trainer.dim", "must be positive".into());
        }
        if !(t.initial_lr > 0.0 && t.initial_lr <= 1.0) {
            push("trainer.initial_lr", format!("must be in (0, 1], got {}", t.initial_lr));
        }
        if t.workers == 0 {
            push("trainer.workers", "must be positive".into());
        }
        v.extend(self.recommender.violations());
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            return Ok(());
        }
        let lines: Vec<String> = v.iter().map(|(f, m)| format!("{f}: {m}")).collect();
        Err(Error::InvalidArgument(lines.join("; ")))
    }

    /// Keys that shape results, excluding file locations.
    pub fn fingerprint_fields(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .filter(|k| !k.starts_with("paths."))
            .map(|k| (k.to_string(), self.get(k).unwrap()))
            .collect()
    }

    /// SHA-256 over selected keys, for cache keys of pipeline stages.
    pub fn digest(&self, prefixes: &[&str]) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| prefixes.iter().any(|p| k.starts_with(p))) {
            h.update(format!("{k}={}\n", self.get(k).unwrap()));
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(RunConfig::default().violations().is_empty());
    }

    #[test]
    fn zero_delta_t_flagged() {
        let mut c = RunConfig::default();
        c.set("binning.delta_t_days", "0").unwrap();
        let v = c.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, "binning.delta_t_days");
    }

    #[test]
    fn all_zero_weights_flagged() {
        let mut c = RunConfig::default();
        for k in ["alpha", "beta", "gamma", "delta"] {
            c.set(&format!("recommender.{k}"), "0").unwrap();
        }
        assert_eq!(c.violations().len(), 1);
    }

    #[test]
    fn violations_collect_everything() {
        let mut c = RunConfig::default();
        c.apply_text("trainer.dim = 0\ntrainer.initial_lr = 2\ngraphs.rg_km = -1\n").unwrap();
        let fields: Vec<String> = c.violations().into_iter().map(|v| v.0).collect();
        assert_eq!(fields, ["graphs.rg_km", "trainer.dim", "trainer.initial_lr"]);
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("# tuned\n\ntrainer.samples = 1234\nrecommender.alpha = 0.1\nmodel.version = v2\n")
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.render()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_and_bad_value() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("trainer.speed", "1"), Err(Error::Unknown { .. })));
        assert!(c.apply_text("trainer.dim = many\n").is_err());
        assert!(c.apply_text("no equals sign\n").is_err());
    }

    #[test]
    fn every_key_readable() {
        let c = RunConfig::default();
        assert!(KEYS.iter().all(|k| c.get(k).is_some()));
        assert_eq!(c.get("trainer.samples").unwrap(), "150000000");
    }

    #[test]
    fn digest_depends_on_selected_keys() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("recommender.alpha", "0.5").unwrap();
        assert_eq!(a.digest(&["trainer."]), b.digest(&["trainer."]));
        assert_ne!(a.digest(&["recommender."]), b.digest(&["recommender."]));
    }
}
