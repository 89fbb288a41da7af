//! On-disk stage pipeline.
//!
//! Each stage reads artifacts from the work directory, writes its own, and
//! records them in `manifest.json` together with a key derived from the
//! stage's configuration and the checksums of its inputs. A stage whose key
//! and outputs are unchanged is skipped unless forced. One process at a time
//! may hold a work directory, enforced by a lock file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::corpus::{Dataset, TimeBinning, ingest_checkins, ingest_friendships};
use crate::embedding_io::{NodeNames, read_text, write_text};
use crate::evaluator::{Part, Split, train_dataset};
use crate::experiment::{Prepared, SweepParam, eval_params, evaluate_model, sweep};
use crate::graphs::{Cardinalities, build_all, export_graphs, import_graphs};
use crate::mobility::{RouteSet, StayPoints, export_routes, extract_routes, extract_stay_points};
use crate::recommender::ModelState;
use crate::stats::dataset_stats;
use crate::trainer::{EmbeddingStore, TrainTrace, train_range};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".lock";
pub const DATASET: &str = "dataset.json";
pub const INGEST_REPORT: &str = "ingest_report.txt";
pub const MOBILITY: &str = "mobility.json";
pub const ROUTES: &str = "routes.tsv";
pub const GRAPHS: &str = "graphs.txt";
pub const EMBEDDINGS: &str = "embeddings.txt";
pub const TRACE: &str = "trace.tsv";
pub const CHECKPOINT: &str = "checkpoint.txt";
pub const CHECKPOINT_KEY: &str = "checkpoint.key";
pub const STATS: &str = "stats.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Routes,
    Graphs,
    Train,
    Evaluate,
    Stats,
}

impl Stage {
    /// The main chain, in dependency order.
    pub const CHAIN: [Stage; 5] = [Stage::Ingest, Stage::Routes, Stage::Graphs, Stage::Train, Stage::Evaluate];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Routes => "routes",
            Stage::Graphs => "graphs",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Stats => "stats",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Stage::Ingest, Stage::Routes, Stage::Graphs, Stage::Train, Stage::Evaluate, Stage::Stats]
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "stage",
                value: s.into(),
            })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

/// Everything the `routes` stage derives from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityArtifact {
    pub binning: TimeBinning,
    pub split: Split,
    pub routes: RouteSet,
    pub stays: StayPoints,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_checksum(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Writes through a temporary file so readers never see partial content.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    pub force: bool,
    /// Resume training from a matching checkpoint when one exists.
    pub resume: bool,
    dir: PathBuf,
    manifest: Manifest,
    _lock: LockGuard,
}

impl Pipeline {
    pub fn open(config: RunConfig, force: bool) -> Result<Self> {
        let dir = config.workdir.clone();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let lock = LockGuard::acquire(&dir)?;
        let mpath = dir.join(MANIFEST);
        let manifest = if mpath.exists() {
            serde_json::from_slice(&fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?)?
        } else {
            Manifest::default()
        };
        Ok(Pipeline {
            config,
            force,
            resume: false,
            dir,
            manifest,
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.dir.join(artifact)
    }

    fn require(&self, artifact: &str, stage: Stage) -> Result<PathBuf> {
        let p = self.path(artifact);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                artifact: artifact.to_string(),
                stage: stage.as_str().to_string(),
            })
        }
    }

    fn read(&self, artifact: &str, stage: Stage) -> Result<Vec<u8>> {
        let p = self.require(artifact, stage)?;
        fs::read(&p).map_err(|e| Error::io(&p, e))
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        Ok(serde_json::from_slice(&self.read(DATASET, Stage::Ingest)?)?)
    }

    pub fn load_mobility(&self) -> Result<MobilityArtifact> {
        Ok(serde_json::from_slice(&self.read(MOBILITY, Stage::Routes)?)?)
    }

    /// Dataset, routes and graphs as written by the earlier stages.
    pub fn load_prepared(&self) -> Result<Prepared> {
        let full = self.load_dataset()?;
        let m = self.load_mobility()?;
        let graphs_text = String::from_utf8_lossy(&self.read(GRAPHS, Stage::Graphs)?).into_owned();
        let graphs = import_graphs(&graphs_text)?;
        let train = train_dataset(&full, &m.split);
        Ok(Prepared {
            full,
            split: m.split,
            train,
            binning: m.binning,
            routes: m.routes,
            stays: m.stays,
            graphs,
        })
    }

    fn names(prep: &Prepared) -> NodeNames {
        NodeNames::new(&prep.train, &prep.binning, &prep.routes, &prep.stays)
    }

    pub fn load_model(&self) -> Result<(Prepared, ModelState)> {
        let prep = self.load_prepared()?;
        let text = String::from_utf8_lossy(&self.read(EMBEDDINGS, Stage::Train)?).into_owned();
        let (store, _) = read_text(&text, &Self::names(&prep))?;
        let state = ModelState::new(store, &prep.train, prep.binning, &prep.routes, &prep.stays);
        Ok((prep, state))
    }

    fn stage_key(&self, stage: Stage, config: &str, inputs: &BTreeMap<String, String>) -> String {
        let mut h = Sha256::new();
        h.update(stage.as_str());
        h.update(config);
        for (k, v) in inputs {
            h.update(format!("\n{k}={v}"));
        }
        hex::encode(h.finalize())
    }

    fn up_to_date(&self, stage: Stage, key: &str) -> bool {
        let Some(rec) = self.manifest.stages.get(stage.as_str()) else {
            return false;
        };
        rec.key == key
            && rec
                .outputs
                .iter()
                .all(|(f, sum)| file_checksum(&self.path(f)).is_ok_and(|s| &s == sum))
    }

    fn record(&mut self, stage: Stage, key: String, config: String, inputs: BTreeMap<String, String>, outputs: &[&str]) -> Result<()> {
        let mut out = BTreeMap::new();
        for f in outputs {
            out.insert(f.to_string(), file_checksum(&self.path(f))?);
        }
        self.manifest.stages.insert(
            stage.as_str().to_string(),
            StageRecord {
                key,
                config,
                inputs,
                outputs: out,
            },
        );
        let json = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(&self.path(MANIFEST), json.as_bytes())
    }

    fn inputs_of(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        let mut add = |name: &str, path: PathBuf| -> Result<()> {
            inputs.insert(name.to_string(), file_checksum(&path)?);
            Ok(())
        };
        match stage {
            Stage::Ingest => {
                let c = self.config.checkins.clone().ok_or_else(|| {
                    Error::InvalidArgument("paths.checkins is not set; pass --checkins or set it in the config".into())
                })?;
                add("checkins", c)?;
                if let Some(f) = self.config.friendships.clone() {
                    add("friendships", f)?;
                }
            }
            Stage::Routes | Stage::Stats => add(DATASET, self.require(DATASET, Stage::Ingest)?)?,
            Stage::Graphs => {
                add(DATASET, self.require(DATASET, Stage::Ingest)?)?;
                add(MOBILITY, self.require(MOBILITY, Stage::Routes)?)?;
            }
            Stage::Train => {
                add(GRAPHS, self.require(GRAPHS, Stage::Graphs)?)?;
                add(MOBILITY, self.require(MOBILITY, Stage::Routes)?)?;
                add(DATASET, self.require(DATASET, Stage::Ingest)?)?;
            }
            Stage::Evaluate => {
                add(EMBEDDINGS, self.require(EMBEDDINGS, Stage::Train)?)?;
                add(GRAPHS, self.require(GRAPHS, Stage::Graphs)?)?;
                add(MOBILITY, self.require(MOBILITY, Stage::Routes)?)?;
                add(DATASET, self.require(DATASET, Stage::Ingest)?)?;
            }
        }
        Ok(inputs)
    }

    fn config_digest(&self, stage: Stage) -> String {
        let prefixes: &[&str] = match stage {
            Stage::Ingest => &["corpus."],
            Stage::Routes => &["binning."],
            Stage::Graphs => &["graphs."],
            Stage::Train => &["trainer.", "model."],
            Stage::Evaluate => &["recommender.", "model.", "evaluator."],
            Stage::Stats => &[],
        };
        self.config.digest(prefixes)
    }

    /// Runs `stage` unless it is up to date.
    pub fn run_stage(&mut self, stage: Stage) -> Result<Outcome> {
        self.config.validate()?;
        let inputs = self.inputs_of(stage)?;
        let config = self.config_digest(stage);
        let key = self.stage_key(stage, &config, &inputs);
        if !self.force && self.up_to_date(stage, &key) {
            log::info!("{stage}: up to date");
            return Ok(Outcome::UpToDate);
        }
        log::info!("{stage}: running");
        let outputs = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Routes => self.routes()?,
            Stage::Graphs => self.graphs()?,
            Stage::Train => self.train(&key)?,
            Stage::Evaluate => self.evaluate(&inputs)?,
            Stage::Stats => self.stats()?,
        };
        self.record(stage, key, config, inputs, &outputs)?;
        Ok(Outcome::Ran)
    }

    /// Runs the chain up to and including `last`.
    pub fn run_through(&mut self, last: Stage) -> Result<Vec<(Stage, Outcome)>> {
        let mut done = Vec::new();
        for st in Stage::CHAIN {
            done.push((st, self.run_stage(st)?));
            if st == last {
                break;
            }
        }
        Ok(done)
    }

    fn ingest(&mut self) -> Result<Vec<&'static str>> {
        let path = self.config.checkins.clone().expect("checked in inputs_of");
        let (mut dataset, report) = ingest_checkins(&path, &self.config.checkin_format())?;
        let mut text = format!(
            "rows={}\naccepted={}\nheader_skipped={}\ncoordinate_conflicts={}\n",
            report.rows, report.accepted, report.header_skipped, report.coordinate_conflicts
        );
        for (reason, n) in &report.rejected {
            text.push_str(&format!("rejected.{reason}={n}\n"));
        }
        if let Some(f) = self.config.friendships.clone() {
            let (ds, fr) = ingest_friendships(&f, dataset)?;
            dataset = ds;
            text.push_str(&format!(
                "friendship_rows={}\nfriendships_accepted={}\nfriendship_self_loops={}\nfriendship_malformed={}\nfriend_only_users={}\n",
                fr.rows, fr.accepted, fr.self_loops, fr.malformed, fr.new_users
            ));
        }
        text.push_str(&format!(
            "users={}\npois={}\ncheckins={}\nfriendships={}\n",
            dataset.user_count(),
            dataset.poi_count(),
            dataset.checkins.len(),
            dataset.friendships.len()
        ));
        write_atomic(&self.path(DATASET), serde_json::to_string(&dataset)?.as_bytes())?;
        write_atomic(&self.path(INGEST_REPORT), text.as_bytes())?;
        Ok(vec![DATASET, INGEST_REPORT])
    }

    fn routes(&mut self) -> Result<Vec<&'static str>> {
        let full = self.load_dataset()?;
        let binning = crate::corpus::make_binning(&full, self.config.delta_t_days)?;
        let split = crate::evaluator::make_split(&full);
        let train = train_dataset(&full, &split);
        let routes = extract_routes(&train, &binning);
        let stays = extract_stay_points(&routes);
        write_atomic(&self.path(ROUTES), export_routes(&train, &routes, &stays).as_bytes())?;
        let m = MobilityArtifact {
            binning,
            split,
            routes,
            stays,
        };
        write_atomic(&self.path(MOBILITY), serde_json::to_string(&m)?.as_bytes())?;
        Ok(vec![MOBILITY, ROUTES])
    }

    fn graphs(&mut self) -> Result<Vec<&'static str>> {
        let full = self.load_dataset()?;
        let m = self.load_mobility()?;
        let train = train_dataset(&full, &m.split);
        let graphs = build_all(&train, &m.binning, &m.routes, &m.stays, &self.config.ll)?;
        write_atomic(&self.path(GRAPHS), export_graphs(&graphs).as_bytes())?;
        Ok(vec![GRAPHS])
    }

    fn train(&mut self, key: &str) -> Result<Vec<&'static str>> {
        let prep = self.load_prepared()?;
        let names = Self::names(&prep);
        let cards: Cardinalities = prep.cardinalities();
        let cfg = self.config.trainer.clone();
        cfg.validate()?;
        let graphs = prep.graphs.masked(&self.config.version.graphs());

        let (mut store, mut start) = (EmbeddingStore::init(cards, cfg.dim, cfg.seed)?, 0);
        let ckpt = self.path(CHECKPOINT);
        let ckpt_key = self.path(CHECKPOINT_KEY);
        if self.resume && ckpt.exists() && fs::read_to_string(&ckpt_key).is_ok_and(|k| k.trim() == key) {
            let text = fs::read_to_string(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
            let (s, it) = read_text(&text, &names)?;
            store = s;
            start = it.unwrap_or(0);
            log::info!("train: resuming at iteration {start}");
        }
        let chunk = (cfg.samples / 10).max(1);
        let mut trace = TrainTrace::default();
        while start < cfg.samples {
            let end = (start - start % chunk + chunk).min(cfg.samples);
            let (s, t) = train_range(&graphs, store, start, end, &cfg)?;
            store = s;
            trace.records.extend(t.records);
            start = end;
            if start < cfg.samples {
                write_atomic(&ckpt, write_text(&store, &names, Some(start))?.as_bytes())?;
                write_atomic(&ckpt_key, key.as_bytes())?;
            }
        }
        let _ = fs::remove_file(&ckpt);
        let _ = fs::remove_file(&ckpt_key);
        write_atomic(&self.path(EMBEDDINGS), write_text(&store, &names, None)?.as_bytes())?;
        write_atomic(&self.path(TRACE), trace.render().as_bytes())?;
        Ok(vec![EMBEDDINGS, TRACE])
    }

    fn evaluate(&mut self, inputs: &BTreeMap<String, String>) -> Result<Vec<&'static str>> {
        let (prep, model) = self.load_model()?;
        let mut reports = evaluate_model(
            &prep,
            &model,
            &self.config.recommender,
            self.config.version,
            Part::Probe,
            &eval_params(&self.config),
        )?;
        let mut fp = self.config.fingerprint_fields();
        fp.insert("checksum.dataset".into(), inputs[DATASET].clone());
        fp.insert("checksum.embeddings".into(), inputs[EMBEDDINGS].clone());
        let mut outputs = Vec::new();
        for r in &mut reports {
            r.fingerprint = fp.clone();
            let name = report_file(r.scenario);
            write_atomic(&self.path(name), r.render().as_bytes())?;
            outputs.push(name);
        }
        Ok(outputs)
    }

    fn stats(&mut self) -> Result<Vec<&'static str>> {
        let ds = self.load_dataset()?;
        write_atomic(&self.path(STATS), dataset_stats(&ds).render().as_bytes())?;
        Ok(vec![STATS])
    }

    /// Runs a sweep on the ingested dataset and writes `sweep_<param>.tsv`.
    pub fn sweep(&mut self, param: SweepParam, grid: &[f64]) -> Result<(PathBuf, crate::experiment::SweepTable)> {
        let ds = self.load_dataset()?;
        let table = sweep(&ds, &self.config, param, grid)?;
        let name = format!("sweep_{}.tsv", param.as_str());
        let path = self.path(&name);
        write_atomic(&path, table.render().as_bytes())?;
        let inputs: BTreeMap<String, String> = [(DATASET.to_string(), file_checksum(&self.path(DATASET))?)].into();
        let grid_text: Vec<String> = grid.iter().map(|g| g.to_string()).collect();
        let config = format!("{}|{}", self.config.digest(&[""]), grid_text.join(","));
        let key = sha256_hex(config.as_bytes());
        let mut out = BTreeMap::new();
        out.insert(name.clone(), file_checksum(&path)?);
        self.manifest.stages.insert(
            format!("sweep.{}", param.as_str()),
            StageRecord {
                key,
                config,
                inputs,
                outputs: out,
            },
        );
        let json = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(&self.path(MANIFEST), json.as_bytes())?;
        Ok((path, table))
    }
}

pub fn report_file(scenario: crate::evaluator::Scenario) -> &'static str {
    match scenario {
        crate::evaluator::Scenario::All => "report_all.txt",
        crate::evaluator::Scenario::ColdUser => "report_cold_user.txt",
        crate::evaluator::Scenario::ColdPoi => "report_cold_poi.txt",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{StructuredParams, checkins_tsv, friendships_tsv, structured};

    fn setup(dir: &Path) -> RunConfig {
        let p = structured(&StructuredParams::smoke());
        fs::write(dir.join("checkins.tsv"), checkins_tsv(&p.dataset)).unwrap();
        fs::write(dir.join("friends.tsv"), friendships_tsv(&p.friendships)).unwrap();
        let mut cfg = RunConfig::default();
        cfg.checkins = Some(dir.join("checkins.tsv"));
        cfg.friendships = Some(dir.join("friends.tsv"));
        cfg.workdir = dir.join("work");
        cfg.trainer.samples = 2_000;
        cfg.trainer.dim = 8;
        cfg
    }

    #[test]
    fn train_without_graphs_names_stage() {
        let tmp = tempfile::tempdir().unwrap();
        let mut p = Pipeline::open(setup(tmp.path()), false).unwrap();
        match p.run_stage(Stage::Train) {
            Err(Error::MissingArtifact { stage, .. }) => assert_eq!(stage, "graphs"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rerun_is_noop() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = setup(tmp.path());
        let mut p = Pipeline::open(cfg.clone(), false).unwrap();
        assert!(p.run_through(Stage::Evaluate).unwrap().iter().all(|s| s.1 == Outcome::Ran));
        let before = fs::read(p.path(MANIFEST)).unwrap();
        assert!(p.run_through(Stage::Evaluate).unwrap().iter().all(|s| s.1 == Outcome::UpToDate));
        assert_eq!(fs::read(p.path(MANIFEST)).unwrap(), before);
        drop(p);

        // a scoring change only reruns evaluation
        let mut cfg2 = cfg;
        cfg2.recommender.alpha = 0.7;
        let mut p = Pipeline::open(cfg2, false).unwrap();
        let outcomes: Vec<Outcome> = p.run_through(Stage::Evaluate).unwrap().into_iter().map(|s| s.1).collect();
        assert_eq!(outcomes, [Outcome::UpToDate, Outcome::UpToDate, Outcome::UpToDate, Outcome::UpToDate, Outcome::Ran]);
    }

    #[test]
    fn lock_excludes_second_pipeline() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = setup(tmp.path());
        let p = Pipeline::open(cfg.clone(), false).unwrap();
        assert!(matches!(Pipeline::open(cfg.clone(), false), Err(Error::Locked(_))));
        drop(p);
        assert!(Pipeline::open(cfg, false).is_ok());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = setup(tmp.path());
        let mut p = Pipeline::open(cfg.clone(), false).unwrap();
        p.run_through(Stage::Train).unwrap();
        let full = fs::read(p.path(EMBEDDINGS)).unwrap();

        // fake an interruption after the first chunk
        let prep = p.load_prepared().unwrap();
        let names = Pipeline::names(&prep);
        let graphs = prep.graphs.masked(&cfg.version.graphs());
        let init = EmbeddingStore::init(prep.cardinalities(), cfg.trainer.dim, cfg.trainer.seed).unwrap();
        let (partial, _) = train_range(&graphs, init, 0, 200, &cfg.trainer).unwrap();
        fs::write(p.path(CHECKPOINT), write_text(&partial, &names, Some(200)).unwrap()).unwrap();
        let key = p.manifest().stages["train"].key.clone();
        fs::write(p.path(CHECKPOINT_KEY), &key).unwrap();
        fs::remove_file(p.path(EMBEDDINGS)).unwrap();

        p.resume = true;
        assert_eq!(p.run_stage(Stage::Train).unwrap(), Outcome::Ran);
        assert_eq!(fs::read(p.path(EMBEDDINGS)).unwrap(), full);
        assert!(!p.path(CHECKPOINT).exists());
    }
}
