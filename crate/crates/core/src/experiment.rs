//! In-memory train-and-evaluate runs, shared by the CLI stages and sweeps.
//!
//! Graphs, routes and stay points come from the training partition only.
//! The time binning covers the full dataset so that probe timestamps map to
//! trained periods.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{Dataset, TimeBinning, make_binning};
use crate::evaluator::{EvalParams, EvalReport, Part, Scenario, Split, coupled_weights, evaluate_all, make_split, train_dataset};
use crate::graphs::{Cardinalities, GraphSet, LlParams, build_all};
use crate::mobility::{RouteSet, StayPoints, extract_routes, extract_stay_points};
use crate::recommender::{ModelRanker, ModelState, RecConfig};
use crate::trainer::{ModelVersion, TrainConfig, TrainTrace, train};
use crate::{Error, Result};

/// Everything derived from a dataset before training.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub full: Dataset,
    pub split: Split,
    pub train: Dataset,
    pub binning: TimeBinning,
    pub routes: RouteSet,
    pub stays: StayPoints,
    pub graphs: GraphSet,
}

impl Prepared {
    pub fn cardinalities(&self) -> Cardinalities {
        Cardinalities::new(&self.train, &self.binning, &self.routes, &self.stays)
    }
}

pub fn prepare(full: Dataset, delta_t_days: u32, ll: &LlParams) -> Result<Prepared> {
    let binning = make_binning(&full, delta_t_days)?;
    let split = make_split(&full);
    let train = train_dataset(&full, &split);
    let routes = extract_routes(&train, &binning);
    let stays = extract_stay_points(&routes);
    let graphs = build_all(&train, &binning, &routes, &stays, ll)?;
    Ok(Prepared {
        full,
        split,
        train,
        binning,
        routes,
        stays,
        graphs,
    })
}

/// Trains the graphs of `version` and wraps the result for scoring.
pub fn train_model(prep: &Prepared, config: &TrainConfig, version: ModelVersion) -> Result<(ModelState, TrainTrace)> {
    let graphs = prep.graphs.masked(&version.graphs());
    let (store, trace) = train(&graphs, prep.cardinalities(), config)?;
    Ok((model_state(prep, store), trace))
}

pub fn model_state(prep: &Prepared, store: crate::trainer::EmbeddingStore) -> ModelState {
    ModelState::new(store, &prep.train, prep.binning, &prep.routes, &prep.stays)
}

/// Reports for all scenarios. Scoring terms the version does not train are
/// switched off.
pub fn evaluate_model(
    prep: &Prepared,
    model: &ModelState,
    rec: &RecConfig,
    version: ModelVersion,
    part: Part,
    params: &EvalParams,
) -> Result<Vec<EvalReport>> {
    let ranker = ModelRanker {
        model,
        config: rec.masked(version.score_terms()),
    };
    evaluate_all(&ranker, &prep.full, &prep.split, &model.candidates, part, params)
}

pub fn eval_params(cfg: &RunConfig) -> EvalParams {
    EvalParams {
        radius_km: cfg.recommender.radius_km,
        cold_user_max_train: cfg.cold_user_max_train,
        cold_poi_min_checkins: cfg.cold_poi_min_checkins,
    }
}

/// Full run on the probe partition.
pub fn run(full: Dataset, cfg: &RunConfig) -> Result<(ModelState, Vec<EvalReport>)> {
    cfg.validate()?;
    let prep = prepare(full, cfg.delta_t_days, &cfg.ll)?;
    let (model, _) = train_model(&prep, &cfg.trainer, cfg.version)?;
    let reports = evaluate_model(&prep, &model, &cfg.recommender, cfg.version, Part::Probe, &eval_params(cfg))?;
    Ok((model, reports))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    Samples,
    Dim,
    DeltaT,
    Alpha,
    Beta,
    Gamma,
    Delta,
    Negatives,
    Rg,
}

impl SweepParam {
    pub const ALL: [SweepParam; 9] = [
        SweepParam::Samples,
        SweepParam::Dim,
        SweepParam::DeltaT,
        SweepParam::Alpha,
        SweepParam::Beta,
        SweepParam::Gamma,
        SweepParam::Delta,
        SweepParam::Negatives,
        SweepParam::Rg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Samples => "S",
            SweepParam::Dim => "d",
            SweepParam::DeltaT => "delta_t",
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::Gamma => "gamma",
            SweepParam::Delta => "delta",
            SweepParam::Negatives => "N",
            SweepParam::Rg => "Rg",
        }
    }

    /// Index of the scoring weight, for the scoring-only sweeps.
    pub fn weight_index(self) -> Option<usize> {
        match self {
            SweepParam::Alpha => Some(0),
            SweepParam::Beta => Some(1),
            SweepParam::Gamma => Some(2),
            SweepParam::Delta => Some(3),
            _ => None,
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: f64) -> Result<()> {
        let whole = || -> Result<u64> {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::InvalidArgument(format!("{} takes whole numbers, got {value}", self.as_str())));
            }
            Ok(value as u64)
        };
        match self {
            SweepParam::Samples => cfg.trainer.samples = whole()?,
            SweepParam::Dim => cfg.trainer.dim = whole()? as usize,
            SweepParam::DeltaT => cfg.delta_t_days = whole()? as u32,
            SweepParam::Negatives => cfg.trainer.negatives = whole()? as usize,
            SweepParam::Rg => cfg.ll.rg_km = value,
            _ => {
                let i = self.weight_index().unwrap();
                cfg.recommender = cfg.recommender.with_weights(coupled_weights(i, value));
            }
        }
        Ok(())
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                kind: "sweep parameter",
                value: s.into(),
            })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    /// Index of the row with the highest validation Accuracy@10, first on ties.
    pub winner: usize,
}

impl SweepTable {
    /// Header, one line per grid point, then the winner.
    pub fn render(&self) -> String {
        let mut out = format!("{}\tacc@1\tacc@5\tacc@10\tacc@15\tacc@20\ttotal\n", self.param);
        for r in &self.rows {
            out.push_str(&format!("{}", r.value));
            for a in r.report.accuracy() {
                out.push_str(&format!("\t{a:.6}"));
            }
            out.push_str(&format!("\t{}\n", r.report.total));
        }
        out.push_str(&format!("# winner {}={}\n", self.param, self.rows[self.winner].value));
        out
    }
}

/// One train and validation-partition evaluation per grid point. Scoring
/// weight sweeps train once and rescore with `(1 - p) / 3` coupling.
pub fn sweep(full: &Dataset, base: &RunConfig, param: SweepParam, grid: &[f64]) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(Error::Empty("sweep grid is empty".into()));
    }
    base.validate()?;
    let mut rows = Vec::new();
    if param.weight_index().is_some() {
        let prep = prepare(full.clone(), base.delta_t_days, &base.ll)?;
        let (model, _) = train_model(&prep, &base.trainer, base.version)?;
        for &v in grid {
            let mut cfg = base.clone();
            param.apply(&mut cfg, v)?;
            cfg.validate()?;
            let reports =
                evaluate_model(&prep, &model, &cfg.recommender, cfg.version, Part::Validation, &eval_params(&cfg))?;
            rows.push(SweepRow {
                value: v,
                report: scenario_all(reports),
            });
        }
    } else {
        for &v in grid {
            let mut cfg = base.clone();
            param.apply(&mut cfg, v)?;
            cfg.validate()?;
            let prep = prepare(full.clone(), cfg.delta_t_days, &cfg.ll)?;
            let (model, _) = train_model(&prep, &cfg.trainer, cfg.version)?;
            let reports =
                evaluate_model(&prep, &model, &cfg.recommender, cfg.version, Part::Validation, &eval_params(&cfg))?;
            rows.push(SweepRow {
                value: v,
                report: scenario_all(reports),
            });
        }
    }
    let acc10 = |r: &SweepRow| r.report.accuracy_at(10).unwrap_or(0.0);
    let mut winner = 0;
    for (i, r) in rows.iter().enumerate() {
        if acc10(r) > acc10(&rows[winner]) {
            winner = i;
        }
    }
    Ok(SweepTable { param, rows, winner })
}

fn scenario_all(reports: Vec<EvalReport>) -> EvalReport {
    reports
        .into_iter()
        .find(|r| r.scenario == Scenario::All)
        .expect("evaluate_all returns the all scenario")
}
