use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use poi_embed::config::RunConfig;
use poi_embed::corpus::parse_timestamp;
use poi_embed::corpus::TimeFormat;
use poi_embed::experiment::SweepParam;
use poi_embed::pipeline::{Outcome, Pipeline, Stage};
use poi_embed::recommender::{Anchor, Query, recommend};
use poi_embed::synth::{StructuredParams, checkins_tsv, friendships_tsv, structured};
use poi_embed::{Error, Result};

#[derive(Parser)]
#[command(name = "poi-embed", version, about = "Graph-embedding POI recommendation")]
struct Cli {
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Check-in file (overrides paths.checkins).
    #[arg(long, global = true)]
    checkins: Option<PathBuf>,
    /// Friendship file (overrides paths.friendships).
    #[arg(long, global = true)]
    friendships: Option<PathBuf>,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Seed for initialisation and sampling (trainer.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training threads (trainer.workers).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override any config key, e.g. `--set trainer.dim=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Rerun stages even when their outputs are current.
    #[arg(long, global = true)]
    force: bool,
    /// Log stage progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse check-ins and friendships into the work directory.
    Ingest,
    /// Split the data and extract routes and stay points.
    Routes,
    /// Build the eight weighted graphs.
    Graphs,
    /// Train embeddings.
    Train {
        /// Continue from a checkpoint left by an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Accuracy@n on the probe partition for all scenarios.
    Evaluate,
    /// Run every stage up to evaluation.
    Run,
    /// Top-n POIs for one query.
    Recommend {
        #[arg(long)]
        user: String,
        /// A POI key, or `lat,lon`.
        #[arg(long)]
        anchor: String,
        /// Epoch seconds or ISO-8601.
        #[arg(long)]
        time: String,
        #[arg(long)]
        top_n: Option<usize>,
    },
    /// Train and evaluate on the validation partition for each grid value.
    Sweep {
        /// One of S, d, delta_t, alpha, beta, gamma, delta, N, Rg.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        grid: Vec<f64>,
    },
    /// Corpus statistics.
    Stats,
    /// Print the effective configuration after validating it.
    Config,
    /// Write a seeded synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// `smoke` or `ablation`.
        #[arg(long, default_value = "smoke")]
        preset: String,
        #[arg(long, default_value_t = 11)]
        corpus_seed: u64,
    },
}

struct StderrLog;

impl log::Log for StderrLog {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }
    fn log(&self, record: &log::Record) {
        eprintln!("[{}] {}", record.level(), record.args());
    }
    fn flush(&self) {}
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.checkins {
        cfg.checkins = Some(p.clone());
    }
    if let Some(p) = &cli.friendships {
        cfg.friendships = Some(p.clone());
    }
    if let Some(p) = &cli.workdir {
        cfg.workdir = p.clone();
    }
    if let Some(s) = cli.seed {
        cfg.trainer.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.trainer.workers = w;
    }
    for kv in &cli.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn parse_anchor(text: &str, model_keys: &poi_embed::corpus::Interner) -> Result<Anchor> {
    if let Some(id) = model_keys.get(text) {
        return Ok(Anchor::Poi(id));
    }
    let coords = text
        .split_once(',')
        .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)));
    match coords {
        Some((lat, lon)) => Ok(Anchor::Coords(lat, lon)),
        None => Err(Error::InvalidArgument(format!(
            "anchor {text:?} is neither a known POI nor lat,lon"
        ))),
    }
}

fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn report(stages: &[(Stage, Outcome)]) {
    for (st, o) in stages {
        let state = match o {
            Outcome::Ran => "done",
            Outcome::UpToDate => "up to date",
        };
        println!("{st}: {state}");
    }
}

fn execute(cli: Cli) -> Result<()> {
    if cli.verbose {
        let _ = log::set_logger(&StderrLog);
        log::set_max_level(log::LevelFilter::Info);
    }
    let cfg = load_config(&cli)?;
    let stage = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Routes => Some(Stage::Routes),
        Command::Graphs => Some(Stage::Graphs),
        Command::Train { .. } => Some(Stage::Train),
        Command::Evaluate => Some(Stage::Evaluate),
        Command::Stats => Some(Stage::Stats),
        _ => None,
    };
    if let Some(stage) = stage {
        let mut p = Pipeline::open(cfg, cli.force)?;
        p.resume = matches!(cli.command, Command::Train { resume: true });
        let outcome = p.run_stage(stage)?;
        report(&[(stage, outcome)]);
        if stage == Stage::Evaluate {
            for name in ["report_all.txt", "report_cold_user.txt", "report_cold_poi.txt"] {
                for line in read(&p.path(name))?.lines().take_while(|l| !l.starts_with('#')) {
                    println!("{line}");
                }
            }
        }
        if stage == Stage::Stats {
            print!("{}", read(&p.path("stats.txt"))?);
        }
        return Ok(());
    }
    match cli.command {
        Command::Run => {
            let mut p = Pipeline::open(cfg, cli.force)?;
            report(&p.run_through(Stage::Evaluate)?);
        }
        Command::Recommend {
            user,
            anchor,
            time,
            top_n,
        } => {
            let p = Pipeline::open(cfg.clone(), false)?;
            let (prep, model) = p.load_model()?;
            let user_id = prep
                .train
                .users
                .get(&user)
                .ok_or_else(|| Error::Unknown { kind: "user", value: user.clone() })?;
            let anchor = parse_anchor(&anchor, &prep.train.poi_keys)?;
            let timestamp = parse_timestamp(&time, TimeFormat::Epoch)
                .or_else(|| parse_timestamp(&time, TimeFormat::Iso8601))
                .ok_or_else(|| Error::InvalidArgument(format!("cannot parse time {time:?}")))?;
            let mut rec = cfg.recommender.masked(cfg.version.score_terms());
            if let Some(n) = top_n {
                rec.top_n = n;
            }
            rec.validate()?;
            let query = Query {
                user: user_id,
                anchor,
                timestamp,
            };
            for (i, s) in recommend(&query, &rec, &model)?.iter().enumerate() {
                println!("{}\t{}\t{:.6}\t{:.3}", i + 1, prep.train.poi_keys.key(s.poi), s.score, s.distance_km);
            }
        }
        Command::Sweep { param, grid } => {
            let param: SweepParam = param.parse()?;
            let mut p = Pipeline::open(cfg, cli.force)?;
            if !p.path("dataset.json").exists() {
                p.run_stage(Stage::Ingest)?;
            }
            let (path, table) = p.sweep(param, &grid)?;
            print!("{}", table.render());
            eprintln!("wrote {}", path.display());
        }
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.render());
        }
        Command::Synth {
            out,
            preset,
            corpus_seed,
        } => {
            let params = match preset.as_str() {
                "smoke" => StructuredParams {
                    seed: corpus_seed,
                    ..StructuredParams::smoke()
                },
                "ablation" => StructuredParams::ablation(corpus_seed),
                other => {
                    return Err(Error::Unknown {
                        kind: "synth preset",
                        value: other.into(),
                    })
                }
            };
            let planted = structured(&params);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let c = out.join("checkins.tsv");
            let f = out.join("friends.tsv");
            std::fs::write(&c, checkins_tsv(&planted.dataset)).map_err(|e| Error::io(&c, e))?;
            std::fs::write(&f, friendships_tsv(&planted.friendships)).map_err(|e| Error::io(&f, e))?;
            println!("{}\n{}", c.display(), f.display());
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
