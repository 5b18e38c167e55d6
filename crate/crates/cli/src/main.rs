use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use twsample_core::census::{bucket_single_year, read_partial_census, write_census};
use twsample_core::evaluate::{filter_and_draw, label, Variant};
use twsample_core::inference::LabeledUser;
use twsample_core::io;
use twsample_core::pipeline::{
    draw_pool, evaluate_method, hydrate, read_tiles, run_pipeline, run_sampler, stream_for, world_for, write_debias,
    write_metrics, write_report, Evaluation, EvaluationBundle, PipelineConfig,
};
use twsample_core::samplers::{Method, SampleSet};
use twsample_core::snowflake::{decompose, CandidateGenerator, SnowflakeGenerator, DEFAULT_EPOCH_MS};
use twsample_core::tiler::tile_polygon;
use twsample_core::worldgen::{SimUser, TweetEvent};
use twsample_core::Error;

#[derive(Parser)]
#[command(name = "twsample", version, about = "Simulate and compare platform sampling methods")]
struct Cli {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config JSON; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set filter.min_tweets=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let base = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        Ok(base.with_overrides(&self.sets)?)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the platform population (users.jsonl) and the census it came from.
    GenWorld {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        census_out: Option<PathBuf>,
    },
    /// Emit one collection window of tweets for a world.
    Simulate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cover a polygon with bounding boxes.
    Tile {
        /// GeoJSON outline; the bundled CONUS outline when absent.
        #[arg(long)]
        polygon: Option<PathBuf>,
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one tweet sampler over a stream.
    Sample {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        stream: PathBuf,
        /// Required for `bb`.
        #[arg(long)]
        tiles: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw the pre-filter pool from a sample, filter it, and draw the final users.
    Preprocess {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pool_out: Option<PathBuf>,
        /// Removal report as JSON.
        #[arg(long)]
        removal_out: Option<PathBuf>,
    },
    /// Attach observed demographics and locations.
    Infer {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Design table, model fits and inclusion estimates.
    Debias {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        census: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// File prefix; the input's file stem when absent.
        #[arg(long)]
        name: Option<String>,
    },
    /// Leave-one-unit-out scores for each spec and variant.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        census: PathBuf,
        /// Pre-filter pool, needed by variants that change the filters.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Restrict to these variants (repeatable); the config's list when absent.
        #[arg(long)]
        variant: Vec<Variant>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-method metric tables, pairwise p-values and histograms.
    Metrics {
        /// Sample JSON files, one per method.
        #[arg(long, required = true)]
        sample: Vec<PathBuf>,
        /// Labeled users, in the same order as --sample.
        #[arg(long, required = true)]
        labeled: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// MAPE grid and summary from an evaluation bundle.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Snowflake id utilities.
    Snowflake {
        #[command(subcommand)]
        cmd: SnowflakeCmd,
    },
    /// Bucket a single-year-of-age census into the four brackets.
    CensusBucket {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 13)]
        min_age: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the whole pipeline, resuming from cached stages.
    Run {
        /// Output directory; overrides the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run a single stage whose inputs already exist.
        #[arg(long)]
        only: Option<String>,
    },
}

#[derive(Subcommand)]
enum SnowflakeCmd {
    /// Print timestamp, machine and sequence for each id.
    Decompose {
        #[arg(required = true)]
        ids: Vec<u64>,
        #[arg(long, default_value_t = DEFAULT_EPOCH_MS)]
        epoch_ms: u64,
    },
    /// Generate `count` ids for one machine at a fixed clock reading.
    Generate {
        #[arg(long, default_value_t = 0)]
        machine: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Milliseconds since the epoch.
        #[arg(long)]
        now_ms: u64,
    },
    /// Candidate id batches for random-id sampling.
    Candidates {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        batches: usize,
        /// Unix ms, inclusive.
        #[arg(long)]
        from_ms: u64,
        /// Unix ms, exclusive.
        #[arg(long)]
        to_ms: u64,
        #[arg(long, default_value_t = DEFAULT_EPOCH_MS)]
        epoch_ms: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn stem(p: &Path) -> Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("cannot take a name from {}", p.display()))
}

fn read_users(p: &Path) -> Result<Vec<SimUser>> {
    Ok(io::read_jsonl_file(p, io::USERS_SCHEMA)?)
}

fn read_labeled(p: &Path) -> Result<Vec<LabeledUser>> {
    Ok(io::read_jsonl_file(p, io::LABELED_USERS_SCHEMA)?)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = cli.cfg.load()?;
    match cli.cmd {
        Cmd::GenWorld { out, census_out } => {
            cfg.validate()?;
            let census = cfg.load_census()?;
            if let Some(c) = census_out {
                write_census(&census, io::create(&c)?)?;
            }
            let world = world_for(&cfg, &census)?;
            io::write_jsonl_file(&out, io::USERS_SCHEMA, &world)?;
            eprintln!("{} users -> {}", world.len(), out.display());
        }
        Cmd::Simulate { world, out } => {
            let stream = stream_for(&cfg, &read_users(&world)?)?;
            io::write_jsonl_file(&out, io::TWEETS_SCHEMA, &stream)?;
            eprintln!("{} tweets -> {}", stream.len(), out.display());
        }
        Cmd::Tile { polygon, spacing, out } => {
            let mut cfg = cfg;
            if polygon.is_some() {
                cfg.polygon = polygon;
            }
            if let Some(s) = spacing {
                cfg.tiles.spacing_deg = s;
            }
            let tiles = tile_polygon(&cfg.load_polygon()?, &cfg.tiles)?;
            tiles.write_csv(io::create(&out)?)?;
            eprintln!("{} boxes -> {}", tiles.len(), out.display());
        }
        Cmd::Sample { method, stream, tiles, out } => {
            let events: Vec<TweetEvent> = io::read_jsonl_file(&stream, io::TWEETS_SCHEMA)?;
            let tiles = match (&tiles, method) {
                (Some(p), _) => read_tiles(&cfg, p)?,
                (None, Method::Bb) => bail!("--tiles is required for the bb sampler"),
                (None, _) => twsample_core::tiler::TileSet::new(Vec::new(), cfg.tiles.spacing_deg, "none")?,
            };
            let s = run_sampler(&cfg, method, &events, &tiles)?;
            io::write_json_file(&out, &s)?;
            eprintln!("{}: {} tweets, {} authors -> {}", method.code(), s.tweets.len(), s.authors.len(), out.display());
        }
        Cmd::Preprocess {
            sample,
            world,
            out,
            pool_out,
            removal_out,
        } => {
            let s: SampleSet = io::read_json_file(&sample)?;
            let world = read_users(&world)?;
            let pool = hydrate(&world, &draw_pool(&cfg, &s)?)?;
            if let Some(p) = pool_out {
                io::write_jsonl_file(&p, io::USERS_SCHEMA, &pool)?;
            }
            let (report, drawn) = filter_and_draw(&pool, &cfg.filter, &cfg.suite_config(), s.method.code())?;
            io::write_jsonl_file(&out, io::USERS_SCHEMA, &drawn)?;
            if let Some(p) = removal_out {
                io::write_json_file(&p, &report)?;
            }
            eprintln!("{}: kept {} of {}, drew {} -> {}", s.method.code(), report.output_size, report.input_size, drawn.len(), out.display());
        }
        Cmd::Infer { input, out } => {
            let labeled = label(&read_users(&input)?, &cfg.suite_config())?;
            io::write_jsonl_file(&out, io::LABELED_USERS_SCHEMA, &labeled)?;
            eprintln!("{} users labeled -> {}", labeled.len(), out.display());
        }
        Cmd::Debias { input, census, out_dir, name } => {
            let name = name.map_or_else(|| stem(&input), Ok)?;
            let census = read_partial_census(io::open(&census)?)?;
            mkdir(&out_dir)?;
            write_debias(&cfg, &read_labeled(&input)?, &census, &out_dir, &name)?;
            eprintln!("{name}: design, fits and inclusion -> {}", out_dir.display());
        }
        Cmd::Evaluate {
            input,
            census,
            pool,
            variant,
            name,
            out_dir,
        } => {
            let mut cfg = cfg;
            if !variant.is_empty() {
                cfg.variants = variant;
            }
            let name = name.map_or_else(|| stem(&input), Ok)?;
            let census = read_partial_census(io::open(&census)?)?;
            let pool = pool.as_deref().map(read_users).transpose()?;
            let mut eval = Evaluation::default();
            eval.extend(evaluate_method(&cfg, &census, &name, &read_labeled(&input)?, pool.as_deref()));
            let (n, failed) = (eval.reports.len(), eval.failures.len());
            mkdir(&out_dir)?;
            eval.write(cfg.seed, &out_dir)?;
            eprintln!("{name}: {n} reports, {failed} grid failures -> {}", out_dir.display());
        }
        Cmd::Metrics { sample, labeled, out_dir } => {
            if sample.len() != labeled.len() {
                bail!("got {} --sample and {} --labeled files", sample.len(), labeled.len());
            }
            let inputs = sample
                .iter()
                .zip(&labeled)
                .map(|(s, l)| Ok((io::read_json_file::<SampleSet>(s)?, read_labeled(l)?)))
                .collect::<Result<Vec<_>>>()?;
            mkdir(&out_dir)?;
            write_metrics(&cfg, &inputs, &out_dir)?;
            eprintln!("metrics for {} methods -> {}", inputs.len(), out_dir.display());
        }
        Cmd::Report { input, out_dir } => {
            let bundle: EvaluationBundle = io::read_json_file(&input)?;
            mkdir(&out_dir)?;
            write_report(&bundle, &out_dir)?;
            eprintln!("{} reports -> {}", bundle.reports.len(), out_dir.display());
        }
        Cmd::Snowflake { cmd } => snowflake(cmd)?,
        Cmd::CensusBucket { input, min_age, out } => {
            let table = bucket_single_year(io::open(&input)?, min_age)?;
            write_census(&table, io::create(&out)?)?;
            eprintln!("{} persons -> {}", table.total(), out.display());
        }
        Cmd::Run { out, only } => {
            let mut cfg = cfg;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let b = run_pipeline(&cfg, only.as_deref())?;
            eprintln!(
                "{} stages run, {} cached; manifest {}",
                b.executed.len(),
                b.skipped.len(),
                b.manifest.display()
            );
        }
    }
    Ok(())
}

fn snowflake(cmd: SnowflakeCmd) -> Result<()> {
    match cmd {
        SnowflakeCmd::Decompose { ids, epoch_ms } => {
            for id in ids {
                let (ts, machine, seq) = decompose(id);
                let v = serde_json::json!({
                    "id": id, "timestamp_ms": ts, "unix_ms": ts + epoch_ms, "machine": machine, "sequence": seq,
                });
                println!("{v}");
            }
        }
        SnowflakeCmd::Generate { machine, count, now_ms } => {
            let mut g = SnowflakeGenerator::new(machine)?;
            for _ in 0..count {
                println!("{}", g.next_id(now_ms)?.raw());
            }
        }
        SnowflakeCmd::Candidates {
            seed,
            batches,
            from_ms,
            to_ms,
            epoch_ms,
            out,
        } => {
            let mut g = CandidateGenerator::new(seed, epoch_ms);
            let mut all = Vec::new();
            let mut sidecars = Vec::new();
            for _ in 0..batches {
                let b = g.next_batch((from_ms, to_ms))?;
                all.extend_from_slice(&b.ids);
                sidecars.push(b.sidecar(epoch_ms));
            }
            io::write_ids(&out, &all)?;
            let side = out.with_extension("json");
            io::write_json_file(&side, &sidecars)?;
            eprintln!("{} ids -> {}, sidecar {}", all.len(), out.display(), side.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Error>().map_or(3, |c| c.class().exit_code());
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(code as u8)
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}
