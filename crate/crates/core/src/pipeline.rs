//! End-to-end run: world, stream, samplers, filters, inference, estimation
//! and reports, with every stage persisted under one output directory.
//!
//! A stage is skipped when its cache record under `.cache/` matches the hash
//! of its config subsection and input files and its outputs are unchanged.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::census::{builtin_census, load_census, read_partial_census, write_census, PopulationTable};
use crate::debias::{build_design, fit_model, inclusion_probabilities, FitOptions, ModelSpec, ZeroRowPolicy};
use crate::demographics::{CountryCode, LangCode};
use crate::error::{Error, Result};
use crate::evaluate::{
    filter_and_draw, label, missing_groups, score_specs, variant_table, EstimateReport, MissingGroups, SuiteConfig, Variant,
};
use crate::geo::{GeoLevel, State};
use crate::inference::{ConfusionSpec, LabeledUser};
use crate::io;
use crate::metrics::{log_histogram, pairwise_pvalues, summarize, write_pvalue_matrix, UserMetric};
use crate::polygon::{builtin_conus, Polygon};
use crate::preprocess::{write_removal_table, FilterConfig, RemovalReport};
use crate::rng::derive_seed;
use crate::samplers::{
    draw_users, sample_bounding_box, sample_language_query, sample_location_query, sample_stream, BbParams, Method, SampleSet,
    StreamParams,
};
use crate::tiler::{tile_polygon, TileOptions, TileSet};
use crate::worldgen::{build_world, simulate_month, BehaviorConfig, InclusionDesign, SimUser, TweetEvent, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Census CSV; the bundled table when absent.
    pub census: Option<PathBuf>,
    /// Rescale the census to this many persons before building the world.
    pub persons: Option<u64>,
    /// Restrict the census to these state codes.
    pub states: Option<Vec<String>>,
    pub design: InclusionDesign,
    pub behavior: BehaviorConfig,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    /// GeoJSON outline for the bounding-box grid; the bundled outline when absent.
    pub polygon: Option<PathBuf>,
    pub tiles: TileOptions,
    pub stream: StreamParams,
    pub bb: BbParams,
    pub country: CountryCode,
    pub language: LangCode,
    pub methods: Vec<Method>,
    /// Users drawn per method before filtering.
    pub pool_size: usize,
    /// Users drawn per method after filtering.
    pub final_n: usize,
    pub filter: FilterConfig,
    pub confusion: ConfusionSpec,
    pub specs: Vec<ModelSpec>,
    pub variants: Vec<Variant>,
    pub fit: FitOptions,
    pub zero_row_policy: ZeroRowPolicy,
    pub missing_group_sizes: Vec<usize>,
    pub histogram_bins: usize,
    pub pooled_t: bool,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let w = Window::default();
        PipelineConfig {
            seed: 1,
            census: None,
            persons: Some(2_000_000),
            states: None,
            design: InclusionDesign::default(),
            behavior: BehaviorConfig::default(),
            window_start: w.start_date(),
            window_end: crate::worldgen::ms_to_date(w.end_ms),
            polygon: None,
            tiles: TileOptions::default(),
            stream: StreamParams::default(),
            bb: BbParams::default(),
            country: CountryCode::US,
            language: LangCode::EN,
            methods: Method::TWEET_METHODS.to_vec(),
            pool_size: 30_000,
            final_n: 10_000,
            filter: FilterConfig::default(),
            confusion: ConfusionSpec::default(),
            specs: ModelSpec::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            fit: FitOptions::default(),
            zero_row_policy: ZeroRowPolicy::Drop,
            missing_group_sizes: vec![5_000, 8_000, 10_000],
            histogram_bins: 30,
            pooled_t: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    /// Small enough to run in a test: 1,000 persons in two states, everyone
    /// joins, filters relaxed so a few dozen users survive.
    pub fn tiny(out_dir: impl Into<PathBuf>) -> Self {
        let mut cfg = PipelineConfig {
            persons: Some(1_000),
            states: Some(vec!["CA".into(), "TX".into()]),
            design: InclusionDesign::constant(1.0),
            pool_size: 40,
            final_n: 20,
            missing_group_sizes: vec![5, 10, 20],
            histogram_bins: 8,
            out_dir: out_dir.into(),
            ..Default::default()
        };
        cfg.behavior.activity_median = 3.0;
        cfg.filter.min_tweets = 0;
        cfg.filter.min_tenure_months = 0;
        cfg.filter.bot_score_threshold = 1.0;
        cfg.stream.mode = crate::samplers::StreamMode::Bernoulli;
        cfg.stream.rate = 0.2;
        cfg
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json_file(path)
    }

    /// Apply `key.sub=value` overrides. Values parse as JSON, falling back
    /// to a plain string.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for s in sets {
            let (key, raw) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
            let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
            let mut node = &mut v;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, p) in parts.iter().enumerate() {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| Error::Config(format!("override {key}: {p} is not inside an object")))?;
                if i + 1 == parts.len() {
                    if !obj.contains_key(*p) {
                        return Err(Error::Config(format!("unknown config key {key}")));
                    }
                    obj.insert(p.to_string(), value.clone());
                    break;
                }
                node = obj.get_mut(*p).ok_or_else(|| Error::Config(format!("unknown config key {key}")))?;
                if node.is_null() {
                    return Err(Error::Config(format!("override {key}: {p} is unset")));
                }
            }
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("after overrides: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.census.iter().chain(&self.polygon) {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        if self.window_end <= self.window_start {
            return Err(Error::Config("window_end must be after window_start".into()));
        }
        if self.final_n == 0 || self.final_n > self.pool_size {
            return Err(Error::Config(format!(
                "final_n {} must be in 1..=pool_size ({})",
                self.final_n, self.pool_size
            )));
        }
        if self.methods.is_empty() || self.methods.contains(&Method::RandomId) {
            return Err(Error::Config("methods must be a non-empty subset of bb, loc, lang, stream1pct".into()));
        }
        if self.specs.is_empty() {
            return Err(Error::Config("no model specs to run".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        for code in self.states.iter().flatten() {
            State::from_code(code).ok_or_else(|| Error::Config(format!("unknown state {code:?}")))?;
        }
        self.filter.validate()?;
        self.stream.validate()?;
        self.confusion.validate()?;
        Ok(())
    }

    pub fn window(&self) -> Window {
        Window::from_dates(self.window_start, self.window_end)
    }

    /// Filters are evaluated as of the last collection day.
    pub fn as_of(&self) -> NaiveDate {
        self.window_end.pred_opt().unwrap_or(self.window_end)
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage, 0)
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            filter: self.filter.clone(),
            confusion: self.confusion.clone(),
            specs: self.specs.clone(),
            variants: self.variants.clone(),
            fit: self.fit,
            policy: self.zero_row_policy,
            final_n: self.final_n,
            as_of: self.as_of(),
            seed: self.stage_seed("preprocess"),
        }
    }

    /// Census as configured: restricted, rescaled, DC stored but inactive.
    pub fn load_census(&self) -> Result<PopulationTable> {
        let mut census = match &self.census {
            Some(p) => load_census(p)?,
            None => builtin_census(),
        };
        if let Some(codes) = &self.states {
            let states: Vec<State> = codes.iter().filter_map(|c| State::from_code(c)).collect();
            census = census.restrict_states(&states)?;
        }
        if let Some(n) = self.persons {
            census = census.scaled_to(n);
        }
        Ok(census.with_include_dc(false))
    }

    pub fn load_polygon(&self) -> Result<Polygon> {
        match &self.polygon {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Polygon::from_geojson(&text, None)
            }
            None => Ok(builtin_conus()),
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn sha256_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub stage: String,
    pub sha256: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub stages: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    outputs: BTreeMap<String, String>,
}

/// Paths and per-stage execution flags from one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
}

struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    artifacts: Vec<Artifact>,
    executed: Vec<String>,
    skipped: Vec<String>,
}

impl Runner<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn stage(
        &mut self,
        name: &str,
        params: Value,
        inputs: &[String],
        outputs: &[String],
        f: impl FnOnce(&Self) -> Result<()>,
    ) -> Result<()> {
        let wrap = |e: Error, me: &Self| Error::Stage {
            stage: name.to_owned(),
            inputs: inputs.iter().map(|i| me.path(i)).collect(),
            repro: format!(
                "twsample run --config {} --only {name}",
                me.path("config.json").display()
            ),
            source: Box::new(e),
        };
        let config_hash = sha256_str(&params.to_string());
        let mut key_src = format!("{name}\n{config_hash}\n");
        for i in inputs {
            let h = sha256_file(&self.path(i)).map_err(|e| wrap(e, self))?;
            key_src.push_str(&format!("{i} {h}\n"));
        }
        let key = sha256_str(&key_src);
        let record_path = self.path(&format!(".cache/{name}.json"));
        let cached = io::read_json_file::<CacheRecord>(&record_path)
            .ok()
            .filter(|r| r.key == key)
            .filter(|r| {
                outputs.len() == r.outputs.len()
                    && outputs
                        .iter()
                        .all(|o| r.outputs.get(o).is_some_and(|h| sha256_file(&self.path(o)).is_ok_and(|x| &x == h)))
            });
        let hashes = match cached {
            Some(r) => {
                self.skipped.push(name.to_owned());
                r.outputs
            }
            None => {
                f(self).map_err(|e| wrap(e, self))?;
                let mut hashes = BTreeMap::new();
                for o in outputs {
                    hashes.insert(o.clone(), sha256_file(&self.path(o)).map_err(|e| wrap(e, self))?);
                }
                io::write_json_file(
                    &record_path,
                    &CacheRecord {
                        key,
                        outputs: hashes.clone(),
                    },
                )?;
                self.executed.push(name.to_owned());
                hashes
            }
        };
        for o in outputs {
            self.artifacts.push(Artifact {
                path: o.clone(),
                stage: name.to_owned(),
                sha256: hashes[o].clone(),
                seed: self.cfg.seed,
                config_hash: config_hash.clone(),
            });
        }
        Ok(())
    }
}

fn json<T: Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("config values serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub method: String,
    pub variant: Variant,
    pub spec: Option<ModelSpec>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub seed: u64,
    pub reports: Vec<EstimateReport>,
    pub failures: Vec<GridFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FitOutcome {
    spec: ModelSpec,
    model: Option<crate::debias::FittedModel>,
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapeRow {
    method: String,
    spec: ModelSpec,
    variant: Variant,
    mape: f64,
    se: Option<f64>,
    units: usize,
    skipped: usize,
}

pub const STAGES: [&str; 11] = [
    "world", "simulate", "tile", "sample", "draw", "preprocess", "infer", "debias", "evaluate", "metrics", "report",
];

/// Look up pool members in the id-sorted world.
pub fn hydrate(world: &[SimUser], ids: &[u64]) -> Result<Vec<SimUser>> {
    ids.iter()
        .map(|id| {
            world
                .binary_search_by_key(id, |u| u.user_id)
                .map(|i| world[i].clone())
                .map_err(|_| Error::Join(format!("user {id} is not in the world")))
        })
        .collect()
}

/// Draw the pre-filter pool for one method.
pub fn draw_pool(cfg: &PipelineConfig, sample: &SampleSet) -> Result<Vec<u64>> {
    let seed = derive_seed(cfg.stage_seed("draw"), sample.method.code(), 0);
    Ok(draw_users(sample, cfg.pool_size, seed)?.users)
}

/// Run the four tweet samplers on one stream.
pub fn run_sampler(cfg: &PipelineConfig, method: Method, stream: &[TweetEvent], tiles: &TileSet) -> Result<SampleSet> {
    let window = cfg.window();
    match method {
        Method::Stream1pct => {
            let mut p = cfg.stream.clone();
            p.seed = cfg.stage_seed("stream");
            sample_stream(stream, &p, window)
        }
        Method::Loc => Ok(sample_location_query(stream, cfg.country, window)),
        Method::Lang => Ok(sample_language_query(stream, cfg.country, cfg.language, window)),
        Method::Bb => sample_bounding_box(stream, tiles, &cfg.bb, window),
        Method::RandomId => Err(Error::Config("random-id sampling has its own subcommand".into())),
    }
}

pub fn world_for(cfg: &PipelineConfig, census: &PopulationTable) -> Result<Vec<SimUser>> {
    // DC residents exist on the platform even when DC is left out of the analysis
    build_world(&census.clone().with_include_dc(true), &cfg.design, &cfg.behavior, &cfg.window(), cfg.stage_seed("world"))
}

pub fn stream_for(cfg: &PipelineConfig, world: &[SimUser]) -> Result<Vec<TweetEvent>> {
    simulate_month(
        world,
        &cfg.window(),
        cfg.behavior.code_switch_rate,
        cfg.behavior.likes_cap,
        cfg.behavior.epoch_ms,
        cfg.stage_seed("simulate"),
    )
}

/// Run all stages (or only `only`, whose inputs must already exist).
pub fn run_pipeline(cfg: &PipelineConfig, only: Option<&str>) -> Result<ReportBundle> {
    cfg.validate()?;
    if let Some(s) = only {
        if !STAGES.contains(&s) {
            return Err(Error::Config(format!("unknown stage {s:?}")));
        }
    }
    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let _lock = DirLock::acquire(&out)?;
    io::write_json_file(&out.join("config.json"), cfg)?;
    let mut r = Runner {
        cfg,
        out: out.clone(),
        artifacts: Vec::new(),
        executed: Vec::new(),
        skipped: Vec::new(),
    };
    let want = |s: &str| only.is_none_or(|o| o == s);
    let methods: Vec<Method> = cfg.methods.clone();
    let per = |pattern: &str| -> Vec<String> { methods.iter().map(|m| pattern.replace("{m}", m.code())).collect() };
    let suite = cfg.suite_config();

    if want("world") {
        let params = json((cfg.seed, &cfg.census, cfg.persons, &cfg.states, &cfg.design, &cfg.behavior, cfg.window()));
        r.stage("world", params, &[], &["world/census.csv".into(), "world/users.jsonl".into()], |r| {
            let census = cfg.load_census()?;
            write_census(&census, io::create(&r.path("world/census.csv"))?)?;
            let world = world_for(cfg, &census)?;
            io::write_jsonl_file(&r.path("world/users.jsonl"), io::USERS_SCHEMA, &world)
        })?;
    }
    if want("simulate") {
        let b = &cfg.behavior;
        let params = json((cfg.seed, cfg.window(), b.code_switch_rate, b.likes_cap, b.epoch_ms));
        r.stage("simulate", params, &["world/users.jsonl".into()], &["stream/tweets.jsonl".into()], |r| {
            let world: Vec<SimUser> = io::read_jsonl_file(&r.path("world/users.jsonl"), io::USERS_SCHEMA)?;
            let stream = stream_for(cfg, &world)?;
            io::write_jsonl_file(&r.path("stream/tweets.jsonl"), io::TWEETS_SCHEMA, &stream)
        })?;
    }
    if want("tile") {
        r.stage("tile", json((&cfg.polygon, cfg.tiles)), &[], &["tiles/tiles.csv".into()], |r| {
            let tiles = tile_polygon(&cfg.load_polygon()?, &cfg.tiles)?;
            tiles.write_csv(io::create(&r.path("tiles/tiles.csv"))?)
        })?;
    }
    let sample_outputs = per("samples/{m}.json");
    if want("sample") {
        let params = json((cfg.seed, &cfg.stream, &cfg.bb, cfg.country, cfg.language, &cfg.methods, cfg.window()));
        let mut outs = sample_outputs.clone();
        outs.push("samples/summary.json".into());
        r.stage("sample", params, &["stream/tweets.jsonl".into(), "tiles/tiles.csv".into()], &outs, |r| {
            let stream: Vec<TweetEvent> = io::read_jsonl_file(&r.path("stream/tweets.jsonl"), io::TWEETS_SCHEMA)?;
            let tiles = read_tiles(cfg, &r.path("tiles/tiles.csv"))?;
            let mut summaries = Vec::new();
            for (m, path) in methods.iter().zip(&sample_outputs) {
                let s = run_sampler(cfg, *m, &stream, &tiles)?;
                summaries.push(s.summary());
                io::write_json_file(&r.path(path), &s)?;
            }
            io::write_json_file(&r.path("samples/summary.json"), &summaries)
        })?;
    }
    let pool_outputs = per("pools/{m}.jsonl");
    if want("draw") {
        let mut inputs = sample_outputs.clone();
        inputs.push("world/users.jsonl".into());
        let mut outs = per("pools/{m}.ids");
        outs.extend(pool_outputs.clone());
        r.stage("draw", json((cfg.seed, cfg.pool_size)), &inputs, &outs, |r| {
            let world: Vec<SimUser> = io::read_jsonl_file(&r.path("world/users.jsonl"), io::USERS_SCHEMA)?;
            for m in &methods {
                let s: SampleSet = io::read_json_file(&r.path(&format!("samples/{}.json", m.code())))?;
                let ids = draw_pool(cfg, &s)?;
                io::write_ids(&r.path(&format!("pools/{}.ids", m.code())), &ids)?;
                let users = hydrate(&world, &ids)?;
                io::write_jsonl_file(&r.path(&format!("pools/{}.jsonl", m.code())), io::USERS_SCHEMA, &users)?;
            }
            Ok(())
        })?;
    }
    let filtered_outputs = per("filtered/{m}.jsonl");
    if want("preprocess") {
        let params = json((cfg.seed, &cfg.filter, cfg.final_n, cfg.as_of()));
        let mut outs = filtered_outputs.clone();
        outs.push("filtered/removal.csv".into());
        outs.push("filtered/removal.json".into());
        r.stage("preprocess", params, &pool_outputs, &outs, |r| {
            let mut reports: Vec<RemovalReport> = Vec::new();
            for m in &methods {
                let pool: Vec<SimUser> = io::read_jsonl_file(&r.path(&format!("pools/{}.jsonl", m.code())), io::USERS_SCHEMA)?;
                let (report, drawn) = filter_and_draw(&pool, &cfg.filter, &suite, m.code())?;
                io::write_jsonl_file(&r.path(&format!("filtered/{}.jsonl", m.code())), io::USERS_SCHEMA, &drawn)?;
                reports.push(report);
            }
            write_removal_table(&reports, io::create(&r.path("filtered/removal.csv"))?)?;
            io::write_json_file(&r.path("filtered/removal.json"), &reports)
        })?;
    }
    let labeled_outputs = per("labeled/{m}.jsonl");
    if want("infer") {
        r.stage("infer", json((cfg.seed, &cfg.confusion)), &filtered_outputs, &labeled_outputs, |r| {
            for m in &methods {
                let users: Vec<SimUser> = io::read_jsonl_file(&r.path(&format!("filtered/{}.jsonl", m.code())), io::USERS_SCHEMA)?;
                let labeled = label(&users, &suite)?;
                io::write_jsonl_file(&r.path(&format!("labeled/{}.jsonl", m.code())), io::LABELED_USERS_SCHEMA, &labeled)?;
            }
            Ok(())
        })?;
    }
    if want("debias") {
        let mut inputs = labeled_outputs.clone();
        inputs.push("world/census.csv".into());
        let mut outs = per("debias/{m}.design.csv");
        outs.extend(per("debias/{m}.fits.json"));
        outs.extend(per("debias/{m}.inclusion.csv"));
        let params = json((&cfg.fit, cfg.zero_row_policy, &cfg.specs));
        r.stage("debias", params, &inputs, &outs, |r| {
            let census = read_partial_census(io::open(&r.path("world/census.csv"))?)?;
            for m in &methods {
                let users: Vec<LabeledUser> = io::read_jsonl_file(&r.path(&format!("labeled/{}.jsonl", m.code())), io::LABELED_USERS_SCHEMA)?;
                write_debias(cfg, &users, &census, &r.path("debias"), m.code())?;
            }
            Ok(())
        })?;
    }
    if want("evaluate") {
        let mut inputs = labeled_outputs.clone();
        inputs.extend(pool_outputs.clone());
        inputs.push("world/census.csv".into());
        let outs = vec![
            "eval/reports.json".into(),
            "eval/estimates.csv".into(),
            "eval/missing_groups.csv".into(),
        ];
        let params = json((
            cfg.seed,
            &cfg.specs,
            &cfg.variants,
            &cfg.fit,
            cfg.zero_row_policy,
            &cfg.filter,
            cfg.final_n,
            &cfg.confusion,
            &cfg.missing_group_sizes,
        ));
        r.stage("evaluate", params, &inputs, &outs, |r| {
            let census = read_partial_census(io::open(&r.path("world/census.csv"))?)?;
            let mut eval = Evaluation::default();
            for m in &methods {
                let main: Vec<LabeledUser> = io::read_jsonl_file(&r.path(&format!("labeled/{}.jsonl", m.code())), io::LABELED_USERS_SCHEMA)?;
                let pool: Option<Vec<SimUser>> = if cfg.variants.iter().any(|v| v.changes_filters()) {
                    Some(io::read_jsonl_file(&r.path(&format!("pools/{}.jsonl", m.code())), io::USERS_SCHEMA)?)
                } else {
                    None
                };
                eval.extend(evaluate_method(cfg, &census, m.code(), &main, pool.as_deref()));
            }
            eval.write(cfg.seed, &r.path("eval"))
        })?;
    }
    if want("metrics") {
        let mut inputs = sample_outputs.clone();
        inputs.extend(labeled_outputs.clone());
        let mut outs = per("metrics/{m}.csv");
        outs.push("metrics/metrics.json".into());
        outs.push("metrics/state_counts.csv".into());
        for metric in UserMetric::ALL {
            outs.push(format!("metrics/pvalues_{}.csv", metric.code()));
            for m in &methods {
                outs.push(format!("metrics/hist_{}_{}.csv", metric.code(), m.code()));
            }
        }
        r.stage("metrics", json((cfg.histogram_bins, cfg.pooled_t, cfg.as_of())), &inputs, &outs, |r| {
            let mut inputs = Vec::new();
            for m in &methods {
                let s: SampleSet = io::read_json_file(&r.path(&format!("samples/{}.json", m.code())))?;
                let users: Vec<LabeledUser> = io::read_jsonl_file(&r.path(&format!("labeled/{}.jsonl", m.code())), io::LABELED_USERS_SCHEMA)?;
                inputs.push((s, users));
            }
            write_metrics(cfg, &inputs, &r.path("metrics"))
        })?;
    }
    if want("report") {
        r.stage(
            "report",
            json(cfg.seed),
            &["eval/reports.json".into()],
            &["report/mape_grid.csv".into(), "report/summary.json".into()],
            |r| {
                let bundle: EvaluationBundle = io::read_json_file(&r.path("eval/reports.json"))?;
                write_report(&bundle, &r.path("report"))
            },
        )?;
    }

    let manifest = Manifest {
        seed: cfg.seed,
        config_hash: sha256_str(&serde_json::to_string(cfg)?),
        stages: r.executed.iter().chain(&r.skipped).cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect(),
        artifacts: r.artifacts.clone(),
    };
    let manifest_path = out.join("manifest.json");
    io::write_json_file(&manifest_path, &manifest)?;
    Ok(ReportBundle {
        out_dir: out.clone(),
        manifest: manifest_path,
        artifacts: r.artifacts.iter().map(|a| out.join(&a.path)).collect(),
        executed: r.executed,
        skipped: r.skipped,
    })
}

pub fn read_tiles(cfg: &PipelineConfig, path: &Path) -> Result<TileSet> {
    let id = cfg.load_polygon()?.id;
    TileSet::read_csv(io::open(path)?, cfg.tiles.spacing_deg, &id)
}

/// Design table, fits and inclusion estimates for one method, written as
/// `{name}.design.csv`, `{name}.fits.json` and `{name}.inclusion.csv` in `dir`.
pub fn write_debias(cfg: &PipelineConfig, users: &[LabeledUser], census: &PopulationTable, dir: &Path, name: &str) -> Result<()> {
    let table = build_design(users, census, GeoLevel::State, cfg.zero_row_policy)?;
    io::write_csv_file(&dir.join(format!("{name}.design.csv")), &table.rows)?;
    let fits: Vec<FitOutcome> = cfg
        .specs
        .iter()
        .map(|&spec| match fit_model(&table, spec, &cfg.fit) {
            Ok(model) => FitOutcome {
                spec,
                model: Some(model),
                error: None,
            },
            Err(e) => FitOutcome {
                spec,
                model: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    io::write_json_file(&dir.join(format!("{name}.fits.json")), &fits)?;
    io::write_csv_file(&dir.join(format!("{name}.inclusion.csv")), &inclusion_probabilities(&table))
}

/// Everything the evaluate stage produces.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub reports: Vec<EstimateReport>,
    pub failures: Vec<GridFailure>,
    pub missing: Vec<MissingGroups>,
}

impl Evaluation {
    pub fn extend(&mut self, other: Evaluation) {
        self.reports.extend(other.reports);
        self.failures.extend(other.failures);
        self.missing.extend(other.missing);
    }

    /// `estimates.csv`, `missing_groups.csv` and `reports.json` in `dir`.
    pub fn write(self, seed: u64, dir: &Path) -> Result<()> {
        crate::evaluate::write_reports_csv(&self.reports, io::create(&dir.join("estimates.csv"))?)?;
        io::write_csv_file(&dir.join("missing_groups.csv"), &self.missing)?;
        io::write_json_file(
            &dir.join("reports.json"),
            &EvaluationBundle {
                seed,
                reports: self.reports,
                failures: self.failures,
            },
        )
    }
}

/// The spec × variant grid for one method. `pool` (the pre-filter draw) is
/// needed only by variants that change the filters.
pub fn evaluate_method(
    cfg: &PipelineConfig,
    census: &PopulationTable,
    method: &str,
    main: &[LabeledUser],
    pool: Option<&[SimUser]>,
) -> Evaluation {
    let suite = cfg.suite_config();
    let mut out = Evaluation {
        missing: missing_groups(method, main, GeoLevel::State, false, &cfg.missing_group_sizes),
        ..Default::default()
    };
    for &variant in &cfg.variants {
        let fail = |e: Error, spec: Option<ModelSpec>| GridFailure {
            method: method.to_owned(),
            variant,
            spec,
            error: e.to_string(),
        };
        let users = if variant.changes_filters() {
            let drawn = match pool {
                Some(pool) => filter_and_draw(pool, &variant.filter_config(&cfg.filter), &suite, method).and_then(|(_, d)| label(&d, &suite)),
                None => Err(Error::InvalidArgument(format!("variant {variant} needs the pre-filter pool"))),
            };
            match drawn {
                Ok(u) => u,
                Err(e) => {
                    out.failures.push(fail(e, None));
                    continue;
                }
            }
        } else {
            main.to_vec()
        };
        let table = match variant_table(&users, census, variant, cfg.zero_row_policy) {
            Ok(t) => t,
            Err(e) => {
                out.failures.push(fail(e, None));
                continue;
            }
        };
        for (spec, res) in score_specs(&table, &cfg.specs, &cfg.fit, variant, method, cfg.seed) {
            match res {
                Ok(rep) => out.reports.push(rep),
                Err(e) => out.failures.push(fail(e, Some(spec))),
            }
        }
    }
    out
}

/// Per-method metric tables, state counts, pairwise p-values and
/// histograms, written into `dir`.
pub fn write_metrics(cfg: &PipelineConfig, inputs: &[(SampleSet, Vec<LabeledUser>)], dir: &Path) -> Result<()> {
    let as_of = cfg.as_of();
    let labels: Vec<&str> = inputs.iter().map(|(s, _)| s.method.code()).collect();
    let mut tables = Vec::new();
    for (s, users) in inputs {
        let t = summarize(s, users, as_of, false);
        t.write_csv(io::create(&dir.join(format!("{}.csv", s.method.code())))?)?;
        tables.push(t);
    }
    let counts_path = dir.join("state_counts.csv");
    let mut w = io::csv_writer(io::create(&counts_path)?);
    w.write_record(["method", "state", "users"])?;
    for t in &tables {
        for (s, c) in &t.state_counts {
            w.write_record([t.method.clone(), s.code().to_owned(), c.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(&counts_path, e))?;
    let mut pvalue_failures = Vec::new();
    for metric in UserMetric::ALL {
        let cols: Vec<Vec<f64>> = inputs
            .iter()
            .map(|(_, us)| us.iter().map(|u| metric.value(&u.user, as_of)).collect())
            .collect();
        let path = dir.join(format!("pvalues_{}.csv", metric.code()));
        match pairwise_pvalues(&cols, cfg.pooled_t) {
            Ok(mat) => write_pvalue_matrix(&labels, &mat, io::create(&path)?)?,
            Err(e) => {
                // keep the layout, mark every off-diagonal cell unknown
                let k = labels.len();
                let mat: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { f64::NAN }).collect()).collect();
                write_pvalue_matrix(&labels, &mat, io::create(&path)?)?;
                pvalue_failures.push(format!("{}: {e}", metric.code()));
            }
        }
        for (m, col) in labels.iter().zip(&cols) {
            let bins = log_histogram(col, cfg.histogram_bins)?;
            io::write_csv_file(&dir.join(format!("hist_{}_{m}.csv", metric.code())), &bins)?;
        }
    }
    io::write_json_file(
        &dir.join("metrics.json"),
        &serde_json::json!({ "seed": cfg.seed, "tables": tables, "pvalue_failures": pvalue_failures }),
    )
}

/// `mape_grid.csv` and `summary.json` in `dir`.
pub fn write_report(bundle: &EvaluationBundle, dir: &Path) -> Result<()> {
    let rows: Vec<MapeRow> = bundle
        .reports
        .iter()
        .map(|e| MapeRow {
            method: e.method.clone(),
            spec: e.spec,
            variant: e.variant,
            mape: e.mape,
            se: e.se,
            units: e.per_unit.len(),
            skipped: e.skipped.len(),
        })
        .collect();
    io::write_csv_file(&dir.join("mape_grid.csv"), &rows)?;
    io::write_json_file(
        &dir.join("summary.json"),
        &serde_json::json!({ "seed": bundle.seed, "mape": rows, "failures": bundle.failures }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides() {
        let cfg = PipelineConfig::default();
        let c = cfg
            .with_overrides(&["filter.min_tweets=200".into(), "seed=9".into(), "stream.mode=bernoulli".into()])
            .unwrap();
        assert_eq!(c.filter.min_tweets, 200);
        assert_eq!(c.seed, 9);
        assert_eq!(c.stream.mode, crate::samplers::StreamMode::Bernoulli);
        assert!(cfg.with_overrides(&["filter.nope=1".into()]).is_err());
        assert!(cfg.with_overrides(&["seed".into()]).is_err());
        assert!(cfg.with_overrides(&["seed=\"x\"".into()]).is_err());
    }

    #[test]
    fn config_roundtrip_and_validation() {
        let cfg = PipelineConfig::tiny("x");
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        let mut bad = cfg.clone();
        bad.final_n = bad.pool_size + 1;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut bad = cfg.clone();
        bad.census = Some("/nonexistent.csv".into());
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sede": 1}"#).is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(a);
        DirLock::acquire(dir.path()).unwrap();
    }
}
