//! Scoring population estimates against the census.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::census::PopulationTable;
use crate::debias::{build_design, fit_model_excluding, predict_population, FitOptions, ModelSpec, RegressionTable, ZeroRowPolicy};
use crate::demographics::{cell_index, N_CELLS};
use crate::error::{Error, Result};
use crate::geo::{GeoLevel, GeoUnit, State};
use crate::inference::{infer, ConfusionSpec, LabeledUser};
use crate::preprocess::{apply_filters, subsample, FilterConfig, RemovalReport};
use crate::stats::{mean, std_dev};
use crate::worldgen::SimUser;

/// Mean absolute percentage error over `(geo, actual, predicted)` triples.
pub fn mape_named(units: &[(String, f64, f64)]) -> Result<f64> {
    if units.is_empty() {
        return Err(Error::EmptyInput("mape needs at least one unit".into()));
    }
    let mut total = 0.0;
    for (geo, actual, predicted) in units {
        if *actual == 0.0 {
            return Err(Error::ZeroActual(geo.clone()));
        }
        total += ((predicted - actual) / actual).abs();
    }
    Ok(100.0 * total / units.len() as f64)
}

pub fn mape(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.len() != actuals.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    let units: Vec<(String, f64, f64)> = actuals
        .iter()
        .zip(predictions)
        .enumerate()
        .map(|(i, (a, p))| (format!("#{i}"), *a, *p))
        .collect();
    mape_named(&units)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Main,
    IncludeDc,
    DropMissingStates,
    DivisionLevel,
    MinTweets200,
    Tenure12mo,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Main,
        Variant::IncludeDc,
        Variant::DropMissingStates,
        Variant::DivisionLevel,
        Variant::MinTweets200,
        Variant::Tenure12mo,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Variant::Main => "main",
            Variant::IncludeDc => "include_dc",
            Variant::DropMissingStates => "drop_missing_states",
            Variant::DivisionLevel => "division_level",
            Variant::MinTweets200 => "min_tweets_200",
            Variant::Tenure12mo => "tenure_12mo",
        }
    }

    pub fn filter_config(self, base: &FilterConfig) -> FilterConfig {
        let mut cfg = base.clone();
        match self {
            Variant::MinTweets200 => cfg.min_tweets = 200,
            Variant::Tenure12mo => cfg.min_tenure_months = 12,
            _ => {}
        }
        cfg
    }

    /// True when the variant changes which users survive filtering.
    pub fn changes_filters(self) -> bool {
        matches!(self, Variant::MinTweets200 | Variant::Tenure12mo)
    }

    pub fn level(self) -> GeoLevel {
        if self == Variant::DivisionLevel {
            GeoLevel::Division
        } else {
            GeoLevel::State
        }
    }

    pub fn policy(self, base: ZeroRowPolicy) -> ZeroRowPolicy {
        if self == Variant::DropMissingStates {
            ZeroRowPolicy::DropStates
        } else {
            base
        }
    }

    pub fn include_dc(self) -> bool {
        self == Variant::IncludeDc
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.code() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEstimate {
    pub geo: GeoUnit,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "Nhat")]
    pub n_hat: f64,
    /// Percent.
    #[serde(rename = "APE")]
    pub ape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUnit {
    pub geo: GeoUnit,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub spec: ModelSpec,
    pub variant: Variant,
    pub level: GeoLevel,
    pub seed: u64,
    pub per_unit: Vec<UnitEstimate>,
    pub skipped: Vec<SkippedUnit>,
    /// Percent.
    pub mape: f64,
    /// Standard error of the per-unit APEs; absent with fewer than two units.
    pub se: Option<f64>,
    pub fits: usize,
    pub candidate_rows: usize,
    pub dropped_rows: usize,
}

/// Leave one unit out: fit on the others, predict the held-out unit's total.
pub fn loso_cv(table: &RegressionTable, spec: ModelSpec, opts: &FitOptions) -> Result<EstimateReport> {
    if table.units.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 3 units, have {}",
            table.units.len()
        )));
    }
    let mut per_unit = Vec::new();
    let mut skipped = Vec::new();
    let mut fits = 0;
    for &geo in &table.units {
        let model = fit_model_excluding(table, spec, opts, Some(geo))?;
        fits += 1;
        let rows = table.unit_rows(geo);
        let n = table.unit_population(geo) as f64;
        match predict_population(&model, rows) {
            Ok(n_hat) if n > 0.0 => per_unit.push(UnitEstimate {
                geo,
                n,
                n_hat,
                ape: 100.0 * ((n_hat - n) / n).abs(),
            }),
            Ok(_) => skipped.push(SkippedUnit {
                geo,
                reason: Error::ZeroActual(geo.to_string()).to_string(),
            }),
            Err(e @ Error::UnpredictableUnit(_)) => skipped.push(SkippedUnit { geo, reason: e.to_string() }),
            Err(e) => return Err(e),
        }
    }
    if per_unit.is_empty() {
        return Err(Error::DegenerateSample("every held-out unit was skipped".into()));
    }
    let apes: Vec<f64> = per_unit.iter().map(|u| u.ape).collect();
    let se = (apes.len() >= 2).then(|| std_dev(&apes) / (apes.len() as f64).sqrt());
    Ok(EstimateReport {
        method: String::new(),
        spec,
        variant: Variant::Main,
        level: table.level,
        seed: 0,
        mape: mean(&apes),
        se,
        per_unit,
        skipped,
        fits,
        candidate_rows: table.candidate_rows(),
        dropped_rows: table.dropped.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
struct FlatRow<'a> {
    method: &'a str,
    spec: ModelSpec,
    variant: Variant,
    geo: GeoUnit,
    #[serde(rename = "N")]
    n: f64,
    #[serde(rename = "Nhat")]
    n_hat: f64,
    #[serde(rename = "APE")]
    ape: f64,
}

pub fn write_reports_csv<W: Write>(reports: &[EstimateReport], w: W) -> Result<()> {
    let mut w = crate::io::csv_writer(w);
    for r in reports {
        for u in &r.per_unit {
            w.serialize(FlatRow {
                method: &r.method,
                spec: r.spec,
                variant: r.variant,
                geo: u.geo,
                n: u.n,
                n_hat: u.n_hat,
                ape: u.ape,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Everything a variant run needs besides the pre-filter user pool.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub filter: FilterConfig,
    pub confusion: ConfusionSpec,
    pub specs: Vec<ModelSpec>,
    pub variants: Vec<Variant>,
    pub fit: FitOptions,
    pub policy: ZeroRowPolicy,
    /// Size of the post-filter draw.
    pub final_n: usize,
    pub as_of: NaiveDate,
    pub seed: u64,
}

/// Filter a method's pool and draw the analysis sample.
pub fn filter_and_draw(
    pool: &[SimUser],
    filter: &FilterConfig,
    cfg: &SuiteConfig,
    method: &str,
) -> Result<(RemovalReport, Vec<SimUser>)> {
    let (kept, report) = apply_filters(pool, filter, cfg.as_of, method);
    let drawn = subsample(&kept, cfg.final_n, crate::rng::derive_seed(cfg.seed, method, 0))?;
    Ok((report, drawn))
}

pub fn label(users: &[SimUser], cfg: &SuiteConfig) -> Result<Vec<LabeledUser>> {
    infer(users, &cfg.confusion, crate::rng::derive_seed(cfg.seed, "infer", 0))
}

/// [`filter_and_draw`] followed by [`label`].
pub fn prepare_users(
    pool: &[SimUser],
    filter: &FilterConfig,
    cfg: &SuiteConfig,
    method: &str,
) -> Result<(RemovalReport, Vec<LabeledUser>)> {
    let (report, drawn) = filter_and_draw(pool, filter, cfg, method)?;
    Ok((report, label(&drawn, cfg)?))
}

/// LOSO for each spec on one design table, tagged with run metadata.
pub fn score_specs(
    table: &RegressionTable,
    specs: &[ModelSpec],
    fit: &FitOptions,
    variant: Variant,
    method: &str,
    seed: u64,
) -> Vec<(ModelSpec, Result<EstimateReport>)> {
    specs
        .iter()
        .map(|&spec| {
            let r = loso_cv(table, spec, fit).map(|mut r| {
                r.method = method.to_owned();
                r.variant = variant;
                r.seed = seed;
                r
            });
            (spec, r)
        })
        .collect()
}

/// Design table for a variant.
pub fn variant_table(users: &[LabeledUser], census: &PopulationTable, variant: Variant, policy: ZeroRowPolicy) -> Result<RegressionTable> {
    let census = census.clone().with_include_dc(variant.include_dc() || census.include_dc());
    build_design(users, &census, variant.level(), variant.policy(policy))
}

/// Score every requested spec for one variant on already labelled users.
pub fn evaluate_variant(
    users: &[LabeledUser],
    census: &PopulationTable,
    variant: Variant,
    cfg: &SuiteConfig,
    method: &str,
) -> Result<Vec<EstimateReport>> {
    let table = variant_table(users, census, variant, cfg.policy)?;
    score_specs(&table, &cfg.specs, &cfg.fit, variant, method, cfg.seed)
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}

/// Run each configured variant for each method's pre-filter pool. Variants
/// that leave the filters alone reuse the main sample.
pub fn robustness_suite(pools: &[(String, Vec<SimUser>)], census: &PopulationTable, cfg: &SuiteConfig) -> Result<Vec<EstimateReport>> {
    let mut out = Vec::new();
    for (method, pool) in pools {
        let mut main: Option<Vec<LabeledUser>> = None;
        for &variant in &cfg.variants {
            let wrap = |e: Error| Error::Variant {
                variant: format!("{variant} ({method})"),
                source: Box::new(e),
            };
            let users = if variant.changes_filters() {
                prepare_users(pool, &variant.filter_config(&cfg.filter), cfg, method).map_err(wrap)?.1
            } else {
                if main.is_none() {
                    main = Some(prepare_users(pool, &cfg.filter, cfg, method).map_err(wrap)?.1);
                }
                main.clone().expect("just set")
            };
            out.extend(evaluate_variant(&users, census, variant, cfg, method).map_err(wrap)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingGroups {
    pub method: String,
    pub size: usize,
    pub missing: usize,
}

/// Number of units lacking at least one (age, gender) cell, for each prefix
/// size of `users` (prefixes of a random draw are nested random draws).
pub fn missing_groups(method: &str, users: &[LabeledUser], level: GeoLevel, include_dc: bool, sizes: &[usize]) -> Vec<MissingGroups> {
    let mut units: Vec<GeoUnit> = State::analysis_set(include_dc).filter_map(|s| GeoUnit::State(s).at_level(level)).collect();
    units.sort();
    units.dedup();
    sizes
        .iter()
        .map(|&size| {
            let mut seen = vec![[false; N_CELLS]; units.len()];
            for u in users.iter().take(size).filter(|u| !u.obs_org) {
                let Some(geo) = u.obs_state.and_then(|s| GeoUnit::State(s).at_level(level)) else { continue };
                if let Ok(i) = units.binary_search(&geo) {
                    seen[i][cell_index(u.obs_age, u.obs_gender)] = true;
                }
            }
            MissingGroups {
                method: method.to_owned(),
                size,
                missing: seen.iter().filter(|c| c.iter().any(|s| !s)).count(),
            }
        })
        .collect()
}
