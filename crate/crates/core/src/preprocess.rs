//! Account filter cascade with per-filter removal accounting.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Months, NaiveDate};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::demographics::{CountryCode, LangCode};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::worldgen::SimUser;

/// Bio terms that mark public figures, media and organisations.
pub const BIO_KEYWORDS: &[&str] = &[
    "journalist",
    "anchor",
    "newspaper",
    "representative",
    "congressman",
    "congresswoman",
    "senator",
    "secretary",
    "mayor",
    "organization",
    "company",
    "institute",
    "charity",
    "magazine",
    "singer",
    "bot",
    "member",
    "advisory",
    "advisor",
    "startup",
    "venture",
    "news",
    "actor",
    "actress",
    "official page",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Verified,
    Activity,
    Tenure,
    Bio,
    Language,
    Country,
    Protected,
    Suspended,
    Bot,
    Org,
}

impl FilterKind {
    pub const ALL: [FilterKind; 10] = [
        FilterKind::Verified,
        FilterKind::Activity,
        FilterKind::Tenure,
        FilterKind::Bio,
        FilterKind::Language,
        FilterKind::Country,
        FilterKind::Protected,
        FilterKind::Suspended,
        FilterKind::Bot,
        FilterKind::Org,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FilterKind::Verified => "verified",
            FilterKind::Activity => "activity",
            FilterKind::Tenure => "tenure",
            FilterKind::Bio => "bio",
            FilterKind::Language => "language",
            FilterKind::Country => "country",
            FilterKind::Protected => "protected",
            FilterKind::Suspended => "suspended",
            FilterKind::Bot => "bot",
            FilterKind::Org => "org",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.code() == s)
            .ok_or_else(|| Error::Config(format!("unknown filter {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BioMatch {
    #[default]
    WholeWord,
    Substring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Users with fewer lifetime tweets are removed.
    pub min_tweets: u64,
    /// Accounts younger than this many calendar months are removed.
    pub min_tenure_months: u32,
    pub bio_keywords: Vec<String>,
    pub bio_match: BioMatch,
    /// Users whose bot score is at or above this are removed.
    pub bot_score_threshold: f64,
    pub require_language: Option<LangCode>,
    pub require_country: Option<CountryCode>,
    /// Application order; each user is charged to the first filter that fails.
    pub order: Vec<FilterKind>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_tweets: 100,
            min_tenure_months: 9,
            bio_keywords: BIO_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            bio_match: BioMatch::WholeWord,
            bot_score_threshold: 0.5,
            require_language: Some(LangCode::EN),
            require_country: Some(CountryCode::US),
            order: FilterKind::ALL.to_vec(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.bot_score_threshold.is_finite() {
            return Err(Error::Config("bot_score_threshold must be finite".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !self.order.iter().all(|k| seen.insert(*k)) {
            return Err(Error::Config("filter order lists a filter twice".into()));
        }
        Ok(())
    }

    fn keyword_tokens(&self) -> Vec<Vec<String>> {
        self.bio_keywords.iter().map(|k| tokenize(k)).filter(|t| !t.is_empty()).collect()
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

struct BioMatcher {
    mode: BioMatch,
    tokens: Vec<Vec<String>>,
    lowered: Vec<String>,
}

impl BioMatcher {
    fn new(cfg: &FilterConfig) -> Self {
        BioMatcher {
            mode: cfg.bio_match,
            tokens: cfg.keyword_tokens(),
            lowered: cfg.bio_keywords.iter().map(|k| k.to_lowercase()).collect(),
        }
    }

    fn matches(&self, bio: &str) -> bool {
        match self.mode {
            BioMatch::Substring => {
                let b = bio.to_lowercase();
                self.lowered.iter().any(|k| !k.is_empty() && b.contains(k.as_str()))
            }
            BioMatch::WholeWord => {
                let words = tokenize(bio);
                self.tokens
                    .iter()
                    .any(|kw| words.windows(kw.len()).any(|w| w.iter().zip(kw).all(|(a, b)| a == b)))
            }
        }
    }
}

/// Case-insensitive whole-word match against the default keyword list.
/// Any non-alphanumeric character separates words.
pub fn bio_keyword_match(bio: &str) -> bool {
    BioMatcher::new(&FilterConfig::default()).matches(bio)
}

pub fn bio_keyword_match_with(bio: &str, cfg: &FilterConfig) -> bool {
    BioMatcher::new(cfg).matches(bio)
}

/// Removal counts in application order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub method: String,
    pub input_size: usize,
    pub output_size: usize,
    pub removed: Vec<(FilterKind, usize)>,
}

impl RemovalReport {
    pub fn removed_by(&self, kind: FilterKind) -> usize {
        self.removed.iter().find(|(k, _)| *k == kind).map_or(0, |r| r.1)
    }

    pub fn total_removed(&self) -> usize {
        self.removed.iter().map(|r| r.1).sum()
    }

    pub fn is_conserved(&self) -> bool {
        self.output_size + self.total_removed() == self.input_size
    }
}

fn fails(kind: FilterKind, u: &SimUser, cfg: &FilterConfig, bio: &BioMatcher, as_of: NaiveDate) -> bool {
    match kind {
        FilterKind::Verified => u.is_verified,
        FilterKind::Activity => u.lifetime_tweets < cfg.min_tweets,
        FilterKind::Tenure => u
            .created_at
            .checked_add_months(Months::new(cfg.min_tenure_months))
            .is_none_or(|d| d > as_of),
        FilterKind::Bio => bio.matches(&u.bio),
        FilterKind::Language => cfg.require_language.is_some_and(|l| u.primary_language != l),
        FilterKind::Country => cfg.require_country.is_some_and(|c| u.country != c),
        FilterKind::Protected => u.is_protected,
        FilterKind::Suspended => u.is_suspended,
        FilterKind::Bot => u.bot_score >= cfg.bot_score_threshold,
        FilterKind::Org => u.is_org,
    }
}

/// Run the cascade at reference date `as_of` (the start of collection).
/// Filters not listed in `cfg.order` are skipped.
pub fn apply_filters(
    users: &[SimUser],
    cfg: &FilterConfig,
    as_of: NaiveDate,
    method: &str,
) -> (Vec<SimUser>, RemovalReport) {
    let bio = BioMatcher::new(cfg);
    let mut removed = vec![0usize; cfg.order.len()];
    let mut kept = Vec::new();
    for u in users {
        match cfg.order.iter().position(|k| fails(*k, u, cfg, &bio, as_of)) {
            Some(i) => removed[i] += 1,
            None => kept.push(u.clone()),
        }
    }
    let report = RemovalReport {
        method: method.to_owned(),
        input_size: users.len(),
        output_size: kept.len(),
        removed: cfg.order.iter().copied().zip(removed).collect(),
    };
    (kept, report)
}

/// Uniform sample of `n` items without replacement, in draw order.
pub fn subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > items.len() {
        return Err(Error::InsufficientUsers {
            requested: n,
            available: items.len(),
        });
    }
    let mut rng = substream(seed, "subsample", 0);
    Ok(index::sample(&mut rng, items.len(), n).into_iter().map(|i| items[i].clone()).collect())
}

/// Write reports side by side: one row per filter, one column per method,
/// followed by input and retained totals.
pub fn write_removal_table<W: Write>(reports: &[RemovalReport], w: W) -> Result<()> {
    let mut w = crate::io::csv_writer(w);
    let mut header = vec!["filter".to_owned()];
    header.extend(reports.iter().map(|r| r.method.clone()));
    w.write_record(&header)?;
    let mut kinds: Vec<FilterKind> = Vec::new();
    for r in reports {
        for (k, _) in &r.removed {
            if !kinds.contains(k) {
                kinds.push(*k);
            }
        }
    }
    for k in kinds {
        let mut row = vec![k.code().to_owned()];
        row.extend(reports.iter().map(|r| r.removed_by(k).to_string()));
        w.write_record(&row)?;
    }
    let mut row = vec!["input".to_owned()];
    row.extend(reports.iter().map(|r| r.input_size.to_string()));
    w.write_record(&row)?;
    let mut row = vec!["retained".to_owned()];
    row.extend(reports.iter().map(|r| r.output_size.to_string()));
    w.write_record(&row)?;
    w.flush().map_err(|e| Error::io("<removal writer>", e))?;
    Ok(())
}
