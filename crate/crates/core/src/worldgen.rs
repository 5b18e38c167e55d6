//! Synthetic platform: users drawn from the census under a known inclusion
//! design, and one collection window of timestamped tweets.

use std::collections::HashSet;

use chrono::{DateTime, Days, NaiveDate, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Exp, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::census::PopulationTable;
use crate::demographics::{cell_from_index, cell_index, AgeBracket, CountryCode, Gender, LangCode, N_CELLS};
use crate::error::{Error, Result};
use crate::geo::{GeoLevel, GeoUnit, Rect, State};
use crate::preprocess::BIO_KEYWORDS;
use crate::rng::{substream, SimRng};
use crate::snowflake::{SnowflakeId, DEFAULT_EPOCH_MS, MAX_MACHINES, MAX_SEQUENCE};

const MS_PER_DAY: u64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Constant,
    AgeEffect,
    GenderEffect,
    LoglinearAgeGender,
    ArbitraryTable,
}

/// Probability that a person in a census cell has an account.
///
/// `π(a, g, s) = base_rate · age_effects[a] · gender_effects[g] · exp(ε_s)`,
/// where the factors not used by `kind` are 1 and `ε_s ~ N(0, per_state_noise_sd)`.
/// `ArbitraryTable` uses `table` (8 cells in age-major order) instead of the
/// base rate and effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InclusionDesign {
    pub kind: DesignKind,
    pub base_rate: f64,
    pub age_effects: [f64; 4],
    pub gender_effects: [f64; 2],
    pub per_state_noise_sd: f64,
    pub table: Option<[f64; N_CELLS]>,
}

impl Default for InclusionDesign {
    fn default() -> Self {
        InclusionDesign {
            kind: DesignKind::LoglinearAgeGender,
            base_rate: 0.25,
            age_effects: [0.6, 1.6, 1.2, 0.5],
            gender_effects: [1.1, 0.9],
            per_state_noise_sd: 0.0,
            table: None,
        }
    }
}

impl InclusionDesign {
    pub fn constant(rate: f64) -> Self {
        InclusionDesign {
            kind: DesignKind::Constant,
            base_rate: rate,
            ..Default::default()
        }
    }

    /// Cell probability before the per-state factor.
    pub fn cell_probability(&self, age: AgeBracket, gender: Gender) -> f64 {
        let a = self.age_effects[age.index()];
        let g = self.gender_effects[gender.index()];
        match self.kind {
            DesignKind::Constant => self.base_rate,
            DesignKind::AgeEffect => self.base_rate * a,
            DesignKind::GenderEffect => self.base_rate * g,
            DesignKind::LoglinearAgeGender => self.base_rate * a * g,
            DesignKind::ArbitraryTable => self.table.map_or(f64::NAN, |t| t[cell_index(age, gender)]),
        }
    }

    fn state_factor(&self, state: State, seed: u64) -> f64 {
        if self.per_state_noise_sd <= 0.0 {
            return 1.0;
        }
        let mut rng = substream(seed, "state-noise", state.index() as u64);
        let z: f64 = Normal::new(0.0, self.per_state_noise_sd).expect("finite sd").sample(&mut rng);
        z.exp()
    }

    /// π for every (state, cell), rejecting values outside (0, 1].
    pub fn probabilities(&self, seed: u64) -> Result<Vec<[f64; N_CELLS]>> {
        if self.kind == DesignKind::ArbitraryTable && self.table.is_none() {
            return Err(Error::Design("arbitrary_table design needs a table".into()));
        }
        if !self.per_state_noise_sd.is_finite() || self.per_state_noise_sd < 0.0 {
            return Err(Error::Design(format!("per_state_noise_sd {} must be >= 0", self.per_state_noise_sd)));
        }
        let mut out = Vec::with_capacity(State::COUNT);
        for s in State::all() {
            let f = self.state_factor(s, seed);
            let mut row = [0.0; N_CELLS];
            for (i, p) in row.iter_mut().enumerate() {
                let (a, g) = cell_from_index(i);
                *p = self.cell_probability(a, g) * f;
                if !(p.is_finite() && *p > 0.0 && *p <= 1.0) {
                    return Err(Error::Design(format!("π({s}, {a}, {g}) = {p} is outside (0, 1]")));
                }
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// Shape parameters for user attributes. Every value is a free parameter
/// chosen to give heavy-tailed distributions; flag rates follow the
/// removal fractions of the reference filter table where one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorConfig {
    pub activity_median: f64,
    pub activity_sigma: f64,
    pub bot_activity_multiplier: f64,
    pub followers_median: f64,
    pub followers_sigma: f64,
    pub friends_median: f64,
    pub friends_sigma: f64,
    /// Correlation between log activity and log followers/friends.
    pub social_activity_corr: f64,
    pub verified_followers_multiplier: f64,
    pub lifetime_noise_sigma: f64,
    pub engagement_median: f64,
    pub engagement_sigma: f64,
    pub likes_cap: u32,
    pub created_mix: CreatedMix,
    pub verified_rate: f64,
    pub protected_rate: f64,
    pub suspended_rate: f64,
    pub bot_rate: f64,
    pub org_rate: f64,
    pub bio_keyword_rate: f64,
    pub org_bio_keyword_rate: f64,
    pub bot_score_beta: (f64, f64),
    pub human_score_beta: (f64, f64),
    /// (language, share) for primary languages; shares are normalised.
    pub languages: Vec<(LangCode, f64)>,
    pub code_switch_rate: f64,
    pub place_tag_beta: (f64, f64),
    pub coordinates_beta: (f64, f64),
    /// Users outside the country, as a fraction of domestic users.
    pub foreign_fraction: f64,
    pub epoch_ms: u64,
}

/// Mixture weights for account creation dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreatedMix {
    pub peak_2009: f64,
    pub rise_2011: f64,
    pub uniform: f64,
    pub recent: f64,
    pub recent_mean_days: f64,
}

impl Default for CreatedMix {
    fn default() -> Self {
        CreatedMix {
            peak_2009: 0.30,
            rise_2011: 0.25,
            uniform: 0.40,
            recent: 0.05,
            recent_mean_days: 365.0,
        }
    }
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig {
            activity_median: 0.5,
            activity_sigma: 1.4,
            bot_activity_multiplier: 3.0,
            followers_median: 200.0,
            followers_sigma: 1.6,
            friends_median: 250.0,
            friends_sigma: 1.3,
            social_activity_corr: 0.4,
            verified_followers_multiplier: 20.0,
            lifetime_noise_sigma: 0.6,
            engagement_median: 0.02,
            engagement_sigma: 1.2,
            likes_cap: 10_000,
            created_mix: CreatedMix::default(),
            verified_rate: 0.026,
            protected_rate: 0.02,
            suspended_rate: 0.01,
            bot_rate: 0.05,
            org_rate: 0.02,
            bio_keyword_rate: 0.026,
            org_bio_keyword_rate: 0.5,
            bot_score_beta: (8.0, 3.0),
            human_score_beta: (2.0, 8.0),
            languages: vec![
                (LangCode::EN, 0.85),
                (LangCode::ES, 0.09),
                (LangCode::from_bytes(*b"pt"), 0.02),
                (LangCode::from_bytes(*b"fr"), 0.01),
                (LangCode::from_bytes(*b"ja"), 0.01),
                (LangCode::from_bytes(*b"ar"), 0.01),
                (LangCode::from_bytes(*b"tl"), 0.01),
            ],
            code_switch_rate: 0.1,
            place_tag_beta: (2.0, 3.0),
            coordinates_beta: (1.5, 3.5),
            foreign_fraction: 0.01,
            epoch_ms: DEFAULT_EPOCH_MS,
        }
    }
}

/// Collection window in Unix milliseconds, `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start_ms: u64,
    pub end_ms: u64,
}

impl Window {
    pub fn from_dates(start: NaiveDate, end: NaiveDate) -> Window {
        let ms = |d: NaiveDate| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp_millis() as u64;
        Window {
            start_ms: ms(start),
            end_ms: ms(end),
        }
    }

    pub fn days(&self) -> f64 {
        self.end_ms.saturating_sub(self.start_ms) as f64 / MS_PER_DAY as f64
    }

    pub fn start_date(&self) -> NaiveDate {
        ms_to_date(self.start_ms)
    }
}

impl Default for Window {
    fn default() -> Self {
        Window::from_dates(
            NaiveDate::from_ymd_opt(2022, 9, 7).unwrap(),
            NaiveDate::from_ymd_opt(2022, 10, 8).unwrap(),
        )
    }
}

pub fn ms_to_date(ms: u64) -> NaiveDate {
    Utc.timestamp_millis_opt(ms as i64).single().map(|d: DateTime<Utc>| d.date_naive()).expect("valid timestamp")
}

pub fn date_to_ms(d: NaiveDate) -> u64 {
    d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp_millis() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimUser {
    pub user_id: u64,
    pub true_age: AgeBracket,
    pub true_gender: Gender,
    /// `None` for users outside the country.
    pub true_state: Option<State>,
    pub country: CountryCode,
    pub activity_rate: f64,
    pub created_at: NaiveDate,
    pub followers: u64,
    pub friends: u64,
    pub lifetime_tweets: u64,
    pub is_bot: bool,
    pub is_org: bool,
    pub is_verified: bool,
    pub is_protected: bool,
    pub is_suspended: bool,
    pub bot_score: f64,
    pub engagement_rate: f64,
    pub bio: String,
    pub primary_language: LangCode,
    pub p_place_tag: f64,
    pub p_coordinates: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweetEvent {
    pub tweet_id: u64,
    pub author: u64,
    pub timestamp: u64,
    pub lang: LangCode,
    pub place_country: Option<CountryCode>,
    pub coordinates: Option<(f64, f64)>,
    /// Likes when collected by a search query (up to a week after posting).
    pub likes_at_collection: u32,
    /// Likes when captured in real time by the stream.
    pub likes_at_stream: u32,
}

const FRIEND_CAP: u64 = 5000;

/// Area over which users outside the country are placed.
const FOREIGN_AREAS: [(CountryCode, f64, Rect); 2] = [
    (CountryCode::CA, 0.7, Rect::new(49.0, -123.3, 50.5, -67.0)),
    (CountryCode::MX, 0.3, Rect::new(28.5, -117.0, 32.5, -97.5)),
];

const BIO_WORDS: &[&str] = &[
    "coffee", "dog", "mom", "dad", "music", "lover", "runner", "gamer", "fan", "student", "teacher",
    "nurse", "hiking", "travel", "foodie", "books", "art", "faith", "family", "football", "baseball",
    "yoga", "photography", "remember", "newsletter", "botany", "members-only", "sunsets", "tacos",
];

fn sample_bio(rng: &mut SimRng, keyword: bool) -> String {
    let n = rng.random_range(0..6);
    let mut words: Vec<&str> = (0..n).map(|_| BIO_WORDS[rng.random_range(0..BIO_WORDS.len())]).collect();
    if keyword {
        let k = BIO_KEYWORDS[rng.random_range(0..BIO_KEYWORDS.len())];
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, k);
    }
    words.join(" ")
}

fn sample_created(rng: &mut SimRng, mix: &CreatedMix, start: NaiveDate) -> NaiveDate {
    let launch = NaiveDate::from_ymd_opt(2006, 7, 15).unwrap();
    let span = (start - launch).num_days().max(1) as f64;
    let total = mix.peak_2009 + mix.rise_2011 + mix.uniform + mix.recent;
    let u = rng.random::<f64>() * total;
    let offset = |d: NaiveDate| (d - launch).num_days() as f64;
    let days = if u < mix.peak_2009 {
        Normal::new(offset(NaiveDate::from_ymd_opt(2009, 6, 1).unwrap()), 180.0).unwrap().sample(rng)
    } else if u < mix.peak_2009 + mix.rise_2011 {
        Normal::new(offset(NaiveDate::from_ymd_opt(2011, 10, 1).unwrap()), 240.0).unwrap().sample(rng)
    } else if u < mix.peak_2009 + mix.rise_2011 + mix.uniform {
        rng.random::<f64>() * span
    } else {
        span - Exp::new(1.0 / mix.recent_mean_days).unwrap().sample(rng)
    };
    let days = days.clamp(0.0, span - 1.0).floor() as u64;
    launch.checked_add_days(Days::new(days)).expect("date in range")
}

fn pick_language(rng: &mut SimRng, langs: &[(LangCode, f64)]) -> LangCode {
    let total: f64 = langs.iter().map(|l| l.1).sum();
    let mut u = rng.random::<f64>() * total;
    for (l, w) in langs {
        if u < *w {
            return *l;
        }
        u -= w;
    }
    langs.last().map_or(LangCode::EN, |l| l.0)
}

fn uniform_in(rng: &mut SimRng, r: &Rect) -> (f64, f64) {
    (rng.random_range(r.south..r.north), rng.random_range(r.west..r.east))
}

fn draft_user(
    rng: &mut SimRng,
    cfg: &BehaviorConfig,
    age: AgeBracket,
    gender: Gender,
    state: Option<State>,
    country: CountryCode,
    start: NaiveDate,
) -> SimUser {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let is_bot = rng.random_bool(cfg.bot_rate);
    let is_org = rng.random_bool(cfg.org_rate);
    let is_verified = rng.random_bool(cfg.verified_rate);
    let is_protected = rng.random_bool(cfg.protected_rate);
    let is_suspended = rng.random_bool(cfg.suspended_rate);

    let z_act: f64 = std_normal.sample(rng);
    let mut activity_rate = cfg.activity_median * (cfg.activity_sigma * z_act).exp();
    if is_bot {
        activity_rate *= cfg.bot_activity_multiplier;
    }
    let rho = cfg.social_activity_corr.clamp(-1.0, 1.0);
    let social = |median: f64, sigma: f64, rng: &mut SimRng| {
        let z = rho * z_act + (1.0 - rho * rho).sqrt() * std_normal.sample(rng);
        median * (sigma * z).exp()
    };
    let mut followers = social(cfg.followers_median, cfg.followers_sigma, rng);
    if is_verified {
        followers *= cfg.verified_followers_multiplier;
    }
    let followers = followers.round() as u64;
    let mut friends = social(cfg.friends_median, cfg.friends_sigma, rng).round() as u64;
    if followers <= FRIEND_CAP {
        friends = friends.min(FRIEND_CAP);
    }

    let created_at = sample_created(rng, &cfg.created_mix, start);
    let age_days = (start - created_at).num_days().max(1) as f64;
    let noise = LogNormal::new(0.0, cfg.lifetime_noise_sigma.max(1e-12)).unwrap().sample(rng);
    let lifetime_tweets = (activity_rate * age_days * noise).round() as u64;

    let (sa, sb) = if is_bot { cfg.bot_score_beta } else { cfg.human_score_beta };
    let bot_score = Beta::new(sa, sb).expect("valid beta").sample(rng);
    let engagement_rate = cfg.engagement_median * (cfg.engagement_sigma * std_normal.sample(rng)).exp();
    let kw_rate = if is_org { cfg.org_bio_keyword_rate } else { cfg.bio_keyword_rate };
    let has_kw = rng.random_bool(kw_rate.clamp(0.0, 1.0));
    let bio = sample_bio(rng, has_kw);
    let primary_language = pick_language(rng, &cfg.languages);
    let p_place_tag = Beta::new(cfg.place_tag_beta.0, cfg.place_tag_beta.1).expect("valid beta").sample(rng);
    let p_coordinates = Beta::new(cfg.coordinates_beta.0, cfg.coordinates_beta.1).expect("valid beta").sample(rng);

    SimUser {
        user_id: 0,
        true_age: age,
        true_gender: gender,
        true_state: state,
        country,
        activity_rate,
        created_at,
        followers,
        friends,
        lifetime_tweets,
        is_bot,
        is_org,
        is_verified,
        is_protected,
        is_suspended,
        bot_score,
        engagement_rate,
        bio,
        primary_language,
        p_place_tag,
        p_coordinates,
    }
}

/// Assign ids: sequential-looking 32-bit ids for accounts created before the
/// Snowflake epoch, Snowflake ids built from the creation time afterwards.
fn assign_ids(users: &mut [SimUser], seed: u64, epoch_ms: u64) -> Result<()> {
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by_key(|&i| (users[i].created_at, i));
    let n_old = order.iter().filter(|&&i| date_to_ms(users[i].created_at) < epoch_ms).count();
    let mut rng = substream(seed, "user-ids", 0);
    let max_gap = ((u32::MAX as u64 - 1_000) / (n_old as u64 + 1)).clamp(1, 1 << 20);
    let mut next_old = 12u64;
    let mut used = HashSet::with_capacity(users.len());
    for &i in &order {
        let created_ms = date_to_ms(users[i].created_at);
        let id = if created_ms < epoch_ms {
            next_old += rng.random_range(1..=max_gap);
            if next_old > u32::MAX as u64 {
                return Err(Error::IdSpaceExhausted);
            }
            next_old
        } else {
            loop {
                let ts = created_ms - epoch_ms + rng.random_range(0..MS_PER_DAY);
                let id = SnowflakeId::compose(ts, rng.random_range(0..MAX_MACHINES), rng.random_range(0..MAX_SEQUENCE))?;
                if !used.contains(&id.raw()) {
                    break id.raw();
                }
            }
        };
        used.insert(id);
        users[i].user_id = id;
    }
    Ok(())
}

/// Draw the platform's users: each census person joins independently with
/// probability π(a, g, s). Output is sorted by user id.
pub fn build_world(
    census: &PopulationTable,
    design: &InclusionDesign,
    cfg: &BehaviorConfig,
    window: &Window,
    seed: u64,
) -> Result<Vec<SimUser>> {
    if census.level() != GeoLevel::State {
        return Err(Error::InvalidArgument("build_world needs a state-level census".into()));
    }
    let probs = design.probabilities(seed)?;
    let start = window.start_date();
    let mut users = Vec::new();
    for geo in census.geo_units() {
        let GeoUnit::State(state) = geo else { unreachable!("state-level table") };
        let counts = census.counts(geo).expect("listed unit");
        for (i, &count) in counts.iter().enumerate() {
            let (age, gender) = cell_from_index(i);
            let cell = (state.index() * N_CELLS + i) as u64;
            let mut rng = substream(seed, "join", cell);
            let k = Binomial::new(count, probs[state.index()][i]).expect("valid binomial").sample(&mut rng);
            for j in 0..k {
                let mut urng = substream(seed, "user", (cell << 32) | j);
                users.push(draft_user(&mut urng, cfg, age, gender, Some(state), CountryCode::US, start));
            }
        }
    }
    if cfg.foreign_fraction > 0.0 {
        let n_foreign = (users.len() as f64 * cfg.foreign_fraction).round() as u64;
        for j in 0..n_foreign {
            let mut rng = substream(seed, "foreign-user", j);
            let u: f64 = rng.random();
            let country = if u < FOREIGN_AREAS[0].1 { FOREIGN_AREAS[0].0 } else { FOREIGN_AREAS[1].0 };
            let (age, gender) = cell_from_index(rng.random_range(0..N_CELLS));
            users.push(draft_user(&mut rng, cfg, age, gender, None, country, start));
        }
    }
    assign_ids(&mut users, seed, cfg.epoch_ms)?;
    users.sort_by_key(|u| u.user_id);
    Ok(users)
}

fn coordinate_area(user: &SimUser) -> Rect {
    match user.true_state {
        Some(s) => s.rect(),
        None => FOREIGN_AREAS.iter().find(|a| a.0 == user.country).map_or(FOREIGN_AREAS[0].2, |a| a.2),
    }
}

fn alternate_language(lang: LangCode) -> LangCode {
    if lang == LangCode::EN {
        LangCode::ES
    } else {
        LangCode::EN
    }
}

/// Search queries reach back up to this many hours.
pub const SEARCH_LAG_HOURS: f64 = 168.0;
/// The stream delivers within about a minute of posting.
pub const STREAM_LAG_HOURS: f64 = 1.0 / 60.0;

fn likes(rng: &mut SimRng, rate_per_hour: f64, hours: f64, cap: u32) -> u32 {
    let mean = (rate_per_hour * hours).min(cap as f64);
    if mean <= 0.0 {
        return 0;
    }
    (Poisson::new(mean).expect("positive mean").sample(rng) as u32).min(cap)
}

/// Emit each user's tweets for the window and return the stream sorted by
/// timestamp. Tweet ids are Snowflake ids unique across the stream.
pub fn simulate_month(
    world: &[SimUser],
    window: &Window,
    code_switch_rate: f64,
    likes_cap: u32,
    epoch_ms: u64,
    seed: u64,
) -> Result<Vec<TweetEvent>> {
    if window.end_ms < window.start_ms + MS_PER_DAY {
        return Err(Error::InvalidArgument("collection window must be at least one day".into()));
    }
    if window.start_ms < epoch_ms {
        return Err(Error::IdRange("window starts before the id epoch".into()));
    }
    let days = window.days();
    let span = window.end_ms - window.start_ms;
    let mut out = Vec::new();
    for u in world {
        let mut rng = substream(seed, "tweets", u.user_id);
        let mean = u.activity_rate * days;
        if mean <= 0.0 {
            continue;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64;
        let area = coordinate_area(u);
        for _ in 0..n {
            let timestamp = window.start_ms + rng.random_range(0..span);
            let lang = if rng.random_bool(code_switch_rate) {
                alternate_language(u.primary_language)
            } else {
                u.primary_language
            };
            let place_country = rng.random_bool(u.p_place_tag).then_some(u.country);
            let coordinates = rng.random_bool(u.p_coordinates).then(|| uniform_in(&mut rng, &area));
            let lag = rng.random::<f64>() * SEARCH_LAG_HOURS;
            let likes_at_collection = likes(&mut rng, u.engagement_rate, lag, likes_cap);
            let likes_at_stream = likes(&mut rng, u.engagement_rate, STREAM_LAG_HOURS, likes_cap);
            out.push(TweetEvent {
                tweet_id: 0,
                author: u.user_id,
                timestamp,
                lang,
                place_country,
                coordinates,
                likes_at_collection,
                likes_at_stream,
            });
        }
    }
    out.sort_by_key(|t| (t.timestamp, t.author));
    // per-millisecond counter spread over machine ids
    let mut k = 0u64;
    let mut last_ts = u64::MAX;
    for t in out.iter_mut() {
        if t.timestamp != last_ts {
            last_ts = t.timestamp;
            k = 0;
        }
        let (machine, seq) = (k % MAX_MACHINES, k / MAX_MACHINES);
        if seq >= MAX_SEQUENCE {
            return Err(Error::IdRange(format!("more than {} tweets in one millisecond", MAX_MACHINES * MAX_SEQUENCE)));
        }
        t.tweet_id = SnowflakeId::compose(t.timestamp - epoch_ms, machine, seq)?.raw();
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::{builtin_census, DemographicCell};
    use crate::demographics::cells;

    fn window() -> Window {
        Window::default()
    }

    fn tiny_census(count: u64) -> PopulationTable {
        let ca = GeoUnit::State(State::from_code("CA").unwrap());
        let cells = cells().enumerate().map(|(i, (age, gender))| DemographicCell {
            geo: ca,
            age,
            gender,
            count: if i == 0 { count } else { 0 },
        });
        PopulationTable::from_cells(GeoLevel::State, cells, false).unwrap()
    }

    #[test]
    fn certain_inclusion_keeps_everyone() {
        let users = build_world(&tiny_census(10), &InclusionDesign::constant(1.0), &BehaviorConfig::default(), &window(), 1).unwrap();
        let domestic = users.iter().filter(|u| u.true_state.is_some()).count();
        assert_eq!(domestic, 10);
    }

    #[test]
    fn invalid_probability_is_a_design_error() {
        let mut d = InclusionDesign::constant(0.5);
        d.kind = DesignKind::AgeEffect;
        d.age_effects = [3.0, 1.0, 1.0, 1.0];
        assert!(matches!(d.probabilities(0), Err(Error::Design(_))));
        assert!(InclusionDesign::constant(0.0).probabilities(0).is_err());
        let table = InclusionDesign {
            kind: DesignKind::ArbitraryTable,
            ..Default::default()
        };
        assert!(table.probabilities(0).is_err());
    }

    #[test]
    fn loglinear_is_exact_in_log_space() {
        let d = InclusionDesign::default();
        for (a, g) in cells() {
            let lhs = d.cell_probability(a, g).ln();
            let rhs = d.base_rate.ln() + d.age_effects[a.index()].ln() + d.gender_effects[g.index()].ln();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_rate_user_count_within_binomial_bounds() {
        let census = builtin_census().scaled_to(1_000_000).with_include_dc(true);
        let mut cfg = BehaviorConfig::default();
        cfg.foreign_fraction = 0.0;
        let users = build_world(&census, &InclusionDesign::constant(0.1), &cfg, &window(), 5).unwrap();
        let sd = (1e6f64 * 0.1 * 0.9).sqrt();
        assert!((users.len() as f64 - 1e5).abs() < 3.0 * sd, "{}", users.len());
    }

    #[test]
    fn invariants_hold_for_every_user() {
        let census = builtin_census().scaled_to(200_000);
        let users = build_world(&census, &InclusionDesign::default(), &BehaviorConfig::default(), &window(), 8).unwrap();
        let start = window().start_date();
        let mut ids = HashSet::new();
        for u in &users {
            assert!(u.friends <= FRIEND_CAP || u.followers > FRIEND_CAP);
            assert!(u.created_at <= start);
            assert!(u.activity_rate > 0.0);
            assert!(ids.insert(u.user_id));
            if date_to_ms(u.created_at) < DEFAULT_EPOCH_MS {
                assert!(u.user_id <= u32::MAX as u64);
            } else {
                assert!(u.user_id > u32::MAX as u64);
            }
        }
        assert!(users.windows(2).all(|w| w[0].user_id < w[1].user_id));
        assert!(users.iter().any(|u| u.true_state.is_none()));
    }

    #[test]
    fn world_is_deterministic() {
        let census = builtin_census().scaled_to(20_000);
        let cfg = BehaviorConfig::default();
        let a = build_world(&census, &InclusionDesign::default(), &cfg, &window(), 3).unwrap();
        let b = build_world(&census, &InclusionDesign::default(), &cfg, &window(), 3).unwrap();
        assert_eq!(a, b);
        let sa = simulate_month(&a, &window(), 0.1, 1000, DEFAULT_EPOCH_MS, 4).unwrap();
        let sb = simulate_month(&b, &window(), 0.1, 1000, DEFAULT_EPOCH_MS, 4).unwrap();
        assert_eq!(sa, sb);
    }

    fn one_user(rate: f64) -> SimUser {
        let census = tiny_census(1);
        let mut u = build_world(&census, &InclusionDesign::constant(1.0), &BehaviorConfig::default(), &window(), 1)
            .unwrap()
            .remove(0);
        u.activity_rate = rate;
        u
    }

    #[test]
    fn zero_rate_user_is_silent() {
        let s = simulate_month(&[one_user(0.0)], &window(), 0.1, 1000, DEFAULT_EPOCH_MS, 1).unwrap();
        assert!(s.is_empty());
        assert!(simulate_month(&[], &window(), 0.1, 1000, DEFAULT_EPOCH_MS, 1).unwrap().is_empty());
    }

    #[test]
    fn tweet_count_within_poisson_bounds() {
        let w = Window {
            start_ms: window().start_ms,
            end_ms: window().start_ms + 30 * MS_PER_DAY,
        };
        let s = simulate_month(&[one_user(2.0)], &w, 0.1, 1000, DEFAULT_EPOCH_MS, 9).unwrap();
        assert!((s.len() as f64 - 60.0).abs() <= 3.0 * 60f64.sqrt());
    }

    #[test]
    fn stream_fields_respect_user_parameters() {
        let census = builtin_census().scaled_to(20_000);
        let mut users = build_world(&census, &InclusionDesign::default(), &BehaviorConfig::default(), &window(), 2).unwrap();
        for u in users.iter_mut() {
            u.p_coordinates = 0.0;
        }
        let s = simulate_month(&users, &window(), 0.1, 1000, DEFAULT_EPOCH_MS, 2).unwrap();
        assert!(!s.is_empty());
        assert!(s.iter().all(|t| t.coordinates.is_none()));
        assert!(s.windows(2).all(|w| w[0].timestamp <= w[1].timestamp && w[0].tweet_id < w[1].tweet_id));
        let win = window();
        assert!(s.iter().all(|t| t.timestamp >= win.start_ms && t.timestamp < win.end_ms));
        let stream_likes: u64 = s.iter().map(|t| t.likes_at_stream as u64).sum();
        let search_likes: u64 = s.iter().map(|t| t.likes_at_collection as u64).sum();
        assert!(stream_likes * 100 < search_likes);
        for t in &s {
            assert_eq!(SnowflakeId(t.tweet_id).unix_ms(DEFAULT_EPOCH_MS), t.timestamp);
        }
    }

    #[test]
    fn coordinates_fall_in_author_area() {
        let census = builtin_census().scaled_to(20_000);
        let users = build_world(&census, &InclusionDesign::default(), &BehaviorConfig::default(), &window(), 6).unwrap();
        let s = simulate_month(&users, &window(), 0.1, 1000, DEFAULT_EPOCH_MS, 6).unwrap();
        let by_id: std::collections::HashMap<u64, &SimUser> = users.iter().map(|u| (u.user_id, u)).collect();
        for t in &s {
            if let Some((lat, lon)) = t.coordinates {
                assert!(coordinate_area(by_id[&t.author]).contains(lat, lon));
            }
        }
    }
}
