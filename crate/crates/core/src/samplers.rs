//! The four tweet-collection mechanisms and user draws from their output.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::demographics::{CountryCode, LangCode};
use crate::error::{Error, Result};
use crate::rng::{hash_unit, substream};
use crate::tiler::TileSet;
use crate::worldgen::{TweetEvent, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "stream1pct")]
    Stream1pct,
    #[serde(rename = "loc")]
    Loc,
    #[serde(rename = "lang")]
    Lang,
    #[serde(rename = "bb")]
    Bb,
    #[serde(rename = "random_id")]
    RandomId,
}

impl Method {
    /// The four tweet-based methods, in report order.
    pub const TWEET_METHODS: [Method; 4] = [Method::Bb, Method::Loc, Method::Lang, Method::Stream1pct];

    pub fn code(self) -> &'static str {
        match self {
            Method::Stream1pct => "stream1pct",
            Method::Loc => "loc",
            Method::Lang => "lang",
            Method::Bb => "bb",
            Method::RandomId => "random_id",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Method::Stream1pct, Method::Loc, Method::Lang, Method::Bb, Method::RandomId]
            .into_iter()
            .find(|m| m.code() == s)
            .ok_or_else(|| Error::Config(format!("unknown sampling method {s:?}")))
    }
}

/// One captured tweet: the fields later stages need.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledTweet {
    pub tweet_id: u64,
    pub author: u64,
    pub lang: LangCode,
    pub likes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub method: Method,
    /// Sorted by tweet id, no duplicates.
    pub tweets: Vec<SampledTweet>,
    /// Distinct authors, sorted.
    pub authors: Vec<u64>,
    pub collection_window: Window,
}

/// Counts written next to the tweet list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub method: Method,
    pub tweets: usize,
    pub authors: usize,
    pub collection_window: Window,
}

impl SampleSet {
    fn build(method: Method, window: Window, mut tweets: Vec<SampledTweet>) -> SampleSet {
        tweets.sort_by_key(|t| t.tweet_id);
        tweets.dedup_by_key(|t| t.tweet_id);
        let authors: BTreeSet<u64> = tweets.iter().map(|t| t.author).collect();
        SampleSet {
            method,
            tweets,
            authors: authors.into_iter().collect(),
            collection_window: window,
        }
    }

    pub fn tweet_ids(&self) -> Vec<u64> {
        self.tweets.iter().map(|t| t.tweet_id).collect()
    }

    pub fn summary(&self) -> SampleSummary {
        SampleSummary {
            method: self.method,
            tweets: self.tweets.len(),
            authors: self.authors.len(),
            collection_window: self.collection_window,
        }
    }

    /// Rebuild from persisted tweets.
    pub fn from_tweets(method: Method, window: Window, tweets: Vec<SampledTweet>) -> SampleSet {
        SampleSet::build(method, window, tweets)
    }
}

fn searched(t: &TweetEvent) -> SampledTweet {
    SampledTweet {
        tweet_id: t.tweet_id,
        author: t.author,
        lang: t.lang,
        likes: t.likes_at_collection,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    #[default]
    MsWindow,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamParams {
    pub mode: StreamMode,
    pub rate: f64,
    /// Inclusive millisecond-of-second range kept in window mode.
    pub window_ms: (u64, u64),
    /// Keep only tweets whose place tag matches; `None` keeps all.
    pub country: Option<CountryCode>,
    /// Seed for the Bernoulli coin.
    pub seed: u64,
}

impl Default for StreamParams {
    fn default() -> Self {
        StreamParams {
            mode: StreamMode::MsWindow,
            rate: 0.01,
            window_ms: (657, 666),
            country: Some(CountryCode::US),
            seed: 0,
        }
    }
}

impl StreamParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config(format!("stream rate {} must be in (0, 1]", self.rate)));
        }
        if self.mode == StreamMode::MsWindow {
            let (lo, hi) = self.window_ms;
            if hi < lo || hi > 999 {
                return Err(Error::Config(format!("millisecond window [{lo}, {hi}] is not inside [0, 999]")));
            }
            let width = (hi - lo + 1) as f64 / 1000.0;
            if (width - self.rate).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "millisecond window [{lo}, {hi}] keeps {width} of tweets but rate is {}",
                    self.rate
                )));
            }
        }
        Ok(())
    }

    fn keeps(&self, t: &TweetEvent) -> bool {
        match self.mode {
            StreamMode::MsWindow => {
                let ms = t.timestamp % 1000;
                ms >= self.window_ms.0 && ms <= self.window_ms.1
            }
            StreamMode::Bernoulli => hash_unit(self.seed, "stream-coin", t.tweet_id) < self.rate,
        }
    }
}

/// Real-time sample: keep a fixed share of all tweets, then keep those
/// tagged with the target country. Likes are those visible at delivery.
pub fn sample_stream(stream: &[TweetEvent], params: &StreamParams, window: Window) -> Result<SampleSet> {
    params.validate()?;
    let tweets = stream
        .iter()
        .filter(|t| params.keeps(t))
        .filter(|t| params.country.is_none_or(|c| t.place_country == Some(c)))
        .map(|t| SampledTweet {
            tweet_id: t.tweet_id,
            author: t.author,
            lang: t.lang,
            likes: t.likes_at_stream,
        })
        .collect();
    Ok(SampleSet::build(Method::Stream1pct, window, tweets))
}

/// Every tweet whose place tag is `country`.
pub fn sample_location_query(stream: &[TweetEvent], country: CountryCode, window: Window) -> SampleSet {
    let tweets = stream.iter().filter(|t| t.place_country == Some(country)).map(searched).collect();
    SampleSet::build(Method::Loc, window, tweets)
}

/// Every tweet whose place tag is `country` and language is `language`.
pub fn sample_language_query(
    stream: &[TweetEvent],
    country: CountryCode,
    language: LangCode,
    window: Window,
) -> SampleSet {
    let tweets = stream
        .iter()
        .filter(|t| t.place_country == Some(country) && t.lang == language)
        .map(searched)
        .collect();
    SampleSet::build(Method::Lang, window, tweets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BbParams {
    /// Also accept tweets without coordinates whose place tag matches.
    pub place_fallback: bool,
    pub country: CountryCode,
}

impl Default for BbParams {
    fn default() -> Self {
        BbParams {
            place_fallback: false,
            country: CountryCode::US,
        }
    }
}

/// Every tweet whose coordinates fall in at least one box.
pub fn sample_bounding_box(stream: &[TweetEvent], tiles: &TileSet, params: &BbParams, window: Window) -> Result<SampleSet> {
    if tiles.is_empty() {
        return Err(Error::InvalidArgument("bounding-box sampler needs at least one box".into()));
    }
    let tweets = stream
        .iter()
        .filter(|t| match t.coordinates {
            Some((lat, lon)) => tiles.covers(lat, lon),
            None => params.place_fallback && t.place_country == Some(params.country),
        })
        .map(searched)
        .collect();
    Ok(SampleSet::build(Method::Bb, window, tweets))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSample {
    pub method: Method,
    pub users: Vec<u64>,
    pub size: usize,
    pub seed: u64,
}

/// Uniform draw of `n` distinct authors (not tweets).
pub fn draw_users(s: &SampleSet, n: usize, seed: u64) -> Result<UserSample> {
    if n > s.authors.len() {
        return Err(Error::InsufficientAuthors {
            requested: n,
            available: s.authors.len(),
        });
    }
    let mut rng = substream(seed, "draw-users", 0);
    let users: Vec<u64> = index::sample(&mut rng, s.authors.len(), n).into_iter().map(|i| s.authors[i]).collect();
    Ok(UserSample {
        method: s.method,
        size: users.len(),
        users,
        seed,
    })
}

/// Probability that an author with `k` tweets appears in a stream that keeps
/// each tweet with probability `rate`.
pub fn analytic_stream_inclusion(k: u64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("rate {rate} must be in (0, 1]")));
    }
    Ok(1.0 - (1.0 - rate).powf(k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polygon::rectangle;
    use crate::tiler::{tile_polygon, BoundingBox, TileOptions};
    use rand::Rng;

    fn window() -> Window {
        Window::default()
    }

    fn tweet(id: u64, author: u64, ts: u64) -> TweetEvent {
        TweetEvent {
            tweet_id: id,
            author,
            timestamp: ts,
            lang: LangCode::EN,
            place_country: Some(CountryCode::US),
            coordinates: None,
            likes_at_collection: 5,
            likes_at_stream: 0,
        }
    }

    fn random_stream(n: usize, seed: u64) -> Vec<TweetEvent> {
        let mut rng = substream(seed, "test-stream", 0);
        let start = window().start_ms;
        (0..n as u64)
            .map(|i| {
                let mut t = tweet(i + 1, rng.random_range(0..500), start + rng.random_range(0..2_000_000_000));
                t.lang = if rng.random_bool(0.5) { LangCode::EN } else { LangCode::ES };
                t.place_country = match rng.random_range(0..4) {
                    0 => None,
                    1 => Some(CountryCode::CA),
                    _ => Some(CountryCode::US),
                };
                if rng.random_bool(0.6) {
                    t.coordinates = Some((rng.random_range(35.0..40.0), rng.random_range(-105.0..-95.0)));
                }
                t
            })
            .collect()
    }

    #[test]
    fn window_mode_on_half_second_stamps_is_empty() {
        let s: Vec<_> = (0..100).map(|i| tweet(i + 1, i, window().start_ms + i * 1000 + 500)).collect();
        let out = sample_stream(&s, &StreamParams::default(), window()).unwrap();
        assert!(out.tweets.is_empty() && out.authors.is_empty());
    }

    #[test]
    fn window_rate_must_match() {
        let p = StreamParams {
            window_ms: (650, 666),
            ..Default::default()
        };
        assert!(matches!(sample_stream(&[], &p, window()), Err(Error::Config(_))));
        let p = StreamParams {
            rate: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = StreamParams {
            mode: StreamMode::Bernoulli,
            rate: 0.05,
            ..Default::default()
        };
        assert!(p.validate().is_ok());
    }

    #[test]
    fn stream_keep_counts_within_binomial_bounds() {
        let n = 1_000_000u64;
        let mut rng = substream(1, "uniform-ms", 0);
        let start = window().start_ms;
        let s: Vec<_> = (0..n).map(|i| tweet(i + 1, i, start + rng.random_range(0..2_600_000_000))).collect();
        let bound = 3.0 * (0.01 * 0.99 * n as f64).sqrt();
        for mode in [StreamMode::MsWindow, StreamMode::Bernoulli] {
            let p = StreamParams {
                mode,
                seed: 4,
                ..Default::default()
            };
            let out = sample_stream(&s, &p, window()).unwrap();
            let kept = out.tweets.len() as f64;
            assert!((kept - 10_000.0).abs() < bound, "{mode:?}: {kept}");
            assert!(kept / n as f64 >= 0.009 && kept / n as f64 <= 0.011);
        }
    }

    #[test]
    fn stream_uses_realtime_likes_and_country_filter() {
        let mut s: Vec<_> = (0..2000).map(|i| tweet(i + 1, i, window().start_ms + i * 1000 + 660)).collect();
        s[0].place_country = Some(CountryCode::CA);
        s[1].place_country = None;
        let out = sample_stream(&s, &StreamParams::default(), window()).unwrap();
        assert_eq!(out.tweets.len(), 1998);
        assert!(out.tweets.iter().all(|t| t.likes == 0));
        let any = StreamParams {
            country: None,
            ..Default::default()
        };
        assert_eq!(sample_stream(&s, &any, window()).unwrap().tweets.len(), 2000);
    }

    #[test]
    fn query_samplers_match_linear_scans() {
        let s = random_stream(20_000, 2);
        let loc = sample_location_query(&s, CountryCode::US, window());
        let brute: Vec<u64> = s.iter().filter(|t| t.place_country == Some(CountryCode::US)).map(|t| t.tweet_id).collect();
        assert_eq!(loc.tweet_ids(), brute);
        let lang = sample_language_query(&s, CountryCode::US, LangCode::EN, window());
        assert!(lang.tweets.iter().all(|t| t.lang == LangCode::EN));
        let ratio = lang.tweets.len() as f64 / loc.tweets.len() as f64;
        assert!((ratio - 0.5).abs() < 0.03, "{ratio}");
        let authors: BTreeSet<u64> = lang.tweets.iter().map(|t| t.author).collect();
        assert_eq!(lang.authors, authors.into_iter().collect::<Vec<_>>());
        assert!(sample_location_query(&[], CountryCode::US, window()).tweets.is_empty());
        let mut untagged = s.clone();
        untagged.iter_mut().for_each(|t| t.place_country = None);
        assert!(sample_location_query(&untagged, CountryCode::US, window()).tweets.is_empty());
        let mut all_us = s.clone();
        all_us.iter_mut().for_each(|t| t.place_country = Some(CountryCode::US));
        assert_eq!(sample_location_query(&all_us, CountryCode::US, window()).tweets.len(), s.len());
    }

    #[test]
    fn bounding_box_matches_point_in_box_scan() {
        let s = random_stream(20_000, 3);
        let poly = rectangle("r", 36.0, -104.0, 39.0, -97.0).unwrap();
        let tiles = tile_polygon(&poly, &TileOptions::default()).unwrap();
        let out = sample_bounding_box(&s, &tiles, &BbParams::default(), window()).unwrap();
        let brute: Vec<u64> = s
            .iter()
            .filter(|t| t.coordinates.is_some_and(|(la, lo)| tiles.boxes().iter().any(|b| b.contains(la, lo))))
            .map(|t| t.tweet_id)
            .collect();
        assert_eq!(out.tweet_ids(), brute);
        let with_fallback = sample_bounding_box(
            &s,
            &tiles,
            &BbParams {
                place_fallback: true,
                ..Default::default()
            },
            window(),
        )
        .unwrap();
        assert!(with_fallback.tweets.len() > out.tweets.len());
    }

    #[test]
    fn overlapping_boxes_count_once() {
        let b = |s, w| BoundingBox {
            south: s,
            west: w,
            north: s + 1.0,
            east: w + 1.0,
        };
        let tiles = TileSet::new(vec![b(0.0, 0.0), b(0.5, 0.5)], 1.0, "t").unwrap();
        let mut t = tweet(1, 1, window().start_ms);
        t.coordinates = Some((0.7, 0.7));
        let mut no_coords = tweet(2, 2, window().start_ms);
        no_coords.coordinates = None;
        let out = sample_bounding_box(&[t, no_coords], &tiles, &BbParams::default(), window()).unwrap();
        assert_eq!(out.tweet_ids(), vec![1]);
        let empty = TileSet::new(vec![], 1.0, "e").unwrap();
        assert!(sample_bounding_box(&[t], &empty, &BbParams::default(), window()).is_err());
    }

    #[test]
    fn draw_users_contract() {
        let s = sample_location_query(&random_stream(5000, 4), CountryCode::US, window());
        let n = s.authors.len();
        let mut all = draw_users(&s, n, 1).unwrap().users;
        all.sort();
        assert_eq!(all, s.authors);
        assert_eq!(draw_users(&s, 50, 9).unwrap(), draw_users(&s, 50, 9).unwrap());
        assert!(matches!(
            draw_users(&s, n + 1, 1),
            Err(Error::InsufficientAuthors { available, .. }) if available == n
        ));
    }

    #[test]
    fn draw_frequencies_are_uniform_over_authors() {
        // author 0 tweets 100 times, the others once: draws must ignore that
        let mut s: Vec<TweetEvent> = (0..100).map(|i| tweet(i + 1, 0, window().start_ms + i)).collect();
        s.extend((1..20u64).map(|a| tweet(1000 + a, a, window().start_ms)));
        let set = sample_location_query(&s, CountryCode::US, window());
        let mut hits = [0u32; 20];
        let trials = 10_000;
        for seed in 0..trials {
            for u in draw_users(&set, 4, seed).unwrap().users {
                hits[u as usize] += 1;
            }
        }
        let p = 0.2;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - mean).abs() < 4.0 * sd, "{hits:?}");
        }
    }

    #[test]
    fn analytic_inclusion_values() {
        assert_eq!(analytic_stream_inclusion(0, 0.01).unwrap(), 0.0);
        assert_eq!(analytic_stream_inclusion(1, 1.0).unwrap(), 1.0);
        assert!((analytic_stream_inclusion(100, 0.01).unwrap() - 0.63397).abs() < 1e-5);
        assert!(analytic_stream_inclusion(5, 0.0).is_err());
        assert!(analytic_stream_inclusion(5, 1.5).is_err());
    }

    #[test]
    fn samplers_are_pure() {
        let s = random_stream(5000, 5);
        let p = StreamParams {
            mode: StreamMode::Bernoulli,
            rate: 0.1,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(sample_stream(&s, &p, window()).unwrap(), sample_stream(&s, &p, window()).unwrap());
    }
}
