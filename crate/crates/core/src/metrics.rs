//! Descriptive statistics per sampling method and pairwise t-tests.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::demographics::{AgeBracket, Gender, LangCode};
use crate::error::{Error, Result};
use crate::geo::State;
use crate::inference::LabeledUser;
use crate::samplers::SampleSet;
use crate::stats::{mean, std_dev, variance};
use crate::worldgen::SimUser;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserMetric {
    LifetimeTweets,
    TweetsPerDay,
    Followers,
    Friends,
}

impl UserMetric {
    pub const ALL: [UserMetric; 4] = [
        UserMetric::LifetimeTweets,
        UserMetric::TweetsPerDay,
        UserMetric::Followers,
        UserMetric::Friends,
    ];

    pub fn code(self) -> &'static str {
        match self {
            UserMetric::LifetimeTweets => "lifetime_tweets",
            UserMetric::TweetsPerDay => "tweets_per_day",
            UserMetric::Followers => "followers",
            UserMetric::Friends => "friends",
        }
    }

    pub fn value(self, u: &SimUser, as_of: NaiveDate) -> f64 {
        match self {
            UserMetric::LifetimeTweets => u.lifetime_tweets as f64,
            UserMetric::TweetsPerDay => tweets_per_day(u, as_of),
            UserMetric::Followers => u.followers as f64,
            UserMetric::Friends => u.friends as f64,
        }
    }
}

/// Lifetime tweets over account age in days, with the age floored at one day.
pub fn tweets_per_day(u: &SimUser, as_of: NaiveDate) -> f64 {
    let days = (as_of - u.created_at).num_days().max(1);
    u.lifetime_tweets as f64 / days as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Moments {
        if xs.is_empty() {
            return Moments::default();
        }
        Moments {
            mean: mean(xs),
            std: if xs.len() > 1 { std_dev(xs) } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub method: String,
    /// Set when there were no tweets and no users; every number is then zero.
    pub empty: bool,
    pub tweet_count: usize,
    pub unique_accounts: usize,
    pub avg_tweets_per_account: f64,
    pub english_ratio: f64,
    /// Per collected tweet.
    pub likes: Moments,
    pub users: usize,
    pub lifetime_tweets: Moments,
    pub tweets_per_day: Moments,
    pub followers: Moments,
    pub friends: Moments,
    pub gender_shares: Vec<(Gender, f64)>,
    pub age_shares: Vec<(AgeBracket, f64)>,
    pub state_counts: Vec<(State, usize)>,
}

/// Tweet-level figures come from `sample`, user-level ones from `users`
/// (demographic shares use the observed labels).
pub fn summarize(sample: &SampleSet, users: &[LabeledUser], as_of: NaiveDate, include_dc: bool) -> MetricTable {
    let tweet_count = sample.tweets.len();
    let unique_accounts = sample.authors.len();
    let likes: Vec<f64> = sample.tweets.iter().map(|t| t.likes as f64).collect();
    let english = sample.tweets.iter().filter(|t| t.lang == LangCode::EN).count();
    let col = |m: UserMetric| -> Vec<f64> { users.iter().map(|u| m.value(&u.user, as_of)).collect() };
    let n = users.len();
    let share = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    MetricTable {
        method: sample.method.code().to_owned(),
        empty: tweet_count == 0 && n == 0,
        tweet_count,
        unique_accounts,
        avg_tweets_per_account: if unique_accounts == 0 { 0.0 } else { tweet_count as f64 / unique_accounts as f64 },
        english_ratio: if tweet_count == 0 { 0.0 } else { english as f64 / tweet_count as f64 },
        likes: Moments::of(&likes),
        users: n,
        lifetime_tweets: Moments::of(&col(UserMetric::LifetimeTweets)),
        tweets_per_day: Moments::of(&col(UserMetric::TweetsPerDay)),
        followers: Moments::of(&col(UserMetric::Followers)),
        friends: Moments::of(&col(UserMetric::Friends)),
        gender_shares: Gender::ALL
            .iter()
            .map(|g| (*g, share(users.iter().filter(|u| u.obs_gender == *g).count())))
            .collect(),
        age_shares: AgeBracket::ALL
            .iter()
            .map(|a| (*a, share(users.iter().filter(|u| u.obs_age == *a).count())))
            .collect(),
        state_counts: state_counts(users, include_dc),
    }
}

/// Users per observed state, in state order. Users without a state, or in
/// DC when it is excluded, are not counted.
pub fn state_counts(users: &[LabeledUser], include_dc: bool) -> Vec<(State, usize)> {
    let mut counts = vec![0usize; State::COUNT];
    for s in users.iter().filter_map(|u| u.obs_state) {
        counts[s.index()] += 1;
    }
    State::analysis_set(include_dc).map(|s| (s, counts[s.index()])).collect()
}

impl MetricTable {
    /// Two-column `metric,value` listing.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = crate::io::csv_writer(w);
        w.write_record(["metric", "value"])?;
        let mut rows: Vec<(String, String)> = vec![
            ("tweet_count".into(), self.tweet_count.to_string()),
            ("unique_accounts".into(), self.unique_accounts.to_string()),
            ("avg_tweets_per_account".into(), self.avg_tweets_per_account.to_string()),
            ("english_ratio".into(), self.english_ratio.to_string()),
            ("users".into(), self.users.to_string()),
        ];
        for (name, m) in [
            ("likes", self.likes),
            ("lifetime_tweets", self.lifetime_tweets),
            ("tweets_per_day", self.tweets_per_day),
            ("followers", self.followers),
            ("friends", self.friends),
        ] {
            rows.push((format!("{name}_mean"), m.mean.to_string()));
            rows.push((format!("{name}_std"), m.std.to_string()));
        }
        rows.extend(self.gender_shares.iter().map(|(g, s)| (format!("share_gender_{g}"), s.to_string())));
        rows.extend(self.age_shares.iter().map(|(a, s)| (format!("share_age_{a}"), s.to_string())));
        rows.extend(self.state_counts.iter().map(|(st, c)| (format!("users_{st}"), c.to_string())));
        for r in rows {
            w.write_record([r.0, r.1])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Two-sample t-test, Welch by default, pooled variance when `pooled`.
pub fn t_test(a: &[f64], b: &[f64], pooled: bool) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::DegenerateSample(format!("sizes {} and {}; need at least 2 each", a.len(), b.len())));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a), variance(b));
    if va == 0.0 && vb == 0.0 {
        return Err(Error::DegenerateSample("both samples have zero variance".into()));
    }
    let diff = mean(a) - mean(b);
    let (se2, df) = if pooled {
        let df = na + nb - 2.0;
        let sp = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
        (sp * (1.0 / na + 1.0 / nb), df)
    } else {
        let (qa, qb) = (va / na, vb / nb);
        let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
        (qa + qb, df)
    };
    let t = diff / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::DegenerateSample(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df })
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    t_test(a, b, false)
}

/// Symmetric matrix of two-sided p-values with a unit diagonal.
pub fn pairwise_pvalues(samples: &[Vec<f64>], pooled: bool) -> Result<Vec<Vec<f64>>> {
    let k = samples.len();
    let mut m = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let p = t_test(&samples[i], &samples[j], pooled)?.p;
            m[i][j] = p;
            m[j][i] = p;
        }
    }
    Ok(m)
}

pub fn write_pvalue_matrix<W: Write>(labels: &[&str], m: &[Vec<f64>], w: W) -> Result<()> {
    let mut w = crate::io::csv_writer(w);
    let mut header = vec!["method".to_owned()];
    header.extend(labels.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (label, row) in labels.iter().zip(m) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
}

/// Histogram with edges evenly spaced in log(1 + x) between 0 and the
/// maximum, so zero counts land in the first bin. The last bin is closed.
pub fn log_histogram(values: &[f64], bins: usize) -> Result<Vec<Bin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("histogram values must be finite and non-negative".into()));
    }
    let top = values.iter().copied().fold(0.0, f64::max).ln_1p().max(f64::MIN_POSITIVE);
    let edge = |k: usize| ((top * k as f64 / bins as f64).exp_m1()).max(0.0);
    let mut out: Vec<Bin> = (0..bins)
        .map(|k| Bin {
            bin_lo: edge(k),
            bin_hi: edge(k + 1),
            count: 0,
        })
        .collect();
    for v in values {
        let k = ((v.ln_1p() / top) * bins as f64).floor() as usize;
        out[k.min(bins - 1)].count += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{Method, SampledTweet};
    use crate::worldgen::Window;

    fn as_of() -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 10, 8).unwrap()
    }

    fn user(id: u64, lifetime: u64, age_days: i64) -> LabeledUser {
        let census = crate::census::builtin_census().scaled_to(2000);
        let mut cfg = crate::worldgen::BehaviorConfig::default();
        cfg.foreign_fraction = 0.0;
        let w = crate::worldgen::build_world(&census, &crate::worldgen::InclusionDesign::constant(1.0), &cfg, &Window::default(), 3).unwrap();
        let mut u = w[0].clone();
        u.user_id = id;
        u.lifetime_tweets = lifetime;
        u.created_at = as_of() - chrono::Duration::days(age_days);
        crate::inference::infer(&[u], &Default::default(), 0).unwrap().remove(0)
    }

    #[test]
    fn welch_reference_fixture() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = welch_t(&a, &b).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        // two-sided p from the t distribution with 8 df at |t| = 1
        assert!((r.p - 0.346_593_507_087_334).abs() < 1e-9, "{}", r.p);
        let s = welch_t(&b, &a).unwrap();
        assert_eq!(s.t, -r.t);
        assert_eq!(s.p, r.p);
    }

    #[test]
    fn identical_and_shifted_samples() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let b = [3.0, 1.0, 7.0, 2.0, 9.0];
        let r1 = welch_t(&a, &b).unwrap();
        let sh = |x: &[f64]| x.iter().map(|v| v + 100.0).collect::<Vec<_>>();
        let r2 = welch_t(&sh(&a), &sh(&b)).unwrap();
        assert!((r1.t - r2.t).abs() < 1e-9 && (r1.p - r2.p).abs() < 1e-9);
    }

    #[test]
    fn pooled_matches_standard_formula() {
        // unequal sizes: pooled df = 7, t = -(3 - 4.5) ... computed by hand
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [3.0, 4.0, 5.0, 6.0];
        let r = t_test(&a, &b, true).unwrap();
        // sp^2 = (4*2.5 + 3*1.6667)/7 = 15/7; se = sqrt(15/7 * (1/5+1/4))
        let se = (15.0f64 / 7.0 * 0.45).sqrt();
        assert!((r.t - (-1.5 / se)).abs() < 1e-12);
        assert_eq!(r.df, 7.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(welch_t(&[1.0], &[1.0, 2.0]), Err(Error::DegenerateSample(_))));
        assert!(matches!(welch_t(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn pairwise_matrix_shape() {
        let s = vec![vec![1.0, 2.0, 3.0, 5.0]; 4];
        let m = pairwise_pvalues(&s, false).unwrap();
        assert!(m.iter().flatten().all(|p| *p == 1.0));
        let s = vec![vec![1.0, 2.0, 3.0], vec![2.0, 5.0, 9.0], vec![0.0, 0.5, 1.0], vec![4.0, 4.5, 7.0]];
        let m = pairwise_pvalues(&s, false).unwrap();
        for i in 0..4 {
            assert_eq!(m[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
    }

    #[test]
    fn one_user_thirty_tweets_thirty_days() {
        let u = user(1, 30, 30);
        assert_eq!(tweets_per_day(&u.user, as_of()), 1.0);
        let brand_new = user(2, 30, 0);
        assert_eq!(tweets_per_day(&brand_new.user, as_of()), 30.0);
    }

    #[test]
    fn summary_fields() {
        let users: Vec<LabeledUser> = (0..4).map(|i| user(i, 100 * (i + 1), 100)).collect();
        let tweets: Vec<SampledTweet> = (0..12)
            .map(|i| SampledTweet {
                tweet_id: i,
                author: i % 4,
                lang: LangCode::EN,
                likes: i as u32,
            })
            .collect();
        let set = SampleSet::from_tweets(Method::Lang, Window::default(), tweets);
        let t = summarize(&set, &users, as_of(), false);
        assert_eq!(t.tweet_count, 12);
        assert_eq!(t.unique_accounts, 4);
        assert_eq!(t.avg_tweets_per_account, 3.0);
        assert_eq!(t.english_ratio, 1.0);
        // spreadsheet recomputation: lifetime 100..400, tweets/day 1..4
        assert_eq!(t.lifetime_tweets.mean, 250.0);
        assert!((t.lifetime_tweets.std - 129.099_444_873_580_56).abs() < 1e-9);
        assert_eq!(t.tweets_per_day.mean, 2.5);
        assert_eq!(t.likes.mean, 5.5);
        assert!((t.gender_shares.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((t.age_shares.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(t.state_counts.len(), 50);
        assert_eq!(t.state_counts.iter().map(|s| s.1).sum::<usize>(), 4);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("metric,value\ntweet_count,12\n"));
        let empty = summarize(&SampleSet::from_tweets(Method::Bb, Window::default(), vec![]), &[], as_of(), false);
        assert!(empty.empty && empty.avg_tweets_per_account == 0.0);
    }

    #[test]
    fn state_counts_oracle() {
        let ca = State::from_code("CA").unwrap();
        let mut users: Vec<LabeledUser> = (0..7).map(|i| user(i, 1, 1)).collect();
        users.iter_mut().for_each(|u| u.obs_state = Some(ca));
        let c = state_counts(&users, false);
        assert_eq!(c.iter().find(|s| s.0 == ca).unwrap().1, 7);
        assert_eq!(c.iter().map(|s| s.1).sum::<usize>(), 7);
        assert_eq!(state_counts(&users, true).len(), 51);
    }

    #[test]
    fn histogram_mass_and_edges() {
        let v: Vec<f64> = (0..1000).map(|i| (i * i) as f64).collect();
        let h = log_histogram(&v, 12).unwrap();
        assert_eq!(h.iter().map(|b| b.count).sum::<u64>(), 1000);
        assert_eq!(h[0].bin_lo, 0.0);
        assert!((h[11].bin_hi - 998_001.0).abs() < 1e-6);
        assert!(h.windows(2).all(|w| w[0].bin_hi == w[1].bin_lo));
        assert_eq!(log_histogram(&[0.0, 0.0], 3).unwrap()[0].count, 2);
        assert!(log_histogram(&[-1.0], 3).is_err());
    }
}
