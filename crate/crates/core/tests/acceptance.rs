//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass substrings as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- tiler snowflake`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use twsample_core::census::{builtin_census, PopulationTable};
use twsample_core::debias::{build_design, FitOptions, ModelSpec, ZeroRowPolicy};
use twsample_core::demographics::{CountryCode, LangCode};
use twsample_core::evaluate::{loso_cv, mape};
use twsample_core::geo::GeoLevel;
use twsample_core::inference::{infer, ConfusionSpec};
use twsample_core::metrics::{tweets_per_day, welch_t};
use twsample_core::pipeline::{run_pipeline, Manifest, PipelineConfig};
use twsample_core::polygon::builtin_conus;
use twsample_core::preprocess::{apply_filters, FilterConfig};
use twsample_core::rng::substream;
use twsample_core::samplers::{
    draw_users, sample_bounding_box, sample_language_query, sample_location_query, sample_stream, BbParams, SampleSet,
    StreamParams,
};
use twsample_core::snowflake::{decompose, SnowflakeGenerator, SnowflakeId, MAX_MACHINES, MAX_SEQUENCE};
use twsample_core::stats::slope_with_se;
use twsample_core::tiler::{tile_polygon, TileOptions, TileSet};
use twsample_core::worldgen::{build_world, ms_to_date, simulate_month, BehaviorConfig, InclusionDesign, SimUser, TweetEvent, Window};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 10] = [
        ("mape_fidelity", Duration::from_secs(1), mape_fidelity),
        ("stream_bias_law", Duration::from_secs(120), stream_bias_law),
        ("debias_recovery", Duration::from_secs(600), debias_recovery),
        ("method_contrast", Duration::from_secs(300), method_contrast),
        ("division_aggregation", Duration::from_secs(600), division_aggregation),
        ("tiler", Duration::from_secs(60), tiler),
        ("snowflake", Duration::from_secs(30), snowflake),
        ("filter_conservation", Duration::from_secs(60), filter_conservation),
        ("welch_reference", Duration::from_secs(1), welch_reference),
        ("determinism", Duration::from_secs(120), determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, budget, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let o = f();
        let took = t.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let time_note = if in_time { String::new() } else { format!(" over budget {budget:?}") };
        println!(
            "{} {name}: {} [{:.1}s{time_note}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn mape_fidelity() -> Outcome {
    let single = mape(&[127.0], &[100.0]).unwrap();
    let hand = mape(&[90.0, 250.0], &[100.0, 200.0]).unwrap();
    let exact = mape(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    // (|110-80|/80 + |45-50|/50 + |1-4|/4) * 100 / 3, summed by hand in thirds
    let three = mape(&[110.0, 45.0, 1.0], &[80.0, 50.0, 4.0]).unwrap();
    let expected3 = (37.5 + 10.0 + 75.0) / 3.0;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let pass = single == 27.0 && rel(hand, 17.5) <= 1e-12 && exact == 0.0 && rel(three, expected3) <= 1e-12;
    outcome(pass, format!("single={single} hand={hand} three={three:.12} (expected {expected3:.12})"))
}

fn tweet(id: u64, author: u64, timestamp: u64) -> TweetEvent {
    TweetEvent {
        tweet_id: id,
        author,
        timestamp,
        lang: LangCode::EN,
        place_country: Some(CountryCode::US),
        coordinates: None,
        likes_at_collection: 0,
        likes_at_stream: 0,
    }
}

fn stream_bias_law() -> Outcome {
    let window = Window::default();
    let span = window.end_ms - window.start_ms;
    let params = StreamParams::default();
    let trials = 10_000u64;
    let mut details = Vec::new();
    let mut pass = true;
    for k in [1u64, 10, 100, 1000] {
        let mut included = 0usize;
        // batches keep the k = 1000 stream at 10^6 tweets at a time
        let batch = (1_000_000 / k).clamp(1, trials);
        let mut next_id = 0u64;
        let mut done = 0u64;
        while done < trials {
            let n = batch.min(trials - done);
            let mut stream = Vec::with_capacity((n * k) as usize);
            for a in done..done + n {
                let mut rng = substream(k, "stream-law", a);
                for _ in 0..k {
                    stream.push(tweet(next_id, a, window.start_ms + rng.random_range(0..span)));
                    next_id += 1;
                }
            }
            stream.sort_by_key(|t| t.timestamp);
            included += sample_stream(&stream, &params, window).unwrap().authors.len();
            done += n;
        }
        let emp = included as f64 / trials as f64;
        let theory = 1.0 - 0.99f64.powi(k as i32);
        let ok = (emp - theory).abs() <= 0.01;
        pass &= ok;
        details.push(format!("k={k} emp={emp:.4} theory={theory:.4}"));
    }

    // eligibility is recomputed from the raw stream: an author is eligible
    // for a query when at least one window tweet matches it
    let (world, stream) = world_and_stream(500_000, &BehaviorConfig::default(), 77);
    let tiles = conus_tiles();
    let window = Window::default();
    let mut window_tweets: BTreeMap<u64, u64> = BTreeMap::new();
    for t in &stream {
        *window_tweets.entry(t.author).or_default() += 1;
    }
    let eligible = |m: fn(&TweetEvent, &TileSet) -> bool| -> Vec<u64> {
        stream.iter().filter(|t| m(t, &tiles)).map(|t| t.author).collect::<BTreeSet<_>>().into_iter().collect()
    };
    // 10 deciles, 2 fitted parameters
    let t_crit = StudentsT::new(0.0, 1.0, 8.0).unwrap().inverse_cdf(0.975);
    let checks: [(SampleSet, Vec<u64>); 3] = [
        (
            sample_location_query(&stream, CountryCode::US, window),
            eligible(|t, _| t.place_country == Some(CountryCode::US)),
        ),
        (
            sample_language_query(&stream, CountryCode::US, LangCode::EN, window),
            eligible(|t, _| t.place_country == Some(CountryCode::US) && t.lang == LangCode::EN),
        ),
        (
            sample_bounding_box(&stream, &tiles, &BbParams::default(), window).unwrap(),
            eligible(|t, tiles| t.coordinates.is_some_and(|(la, lo)| tiles.covers(la, lo))),
        ),
    ];
    for (s, elig) in &checks {
        let got: HashSet<u64> = s.authors.iter().copied().collect();
        let (slope, se) = decile_slope(elig, &window_tweets, |a| got.contains(&a));
        let ok = (slope - t_crit * se..=slope + t_crit * se).contains(&0.0);
        pass &= ok;
        details.push(format!("{} slope={slope:.5}±{:.5} over {} eligible", s.method.code(), t_crit * se, elig.len()));
        // informational: the later uniform user draw from the same set
        let drawn: HashSet<u64> = draw_users(s, s.authors.len() / 2, 5).unwrap().users.into_iter().collect();
        let (ds, dse) = decile_slope(elig, &window_tweets, |a| drawn.contains(&a));
        details.push(format!("(half draw slope={ds:.5}±{:.5})", t_crit * dse));
    }
    let everyone: Vec<u64> = window_tweets.keys().copied().collect();
    let st = sample_stream(&stream, &StreamParams::default(), window).unwrap();
    let in_stream: HashSet<u64> = st.authors.iter().copied().collect();
    let (slope, se) = decile_slope(&everyone, &window_tweets, |a| in_stream.contains(&a));
    let increasing = slope - t_crit * se > 0.0;
    pass &= increasing;
    details.push(format!("stream1pct slope={slope:.4}±{:.4} over {} authors of {} users", t_crit * se, everyone.len(), world.len()));
    outcome(pass, details.join(", "))
}

/// Inclusion frequency per activity decile of `authors`, regressed on the
/// decile index.
fn decile_slope(authors: &[u64], activity: &BTreeMap<u64, u64>, included: impl Fn(u64) -> bool) -> (f64, f64) {
    let mut by_activity: Vec<(u64, u64)> = authors.iter().map(|a| (activity[a], *a)).collect();
    by_activity.sort();
    let n = by_activity.len();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for d in 0..10 {
        let part = &by_activity[d * n / 10..(d + 1) * n / 10];
        let hits = part.iter().filter(|(_, a)| included(*a)).count();
        x.push(d as f64);
        y.push(hits as f64 / part.len() as f64);
    }
    slope_with_se(&x, &y)
}

fn conus_tiles() -> TileSet {
    tile_polygon(&builtin_conus(), &TileOptions::default()).unwrap()
}

fn world_and_stream(persons: u64, cfg: &BehaviorConfig, seed: u64) -> (Vec<SimUser>, Vec<TweetEvent>) {
    let census = builtin_census().scaled_to(persons);
    let window = Window::default();
    let world = build_world(&census, &InclusionDesign::default(), cfg, &window, seed).unwrap();
    let stream = simulate_month(&world, &window, cfg.code_switch_rate, cfg.likes_cap, cfg.epoch_ms, seed + 1).unwrap();
    (world, stream)
}

const SEEDS: u64 = 20;

/// LOSO MAPE per spec, at state and division level, for one heterogeneous
/// world whose platform users carry oracle labels.
fn debias_world(seed: u64) -> [[f64; 5]; 2] {
    let census: PopulationTable = builtin_census().scaled_to(1_000_000).with_composition_noise(0.2, 0.05, seed);
    let mut cfg = BehaviorConfig::default();
    cfg.foreign_fraction = 0.0;
    let world = build_world(&census, &InclusionDesign::default(), &cfg, &Window::default(), seed).unwrap();
    let labeled = infer(&world, &ConfusionSpec::default(), seed).unwrap();
    let mut out = [[f64::NAN; 5]; 2];
    for (li, level) in [GeoLevel::State, GeoLevel::Division].into_iter().enumerate() {
        let table = build_design(&labeled, &census, level, ZeroRowPolicy::Drop).unwrap();
        for (i, spec) in ModelSpec::ALL.into_iter().enumerate() {
            out[li][i] = loso_cv(&table, spec, &FitOptions::default()).map(|r| r.mape).unwrap_or(f64::INFINITY);
        }
    }
    out
}

fn debias_runs() -> &'static Vec<[[f64; 5]; 2]> {
    static RUNS: std::sync::OnceLock<Vec<[[f64; 5]; 2]>> = std::sync::OnceLock::new();
    RUNS.get_or_init(|| (0..SEEDS).map(debias_world).collect())
}

fn seed_means(runs: &[[[f64; 5]; 2]], level: usize) -> [f64; 5] {
    let mut m = [0.0; 5];
    for r in runs {
        for i in 0..5 {
            m[i] += r[level][i] / runs.len() as f64;
        }
    }
    m
}

fn fmt5(v: [f64; 5]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

fn debias_recovery() -> Outcome {
    let runs = debias_runs();
    let good = runs.iter().filter(|r| r[0][4] < 10.0 && r[0][4] <= 0.7 * r[0][0]).count();
    let m = seed_means(runs, 0);
    let ordered = m[4] <= m[3] && m[3] <= m[1].min(m[2]) && m[1].min(m[2]) <= m[0];
    outcome(
        good >= 18 && ordered,
        format!(
            "M5<10% and >=30% below M1 in {good}/{SEEDS} seeds; mean MAPE M1..M5 = {}; ordering M5<=M4<=min(M2,M3)<=M1 {}",
            fmt5(m),
            if ordered { "holds" } else { "violated" }
        ),
    )
}

fn division_aggregation() -> Outcome {
    let runs = debias_runs();
    let st = seed_means(runs, 0);
    let dv = seed_means(runs, 1);
    let better = (0..5).filter(|&i| dv[i] < st[i]).count();
    let per_seed: Vec<usize> = (0..5).map(|i| runs.iter().filter(|r| r[1][i] < r[0][i]).count()).collect();
    outcome(
        better >= 4,
        format!(
            "division below state in {better}/5 specs; mean state {} vs division {}; per-spec seed wins {per_seed:?}",
            fmt5(st),
            fmt5(dv)
        ),
    )
}

fn method_contrast() -> Outcome {
    let window = Window::default();
    let as_of = ms_to_date(window.end_ms - 1);
    let tiles = conus_tiles();
    let mut wins = 0;
    let mut means = [0.0; 4];
    let mut worst_p: f64 = 0.0;
    for seed in 0..SEEDS {
        let (world, stream) = world_and_stream(500_000, &BehaviorConfig::default(), 1000 + seed);
        let index: BTreeMap<u64, &SimUser> = world.iter().map(|u| (u.user_id, u)).collect();
        let sets: [SampleSet; 4] = [
            sample_stream(&stream, &StreamParams::default(), window).unwrap(),
            sample_location_query(&stream, CountryCode::US, window),
            sample_language_query(&stream, CountryCode::US, LangCode::EN, window),
            sample_bounding_box(&stream, &tiles, &BbParams::default(), window).unwrap(),
        ];
        let tpd: Vec<Vec<f64>> = sets
            .iter()
            .map(|s| {
                draw_users(s, 10_000, seed)
                    .unwrap()
                    .users
                    .iter()
                    .map(|id| tweets_per_day(index[id], as_of))
                    .collect()
            })
            .collect();
        let mu: Vec<f64> = tpd.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        for i in 0..4 {
            means[i] += mu[i] / SEEDS as f64;
        }
        let mut ok = true;
        for q in 1..4 {
            let t = welch_t(&tpd[0], &tpd[q]).unwrap();
            worst_p = worst_p.max(t.p);
            ok &= mu[0] > mu[q] && t.p < 0.01;
        }
        wins += ok as usize;
    }
    outcome(
        wins >= 19,
        format!(
            "stream1pct above loc/lang/bb with p<0.01 in {wins}/{SEEDS} seeds; mean tweets/day stream {:.2}, loc {:.2}, lang {:.2}, bb {:.2}; largest p {worst_p:.2e}",
            means[0], means[1], means[2], means[3]
        ),
    )
}

fn tiler() -> Outcome {
    let poly = builtin_conus();
    let tiles = conus_tiles();
    let n = tiles.len();
    let in_range = (8_587..=10_495).contains(&n);
    let max_side = tiles
        .boxes()
        .iter()
        .map(|b| b.height_miles().max(b.width_miles()))
        .fold(0.0, f64::max);
    let (s, w, no, e) = poly.extent();
    let mut rng = substream(42, "tiler-coverage", 0);
    let (mut inside, mut covered) = (0u64, 0u64);
    while inside < 200_000 {
        let lat = rng.random_range(s..no);
        let lon = rng.random_range(w..e);
        if poly.contains(lat, lon) {
            inside += 1;
            covered += tiles.covers(lat, lon) as u64;
        }
    }
    let coverage = covered as f64 / inside as f64;
    outcome(
        in_range && max_side <= 25.0 && coverage >= 0.999,
        format!(
            "{n} boxes (accepted 8587..=10495), base grid {}, largest side {max_side:.2} mi, coverage {coverage:.5}",
            tiles.base_count()
        ),
    )
}

fn snowflake() -> Outcome {
    const N: usize = 1_000_000;
    let machines = [0u64, 1, 511, 1023];
    let mut gens: Vec<SnowflakeGenerator> = machines.iter().map(|m| SnowflakeGenerator::new(*m).unwrap()).collect();
    let mut ids = Vec::with_capacity(N);
    let mut per_gen: Vec<Vec<u64>> = vec![Vec::new(); gens.len()];
    // generator 0 runs ~10 ids per clock ms, generator 3 ~10,000 (so it
    // overflows a millisecond's sequence space)
    for i in 0..N {
        let g = i % gens.len();
        let rate = [10, 100, 1000, 10_000][g];
        let now = 1_000_000 + (i / gens.len()) as u64 / rate;
        let id = gens[g].next_id(now).unwrap().raw();
        per_gen[g].push(id);
        ids.push(id);
    }
    let unique = ids.iter().collect::<BTreeSet<_>>().len() == N;
    let sorted = per_gen.iter().all(|v| v.windows(2).all(|w| w[0] < w[1]));
    let limits = ids.iter().all(|&id| {
        let (_, m, s) = decompose(id);
        m < MAX_MACHINES && s < MAX_SEQUENCE
    });
    let identity = ids.iter().all(|&id| {
        let (t, m, s) = decompose(id);
        SnowflakeId::compose(t, m, s).unwrap().raw() == id
    });
    let overflowed = per_gen[3].iter().any(|&id| decompose(id).2 == MAX_SEQUENCE - 1);
    outcome(
        unique && sorted && limits && identity && overflowed,
        format!("unique={unique} time-sorted per generator={sorted} within limits={limits} decompose∘compose=id {identity} sequence overflow exercised={overflowed}"),
    )
}

fn filter_conservation() -> Outcome {
    let window = Window::default();
    let as_of = ms_to_date(window.end_ms - 1);
    let (world, stream) = world_and_stream(1_500_000, &BehaviorConfig::default(), 3);
    let index: BTreeMap<u64, SimUser> = world.into_iter().map(|u| (u.user_id, u)).collect();
    let tiles = conus_tiles();
    let sets = [
        sample_bounding_box(&stream, &tiles, &BbParams::default(), window).unwrap(),
        sample_location_query(&stream, CountryCode::US, window),
        sample_language_query(&stream, CountryCode::US, LangCode::EN, window),
        sample_stream(&stream, &StreamParams::default(), window).unwrap(),
    ];
    let base = FilterConfig::default();
    let stricter = [
        FilterConfig { min_tweets: 200, ..base.clone() },
        FilterConfig { min_tenure_months: 12, ..base.clone() },
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for s in &sets {
        let pool: Vec<SimUser> = match draw_users(s, 30_000, 9) {
            Ok(d) => d.users.iter().map(|id| index[id].clone()).collect(),
            Err(e) => return outcome(false, format!("{}: {e}", s.method.code())),
        };
        let (kept, report) = apply_filters(&pool, &base, as_of, s.method.code());
        let conserved = report.is_conserved() && report.total_removed() + kept.len() == pool.len() && report.input_size == 30_000;
        let kept_ids: HashSet<u64> = kept.iter().map(|u| u.user_id).collect();
        let mut monotone = true;
        let mut sizes = vec![kept.len()];
        for cfg in &stricter {
            let (k2, r2) = apply_filters(&pool, cfg, as_of, s.method.code());
            monotone &= r2.is_conserved() && k2.len() <= kept.len() && k2.iter().all(|u| kept_ids.contains(&u.user_id));
            sizes.push(k2.len());
        }
        pass &= conserved && monotone;
        details.push(format!("{} retained {sizes:?} conserved={conserved} monotone={monotone}", s.method.code()));
    }
    outcome(pass, details.join("; "))
}

fn welch_reference() -> Outcome {
    // reference: scipy.stats.ttest_ind(equal_var=False) gives t=-1, df=8, p=0.34659350708733416
    let r = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let pass = (r.t + 1.0).abs() <= 1e-3 && (r.p - 0.346_593_507_087_334).abs() <= 1e-3 && (r.df - 8.0).abs() <= 1e-9;
    outcome(pass, format!("t={:.6} df={:.3} p={:.6}", r.t, r.df, r.p))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        run_pipeline(&PipelineConfig::tiny(dir), None).unwrap();
        let m: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        m.artifacts
            .iter()
            .filter(|x| x.path.ends_with(".csv") || x.path.ends_with(".json") || x.path.ends_with(".jsonl") || x.path.ends_with(".ids"))
            .map(|x| (x.path.clone(), std::fs::read(dir.join(&x.path)).unwrap()))
            .collect()
    };
    let (xa, xb) = (run(a.path()), run(b.path()));
    let differing: Vec<&String> = xa.keys().filter(|k| xb.get(*k) != xa.get(*k)).collect();
    let pass = !xa.is_empty() && xa.len() == xb.len() && differing.is_empty();
    outcome(pass, format!("{} tabular artifacts compared, {} differ", xa.len(), differing.len()))
}
