//! 64-bit time-sortable ids (41-bit timestamp, 10-bit machine, 12-bit
//! sequence) and the random-id sampling protocol built on them.

use std::collections::HashSet;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, SimRng};
use crate::stats::{wilson, Z95};

/// Default epoch offset (ms since the Unix epoch, 2010-11-04T01:42:54.657Z).
pub const DEFAULT_EPOCH_MS: u64 = 1_288_834_974_657;

pub const TIMESTAMP_BITS: u32 = 41;
pub const MACHINE_BITS: u32 = 10;
pub const SEQUENCE_BITS: u32 = 12;
pub const MAX_MACHINES: u64 = 1 << MACHINE_BITS;
pub const MAX_SEQUENCE: u64 = 1 << SEQUENCE_BITS;
pub const MAX_TIMESTAMP: u64 = (1 << TIMESTAMP_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnowflakeId(pub u64);

impl SnowflakeId {
    pub fn compose(timestamp_ms: u64, machine: u64, sequence: u64) -> Result<SnowflakeId> {
        if timestamp_ms > MAX_TIMESTAMP {
            return Err(Error::IdRange(format!("timestamp {timestamp_ms} exceeds 41 bits")));
        }
        if machine >= MAX_MACHINES {
            return Err(Error::IdRange(format!("machine {machine} >= {MAX_MACHINES}")));
        }
        if sequence >= MAX_SEQUENCE {
            return Err(Error::IdRange(format!("sequence {sequence} >= {MAX_SEQUENCE}")));
        }
        Ok(SnowflakeId(
            (timestamp_ms << (MACHINE_BITS + SEQUENCE_BITS)) | (machine << SEQUENCE_BITS) | sequence,
        ))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn timestamp_ms(self) -> u64 {
        self.0 >> (MACHINE_BITS + SEQUENCE_BITS)
    }

    pub fn machine(self) -> u64 {
        (self.0 >> SEQUENCE_BITS) & (MAX_MACHINES - 1)
    }

    pub fn sequence(self) -> u64 {
        self.0 & (MAX_SEQUENCE - 1)
    }

    /// Wall-clock time in Unix milliseconds for a given epoch offset.
    pub fn unix_ms(self, epoch_ms: u64) -> u64 {
        self.timestamp_ms() + epoch_ms
    }
}

/// Split a raw id into (timestamp_ms, machine, sequence).
pub fn decompose(raw: u64) -> (u64, u64, u64) {
    let id = SnowflakeId(raw);
    (id.timestamp_ms(), id.machine(), id.sequence())
}

/// Per-machine id generator. Callers supply the clock reading (ms since the
/// generator's epoch) so that generation is deterministic and testable.
///
/// A single generator must not be shared between threads without external
/// synchronisation; distinct machine ids never collide.
#[derive(Debug, Clone)]
pub struct SnowflakeGenerator {
    machine: u64,
    last_clock: Option<u64>,
    last_ts: u64,
    sequence: u64,
}

impl SnowflakeGenerator {
    pub fn new(machine: u64) -> Result<Self> {
        if machine >= MAX_MACHINES {
            return Err(Error::IdRange(format!("machine {machine} >= {MAX_MACHINES}")));
        }
        Ok(SnowflakeGenerator {
            machine,
            last_clock: None,
            last_ts: 0,
            sequence: 0,
        })
    }

    pub fn machine(&self) -> u64 {
        self.machine
    }

    /// Issue the next id at clock reading `now_ms`.
    ///
    /// When the 4096 sequence numbers of a millisecond are used up the
    /// generator moves on to the next millisecond instead of blocking, so ids
    /// can run ahead of the clock under sustained overload. A clock reading
    /// older than the previous one is an error.
    pub fn next_id(&mut self, now_ms: u64) -> Result<SnowflakeId> {
        if let Some(last) = self.last_clock {
            if now_ms < last {
                return Err(Error::ClockRegression {
                    last_ms: last,
                    now_ms,
                });
            }
        }
        let first = self.last_clock.is_none();
        self.last_clock = Some(now_ms);
        if !first && now_ms <= self.last_ts {
            self.sequence += 1;
            if self.sequence == MAX_SEQUENCE {
                self.sequence = 0;
                self.last_ts += 1;
            }
        } else {
            self.last_ts = now_ms;
            self.sequence = 0;
        }
        SnowflakeId::compose(self.last_ts, self.machine, self.sequence)
    }
}

/// Answer of the id lookup oracle for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Invalid,
    Valid,
    ValidInCountry,
}

pub const OLD_PER_BATCH: usize = 5;
pub const NEW_PER_BATCH: usize = 995;

/// One batch of 1000 candidate user ids: 5 legacy 32-bit ids followed by 995
/// Snowflake-form ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdBatch {
    pub ids: Vec<u64>,
    pub old_count: usize,
    pub new_count: usize,
    pub seed: u64,
    /// Unix milliseconds, inclusive start and exclusive end.
    pub time_range: (u64, u64),
}

/// Metadata written next to a batch's id file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSidecar {
    pub seed: u64,
    pub time_range: (u64, u64),
    pub old_count: usize,
    pub new_count: usize,
    pub epoch_ms: u64,
}

impl IdBatch {
    pub fn old_ids(&self) -> &[u64] {
        &self.ids[..self.old_count]
    }

    pub fn new_ids(&self) -> &[u64] {
        &self.ids[self.old_count..]
    }

    pub fn sidecar(&self, epoch_ms: u64) -> BatchSidecar {
        BatchSidecar {
            seed: self.seed,
            time_range: self.time_range,
            old_count: self.old_count,
            new_count: self.new_count,
            epoch_ms,
        }
    }

    /// Write the ids one per line.
    pub fn write_ids<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for id in &self.ids {
            writeln!(w, "{id}")?;
        }
        Ok(())
    }
}

fn check_range(time_range: (u64, u64), epoch_ms: u64) -> Result<()> {
    let (start, end) = time_range;
    if end <= start {
        return Err(Error::InvalidArgument(format!("empty time range [{start}, {end})")));
    }
    if start < epoch_ms || end - epoch_ms > MAX_TIMESTAMP + 1 {
        return Err(Error::IdRange(format!(
            "time range [{start}, {end}) outside the id epoch starting at {epoch_ms}"
        )));
    }
    Ok(())
}

fn random_new_ids(rng: &mut SimRng, time_range: (u64, u64), epoch_ms: u64) -> Vec<u64> {
    (0..NEW_PER_BATCH)
        .map(|_| {
            let ts = rng.random_range(time_range.0..time_range.1) - epoch_ms;
            let machine = rng.random_range(0..MAX_MACHINES);
            let seq = rng.random_range(0..MAX_SEQUENCE);
            SnowflakeId::compose(ts, machine, seq).expect("fields in range").raw()
        })
        .collect()
}

fn fresh_old_ids(rng: &mut SimRng, used: &mut HashSet<u32>) -> Result<Vec<u64>> {
    if used.len() as u64 + OLD_PER_BATCH as u64 > u32::MAX as u64 {
        return Err(Error::IdSpaceExhausted);
    }
    let mut out = Vec::with_capacity(OLD_PER_BATCH);
    while out.len() < OLD_PER_BATCH {
        let id: u32 = rng.random_range(1..=u32::MAX);
        if used.insert(id) {
            out.push(id as u64);
        }
    }
    Ok(out)
}

/// Build one batch from `seed` alone. Old ids are distinct within the batch;
/// use [`CandidateGenerator`] for uniqueness across batches.
pub fn gen_candidate_batch(seed: u64, time_range: (u64, u64), epoch_ms: u64) -> Result<IdBatch> {
    check_range(time_range, epoch_ms)?;
    let mut rng = substream(seed, "id-batch", 0);
    let mut used = HashSet::new();
    let mut ids = fresh_old_ids(&mut rng, &mut used)?;
    ids.extend(random_new_ids(&mut rng, time_range, epoch_ms));
    Ok(IdBatch {
        ids,
        old_count: OLD_PER_BATCH,
        new_count: NEW_PER_BATCH,
        seed,
        time_range,
    })
}

/// A sampling session: each batch gets its own seed from a seed generator,
/// and legacy ids are never repeated across the session.
#[derive(Debug)]
pub struct CandidateGenerator {
    seeds: SimRng,
    used_old: HashSet<u32>,
    epoch_ms: u64,
}

impl CandidateGenerator {
    pub fn new(master_seed: u64, epoch_ms: u64) -> Self {
        CandidateGenerator {
            seeds: substream(master_seed, "id-batch-seeds", 0),
            used_old: HashSet::new(),
            epoch_ms,
        }
    }

    pub fn next_batch(&mut self, time_range: (u64, u64)) -> Result<IdBatch> {
        check_range(time_range, self.epoch_ms)?;
        let seed: u64 = self.seeds.random();
        let mut rng = substream(seed, "id-batch", 0);
        let mut ids = fresh_old_ids(&mut rng, &mut self.used_old)?;
        ids.extend(random_new_ids(&mut rng, time_range, self.epoch_ms));
        Ok(IdBatch {
            ids,
            old_count: OLD_PER_BATCH,
            new_count: NEW_PER_BATCH,
            seed,
            time_range,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitRate {
    pub generated: u64,
    pub valid: u64,
    pub valid_in_country: u64,
    pub hit_rate: f64,
    pub hit_ci: (f64, f64),
    pub country_rate: f64,
    pub country_ci: (f64, f64),
}

/// Look every candidate up with `oracle` and report the fraction that are
/// live accounts and live accounts in the target country, with 95% Wilson
/// intervals.
pub fn estimate_hit_rate(batches: &[IdBatch], oracle: impl Fn(u64) -> Validity) -> Result<HitRate> {
    if batches.is_empty() {
        return Err(Error::EmptyInput("no candidate batches".into()));
    }
    let (mut n, mut valid, mut country) = (0u64, 0u64, 0u64);
    for id in batches.iter().flat_map(|b| b.ids.iter()) {
        n += 1;
        match oracle(*id) {
            Validity::Invalid => {}
            Validity::Valid => valid += 1,
            Validity::ValidInCountry => {
                valid += 1;
                country += 1;
            }
        }
    }
    Ok(HitRate {
        generated: n,
        valid,
        valid_in_country: country,
        hit_rate: valid as f64 / n as f64,
        hit_ci: wilson(valid, n, Z95),
        country_rate: country as f64 / n as f64,
        country_ci: wilson(country, n, Z95),
    })
}
