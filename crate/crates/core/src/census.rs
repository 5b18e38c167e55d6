//! Ground-truth population histograms per (geo unit, age bracket, gender).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::demographics::{cell_from_index, cell_index, AgeBracket, Gender, N_CELLS};
use crate::error::{Error, Result};
use crate::geo::{GeoLevel, GeoUnit, State};
use crate::rng::substream;

const BUILTIN_CENSUS: &str = include_str!("../fixtures/census_2021.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicCell {
    pub geo: GeoUnit,
    pub age: AgeBracket,
    pub gender: Gender,
    pub count: u64,
}

/// Census counts for every (geo, age, gender) cell at one geographic level.
///
/// The District of Columbia may be stored while being excluded from analysis:
/// `geo_units()` and `analysis_total()` honour `include_dc`, `total()` does not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationTable {
    level: GeoLevel,
    include_dc: bool,
    units: BTreeMap<GeoUnit, [u64; N_CELLS]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dim {
    Age,
    Gender,
}

/// Count for one geo unit summed over the dimensions not kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MarginalCount {
    pub geo: GeoUnit,
    pub age: Option<AgeBracket>,
    pub gender: Option<Gender>,
    pub count: u64,
}

#[derive(Debug, Deserialize)]
struct CensusRecord {
    geo: String,
    age_bracket: String,
    gender: String,
    count: i64,
}

impl PopulationTable {
    /// Build a table from cells. Each geo unit present must have all eight cells.
    pub fn from_cells(
        level: GeoLevel,
        cells: impl IntoIterator<Item = DemographicCell>,
        include_dc: bool,
    ) -> Result<Self> {
        let mut units: BTreeMap<GeoUnit, [Option<u64>; N_CELLS]> = BTreeMap::new();
        for c in cells {
            if c.geo.level() != level {
                return Err(Error::InvalidArgument(format!(
                    "cell for {} is not at level {level}",
                    c.geo
                )));
            }
            let slot = &mut units.entry(c.geo).or_default()[cell_index(c.age, c.gender)];
            if slot.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate cell {} {} {}",
                    c.geo, c.age, c.gender
                )));
            }
            *slot = Some(c.count);
        }
        let mut out = BTreeMap::new();
        for (geo, slots) in units {
            let mut counts = [0u64; N_CELLS];
            for (i, s) in slots.iter().enumerate() {
                let (age, gender) = cell_from_index(i);
                counts[i] = s.ok_or_else(|| Error::MissingCell {
                    geo: geo.to_string(),
                    age: age.to_string(),
                    gender: gender.to_string(),
                })?;
            }
            out.insert(geo, counts);
        }
        Ok(PopulationTable {
            level,
            include_dc,
            units: out,
        })
    }

    pub fn level(&self) -> GeoLevel {
        self.level
    }

    pub fn include_dc(&self) -> bool {
        self.include_dc
    }

    pub fn has_dc(&self) -> bool {
        self.units.contains_key(&GeoUnit::State(State::DC))
    }

    pub fn with_include_dc(mut self, include_dc: bool) -> Self {
        self.include_dc = include_dc;
        self
    }

    fn is_active(&self, geo: GeoUnit) -> bool {
        self.include_dc || geo != GeoUnit::State(State::DC)
    }

    /// Geo units used for analysis, in canonical order.
    pub fn geo_units(&self) -> Vec<GeoUnit> {
        self.units.keys().copied().filter(|g| self.is_active(*g)).collect()
    }

    pub fn contains(&self, geo: GeoUnit) -> bool {
        self.is_active(geo) && self.units.contains_key(&geo)
    }

    pub fn counts(&self, geo: GeoUnit) -> Option<&[u64; N_CELLS]> {
        self.units.get(&geo).filter(|_| self.is_active(geo))
    }

    pub fn count(&self, geo: GeoUnit, age: AgeBracket, gender: Gender) -> Option<u64> {
        self.counts(geo).map(|c| c[cell_index(age, gender)])
    }

    pub fn geo_total(&self, geo: GeoUnit) -> Option<u64> {
        self.counts(geo).map(|c| c.iter().sum())
    }

    /// Every stored cell, including DC when excluded from analysis.
    pub fn cells(&self) -> impl Iterator<Item = DemographicCell> + '_ {
        self.units.iter().flat_map(|(geo, counts)| {
            counts.iter().enumerate().map(move |(i, &count)| {
                let (age, gender) = cell_from_index(i);
                DemographicCell {
                    geo: *geo,
                    age,
                    gender,
                    count,
                }
            })
        })
    }

    /// Sum of every stored cell (the column sum of the source file).
    pub fn total(&self) -> u64 {
        self.units.values().flat_map(|c| c.iter()).sum()
    }

    /// Sum over the analysis units only.
    pub fn analysis_total(&self) -> u64 {
        self.geo_units()
            .iter()
            .map(|g| self.units[g].iter().sum::<u64>())
            .sum()
    }

    /// Aggregate analysis units to a coarser level.
    pub fn aggregate(&self, level: GeoLevel) -> Result<PopulationTable> {
        if level.finer_than(self.level) {
            return Err(Error::InvalidLevel {
                from: self.level.to_string(),
                to: level.to_string(),
            });
        }
        if level == self.level {
            return Ok(self.clone());
        }
        let mut units: BTreeMap<GeoUnit, [u64; N_CELLS]> = BTreeMap::new();
        for geo in self.geo_units() {
            let target = geo.at_level(level).expect("coarser level");
            let acc = units.entry(target).or_insert([0; N_CELLS]);
            for (a, c) in acc.iter_mut().zip(self.units[&geo].iter()) {
                *a += c;
            }
        }
        Ok(PopulationTable {
            level,
            include_dc: self.include_dc,
            units,
        })
    }

    pub fn marginals(&self, dims: &[Dim]) -> Result<Vec<MarginalCount>> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("marginals need at least one dimension".into()));
        }
        let keep_age = dims.contains(&Dim::Age);
        let keep_gender = dims.contains(&Dim::Gender);
        let mut out = Vec::new();
        for geo in self.geo_units() {
            let counts = &self.units[&geo];
            let mut acc: BTreeMap<(Option<AgeBracket>, Option<Gender>), u64> = BTreeMap::new();
            for (i, &c) in counts.iter().enumerate() {
                let (a, g) = cell_from_index(i);
                let key = (keep_age.then_some(a), keep_gender.then_some(g));
                *acc.entry(key).or_default() += c;
            }
            out.extend(acc.into_iter().map(|((age, gender), count)| MarginalCount {
                geo,
                age,
                gender,
                count,
            }));
        }
        Ok(out)
    }

    /// Keep only the listed states. The result is a partial table.
    pub fn restrict_states(&self, states: &[State]) -> Result<PopulationTable> {
        if self.level != GeoLevel::State {
            return Err(Error::InvalidArgument("restrict_states needs a state-level table".into()));
        }
        let mut units = BTreeMap::new();
        for s in states {
            let geo = GeoUnit::State(*s);
            let counts = self
                .units
                .get(&geo)
                .ok_or_else(|| Error::InvalidArgument(format!("state {s} not in census")))?;
            units.insert(geo, *counts);
        }
        Ok(PopulationTable {
            level: self.level,
            include_dc: self.include_dc || states.contains(&State::DC),
            units,
        })
    }

    /// Rescale every stored cell so the stored total becomes `total`, using
    /// largest-remainder rounding so the result sums exactly.
    pub fn scaled_to(&self, total: u64) -> PopulationTable {
        let src = self.total();
        if src == 0 {
            return self.clone();
        }
        let keys: Vec<(GeoUnit, usize)> = self
            .units
            .keys()
            .flat_map(|g| (0..N_CELLS).map(move |i| (*g, i)))
            .collect();
        let exact: Vec<f64> = keys
            .iter()
            .map(|(g, i)| self.units[g][*i] as f64 * total as f64 / src as f64)
            .collect();
        let mut floors: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
        let mut short = total - floors.iter().sum::<u64>();
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in &order {
            if short == 0 {
                break;
            }
            floors[k] += 1;
            short -= 1;
        }
        let mut units = self.units.clone();
        for ((g, i), v) in keys.into_iter().zip(floors) {
            units.get_mut(&g).unwrap()[i] = v;
        }
        PopulationTable {
            level: self.level,
            include_dc: self.include_dc,
            units,
        }
    }

    /// Perturb each unit's age and gender composition with log-normal noise
    /// while keeping unit totals fixed (up to rounding). Produces synthetic
    /// worlds whose demographic mix varies more between units than the census.
    pub fn with_composition_noise(&self, age_sd: f64, gender_sd: f64, seed: u64) -> PopulationTable {
        let mut units = BTreeMap::new();
        for (k, (geo, counts)) in self.units.iter().enumerate() {
            let mut rng = substream(seed, "census-composition", k as u64);
            let total: u64 = counts.iter().sum();
            let age_noise = Normal::new(0.0, age_sd.max(0.0)).expect("finite sd");
            let gender_noise = Normal::new(0.0, gender_sd.max(0.0)).expect("finite sd");
            let a: Vec<f64> = (0..4).map(|_| age_noise.sample(&mut rng).exp()).collect();
            let g: Vec<f64> = (0..2).map(|_| gender_noise.sample(&mut rng).exp()).collect();
            let weights: Vec<f64> = (0..N_CELLS)
                .map(|i| counts[i] as f64 * a[i / 2] * g[i % 2])
                .collect();
            let wsum: f64 = weights.iter().sum();
            let mut new = [0u64; N_CELLS];
            let mut assigned = 0u64;
            for i in 0..N_CELLS - 1 {
                new[i] = (weights[i] / wsum * total as f64).round() as u64;
                assigned += new[i];
            }
            new[N_CELLS - 1] = total.saturating_sub(assigned);
            units.insert(*geo, new);
        }
        PopulationTable {
            level: self.level,
            include_dc: self.include_dc,
            units,
        }
    }
}

/// Read a state-level census CSV (`geo,age_bracket,gender,count`). Every
/// one of the 50 states must be present.
pub fn read_census<R: Read>(reader: R) -> Result<PopulationTable> {
    read_census_rows(reader, true)
}

/// Like [`read_census`] but accepts a subset of states, as written for a
/// restricted run.
pub fn read_partial_census<R: Read>(reader: R) -> Result<PopulationTable> {
    read_census_rows(reader, false)
}

fn read_census_rows<R: Read>(reader: R, require_all: bool) -> Result<PopulationTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    {
        let headers = rdr.headers()?;
        let expected = ["geo", "age_bracket", "gender", "count"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Schema {
                row: 1,
                message: format!("header must be {}", expected.join(",")),
            });
        }
    }
    let mut cells = Vec::new();
    let mut seen: BTreeMap<(GeoUnit, usize), usize> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<CensusRecord>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Schema {
            row,
            message: e.to_string(),
        })?;
        let schema = |message: String| Error::Schema { row, message };
        let state = State::from_code(&rec.geo).ok_or_else(|| schema(format!("unknown geo {:?}", rec.geo)))?;
        let age: AgeBracket = rec
            .age_bracket
            .parse()
            .map_err(|_| schema(format!("unknown bracket label {:?}", rec.age_bracket)))?;
        let gender: Gender = rec
            .gender
            .parse()
            .map_err(|_| schema(format!("unknown gender label {:?}", rec.gender)))?;
        if rec.count < 0 {
            return Err(schema(format!("negative count {}", rec.count)));
        }
        let geo = GeoUnit::State(state);
        if let Some(prev) = seen.insert((geo, cell_index(age, gender)), row) {
            return Err(schema(format!("duplicate cell {geo} {age} {gender} (first at row {prev})")));
        }
        cells.push(DemographicCell {
            geo,
            age,
            gender,
            count: rec.count as u64,
        });
    }
    let table = PopulationTable::from_cells(GeoLevel::State, cells, false)?;
    let last_row = seen.len() + 1;
    for s in State::analysis_set(false).filter(|_| require_all) {
        if !table.units.contains_key(&GeoUnit::State(s)) {
            return Err(Error::Schema {
                row: last_row,
                message: format!("missing state {s}"),
            });
        }
    }
    Ok(table)
}

pub fn load_census(path: impl AsRef<Path>) -> Result<PopulationTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_census(std::io::BufReader::new(file))
}

/// Write every stored cell in the census schema.
pub fn write_census<W: Write>(table: &PopulationTable, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["geo", "age_bracket", "gender", "count"])?;
    for c in table.cells() {
        w.write_record([c.geo.code(), c.age.label(), c.gender.label(), &c.count.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<census writer>", e))?;
    Ok(())
}

/// The bundled approximate 2021 state census (DC stored, excluded by default).
pub fn builtin_census() -> PopulationTable {
    read_census(BUILTIN_CENSUS.as_bytes()).expect("bundled census fixture is valid")
}

/// Bucket single-year-of-age rows (`geo,age,gender,count`, age like `37` or
/// `85+`) into the four brackets. Rows younger than `min_age` are dropped;
/// `min_age = 0` keeps every age.
pub fn bucket_single_year<R: Read>(reader: R, min_age: u32) -> Result<PopulationTable> {
    #[derive(Deserialize)]
    struct Row {
        geo: String,
        age: String,
        gender: String,
        count: i64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut acc: BTreeMap<GeoUnit, [u64; N_CELLS]> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Schema {
            row,
            message: e.to_string(),
        })?;
        let schema = |message: String| Error::Schema { row, message };
        let state = State::from_code(&rec.geo).ok_or_else(|| schema(format!("unknown geo {:?}", rec.geo)))?;
        let years: u32 = rec
            .age
            .trim_end_matches('+')
            .parse()
            .map_err(|_| schema(format!("bad age {:?}", rec.age)))?;
        let gender: Gender = rec.gender.parse().map_err(|_| schema(format!("bad gender {:?}", rec.gender)))?;
        if rec.count < 0 {
            return Err(schema(format!("negative count {}", rec.count)));
        }
        if years < min_age {
            continue;
        }
        acc.entry(GeoUnit::State(state)).or_insert([0; N_CELLS])
            [cell_index(AgeBracket::from_years(years), gender)] += rec.count as u64;
    }
    Ok(PopulationTable {
        level: GeoLevel::State,
        include_dc: false,
        units: acc,
    })
}
