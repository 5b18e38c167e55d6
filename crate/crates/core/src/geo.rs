//! Static Census Bureau geography: states (plus DC), divisions and regions,
//! with an approximate bounding rectangle per state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Northeast,
    Midwest,
    South,
    West,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Northeast, Region::Midwest, Region::South, Region::West];

    pub fn code(self) -> &'static str {
        match self {
            Region::Northeast => "northeast",
            Region::Midwest => "midwest",
            Region::South => "south",
            Region::West => "west",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Division {
    NewEngland,
    MiddleAtlantic,
    EastNorthCentral,
    WestNorthCentral,
    SouthAtlantic,
    EastSouthCentral,
    WestSouthCentral,
    Mountain,
    Pacific,
}

impl Division {
    pub const ALL: [Division; 9] = [
        Division::NewEngland,
        Division::MiddleAtlantic,
        Division::EastNorthCentral,
        Division::WestNorthCentral,
        Division::SouthAtlantic,
        Division::EastSouthCentral,
        Division::WestSouthCentral,
        Division::Mountain,
        Division::Pacific,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Division::NewEngland => "new_england",
            Division::MiddleAtlantic => "middle_atlantic",
            Division::EastNorthCentral => "east_north_central",
            Division::WestNorthCentral => "west_north_central",
            Division::SouthAtlantic => "south_atlantic",
            Division::EastSouthCentral => "east_south_central",
            Division::WestSouthCentral => "west_south_central",
            Division::Mountain => "mountain",
            Division::Pacific => "pacific",
        }
    }

    pub fn region(self) -> Region {
        use Division::*;
        match self {
            NewEngland | MiddleAtlantic => Region::Northeast,
            EastNorthCentral | WestNorthCentral => Region::Midwest,
            SouthAtlantic | EastSouthCentral | WestSouthCentral => Region::South,
            Mountain | Pacific => Region::West,
        }
    }
}

/// Axis-aligned lat/lon rectangle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl Rect {
    pub const fn new(south: f64, west: f64, north: f64, east: f64) -> Rect {
        Rect {
            south,
            west,
            north,
            east,
        }
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.south && lat <= self.north && lon >= self.west && lon <= self.east
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.south + self.north) / 2.0, (self.west + self.east) / 2.0)
    }
}

struct StateInfo {
    code: &'static str,
    name: &'static str,
    division: Division,
    rect: Rect,
}

const fn st(code: &'static str, name: &'static str, division: Division, r: [f64; 4]) -> StateInfo {
    StateInfo {
        code,
        name,
        division,
        rect: Rect::new(r[0], r[1], r[2], r[3]),
    }
}

use Division::*;

// Sorted by code; `State` indexes into this table.
static STATES: [StateInfo; 51] = [
    st("AK", "Alaska", Pacific, [55.0, -165.0, 70.5, -141.0]),
    st("AL", "Alabama", EastSouthCentral, [30.2, -88.5, 35.0, -84.9]),
    st("AR", "Arkansas", WestSouthCentral, [33.0, -94.6, 36.5, -89.6]),
    st("AZ", "Arizona", Mountain, [31.3, -114.8, 37.0, -109.0]),
    st("CA", "California", Pacific, [32.5, -124.4, 42.0, -114.1]),
    st("CO", "Colorado", Mountain, [37.0, -109.1, 41.0, -102.0]),
    st("CT", "Connecticut", NewEngland, [41.0, -73.7, 42.1, -71.8]),
    st("DC", "District of Columbia", SouthAtlantic, [38.79, -77.12, 38.99, -76.91]),
    st("DE", "Delaware", SouthAtlantic, [38.45, -75.8, 39.8, -75.05]),
    st("FL", "Florida", SouthAtlantic, [24.5, -87.6, 31.0, -80.0]),
    st("GA", "Georgia", SouthAtlantic, [30.4, -85.6, 35.0, -81.0]),
    st("HI", "Hawaii", Pacific, [18.9, -160.3, 22.2, -154.8]),
    st("IA", "Iowa", WestNorthCentral, [40.4, -96.6, 43.5, -90.1]),
    st("ID", "Idaho", Mountain, [42.0, -117.2, 49.0, -111.0]),
    st("IL", "Illinois", EastNorthCentral, [37.0, -91.5, 42.5, -87.5]),
    st("IN", "Indiana", EastNorthCentral, [37.8, -88.1, 41.8, -84.8]),
    st("KS", "Kansas", WestNorthCentral, [37.0, -102.05, 40.0, -94.6]),
    st("KY", "Kentucky", EastSouthCentral, [36.5, -89.6, 39.1, -81.96]),
    st("LA", "Louisiana", WestSouthCentral, [29.0, -94.0, 33.0, -89.0]),
    st("MA", "Massachusetts", NewEngland, [41.2, -73.5, 42.9, -69.9]),
    st("MD", "Maryland", SouthAtlantic, [37.9, -79.5, 39.7, -75.05]),
    st("ME", "Maine", NewEngland, [43.1, -71.1, 47.5, -66.9]),
    st("MI", "Michigan", EastNorthCentral, [41.7, -90.4, 48.3, -82.4]),
    st("MN", "Minnesota", WestNorthCentral, [43.5, -97.2, 49.4, -89.5]),
    st("MO", "Missouri", WestNorthCentral, [36.0, -95.8, 40.6, -89.1]),
    st("MS", "Mississippi", EastSouthCentral, [30.2, -91.7, 35.0, -88.1]),
    st("MT", "Montana", Mountain, [44.4, -116.05, 49.0, -104.0]),
    st("NC", "North Carolina", SouthAtlantic, [33.8, -84.3, 36.6, -75.5]),
    st("ND", "North Dakota", WestNorthCentral, [45.9, -104.05, 49.0, -96.55]),
    st("NE", "Nebraska", WestNorthCentral, [40.0, -104.05, 43.0, -95.3]),
    st("NH", "New Hampshire", NewEngland, [42.7, -72.6, 45.3, -70.6]),
    st("NJ", "New Jersey", MiddleAtlantic, [38.9, -75.6, 41.4, -73.9]),
    st("NM", "New Mexico", Mountain, [31.3, -109.05, 37.0, -103.0]),
    st("NV", "Nevada", Mountain, [35.0, -120.0, 42.0, -114.0]),
    st("NY", "New York", MiddleAtlantic, [40.5, -79.8, 45.0, -71.8]),
    st("OH", "Ohio", EastNorthCentral, [38.4, -84.8, 42.0, -80.5]),
    st("OK", "Oklahoma", WestSouthCentral, [33.6, -103.0, 37.0, -94.4]),
    st("OR", "Oregon", Pacific, [42.0, -124.6, 46.3, -116.5]),
    st("PA", "Pennsylvania", MiddleAtlantic, [39.7, -80.5, 42.3, -74.7]),
    st("RI", "Rhode Island", NewEngland, [41.1, -71.9, 42.0, -71.1]),
    st("SC", "South Carolina", SouthAtlantic, [32.0, -83.4, 35.2, -78.5]),
    st("SD", "South Dakota", WestNorthCentral, [42.5, -104.06, 45.95, -96.4]),
    st("TN", "Tennessee", EastSouthCentral, [35.0, -90.3, 36.7, -81.6]),
    st("TX", "Texas", WestSouthCentral, [25.8, -106.65, 36.5, -93.5]),
    st("UT", "Utah", Mountain, [37.0, -114.05, 42.0, -109.05]),
    st("VA", "Virginia", SouthAtlantic, [36.5, -83.7, 39.5, -75.2]),
    st("VT", "Vermont", NewEngland, [42.7, -73.45, 45.0, -71.5]),
    st("WA", "Washington", Pacific, [45.5, -124.8, 49.0, -116.9]),
    st("WI", "Wisconsin", EastNorthCentral, [42.5, -92.9, 47.1, -86.8]),
    st("WV", "West Virginia", SouthAtlantic, [37.2, -82.65, 40.65, -77.7]),
    st("WY", "Wyoming", Mountain, [41.0, -111.05, 45.0, -104.05]),
];

/// A US state or the District of Columbia.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State(u8);

impl State {
    pub const COUNT: usize = 51;
    pub const DC: State = State(7);

    /// All 51 units (50 states plus DC), in code order.
    pub fn all() -> impl Iterator<Item = State> {
        (0..Self::COUNT as u8).map(State)
    }

    /// 50 states, DC excluded unless `include_dc`.
    pub fn analysis_set(include_dc: bool) -> impl Iterator<Item = State> {
        Self::all().filter(move |s| include_dc || !s.is_dc())
    }

    pub fn from_code(code: &str) -> Option<State> {
        STATES
            .binary_search_by(|s| s.code.cmp(code))
            .ok()
            .map(|i| State(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> State {
        assert!(i < Self::COUNT);
        State(i as u8)
    }

    fn info(self) -> &'static StateInfo {
        &STATES[self.0 as usize]
    }

    pub fn code(self) -> &'static str {
        self.info().code
    }

    pub fn name(self) -> &'static str {
        self.info().name
    }

    pub fn division(self) -> Division {
        self.info().division
    }

    pub fn region(self) -> Region {
        self.division().region()
    }

    pub fn rect(self) -> Rect {
        self.info().rect
    }

    pub fn is_dc(self) -> bool {
        self == State::DC
    }

    /// The `k` states whose rectangle centres are closest to this one's.
    pub fn nearest(self, k: usize) -> Vec<State> {
        let (la, lo) = self.rect().center();
        let mut others: Vec<(f64, State)> = State::all()
            .filter(|s| *s != self)
            .map(|s| {
                let (la2, lo2) = s.rect().center();
                let dlon = (lo2 - lo) * ((la + la2) / 2.0).to_radians().cos();
                ((la2 - la).powi(2) + dlon.powi(2), s)
            })
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others.into_iter().take(k).map(|(_, s)| s).collect()
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State({})", self.code())
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for State {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        State::from_code(s).ok_or_else(|| Error::InvalidArgument(format!("unknown state {s:?}")))
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoLevel {
    State,
    Division,
    Region,
}

impl GeoLevel {
    fn rank(self) -> u8 {
        match self {
            GeoLevel::State => 0,
            GeoLevel::Division => 1,
            GeoLevel::Region => 2,
        }
    }

    /// True if `self` is strictly finer than `other`.
    pub fn finer_than(self, other: GeoLevel) -> bool {
        self.rank() < other.rank()
    }
}

impl fmt::Display for GeoLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeoLevel::State => "state",
            GeoLevel::Division => "division",
            GeoLevel::Region => "region",
        })
    }
}

impl FromStr for GeoLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state" => Ok(GeoLevel::State),
            "division" => Ok(GeoLevel::Division),
            "region" => Ok(GeoLevel::Region),
            _ => Err(Error::InvalidArgument(format!("unknown geo level {s:?}"))),
        }
    }
}

/// A geographic unit at any level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GeoUnit {
    State(State),
    Division(Division),
    Region(Region),
}

impl GeoUnit {
    pub fn level(self) -> GeoLevel {
        match self {
            GeoUnit::State(_) => GeoLevel::State,
            GeoUnit::Division(_) => GeoLevel::Division,
            GeoUnit::Region(_) => GeoLevel::Region,
        }
    }

    /// Map this unit to a coarser (or equal) level. `None` when going finer.
    pub fn at_level(self, level: GeoLevel) -> Option<GeoUnit> {
        match (self, level) {
            (u, l) if u.level() == l => Some(u),
            (GeoUnit::State(s), GeoLevel::Division) => Some(GeoUnit::Division(s.division())),
            (GeoUnit::State(s), GeoLevel::Region) => Some(GeoUnit::Region(s.region())),
            (GeoUnit::Division(d), GeoLevel::Region) => Some(GeoUnit::Region(d.region())),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            GeoUnit::State(s) => s.code(),
            GeoUnit::Division(d) => d.code(),
            GeoUnit::Region(r) => r.code(),
        }
    }
}

impl fmt::Display for GeoUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for GeoUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(st) = State::from_code(s) {
            return Ok(GeoUnit::State(st));
        }
        if let Some(d) = Division::ALL.into_iter().find(|d| d.code() == s) {
            return Ok(GeoUnit::Division(d));
        }
        if let Some(r) = Region::ALL.into_iter().find(|r| r.code() == s) {
            return Ok(GeoUnit::Region(r));
        }
        Err(Error::InvalidArgument(format!("unknown geo unit {s:?}")))
    }
}

impl Serialize for GeoUnit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for GeoUnit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
