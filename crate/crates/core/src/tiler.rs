//! Grid of small query boxes covering a country outline.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polygon::Polygon;

pub const MILES_PER_DEG_LAT: f64 = 69.0;
pub const MAX_SIDE_MILES: f64 = 25.0;
pub const DEFAULT_SPACING_DEG: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BoundingBox {
    pub fn height_miles(&self) -> f64 {
        (self.north - self.south) * MILES_PER_DEG_LAT
    }

    pub fn width_miles(&self) -> f64 {
        let mid = (self.north + self.south) / 2.0;
        (self.east - self.west) * MILES_PER_DEG_LAT * mid.to_radians().cos()
    }

    /// Inclusive south/west, exclusive north/east.
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.south && lat < self.north && lon >= self.west && lon < self.east
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.south + self.north) / 2.0, (self.west + self.east) / 2.0)
    }
}

/// How far border boxes are shifted along each diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderShift {
    #[default]
    Half,
    Full,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileOptions {
    pub spacing_deg: f64,
    pub shift: BorderShift,
    pub max_side_miles: f64,
}

impl Default for TileOptions {
    fn default() -> Self {
        TileOptions {
            spacing_deg: DEFAULT_SPACING_DEG,
            shift: BorderShift::Half,
            max_side_miles: MAX_SIDE_MILES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TileSet {
    boxes: Vec<BoundingBox>,
    spacing_deg: f64,
    source_polygon_id: String,
    /// Number of boxes on the un-shifted grid (the rest are border copies).
    base_count: usize,
    index: HashMap<(i64, i64), Vec<u32>>,
}

impl PartialEq for TileSet {
    fn eq(&self, other: &Self) -> bool {
        self.boxes == other.boxes && self.spacing_deg == other.spacing_deg && self.source_polygon_id == other.source_polygon_id
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

impl TileSet {
    pub fn new(mut boxes: Vec<BoundingBox>, spacing_deg: f64, source_polygon_id: impl Into<String>) -> Result<TileSet> {
        if !(spacing_deg.is_finite() && spacing_deg > 0.0) {
            return Err(Error::InvalidArgument(format!("spacing {spacing_deg} must be positive")));
        }
        for b in &boxes {
            if !(b.north > b.south && b.east > b.west) {
                return Err(Error::Geometry(format!("inverted box {b:?}")));
            }
        }
        boxes.sort_by(|a, b| {
            a.south
                .total_cmp(&b.south)
                .then(a.west.total_cmp(&b.west))
                .then(a.north.total_cmp(&b.north))
                .then(a.east.total_cmp(&b.east))
        });
        boxes.dedup();
        let base_count = boxes.len();
        let mut t = TileSet {
            boxes,
            spacing_deg,
            source_polygon_id: source_polygon_id.into(),
            base_count,
            index: HashMap::new(),
        };
        t.build_index();
        Ok(t)
    }

    fn cell(&self, lat: f64, lon: f64) -> (i64, i64) {
        ((lat / self.spacing_deg).floor() as i64, (lon / self.spacing_deg).floor() as i64)
    }

    fn build_index(&mut self) {
        let mut index: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (k, b) in self.boxes.iter().enumerate() {
            let (r0, c0) = self.cell(b.south, b.west);
            let (r1, c1) = self.cell(b.north, b.east);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.entry((r, c)).or_default().push(k as u32);
                }
            }
        }
        self.index = index;
    }

    pub fn boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn spacing_deg(&self) -> f64 {
        self.spacing_deg
    }

    pub fn source_polygon_id(&self) -> &str {
        &self.source_polygon_id
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    /// True when the point lies in at least one box.
    pub fn covers(&self, lat: f64, lon: f64) -> bool {
        if !(lat.is_finite() && lon.is_finite()) {
            return false;
        }
        self.index
            .get(&self.cell(lat, lon))
            .is_some_and(|ids| ids.iter().any(|&k| self.boxes[k as usize].contains(lat, lon)))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        for b in &self.boxes {
            w.serialize(b)?;
        }
        w.flush().map_err(|e| Error::io("<tiles writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, spacing_deg: f64, source_polygon_id: &str) -> Result<TileSet> {
        let mut rdr = csv::Reader::from_reader(reader);
        let boxes = rdr.deserialize().collect::<std::result::Result<Vec<BoundingBox>, _>>()?;
        TileSet::new(boxes, spacing_deg, source_polygon_id)
    }
}

/// Check that boxes of side `spacing` stay within `max_miles` from the
/// southernmost latitude (where longitude degrees are widest) up.
pub fn check_spacing(spacing: f64, lowest_lat: f64, max_miles: f64) -> Result<()> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing {spacing} must be positive")));
    }
    let height = spacing * MILES_PER_DEG_LAT;
    let width = spacing * MILES_PER_DEG_LAT * lowest_lat.abs().min(90.0).to_radians().cos();
    if height > max_miles || width > max_miles {
        return Err(Error::Constraint(format!(
            "spacing {spacing} deg gives {height:.1} x {width:.1} mile boxes, limit {max_miles}"
        )));
    }
    Ok(())
}

/// Cover `polygon` with boxes of side `spacing_deg` centred on grid points
/// that are integer multiples of the spacing.
///
/// A grid box is kept when it overlaps the polygon with positive area. Each
/// kept box with a rejected 4-neighbour also contributes two copies shifted
/// up and down the south-west/north-east diagonal (by half or a full
/// spacing in both axes) when they overlap the polygon.
pub fn tile_polygon(polygon: &Polygon, opts: &TileOptions) -> Result<TileSet> {
    polygon.validate()?;
    let s = opts.spacing_deg;
    let (min_lat, min_lon, max_lat, max_lon) = polygon.extent();
    let lowest = if min_lat <= 0.0 && max_lat >= 0.0 { 0.0 } else { min_lat.abs().min(max_lat.abs()) };
    check_spacing(s, lowest, opts.max_side_miles)?;

    let h = s / 2.0;
    // Keys are centres in units of half a spacing.
    let box_at = |ky: i64, kx: i64| {
        let (cy, cx) = (ky as f64 * h, kx as f64 * h);
        BoundingBox {
            south: round9(cy - h),
            west: round9(cx - h),
            north: round9(cy + h),
            east: round9(cx + h),
        }
    };
    let min_area = 1e-9 * s * s;
    let overlaps = |b: &BoundingBox| polygon.intersection_area(b.south, b.west, b.north, b.east) > min_area;

    let i0 = ((min_lat - h) / s).ceil() as i64;
    let i1 = ((max_lat + h) / s).floor() as i64;
    let j0 = ((min_lon - h) / s).ceil() as i64;
    let j1 = ((max_lon + h) / s).floor() as i64;

    let mut kept: BTreeSet<(i64, i64)> = BTreeSet::new();
    for i in i0..=i1 {
        for j in j0..=j1 {
            if overlaps(&box_at(2 * i, 2 * j)) {
                kept.insert((2 * i, 2 * j));
            }
        }
    }
    let base = kept.len();
    if base == 0 {
        return Err(Error::Geometry("no grid box overlaps the polygon".into()));
    }

    let step = match opts.shift {
        BorderShift::Half => Some(1),
        BorderShift::Full => Some(2),
        BorderShift::None => None,
    };
    let mut all = kept.clone();
    if let Some(d) = step {
        for &(ky, kx) in &kept {
            let border = [(2, 0), (-2, 0), (0, 2), (0, -2)]
                .iter()
                .any(|(dy, dx)| !kept.contains(&(ky + dy, kx + dx)));
            if !border {
                continue;
            }
            for (dy, dx) in [(d, d), (-d, -d)] {
                let key = (ky + dy, kx + dx);
                if !all.contains(&key) && overlaps(&box_at(key.0, key.1)) {
                    all.insert(key);
                }
            }
        }
    }

    let boxes: Vec<BoundingBox> = all.iter().map(|&(ky, kx)| box_at(ky, kx)).collect();
    for b in &boxes {
        if b.height_miles() > opts.max_side_miles + 1e-9 || b.width_miles() > opts.max_side_miles + 1e-9 {
            return Err(Error::Constraint(format!("box {b:?} exceeds {} miles", opts.max_side_miles)));
        }
    }
    let mut t = TileSet::new(boxes, s, polygon.id.clone())?;
    t.base_count = base;
    Ok(t)
}
