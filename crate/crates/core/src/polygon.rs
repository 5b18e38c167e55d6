//! Planar polygons in (lat, lon) degrees, with GeoJSON input.

use serde_json::Value;

use crate::error::{Error, Result};

const BUILTIN_CONUS: &str = include_str!("../fixtures/conus.geojson");

/// A closed ring of (lat, lon) vertices. The closing vertex is not repeated.
pub type Ring = Vec<(f64, f64)>;

/// One outer ring with optional holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub outer: Ring,
    pub holes: Vec<Ring>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub id: String,
    pub parts: Vec<Part>,
}

/// Bounding rectangle as (min_lat, min_lon, max_lat, max_lon).
pub type Extent = (f64, f64, f64, f64);

fn normalize_ring(mut ring: Ring) -> Ring {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

fn signed_area(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let (y1, x1) = ring[i];
        let (y2, x2) = ring[(i + 1) % n];
        s += x1 * y2 - x2 * y1;
    }
    s / 2.0
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn check_ring(ring: &[(f64, f64)]) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::Geometry(format!("ring has {} vertices, need at least 3", ring.len())));
    }
    if ring.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::Geometry("ring has a non-finite coordinate".into()));
    }
    if signed_area(ring).abs() < 1e-12 {
        return Err(Error::Geometry("ring has zero area".into()));
    }
    let n = ring.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return Err(Error::Geometry(format!("ring self-intersects at edges {i} and {j}")));
            }
        }
    }
    Ok(())
}

/// Clip a ring to an axis-aligned box and return the absolute clipped area.
fn clipped_area(ring: &[(f64, f64)], s: f64, w: f64, n: f64, e: f64) -> f64 {
    // Sutherland-Hodgman against the four half-planes; valid for concave
    // subjects since the clip region is convex.
    let mut pts: Vec<(f64, f64)> = ring.to_vec();
    let edges: [(usize, f64, bool); 4] = [(0, s, true), (0, n, false), (1, w, true), (1, e, false)];
    for (axis, bound, keep_ge) in edges {
        if pts.is_empty() {
            return 0.0;
        }
        let inside = |p: &(f64, f64)| {
            let v = if axis == 0 { p.0 } else { p.1 };
            if keep_ge {
                v >= bound
            } else {
                v <= bound
            }
        };
        let mut out = Vec::with_capacity(pts.len() + 4);
        for i in 0..pts.len() {
            let cur = pts[i];
            let prev = pts[(i + pts.len() - 1) % pts.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let (a0, a1) = if axis == 0 { (prev.0, cur.0) } else { (prev.1, cur.1) };
                let t = (bound - a0) / (a1 - a0);
                out.push((prev.0 + t * (cur.0 - prev.0), prev.1 + t * (cur.1 - prev.1)));
            }
            if ci {
                out.push(cur);
            }
        }
        pts = out;
    }
    if pts.len() < 3 {
        return 0.0;
    }
    signed_area(&pts).abs()
}

fn ring_contains(ring: &[(f64, f64)], lat: f64, lon: f64) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (yi, xi) = ring[i];
        let (yj, xj) = ring[j];
        if (yi > lat) != (yj > lat) && lon < (xj - xi) * (lat - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

impl Polygon {
    /// Treat every ring as a separate outer boundary.
    pub fn from_rings(id: impl Into<String>, rings: Vec<Ring>) -> Result<Polygon> {
        let parts = rings
            .into_iter()
            .map(|r| Part {
                outer: normalize_ring(r),
                holes: Vec::new(),
            })
            .collect();
        let p = Polygon { id: id.into(), parts };
        p.validate()?;
        Ok(p)
    }

    /// Closed, non-degenerate, non-self-intersecting rings.
    pub fn validate(&self) -> Result<()> {
        if self.parts.is_empty() {
            return Err(Error::Geometry("polygon has no rings".into()));
        }
        for part in &self.parts {
            check_ring(&part.outer)?;
            for h in &part.holes {
                check_ring(h)?;
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Extent {
        let mut e = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (lat, lon) in self.parts.iter().flat_map(|p| p.outer.iter()) {
            e.0 = e.0.min(*lat);
            e.1 = e.1.min(*lon);
            e.2 = e.2.max(*lat);
            e.3 = e.3.max(*lon);
        }
        e
    }

    /// Area in square degrees.
    pub fn area(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| signed_area(&p.outer).abs() - p.holes.iter().map(|h| signed_area(h).abs()).sum::<f64>())
            .sum()
    }

    /// Area (square degrees) of the intersection with a box.
    pub fn intersection_area(&self, south: f64, west: f64, north: f64, east: f64) -> f64 {
        self.parts
            .iter()
            .map(|p| {
                clipped_area(&p.outer, south, west, north, east)
                    - p.holes.iter().map(|h| clipped_area(h, south, west, north, east)).sum::<f64>()
            })
            .sum()
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        self.parts.iter().any(|p| {
            ring_contains(&p.outer, lat, lon) && !p.holes.iter().any(|h| ring_contains(h, lat, lon))
        })
    }

    /// Parse a GeoJSON Feature, FeatureCollection, Polygon or MultiPolygon.
    /// Coordinates are `[lon, lat]` as GeoJSON requires.
    pub fn from_geojson(text: &str, id: Option<&str>) -> Result<Polygon> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Geometry(format!("invalid GeoJSON: {e}")))?;
        let mut parts = Vec::new();
        collect_parts(&v, &mut parts)?;
        let name = id
            .map(str::to_owned)
            .or_else(|| v.pointer("/properties/name").and_then(Value::as_str).map(str::to_owned))
            .unwrap_or_else(|| "polygon".to_owned());
        let p = Polygon { id: name, parts };
        p.validate()?;
        Ok(p)
    }
}

fn parse_ring(v: &Value) -> Result<Ring> {
    let arr = v.as_array().ok_or_else(|| Error::Geometry("ring is not an array".into()))?;
    let ring = arr
        .iter()
        .map(|pt| match pt.as_array().map(|a| a.as_slice()) {
            Some([lon, lat, ..]) => match (lat.as_f64(), lon.as_f64()) {
                (Some(lat), Some(lon)) => Ok((lat, lon)),
                _ => Err(Error::Geometry("non-numeric coordinate".into())),
            },
            _ => Err(Error::Geometry("position needs two numbers".into())),
        })
        .collect::<Result<Ring>>()?;
    Ok(normalize_ring(ring))
}

fn parse_polygon_coords(v: &Value) -> Result<Part> {
    let rings = v.as_array().ok_or_else(|| Error::Geometry("polygon coordinates are not an array".into()))?;
    let mut it = rings.iter();
    let outer = parse_ring(it.next().ok_or_else(|| Error::Geometry("polygon has no rings".into()))?)?;
    let holes = it.map(parse_ring).collect::<Result<Vec<_>>>()?;
    Ok(Part { outer, holes })
}

fn collect_parts(v: &Value, out: &mut Vec<Part>) -> Result<()> {
    match v.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => {
            for f in v.get("features").and_then(Value::as_array).into_iter().flatten() {
                collect_parts(f, out)?;
            }
        }
        Some("Feature") => {
            let g = v.get("geometry").ok_or_else(|| Error::Geometry("feature without geometry".into()))?;
            collect_parts(g, out)?;
        }
        Some("Polygon") => out.push(parse_polygon_coords(&v["coordinates"])?),
        Some("MultiPolygon") => {
            for p in v["coordinates"].as_array().into_iter().flatten() {
                out.push(parse_polygon_coords(p)?);
            }
        }
        other => return Err(Error::Geometry(format!("unsupported GeoJSON type {other:?}"))),
    }
    Ok(())
}

/// Generalised outline of the contiguous United States (159 vertices).
pub fn builtin_conus() -> Polygon {
    Polygon::from_geojson(BUILTIN_CONUS, Some("conus")).expect("bundled outline is valid")
}

/// An axis-aligned rectangle as a polygon, for tests and quick studies.
pub fn rectangle(id: &str, south: f64, west: f64, north: f64, east: f64) -> Result<Polygon> {
    Polygon::from_rings(id, vec![vec![(south, west), (north, west), (north, east), (south, east)]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_area_and_clip() {
        let p = rectangle("sq", 0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((p.area() - 1.0).abs() < 1e-12);
        assert!((p.intersection_area(0.5, 0.5, 1.5, 1.5) - 0.25).abs() < 1e-12);
        assert_eq!(p.intersection_area(1.0, 0.0, 2.0, 1.0), 0.0);
        assert!(p.contains(0.5, 0.5));
        assert!(!p.contains(1.5, 0.5));
    }

    #[test]
    fn concave_clip_matches_hand_area() {
        // L-shape: unit square with the top-right quarter removed
        let l = Polygon::from_rings(
            "l",
            vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0)]],
        )
        .unwrap();
        assert!((l.area() - 0.75).abs() < 1e-12);
        assert!(l.intersection_area(0.6, 0.6, 0.9, 0.9).abs() < 1e-12);
        assert!((l.intersection_area(0.25, 0.25, 0.75, 0.75) - 0.1875).abs() < 1e-12);
    }

    #[test]
    fn holes_subtract() {
        let geo = r#"{"type":"Polygon","coordinates":[
            [[0,0],[4,0],[4,4],[0,4],[0,0]],
            [[1,1],[3,1],[3,3],[1,3],[1,1]]]}"#;
        let p = Polygon::from_geojson(geo, None).unwrap();
        assert!((p.area() - 12.0).abs() < 1e-12);
        assert!(!p.contains(2.0, 2.0));
        assert!(p.contains(0.5, 0.5));
        assert!(p.intersection_area(1.5, 1.5, 2.5, 2.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_crossing_rings_rejected() {
        assert!(matches!(
            Polygon::from_rings("line", vec![vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]]),
            Err(Error::Geometry(_))
        ));
        let bowtie = vec![(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(matches!(Polygon::from_rings("bow", vec![bowtie]), Err(Error::Geometry(_))));
        assert!(Polygon::from_geojson("{\"type\":\"Point\"}", None).is_err());
    }

    #[test]
    fn builtin_outline_loads() {
        let p = builtin_conus();
        assert_eq!(p.parts.len(), 1);
        assert_eq!(p.parts[0].outer.len(), 159);
        let (s, w, n, e) = p.extent();
        assert!(s > 24.0 && s < 25.5 && n > 49.0 && n < 49.5);
        assert!(w < -124.0 && e > -67.5);
        // Kansas and Chicago inside, Toronto and the Gulf of Mexico outside
        assert!(p.contains(38.5, -98.0));
        assert!(p.contains(41.85, -87.7));
        assert!(!p.contains(43.7, -79.4));
        assert!(!p.contains(26.0, -90.0));
    }
}
