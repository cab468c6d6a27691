//! Coordinates, projections, polygons and a minimal GeoJSON reader.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// `[x, y]`; longitude/latitude in degrees for geographic data.
pub type Point = [f64; 2];

/// Mean earth radius in km (spherical approximation).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// km per degree of latitude on the spherical earth.
pub fn km_per_degree() -> f64 {
    EARTH_RADIUS_KM * std::f64::consts::PI / 180.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSystem {
    /// Coordinates already live in a planar length unit.
    #[default]
    Planar,
    /// Longitude/latitude in degrees.
    Geographic,
}

/// Map from native coordinates to planar km.
///
/// Geographic coordinates use a local equirectangular projection about a
/// reference latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub system: CoordinateSystem,
    /// Reference latitude in degrees (ignored for planar data).
    pub reference_lat: f64,
}

impl Projection {
    pub fn planar() -> Self {
        Projection { system: CoordinateSystem::Planar, reference_lat: 0.0 }
    }

    pub fn geographic(reference_lat: f64) -> Self {
        Projection { system: CoordinateSystem::Geographic, reference_lat }
    }

    /// Projection suited to a set of points: planar passthrough, or
    /// equirectangular about the mid latitude of the points.
    pub fn for_points(system: CoordinateSystem, points: &[Point]) -> Self {
        match system {
            CoordinateSystem::Planar => Self::planar(),
            CoordinateSystem::Geographic => {
                let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
                Self::geographic(if lo.is_finite() { 0.5 * (lo + hi) } else { 0.0 })
            }
        }
    }

    #[inline]
    pub fn project(&self, p: Point) -> Point {
        match self.system {
            CoordinateSystem::Planar => p,
            CoordinateSystem::Geographic => {
                let k = km_per_degree();
                [p[0] * k * self.reference_lat.to_radians().cos(), p[1] * k]
            }
        }
    }

    pub fn project_all(&self, points: &[Point]) -> Vec<Point> {
        points.iter().map(|p| self.project(*p)).collect()
    }
}

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    squared_distance(a, b).sqrt()
}

#[inline]
pub fn squared_distance(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Polygon with an exterior ring and optional holes (even–odd rule).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub rings: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn rectangle(min: Point, max: Point) -> Self {
        Polygon { rings: vec![vec![min, [max[0], min[1]], max, [min[0], max[1]], min]] }
    }

    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            if ring_crossings(ring, p) % 2 == 1 {
                inside = !inside;
            }
        }
        inside
    }

    pub fn bbox(&self) -> Option<(Point, Point)> {
        bbox(self.rings.iter().flatten().copied())
    }
}

fn ring_crossings(ring: &[Point], p: Point) -> usize {
    let n = ring.len();
    if n < 3 {
        return 0;
    }
    let mut crossings = 0;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                crossings += 1;
            }
        }
        j = i;
    }
    crossings
}

pub(crate) fn bbox(points: impl Iterator<Item = Point>) -> Option<(Point, Point)> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        lo = [lo[0].min(p[0]), lo[1].min(p[1])];
        hi = [hi[0].max(p[0]), hi[1].max(p[1])];
    }
    (lo[0].is_finite() && hi[0] >= lo[0] && hi[1] >= lo[1]).then_some((lo, hi))
}

/// A named region made of one or more polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub polygons: Vec<Polygon>,
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    pub fn bbox(&self) -> Option<(Point, Point)> {
        bbox(self.polygons.iter().flat_map(|p| p.rings.iter().flatten().copied()))
    }
}

/// Read every polygon feature of a GeoJSON file. The region name comes from
/// the `name_property` of each feature (string or number), falling back to the
/// feature index.
pub fn read_geojson_regions(path: &Path, name_property: &str) -> Result<Vec<Region>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    let features: Vec<&Value> = match value.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => value
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::schema(path, "FeatureCollection without a features array"))?
            .iter()
            .collect(),
        Some("Feature") => vec![&value],
        Some("Polygon") | Some("MultiPolygon") => vec![&value],
        other => return Err(Error::schema(path, format!("unsupported GeoJSON type {other:?}"))),
    };

    let mut regions = Vec::with_capacity(features.len());
    for (i, feature) in features.into_iter().enumerate() {
        let (geometry, props) = match feature.get("type").and_then(Value::as_str) {
            Some("Feature") => (
                feature.get("geometry").ok_or_else(|| Error::schema(path, format!("feature {i} has no geometry")))?,
                feature.get("properties"),
            ),
            _ => (feature, None),
        };
        let name = props
            .and_then(|p| p.get(name_property))
            .map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_else(|| i.to_string());
        let polygons = parse_geometry(geometry).map_err(|m| Error::schema(path, format!("feature {i}: {m}")))?;
        regions.push(Region { name, polygons });
    }
    Ok(regions)
}

fn parse_geometry(geometry: &Value) -> std::result::Result<Vec<Polygon>, String> {
    let coords = geometry.get("coordinates").ok_or("geometry has no coordinates")?;
    match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => Ok(vec![parse_polygon(coords)?]),
        Some("MultiPolygon") => coords.as_array().ok_or("MultiPolygon coordinates must be an array")?.iter().map(parse_polygon).collect(),
        other => Err(format!("unsupported geometry type {other:?}")),
    }
}

fn parse_polygon(coords: &Value) -> std::result::Result<Polygon, String> {
    let rings = coords
        .as_array()
        .ok_or("polygon coordinates must be an array of rings")?
        .iter()
        .map(|ring| {
            ring.as_array()
                .ok_or("ring must be an array of positions")?
                .iter()
                .map(|pos| {
                    let xy = pos.as_array().ok_or("position must be an array")?;
                    match (xy.first().and_then(Value::as_f64), xy.get(1).and_then(Value::as_f64)) {
                        (Some(x), Some(y)) => Ok([x, y]),
                        _ => Err("position needs two numbers".to_string()),
                    }
                })
                .collect::<std::result::Result<Vec<Point>, String>>()
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    if rings.is_empty() {
        return Err("polygon without rings".into());
    }
    Ok(Polygon { rings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_with_hole() {
        let mut poly = Polygon::rectangle([0.0, 0.0], [4.0, 4.0]);
        poly.rings.push(Polygon::rectangle([1.0, 1.0], [2.0, 2.0]).rings.remove(0));
        assert!(poly.contains([0.5, 0.5]));
        assert!(!poly.contains([1.5, 1.5]));
        assert!(poly.contains([3.0, 3.0]));
        assert!(!poly.contains([5.0, 1.0]));
    }

    #[test]
    fn equirectangular_scaling() {
        let proj = Projection::geographic(60.0);
        let a = proj.project([10.0, 60.0]);
        let b = proj.project([11.0, 60.0]);
        assert!((distance(a, b) - 0.5 * km_per_degree()).abs() < 1e-9);
    }

    #[test]
    fn reads_feature_collection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.geojson");
        std::fs::write(
            &path,
            r#"{"type":"FeatureCollection","features":[
              {"type":"Feature","properties":{"district":"A"},
               "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
              {"type":"Feature","properties":{"district":7},
               "geometry":{"type":"MultiPolygon","coordinates":[[[[1,0],[2,0],[2,1],[1,1],[1,0]]]]}}]}"#,
        )
        .unwrap();
        let regions = read_geojson_regions(&path, "district").unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].name, "A");
        assert_eq!(regions[1].name, "7");
        assert!(regions[1].contains([1.5, 0.5]));
    }
}
