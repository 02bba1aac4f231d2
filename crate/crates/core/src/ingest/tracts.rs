//! Census tract geometry: GeoJSON loading, centroids, point-in-polygon.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::util::{read_to_string, write_bytes};
use crate::{Error, Result};

const KM2_PER_SQMI: f64 = 2.589_988_110_336;
const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// A single polygon: one exterior ring plus optional holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<LatLon>,
    pub holes: Vec<Vec<LatLon>>,
}

impl Polygon {
    pub fn new(exterior: Vec<LatLon>) -> Self {
        Self {
            exterior,
            holes: Vec::new(),
        }
    }

    pub fn contains(&self, p: LatLon) -> bool {
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TractGeometry {
    pub tract_id: String,
    pub centroid: LatLon,
    /// Parts of a (multi)polygon; empty when only a centroid is known.
    pub polygons: Vec<Polygon>,
    pub population: u64,
    pub area_sqmi: f64,
}

impl TractGeometry {
    pub fn contains(&self, p: LatLon) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    /// Axis-aligned bounds as (min_lat, min_lon, max_lat, max_lon).
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self.polygons.iter().flat_map(|p| p.exterior.iter());
        let first = it.next()?;
        let init = (first.lat, first.lon, first.lat, first.lon);
        Some(it.fold(init, |(a, b, c, d), p| {
            (a.min(p.lat), b.min(p.lon), c.max(p.lat), d.max(p.lon))
        }))
    }
}

/// Even-odd ray casting in the (lon, lat) plane.
fn ring_contains(ring: &[LatLon], p: LatLon) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (ring[i].lon, ring[i].lat);
        let (xj, yj) = (ring[j].lon, ring[j].lat);
        if (yi > p.lat) != (yj > p.lat) {
            let x_cross = (xj - xi) * (p.lat - yi) / (yj - yi) + xi;
            if p.lon < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Signed shoelace area and first moments of a ring in (lon, lat).
fn ring_moments(ring: &[LatLon]) -> (f64, f64, f64) {
    let n = ring.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        let cross = p.lon * q.lat - q.lon * p.lat;
        a += cross;
        cx += (p.lon + q.lon) * cross;
        cy += (p.lat + q.lat) * cross;
    }
    (a / 2.0, cx / 6.0, cy / 6.0)
}

/// Area-weighted centroid of polygon parts, holes subtracted.
pub fn polygon_centroid(polygons: &[Polygon]) -> Option<LatLon> {
    let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
    for poly in polygons {
        let (a, x, y) = ring_moments(&poly.exterior);
        let s = a.signum();
        area += a * s;
        mx += x * s;
        my += y * s;
        for hole in &poly.holes {
            let (a, x, y) = ring_moments(hole);
            let s = a.signum();
            area -= a * s;
            mx -= x * s;
            my -= y * s;
        }
    }
    if area.abs() < 1e-18 {
        // Degenerate rings: fall back to the vertex mean.
        let pts: Vec<&LatLon> = polygons.iter().flat_map(|p| p.exterior.iter()).collect();
        if pts.is_empty() {
            return None;
        }
        let k = pts.len() as f64;
        return Some(LatLon::new(
            pts.iter().map(|p| p.lat).sum::<f64>() / k,
            pts.iter().map(|p| p.lon).sum::<f64>() / k,
        ));
    }
    Some(LatLon::new(my / area, mx / area))
}

/// Approximate area in square miles using a local equirectangular projection.
pub fn polygon_area_sqmi(polygons: &[Polygon], ref_lat: f64) -> f64 {
    let kx = EARTH_RADIUS_KM * ref_lat.to_radians().cos() * std::f64::consts::PI / 180.0;
    let ky = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    let ring_km2 = |ring: &[LatLon]| ring_moments(ring).0.abs() * kx * ky;
    let km2: f64 = polygons
        .iter()
        .map(|p| ring_km2(&p.exterior) - p.holes.iter().map(|h| ring_km2(h)).sum::<f64>())
        .sum();
    km2 / KM2_PER_SQMI
}

fn parse_position(v: &Value, row: usize) -> Result<LatLon> {
    let arr = v.as_array().filter(|a| a.len() >= 2).ok_or_else(|| {
        Error::MalformedCoordinates {
            row,
            reason: format!("expected [lon, lat], got {v}"),
        }
    })?;
    let lon = arr[0].as_f64();
    let lat = arr[1].as_f64();
    match (lat, lon) {
        (Some(lat), Some(lon)) => {
            let p = LatLon::new(lat, lon);
            if p.is_valid() {
                Ok(p)
            } else {
                Err(Error::MalformedCoordinates {
                    row,
                    reason: format!("out of range lat={lat} lon={lon}"),
                })
            }
        }
        _ => Err(Error::MalformedCoordinates {
            row,
            reason: format!("non-numeric position {v}"),
        }),
    }
}

fn parse_ring(v: &Value, row: usize) -> Result<Vec<LatLon>> {
    let arr = v.as_array().ok_or_else(|| Error::MalformedCoordinates {
        row,
        reason: "ring is not an array".into(),
    })?;
    let mut ring = arr
        .iter()
        .map(|p| parse_position(p, row))
        .collect::<Result<Vec<_>>>()?;
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(Error::MalformedCoordinates {
            row,
            reason: "ring has fewer than 3 distinct vertices".into(),
        });
    }
    Ok(ring)
}

fn parse_polygon(v: &Value, row: usize) -> Result<Polygon> {
    let rings = v.as_array().filter(|a| !a.is_empty()).ok_or_else(|| {
        Error::MalformedCoordinates {
            row,
            reason: "polygon has no rings".into(),
        }
    })?;
    let exterior = parse_ring(&rings[0], row)?;
    let holes = rings[1..]
        .iter()
        .map(|r| parse_ring(r, row))
        .collect::<Result<Vec<_>>>()?;
    Ok(Polygon { exterior, holes })
}

fn parse_feature(feature: &Value, row: usize) -> Result<TractGeometry> {
    let props = feature
        .get("properties")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Data(format!("feature {row}: missing properties")))?;
    let tract_id = match props.get("tract_id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(Error::Data(format!("feature {row}: missing tract_id"))),
    };
    let population = props
        .get("population")
        .and_then(|p| p.as_u64().or_else(|| p.as_f64().filter(|x| *x >= 0.0).map(|x| x as u64)))
        .ok_or_else(|| {
            Error::Data(format!(
                "feature {row} ({tract_id}): population must be a non-negative integer"
            ))
        })?;

    let mut polygons = Vec::new();
    let mut point = None;
    if let Some(geom) = feature.get("geometry").filter(|g| !g.is_null()) {
        let coords = geom.get("coordinates").unwrap_or(&Value::Null);
        match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => polygons.push(parse_polygon(coords, row)?),
            Some("MultiPolygon") => {
                let parts = coords.as_array().ok_or_else(|| Error::MalformedCoordinates {
                    row,
                    reason: "multipolygon coordinates are not an array".into(),
                })?;
                for part in parts {
                    polygons.push(parse_polygon(part, row)?);
                }
            }
            Some("Point") => point = Some(parse_position(coords, row)?),
            other => {
                return Err(Error::MalformedCoordinates {
                    row,
                    reason: format!("unsupported geometry type {other:?}"),
                })
            }
        }
    }

    let explicit = match (
        props.get("centroid_lat").and_then(Value::as_f64),
        props.get("centroid_lon").and_then(Value::as_f64),
    ) {
        (Some(lat), Some(lon)) => {
            let c = LatLon::new(lat, lon);
            if !c.is_valid() {
                return Err(Error::MalformedCoordinates {
                    row,
                    reason: format!("centroid out of range lat={lat} lon={lon}"),
                });
            }
            Some(c)
        }
        _ => None,
    };
    let centroid = explicit
        .or(point)
        .or_else(|| polygon_centroid(&polygons))
        .ok_or_else(|| Error::MalformedCoordinates {
            row,
            reason: "no geometry and no centroid".into(),
        })?;

    let area_sqmi = match props.get("area_sqmi").and_then(Value::as_f64) {
        Some(a) => a,
        None if !polygons.is_empty() => polygon_area_sqmi(&polygons, centroid.lat),
        None => {
            return Err(Error::Data(format!(
                "feature {row} ({tract_id}): area_sqmi required without a polygon"
            )))
        }
    };
    if !(area_sqmi > 0.0 && area_sqmi.is_finite()) {
        return Err(Error::Data(format!(
            "feature {row} ({tract_id}): area must be positive, got {area_sqmi}"
        )));
    }

    Ok(TractGeometry {
        tract_id,
        centroid,
        polygons,
        population,
        area_sqmi,
    })
}

/// Parses a GeoJSON FeatureCollection of tracts, sorted by `tract_id`.
pub fn parse_tracts(geojson: &str) -> Result<Vec<TractGeometry>> {
    let root: Value = serde_json::from_str(geojson)?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Data("expected a GeoJSON FeatureCollection".into()))?;
    let mut tracts = features
        .iter()
        .enumerate()
        .map(|(row, f)| parse_feature(f, row))
        .collect::<Result<Vec<_>>>()?;
    let mut seen = HashSet::new();
    for t in &tracts {
        if !seen.insert(t.tract_id.as_str()) {
            return Err(Error::DuplicateTract(t.tract_id.clone()));
        }
    }
    tracts.sort_by(|a, b| a.tract_id.cmp(&b.tract_id));
    Ok(tracts)
}

pub fn ingest_tracts(path: &Path) -> Result<Vec<TractGeometry>> {
    parse_tracts(&read_to_string(path)?)
}

fn ring_json(ring: &[LatLon]) -> Value {
    let mut pts: Vec<Value> = ring.iter().map(|p| json!([p.lon, p.lat])).collect();
    if let Some(first) = pts.first().cloned() {
        pts.push(first);
    }
    Value::Array(pts)
}

/// Serializes tracts as a FeatureCollection, merging optional extra
/// per-tract properties (used for choropleth exports).
pub fn tracts_to_geojson(
    tracts: &[TractGeometry],
    extra: Option<&BTreeMap<String, Map<String, Value>>>,
) -> Value {
    let features: Vec<Value> = tracts
        .iter()
        .map(|t| {
            let geometry = match t.polygons.len() {
                0 => json!({"type": "Point", "coordinates": [t.centroid.lon, t.centroid.lat]}),
                1 => {
                    let p = &t.polygons[0];
                    let mut rings = vec![ring_json(&p.exterior)];
                    rings.extend(p.holes.iter().map(|h| ring_json(h)));
                    json!({"type": "Polygon", "coordinates": rings})
                }
                _ => {
                    let parts: Vec<Value> = t
                        .polygons
                        .iter()
                        .map(|p| {
                            let mut rings = vec![ring_json(&p.exterior)];
                            rings.extend(p.holes.iter().map(|h| ring_json(h)));
                            Value::Array(rings)
                        })
                        .collect();
                    json!({"type": "MultiPolygon", "coordinates": parts})
                }
            };
            let mut props = Map::new();
            props.insert("tract_id".into(), json!(t.tract_id));
            props.insert("population".into(), json!(t.population));
            props.insert("area_sqmi".into(), json!(t.area_sqmi));
            props.insert("centroid_lat".into(), json!(t.centroid.lat));
            props.insert("centroid_lon".into(), json!(t.centroid.lon));
            if let Some(more) = extra.and_then(|m| m.get(&t.tract_id)) {
                for (k, v) in more {
                    props.insert(k.clone(), v.clone());
                }
            }
            json!({"type": "Feature", "properties": props, "geometry": geometry})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_tracts(path: &Path, tracts: &[TractGeometry]) -> Result<()> {
    let v = tracts_to_geojson(tracts, None);
    write_bytes(path, serde_json::to_string_pretty(&v)?.as_bytes())
}

/// Great-circle (haversine) distance in kilometers.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(id: &str, x0: f64, y0: f64, side: f64) -> Value {
        json!({
            "type": "Feature",
            "properties": {"tract_id": id, "population": 100},
            "geometry": {"type": "Polygon", "coordinates": [[
                [x0, y0], [x0, y0 + side], [x0 + side, y0 + side], [x0 + side, y0], [x0, y0]
            ]]}
        })
    }

    fn collection(features: Vec<Value>) -> String {
        json!({"type": "FeatureCollection", "features": features}).to_string()
    }

    #[test]
    fn three_tracts_sorted_by_id() {
        let s = collection(vec![
            square("c", 2.0, 0.0, 1.0),
            square("a", 0.0, 0.0, 1.0),
            square("b", 1.0, 0.0, 1.0),
        ]);
        let tracts = parse_tracts(&s).unwrap();
        let ids: Vec<_> = tracts.iter().map(|t| t.tract_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn unit_square_centroid() {
        let s = collection(vec![square("sq", 0.0, 0.0, 1.0)]);
        let t = &parse_tracts(&s).unwrap()[0];
        assert!((t.centroid.lat - 0.5).abs() < 1e-12);
        assert!((t.centroid.lon - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_id_is_named() {
        let s = collection(vec![
            square("17031999", 0.0, 0.0, 1.0),
            square("17031999", 1.0, 0.0, 1.0),
        ]);
        let err = parse_tracts(&s).unwrap_err();
        assert!(err.to_string().contains("17031999"), "{err}");
    }

    #[test]
    fn malformed_coordinates_report_row() {
        let mut bad = square("x", 0.0, 0.0, 1.0);
        bad["geometry"]["coordinates"][0][1] = json!([0.0, 95.0]);
        let s = collection(vec![square("ok", 0.0, 0.0, 1.0), bad]);
        match parse_tracts(&s).unwrap_err() {
            Error::MalformedCoordinates { row, .. } => assert_eq!(row, 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn point_in_square_with_hole() {
        let ring = |x0: f64, s: f64| {
            vec![
                LatLon::new(x0, x0),
                LatLon::new(x0 + s, x0),
                LatLon::new(x0 + s, x0 + s),
                LatLon::new(x0, x0 + s),
            ]
        };
        let mut poly = Polygon::new(ring(0.0, 1.0));
        assert!(poly.contains(LatLon::new(0.5, 0.5)));
        assert!(!poly.contains(LatLon::new(1.5, 0.5)));
        poly.holes.push(ring(0.4, 0.2));
        assert!(!poly.contains(LatLon::new(0.5, 0.5)));
        assert!(poly.contains(LatLon::new(0.1, 0.1)));
    }

    #[test]
    fn one_degree_latitude_at_equator() {
        let d = haversine_km(LatLon::new(0.0, 0.0), LatLon::new(1.0, 0.0));
        assert!((d - 111.2).abs() < 0.05, "{d}");
    }

    #[test]
    fn geojson_roundtrip() {
        let s = collection(vec![square("a", -87.7, 41.8, 0.01), square("b", -87.69, 41.8, 0.01)]);
        let tracts = parse_tracts(&s).unwrap();
        let back = parse_tracts(&tracts_to_geojson(&tracts, None).to_string()).unwrap();
        assert_eq!(tracts, back);
    }
}
