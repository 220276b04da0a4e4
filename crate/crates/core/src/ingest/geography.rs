use std::collections::BTreeMap;
use std::path::Path;

use geojson::{Feature, FeatureCollection, Geometry, GeometryValue, JsonObject, JsonValue, Position};

use super::IngestError;
use crate::geometry::{GeoPoint, GeometryItem, PolygonRegion, Polyline, RegionGeometry, WeightedGeometrySet};

fn read_collection(path: &Path) -> Result<FeatureCollection, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    text.parse::<FeatureCollection>()
        .map_err(|e| IngestError::file(path, format!("not a FeatureCollection: {e}")))
}

fn feature_error(path: &Path, i: usize, rule: impl std::fmt::Display) -> IngestError {
    IngestError::file(path, format!("feature {i}: {rule}"))
}

fn region_id(path: &Path, i: usize, f: &Feature) -> Result<String, IngestError> {
    match f.property("region_id") {
        Some(JsonValue::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(JsonValue::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(feature_error(path, i, "`region_id` must be a nonempty string")),
        None => Err(feature_error(path, i, "missing `region_id` property")),
    }
}

fn geometry<'a>(path: &Path, i: usize, f: &'a Feature) -> Result<&'a GeometryValue, IngestError> {
    f.geometry
        .as_ref()
        .map(|g| &g.value)
        .ok_or_else(|| feature_error(path, i, "feature has no geometry"))
}

fn point(p: &Position) -> Result<GeoPoint, String> {
    match p.as_slice() {
        [lon, lat, ..] => GeoPoint::new(*lon, *lat).map_err(|e| e.to_string()),
        _ => Err("position needs longitude and latitude".into()),
    }
}

fn ring(r: &[Position]) -> Result<Vec<GeoPoint>, String> {
    r.iter().map(point).collect()
}

fn polygon(rings: &[Vec<Position>]) -> Result<PolygonRegion, String> {
    let (ext, holes) = rings.split_first().ok_or("polygon has no rings")?;
    let holes = holes.iter().map(|h| ring(h)).collect::<Result<Vec<_>, _>>()?;
    PolygonRegion::new(ring(ext)?, holes).map_err(|e| e.to_string())
}

fn polygons(value: &GeometryValue) -> Option<Result<Vec<PolygonRegion>, String>> {
    match value {
        GeometryValue::Polygon { coordinates } => Some(polygon(coordinates).map(|p| vec![p])),
        GeometryValue::MultiPolygon { coordinates } => {
            Some(coordinates.iter().map(|c| polygon(c)).collect())
        }
        _ => None,
    }
}

fn lines(value: &GeometryValue, excluded: bool) -> Option<Result<Vec<Polyline>, String>> {
    let make = |ls: &Vec<Position>| -> Result<Polyline, String> {
        Polyline::new(ring(ls)?, excluded).map_err(|e| e.to_string())
    };
    match value {
        GeometryValue::LineString { coordinates } => Some(make(coordinates).map(|l| vec![l])),
        GeometryValue::MultiLineString { coordinates } => Some(coordinates.iter().map(make).collect()),
        _ => None,
    }
}

/// Region boundaries keyed by `region_id`. Polygon and MultiPolygon features
/// are accepted; several features with the same id are merged into one
/// multi-part region.
pub fn load_geography(path: &Path) -> Result<BTreeMap<String, RegionGeometry>, IngestError> {
    let fc = read_collection(path)?;
    let mut parts: BTreeMap<String, Vec<PolygonRegion>> = BTreeMap::new();
    for (i, f) in fc.features.iter().enumerate() {
        let id = region_id(path, i, f)?;
        let value = geometry(path, i, f)?;
        let polys = polygons(value)
            .ok_or_else(|| {
                feature_error(path, i, format!("unsupported geometry type {} for a region", value.type_name()))
            })?
            .map_err(|e| feature_error(path, i, e))?;
        parts.entry(id).or_default().extend(polys);
    }
    parts
        .into_iter()
        .map(|(id, p)| {
            let g = RegionGeometry::new(p).map_err(|e| IngestError::file(path, format!("region `{id}`: {e}")))?;
            Ok((id, g))
        })
        .collect()
}

/// Road polylines keyed by `region_id`. A feature with `"excluded": true`
/// is kept but never receives agents.
pub fn load_roads(path: &Path) -> Result<BTreeMap<String, Vec<Polyline>>, IngestError> {
    let fc = read_collection(path)?;
    let mut out: BTreeMap<String, Vec<Polyline>> = BTreeMap::new();
    for (i, f) in fc.features.iter().enumerate() {
        let id = region_id(path, i, f)?;
        let excluded = match f.property("excluded") {
            None | Some(JsonValue::Null) => false,
            Some(JsonValue::Bool(b)) => *b,
            Some(_) => return Err(feature_error(path, i, "`excluded` must be a boolean")),
        };
        let value = geometry(path, i, f)?;
        let ls = lines(value, excluded)
            .ok_or_else(|| feature_error(path, i, format!("unsupported geometry type {} for a road", value.type_name())))?
            .map_err(|e| feature_error(path, i, e))?;
        out.entry(id).or_default().extend(ls);
    }
    Ok(out)
}

/// Location distributions keyed by `region_id`: every feature carries a
/// nonnegative `weight`; polygons and lines may be mixed. The weight of a
/// multi-part feature is split across its parts by area or length.
pub fn load_weighted_geometry(path: &Path) -> Result<BTreeMap<String, WeightedGeometrySet>, IngestError> {
    let fc = read_collection(path)?;
    let mut items: BTreeMap<String, Vec<(GeometryItem, f64)>> = BTreeMap::new();
    for (i, f) in fc.features.iter().enumerate() {
        let id = region_id(path, i, f)?;
        let weight = f
            .property("weight")
            .and_then(JsonValue::as_f64)
            .filter(|w| w.is_finite() && *w >= 0.0)
            .ok_or_else(|| feature_error(path, i, "missing or negative `weight` property"))?;
        let value = geometry(path, i, f)?;
        let entry = items.entry(id).or_default();
        if let Some(polys) = polygons(value) {
            let polys = polys.map_err(|e| feature_error(path, i, e))?;
            let total: f64 = polys.iter().map(PolygonRegion::area).sum();
            for p in polys {
                let share = weight * p.area() / total;
                entry.push((GeometryItem::Polygon(p), share));
            }
        } else if let Some(ls) = lines(value, false) {
            let ls = ls.map_err(|e| feature_error(path, i, e))?;
            let total: f64 = ls.iter().map(Polyline::total_length).sum();
            for l in ls {
                let share = weight * l.total_length() / total;
                entry.push((GeometryItem::Polyline(l), share));
            }
        } else {
            return Err(feature_error(path, i, format!("unsupported geometry type {}", value.type_name())));
        }
    }
    items
        .into_iter()
        .map(|(id, it)| {
            let set = WeightedGeometrySet::new(it).map_err(|e| IngestError::file(path, format!("region `{id}`: {e}")))?;
            Ok((id, set))
        })
        .collect()
}

fn positions(points: &[GeoPoint], close: bool) -> Vec<Position> {
    let mut out: Vec<Position> = points.iter().map(|p| Position::from([p.lon, p.lat])).collect();
    if close {
        out.push(Position::from([points[0].lon, points[0].lat]));
    }
    out
}

fn polygon_coords(p: &PolygonRegion) -> Vec<Vec<Position>> {
    std::iter::once(positions(p.exterior(), true))
        .chain(p.holes().iter().map(|h| positions(h, true)))
        .collect()
}

fn feature(value: GeometryValue, props: JsonObject) -> Feature {
    Feature {
        geometry: Some(Geometry::new(value)),
        properties: Some(props),
        ..Default::default()
    }
}

fn write_collection(path: &Path, features: Vec<Feature>) -> Result<(), IngestError> {
    let fc = FeatureCollection::new(features);
    let text = serde_json::to_string(&fc).map_err(|e| IngestError::file(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| IngestError::io(path, e))
}

/// One feature per region: Polygon for a single part, MultiPolygon otherwise.
pub fn write_geography(path: &Path, regions: &BTreeMap<String, RegionGeometry>) -> Result<(), IngestError> {
    let features = regions
        .iter()
        .map(|(id, g)| {
            let value = match g.parts() {
                [p] => GeometryValue::Polygon { coordinates: polygon_coords(p) },
                parts => GeometryValue::MultiPolygon {
                    coordinates: parts.iter().map(polygon_coords).collect(),
                },
            };
            let mut props = JsonObject::new();
            props.insert("region_id".into(), JsonValue::String(id.clone()));
            feature(value, props)
        })
        .collect();
    write_collection(path, features)
}

/// One LineString feature per polyline.
pub fn write_roads(path: &Path, roads: &BTreeMap<String, Vec<Polyline>>) -> Result<(), IngestError> {
    let features = roads
        .iter()
        .flat_map(|(id, ls)| {
            ls.iter().map(move |l| {
                let mut props = JsonObject::new();
                props.insert("region_id".into(), JsonValue::String(id.clone()));
                if l.excluded {
                    props.insert("excluded".into(), JsonValue::Bool(true));
                }
                feature(GeometryValue::LineString { coordinates: positions(l.vertices(), false) }, props)
            })
        })
        .collect();
    write_collection(path, features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), contents).unwrap();
        f
    }

    const SQUARE: &str = "[[[0,0],[1,0],[1,1],[0,1],[0,0]]]";

    #[test]
    fn square_region() {
        let f = file(&format!(
            r#"{{"type":"FeatureCollection","features":[
              {{"type":"Feature","properties":{{"region_id":"R1"}},"geometry":{{"type":"Polygon","coordinates":{SQUARE}}}}}]}}"#
        ));
        let g = load_geography(f.path()).unwrap();
        assert_eq!(g["R1"].parts().len(), 1);
        assert_eq!(g["R1"].area(), 1.0);
    }

    #[test]
    fn multipolygon_parts_weighted_by_area() {
        // unit square and a 2x1 rectangle: shoelace areas 1 and 2
        let f = file(
            r#"{"type":"FeatureCollection","features":[
              {"type":"Feature","properties":{"region_id":"R1"},"geometry":{"type":"MultiPolygon","coordinates":[
                [[[0,0],[1,0],[1,1],[0,1],[0,0]]],
                [[[5,5],[7,5],[7,6],[5,6],[5,5]]]]}}]}"#,
        );
        let g = load_geography(f.path()).unwrap();
        let w = g["R1"].part_weights();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12 && (w[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn roads_keyed_to_region() {
        let f = file(
            r#"{"type":"FeatureCollection","features":[
              {"type":"Feature","properties":{"region_id":"R1"},"geometry":{"type":"LineString","coordinates":[[0,0],[0.01,0]]}},
              {"type":"Feature","properties":{"region_id":"R1","excluded":true},"geometry":{"type":"MultiLineString","coordinates":[[[0,0],[0,0.01]],[[1,1],[1,1.01]]]}},
              {"type":"Feature","properties":{"region_id":"R2"},"geometry":{"type":"LineString","coordinates":[[3,3],[3.01,3]]}}]}"#,
        );
        let r = load_roads(f.path()).unwrap();
        assert_eq!(r["R1"].len(), 3);
        assert_eq!(r["R1"].iter().filter(|l| l.excluded).count(), 2);
        assert_eq!(r["R2"].len(), 1);
    }

    #[test]
    fn malformed_features() {
        let missing = file(&format!(
            r#"{{"type":"FeatureCollection","features":[{{"type":"Feature","properties":{{}},"geometry":{{"type":"Polygon","coordinates":{SQUARE}}}}}]}}"#
        ));
        let msg = load_geography(missing.path()).unwrap_err().to_string();
        assert!(msg.contains("feature 0") && msg.contains("region_id"), "{msg}");

        let point = file(
            r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"region_id":"R1"},"geometry":{"type":"Point","coordinates":[0,0]}}]}"#,
        );
        assert!(load_geography(point.path()).unwrap_err().to_string().contains("unsupported geometry type Point"));

        let bowtie = file(
            r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"region_id":"R1"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,1],[1,0],[0,1],[0,0]]]}}]}"#,
        );
        assert!(load_geography(bowtie.path()).unwrap_err().to_string().contains("self-intersecting"));

        assert!(load_geography(file("{not json").path()).is_err());
    }

    #[test]
    fn weighted_features() {
        let f = file(
            r#"{"type":"FeatureCollection","features":[
              {"type":"Feature","properties":{"region_id":"R1","weight":3},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
              {"type":"Feature","properties":{"region_id":"R1","weight":1},"geometry":{"type":"Polygon","coordinates":[[[2,0],[3,0],[3,1],[2,1],[2,0]]]}}]}"#,
        );
        let w = load_weighted_geometry(f.path()).unwrap();
        assert_eq!(w["R1"].normalized_weights(), [0.75, 0.25]);
    }

    #[test]
    fn write_then_load_is_identity() {
        let hole = vec![
            GeoPoint::new(0.25, 0.25).unwrap(),
            GeoPoint::new(0.75, 0.25).unwrap(),
            GeoPoint::new(0.75, 0.75).unwrap(),
            GeoPoint::new(0.25, 0.75).unwrap(),
        ];
        let holed = PolygonRegion::new(PolygonRegion::rect(0.0, 0.0, 1.0, 1.0).unwrap().exterior().to_vec(), vec![hole]).unwrap();
        let mut regions = BTreeMap::new();
        regions.insert("A".to_string(), RegionGeometry::new(vec![holed]).unwrap());
        regions.insert(
            "B".to_string(),
            RegionGeometry::new(vec![
                PolygonRegion::rect(-75.6, 39.0, -75.5, 39.1).unwrap(),
                PolygonRegion::rect(-75.4, 39.0, -75.3, 39.1).unwrap(),
            ])
            .unwrap(),
        );
        let f = tempfile::NamedTempFile::new().unwrap();
        write_geography(f.path(), &regions).unwrap();
        assert_eq!(load_geography(f.path()).unwrap(), regions);

        let mut roads = BTreeMap::new();
        roads.insert(
            "A".to_string(),
            vec![
                Polyline::new(vec![GeoPoint::new(0.0, 0.0).unwrap(), GeoPoint::new(0.1, 0.2).unwrap()], false).unwrap(),
                Polyline::new(vec![GeoPoint::new(0.0, 0.5).unwrap(), GeoPoint::new(0.1, 0.5).unwrap()], true).unwrap(),
            ],
        );
        write_roads(f.path(), &roads).unwrap();
        assert_eq!(load_roads(f.path()).unwrap(), roads);
    }
}
