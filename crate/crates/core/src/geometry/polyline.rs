use rand::Rng;

use super::{great_circle_distance, GeoPoint, GeometryError, PointSampler};
use crate::alias::AliasTable;

/// A road or other line feature. Lengths are great-circle kilometres.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<GeoPoint>,
    segment_lengths: Vec<f64>,
    total_length: f64,
    /// Excluded polylines (e.g. interstate highways) never receive agents.
    pub excluded: bool,
}

impl Polyline {
    pub fn new(vertices: Vec<GeoPoint>, excluded: bool) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::ShortPolyline);
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_valid()) {
            return Err(GeometryError::InvalidCoordinate { lon: p.lon, lat: p.lat });
        }
        let segment_lengths: Vec<f64> = vertices
            .windows(2)
            .map(|w| great_circle_distance(w[0], w[1]))
            .collect();
        let total_length = segment_lengths.iter().sum();
        if total_length <= 0.0 {
            return Err(GeometryError::ZeroLength);
        }
        Ok(Self {
            vertices,
            segment_lengths,
            total_length,
            excluded,
        })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.segment_lengths
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Planar distance (degrees) from `p` to the nearest segment.
    pub fn distance_deg(&self, p: GeoPoint) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.lon - a.lon - t * dx).powi(2) + (p.lat - a.lat - t * dy).powi(2)).sqrt()
}

/// Length-weighted sampler over the segments of all non-excluded polylines.
#[derive(Debug, Clone)]
pub struct RoadSampler {
    segments: Vec<(GeoPoint, GeoPoint)>,
    table: AliasTable,
}

impl RoadSampler {
    pub fn new(roads: &[Polyline]) -> Result<Self, GeometryError> {
        let mut segments = Vec::new();
        let mut lengths = Vec::new();
        for road in roads.iter().filter(|r| !r.excluded) {
            for (w, len) in road.vertices.windows(2).zip(&road.segment_lengths) {
                if *len > 0.0 {
                    segments.push((w[0], w[1]));
                    lengths.push(*len);
                }
            }
        }
        let table = AliasTable::new(&lengths).map_err(|_| GeometryError::EmptyRoads)?;
        Ok(Self { segments, table })
    }
}

impl PointSampler for RoadSampler {
    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint {
        let (a, b) = self.segments[self.table.sample(rng)];
        let t: f64 = rng.random();
        GeoPoint {
            lon: a.lon + t * (b.lon - a.lon),
            lat: a.lat + t * (b.lat - a.lat),
        }
    }
}

/// `n` points on the road network: a segment is chosen with probability
/// proportional to its length, then a point uniformly along it.
pub fn sample_uniform_polylines<R: Rng + ?Sized>(
    roads: &[Polyline],
    n: usize,
    rng: &mut R,
) -> Result<Vec<GeoPoint>, GeometryError> {
    Ok(RoadSampler::new(roads)?.sample_points(n, rng))
}
