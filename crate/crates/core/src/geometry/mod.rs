//! Geometric primitives and spatial samplers.
//!
//! Longitude/latitude are treated as planar coordinates for containment,
//! area and uniform sampling within a region. Only inter-location distances
//! (used by gravity assignment) are computed on the sphere.

mod polygon;
mod polyline;
mod weighted;

pub use polygon::{
    point_in_polygon, polygon_area, sample_uniform_polygon, AreaSampler, BoundingBox,
    PolygonRegion, RegionGeometry,
};
pub use polyline::{sample_uniform_polylines, Polyline, RoadSampler};
pub use weighted::{sample_weighted_geometry, GeometryItem, WeightedGeometrySet, WeightedSampler};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("coordinate out of range: longitude {lon}, latitude {lat}")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("ring has {0} distinct vertices, need at least 3")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    Degenerate,
    #[error("ring is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("hole {0} is not inside the exterior ring")]
    HoleOutside(usize),
    #[error("polyline needs at least 2 vertices")]
    ShortPolyline,
    #[error("polyline has zero length")]
    ZeroLength,
    #[error("no sampleable roads (empty set, all excluded, or zero length)")]
    EmptyRoads,
    #[error("weighted geometry set: {0}")]
    Weights(String),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
}

/// A location in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeometryError> {
        let p = Self { lon, lat };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(GeometryError::InvalidCoordinate { lon, lat })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// Great-circle distance in kilometres by the spherical law of cosines.
///
/// The cosine of the central angle is evaluated as
/// `cos(Δφ) − cos φa · cos φb · (1 − cos Δλ)`, which is algebraically the
/// usual `sin φa sin φb + cos φa cos φb cos Δλ` but returns exactly 1 for
/// coincident points.
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (pa, pb) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let half = (dl / 2.0).sin();
    let cos_c = (pb - pa).cos() - pa.cos() * pb.cos() * 2.0 * half * half;
    EARTH_RADIUS_KM * cos_c.clamp(-1.0, 1.0).acos()
}

/// Anything that can produce i.i.d. locations.
pub trait PointSampler {
    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint;

    fn sample_points<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<GeoPoint> {
        (0..n).map(|_| self.sample_point(rng)).collect()
    }
}

/// Signed doubled area of triangle (a, b, c); positive when counter-clockwise.
pub(crate) fn orient(a: GeoPoint, b: GeoPoint, c: GeoPoint) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}
