use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{orient, GeoPoint, GeometryError, PointSampler};
use crate::alias::AliasTable;

/// Distance (degrees) within which a point counts as lying on a ring edge.
const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BoundingBox {
    fn of(points: &[GeoPoint]) -> Self {
        let mut bb = BoundingBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for p in points {
            bb.min_lon = bb.min_lon.min(p.lon);
            bb.min_lat = bb.min_lat.min(p.lat);
            bb.max_lon = bb.max_lon.max(p.lon);
            bb.max_lat = bb.max_lat.max(p.lat);
        }
        bb
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lon >= self.min_lon - BOUNDARY_TOL
            && p.lon <= self.max_lon + BOUNDARY_TOL
            && p.lat >= self.min_lat - BOUNDARY_TOL
            && p.lat <= self.max_lat + BOUNDARY_TOL
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            min_lon: self.min_lon.min(other.min_lon),
            min_lat: self.min_lat.min(other.min_lat),
            max_lon: self.max_lon.max(other.max_lon),
            max_lat: self.max_lat.max(other.max_lat),
        }
    }
}

/// A simple polygon with optional holes. Rings are stored open (the closing
/// vertex is dropped) and validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonRegion {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
    bbox: BoundingBox,
    area: f64,
}

impl PolygonRegion {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self, GeometryError> {
        let exterior = normalize_ring(exterior)?;
        check_simple(&exterior)?;
        let ext_area = ring_area(&exterior).abs();
        if ext_area == 0.0 {
            return Err(GeometryError::Degenerate);
        }

        let mut normalized_holes = Vec::with_capacity(holes.len());
        let mut hole_area = 0.0;
        for (i, hole) in holes.into_iter().enumerate() {
            let hole = normalize_ring(hole)?;
            check_simple(&hole)?;
            let a = ring_area(&hole).abs();
            if a == 0.0 {
                return Err(GeometryError::Degenerate);
            }
            if !hole.iter().all(|p| in_ring(*p, &exterior) != RingSide::Outside) {
                return Err(GeometryError::HoleOutside(i));
            }
            hole_area += a;
            normalized_holes.push(hole);
        }
        let area = ext_area - hole_area;
        if area <= 0.0 {
            return Err(GeometryError::Degenerate);
        }

        let bbox = BoundingBox::of(&exterior);
        Ok(Self {
            exterior,
            holes: normalized_holes,
            bbox,
            area,
        })
    }

    /// Axis-aligned rectangle.
    pub fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self, GeometryError> {
        let ring = [
            (min_lon, min_lat),
            (max_lon, min_lat),
            (max_lon, max_lat),
            (min_lon, max_lat),
        ]
        .into_iter()
        .map(|(x, y)| GeoPoint::new(x, y))
        .collect::<Result<Vec<_>, _>>()?;
        Self::new(ring, Vec::new())
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        match in_ring(p, &self.exterior) {
            RingSide::Outside => false,
            RingSide::Boundary => true,
            RingSide::Inside => self.holes.iter().all(|h| in_ring(p, h) != RingSide::Inside),
        }
    }

    /// Triangles covering exterior minus holes.
    fn triangulate(&self) -> Result<Vec<[GeoPoint; 3]>, GeometryError> {
        let mut coords = Vec::new();
        let mut hole_starts = Vec::with_capacity(self.holes.len());
        let mut vertices = Vec::new();
        for p in &self.exterior {
            coords.extend([p.lon, p.lat]);
            vertices.push(*p);
        }
        for h in &self.holes {
            hole_starts.push(vertices.len());
            for p in h {
                coords.extend([p.lon, p.lat]);
                vertices.push(*p);
            }
        }
        let idx = earcutr::earcut(&coords, &hole_starts, 2)
            .map_err(|e| GeometryError::Triangulation(format!("{e:?}")))?;
        let triangles: Vec<[GeoPoint; 3]> = idx
            .chunks_exact(3)
            .map(|t| [vertices[t[0]], vertices[t[1]], vertices[t[2]]])
            .collect();
        let covered: f64 = triangles.iter().map(triangle_area).sum();
        if (covered - self.area).abs() > 1e-9 * self.area.max(1e-300) {
            return Err(GeometryError::Triangulation(format!(
                "triangles cover {covered}, polygon area is {}",
                self.area
            )));
        }
        Ok(triangles)
    }
}

/// Point-in-polygon; points on any ring edge count as inside.
pub fn point_in_polygon(p: GeoPoint, poly: &PolygonRegion) -> bool {
    poly.contains(p)
}

/// Planar shoelace area of the exterior ring minus its holes.
pub fn polygon_area(poly: &PolygonRegion) -> f64 {
    poly.area()
}

/// `n` points uniformly distributed over `poly` (holes excluded).
pub fn sample_uniform_polygon<R: Rng + ?Sized>(
    poly: &PolygonRegion,
    n: usize,
    rng: &mut R,
) -> Result<Vec<GeoPoint>, GeometryError> {
    let sampler = AreaSampler::new(std::slice::from_ref(poly))?;
    Ok(sampler.sample_points(n, rng))
}

/// A region made of one or more polygon parts (a MultiPolygon).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGeometry {
    parts: Vec<PolygonRegion>,
}

impl RegionGeometry {
    pub fn new(parts: Vec<PolygonRegion>) -> Result<Self, GeometryError> {
        if parts.is_empty() {
            return Err(GeometryError::Degenerate);
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[PolygonRegion] {
        &self.parts
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(PolygonRegion::area).sum()
    }

    /// Area share of each part.
    pub fn part_weights(&self) -> Vec<f64> {
        let total = self.area();
        self.parts.iter().map(|p| p.area() / total).collect()
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.parts.iter().any(|part| part.contains(p))
    }

    pub fn bbox(&self) -> BoundingBox {
        self.parts
            .iter()
            .skip(1)
            .fold(*self.parts[0].bbox(), |acc, p| acc.union(p.bbox()))
    }

    pub fn sampler(&self) -> Result<AreaSampler, GeometryError> {
        AreaSampler::new(&self.parts)
    }
}

/// Uniform-by-area sampler over a set of polygons, via triangulation.
#[derive(Debug, Clone)]
pub struct AreaSampler {
    triangles: Vec<[GeoPoint; 3]>,
    table: AliasTable,
}

impl AreaSampler {
    pub fn new(parts: &[PolygonRegion]) -> Result<Self, GeometryError> {
        let mut triangles = Vec::new();
        for part in parts {
            triangles.extend(part.triangulate()?);
        }
        let areas: Vec<f64> = triangles.iter().map(triangle_area).collect();
        let table = AliasTable::new(&areas).map_err(|_| GeometryError::Degenerate)?;
        Ok(Self { triangles, table })
    }
}

impl PointSampler for AreaSampler {
    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint {
        let [a, b, c] = self.triangles[self.table.sample(rng)];
        let mut u: f64 = rng.random();
        let mut v: f64 = rng.random();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        GeoPoint {
            lon: a.lon + u * (b.lon - a.lon) + v * (c.lon - a.lon),
            lat: a.lat + u * (b.lat - a.lat) + v * (c.lat - a.lat),
        }
    }
}

fn triangle_area(t: &[GeoPoint; 3]) -> f64 {
    orient(t[0], t[1], t[2]).abs() / 2.0
}

fn normalize_ring(mut ring: Vec<GeoPoint>) -> Result<Vec<GeoPoint>, GeometryError> {
    for p in &ring {
        if !p.is_valid() {
            return Err(GeometryError::InvalidCoordinate { lon: p.lon, lat: p.lat });
        }
    }
    ring.dedup();
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    let mut distinct = ring.clone();
    distinct.sort_by(|a, b| a.lon.total_cmp(&b.lon).then(a.lat.total_cmp(&b.lat)));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(GeometryError::TooFewVertices(distinct.len()));
    }
    Ok(ring)
}

fn ring_area(ring: &[GeoPoint]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        s += a.lon * b.lat - b.lon * a.lat;
    }
    s / 2.0
}

fn check_simple(ring: &[GeoPoint]) -> Result<(), GeometryError> {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}

fn segments_intersect(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(c, d, a))
        || (d2 == 0.0 && within_box(c, d, b))
        || (d3 == 0.0 && within_box(a, b, c))
        || (d4 == 0.0 && within_box(a, b, d))
}

fn within_box(a: GeoPoint, b: GeoPoint, p: GeoPoint) -> bool {
    p.lon >= a.lon.min(b.lon) && p.lon <= a.lon.max(b.lon) && p.lat >= a.lat.min(b.lat) && p.lat <= a.lat.max(b.lat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingSide {
    Inside,
    Boundary,
    Outside,
}

fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let (dx, dy) = (b.lon - a.lon, b.lat - a.lat);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.lon + t * dx, a.lat + t * dy);
    let (ex, ey) = (p.lon - qx, p.lat - qy);
    ex * ex + ey * ey <= BOUNDARY_TOL * BOUNDARY_TOL
}

/// Crossing-number test with an explicit boundary check.
fn in_ring(p: GeoPoint, ring: &[GeoPoint]) -> RingSide {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if on_segment(p, a, b) {
            return RingSide::Boundary;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if p.lon < x {
                inside = !inside;
            }
        }
        j = i;
    }
    if inside {
        RingSide::Inside
    } else {
        RingSide::Outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    fn ring(coords: &[(f64, f64)]) -> Vec<GeoPoint> {
        coords.iter().map(|&(x, y)| pt(x, y)).collect()
    }

    fn unit_square() -> PolygonRegion {
        PolygonRegion::rect(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    fn square_with_hole() -> PolygonRegion {
        PolygonRegion::new(
            ring(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]),
            vec![ring(&[(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)])],
        )
        .unwrap()
    }

    #[test]
    fn containment_examples() {
        assert!(point_in_polygon(pt(0.5, 0.5), &unit_square()));
        assert!(!point_in_polygon(pt(2.0, 2.0), &unit_square()));
        assert!(!point_in_polygon(pt(0.5, 0.5), &square_with_hole()));
        assert!(point_in_polygon(pt(0.1, 0.5), &square_with_hole()));
    }

    #[test]
    fn boundary_counts_as_inside() {
        let sq = unit_square();
        for p in [pt(0.0, 0.5), pt(1.0, 1.0), pt(0.5, 0.0), pt(0.0, 0.0)] {
            assert!(sq.contains(p), "{p:?}");
        }
        // the hole's edge is also polygon boundary
        assert!(square_with_hole().contains(pt(0.25, 0.5)));
        assert!(!sq.contains(pt(1.0 + 1e-6, 0.5)));
    }

    #[test]
    fn areas() {
        assert_eq!(polygon_area(&unit_square()), 1.0);
        assert_eq!(polygon_area(&square_with_hole()), 0.75);
        let tri = PolygonRegion::new(ring(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]), vec![]).unwrap();
        assert_eq!(polygon_area(&tri), 0.5);
    }

    #[test]
    fn closed_and_clockwise_rings_accepted() {
        let p = PolygonRegion::new(
            ring(&[(0.0, 0.0), (0.0, 2.0), (2.0, 2.0), (2.0, 0.0), (0.0, 0.0)]),
            vec![],
        )
        .unwrap();
        assert_eq!(p.exterior().len(), 4);
        assert_eq!(p.area(), 4.0);
    }

    #[test]
    fn invalid_polygons_rejected() {
        let collinear = PolygonRegion::new(ring(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]), vec![]);
        assert_eq!(collinear.unwrap_err(), GeometryError::Degenerate);
        let two = PolygonRegion::new(ring(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]), vec![]);
        assert!(matches!(two, Err(GeometryError::TooFewVertices(_))));
        let bowtie = PolygonRegion::new(ring(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)]), vec![]);
        assert!(matches!(bowtie, Err(GeometryError::SelfIntersecting(..))));
        let outside_hole = PolygonRegion::new(
            ring(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]),
            vec![ring(&[(2.0, 2.0), (3.0, 2.0), (3.0, 3.0)])],
        );
        assert_eq!(outside_hole.unwrap_err(), GeometryError::HoleOutside(0));
    }

    #[test]
    fn sampling_zero_points() {
        let mut rng = seeded(1);
        assert!(sample_uniform_polygon(&unit_square(), 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn samples_stay_inside() {
        let mut rng = seeded(2);
        let pts = sample_uniform_polygon(&unit_square(), 10_000, &mut rng).unwrap();
        assert_eq!(pts.len(), 10_000);
        assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p.lon) && (0.0..=1.0).contains(&p.lat)));

        let holed = square_with_hole();
        let pts = sample_uniform_polygon(&holed, 10_000, &mut rng).unwrap();
        assert!(pts.iter().all(|p| holed.contains(*p)));
    }

    #[test]
    fn concave_polygon_samples_inside() {
        // U shape
        let u = PolygonRegion::new(
            ring(&[(0.0, 0.0), (3.0, 0.0), (3.0, 3.0), (2.0, 3.0), (2.0, 1.0), (1.0, 1.0), (1.0, 3.0), (0.0, 3.0)]),
            vec![],
        )
        .unwrap();
        assert_eq!(u.area(), 7.0);
        let mut rng = seeded(5);
        let pts = sample_uniform_polygon(&u, 20_000, &mut rng).unwrap();
        assert!(pts.iter().all(|p| u.contains(*p)));
        // notch (1,1)-(2,3) is empty; the bottom bar holds 3/7 of the mass
        let bottom = pts.iter().filter(|p| p.lat < 1.0).count() as f64 / 20_000.0;
        assert!((bottom - 3.0 / 7.0).abs() < 0.02, "{bottom}");
    }

    #[test]
    fn quadrant_counts_pass_chi_square() {
        // chi-square 0.999 quantile with 3 df
        const CRIT_3DF_999: f64 = 16.266_236_196_238_1;
        let mut rng = seeded(3);
        let pts = sample_uniform_polygon(&unit_square(), 40_000, &mut rng).unwrap();
        let mut counts = [0.0f64; 4];
        for p in &pts {
            let q = usize::from(p.lon >= 0.5) + 2 * usize::from(p.lat >= 0.5);
            counts[q] += 1.0;
        }
        let stat: f64 = counts.iter().map(|c| (c - 10_000.0).powi(2) / 10_000.0).sum();
        assert!(stat < CRIT_3DF_999, "{counts:?} -> {stat}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_uniform_polygon(&square_with_hole(), 100, &mut seeded(8)).unwrap();
        let b = sample_uniform_polygon(&square_with_hole(), 100, &mut seeded(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multipolygon_weights_follow_shoelace_areas() {
        let g = RegionGeometry::new(vec![
            PolygonRegion::rect(0.0, 0.0, 1.0, 1.0).unwrap(),
            PolygonRegion::rect(5.0, 5.0, 8.0, 6.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(g.part_weights(), vec![0.25, 0.75]);
        let s = g.sampler().unwrap();
        let mut rng = seeded(4);
        let n = 40_000;
        let first = s.sample_points(n, &mut rng).iter().filter(|p| p.lon < 2.0).count() as f64;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        assert!((first - 0.25 * n as f64).abs() < 3.0 * sd);
    }
}
