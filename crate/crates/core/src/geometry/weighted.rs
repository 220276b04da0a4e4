use rand::Rng;

use super::{AreaSampler, GeoPoint, GeometryError, PointSampler, PolygonRegion, Polyline, RoadSampler};
use crate::alias::AliasTable;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryItem {
    Polygon(PolygonRegion),
    Polyline(Polyline),
}

/// Geometries with nonnegative weights; the weights define a mixture
/// distribution over locations.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGeometrySet {
    items: Vec<(GeometryItem, f64)>,
    normalized: Vec<f64>,
}

impl WeightedGeometrySet {
    pub fn new(items: Vec<(GeometryItem, f64)>) -> Result<Self, GeometryError> {
        if items.is_empty() {
            return Err(GeometryError::Weights("no items".into()));
        }
        if let Some((_, w)) = items.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(GeometryError::Weights(format!("invalid weight {w}")));
        }
        let total: f64 = items.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(GeometryError::Weights("all weights are zero".into()));
        }
        let normalized = items.iter().map(|(_, w)| w / total).collect();
        Ok(Self { items, normalized })
    }

    /// One polygon with weight 1.
    pub fn uniform(poly: PolygonRegion) -> Self {
        Self {
            items: vec![(GeometryItem::Polygon(poly), 1.0)],
            normalized: vec![1.0],
        }
    }

    /// Non-excluded polylines weighted by length.
    pub fn roads(roads: &[Polyline]) -> Result<Self, GeometryError> {
        let items: Vec<_> = roads
            .iter()
            .filter(|r| !r.excluded)
            .map(|r| (GeometryItem::Polyline(r.clone()), r.total_length()))
            .collect();
        if items.is_empty() {
            return Err(GeometryError::EmptyRoads);
        }
        Self::new(items)
    }

    pub fn items(&self) -> &[(GeometryItem, f64)] {
        &self.items
    }

    pub fn normalized_weights(&self) -> &[f64] {
        &self.normalized
    }

    pub fn sampler(&self) -> Result<WeightedSampler, GeometryError> {
        WeightedSampler::new(self)
    }
}

#[derive(Debug, Clone)]
enum ItemSampler {
    Area(AreaSampler),
    Road(RoadSampler),
}

#[derive(Debug, Clone)]
pub struct WeightedSampler {
    samplers: Vec<ItemSampler>,
    table: AliasTable,
}

impl WeightedSampler {
    pub fn new(set: &WeightedGeometrySet) -> Result<Self, GeometryError> {
        let mut samplers = Vec::with_capacity(set.items.len());
        let mut weights = Vec::with_capacity(set.items.len());
        for (item, w) in &set.items {
            // zero-weight items are never drawn; don't let them fail the build
            let s = match item {
                GeometryItem::Polygon(p) => AreaSampler::new(std::slice::from_ref(p)).map(ItemSampler::Area),
                GeometryItem::Polyline(l) => {
                    let mut l = l.clone();
                    l.excluded = false;
                    RoadSampler::new(std::slice::from_ref(&l)).map(ItemSampler::Road)
                }
            };
            match s {
                Ok(s) => {
                    samplers.push(s);
                    weights.push(*w);
                }
                Err(e) if *w > 0.0 => return Err(e),
                Err(_) => {}
            }
        }
        let table = AliasTable::new(&weights).map_err(|e| GeometryError::Weights(e.to_string()))?;
        Ok(Self { samplers, table })
    }
}

impl PointSampler for WeightedSampler {
    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint {
        let i = if self.samplers.len() == 1 { 0 } else { self.table.sample(rng) };
        match &self.samplers[i] {
            ItemSampler::Area(s) => s.sample_point(rng),
            ItemSampler::Road(s) => s.sample_point(rng),
        }
    }
}

/// Choose an item by normalized weight, then sample uniformly within it.
pub fn sample_weighted_geometry<R: Rng + ?Sized>(
    set: &WeightedGeometrySet,
    n: usize,
    rng: &mut R,
) -> Result<Vec<GeoPoint>, GeometryError> {
    Ok(set.sampler()?.sample_points(n, rng))
}
