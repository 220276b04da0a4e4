//! Gravity-model assignment of agents to environmental components: an agent
//! picks component i with probability proportional to d⁻¹ · f(capacity).

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{great_circle_distance, GeoPoint};
use crate::ingest::{EnvironmentalComponent, EnvironmentalComponentSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssignmentError {
    #[error("no components of kind `{0}`")]
    NoComponents(String),
    #[error("invalid gravity parameters: {0}")]
    Params(String),
    #[error("agent `{0}` has an invalid location")]
    InvalidLocation(String),
}

/// One step of the capacity function: capacities ≥ `min_capacity` get at
/// least `multiplier`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    pub min_capacity: u64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GravityParams {
    /// Ordered by `min_capacity`.
    pub breakpoints: Vec<Breakpoint>,
    /// Substituted for distances below it, in kilometres.
    pub distance_floor_km: f64,
}

impl Default for GravityParams {
    fn default() -> Self {
        let bp = |min_capacity, multiplier| Breakpoint { min_capacity, multiplier };
        Self {
            breakpoints: vec![bp(0, 1.0), bp(50, 2.0), bp(250, 3.0), bp(1000, 4.0)],
            distance_floor_km: 0.01,
        }
    }
}

impl GravityParams {
    pub fn validate(&self) -> Result<(), AssignmentError> {
        if self.breakpoints.is_empty() {
            return Err(AssignmentError::Params("at least one breakpoint is required".into()));
        }
        for b in &self.breakpoints {
            if !(b.multiplier > 0.0 && b.multiplier.is_finite()) {
                return Err(AssignmentError::Params(format!("multiplier {} is not positive", b.multiplier)));
            }
        }
        for w in self.breakpoints.windows(2) {
            if w[1].min_capacity <= w[0].min_capacity {
                return Err(AssignmentError::Params("breakpoint capacities must increase".into()));
            }
            if w[1].multiplier < w[0].multiplier {
                return Err(AssignmentError::Params("multipliers must be nondecreasing".into()));
            }
        }
        if !(self.distance_floor_km > 0.0 && self.distance_floor_km.is_finite()) {
            return Err(AssignmentError::Params("distance floor must be positive".into()));
        }
        Ok(())
    }
}

/// Multiplier of the highest breakpoint at or below `c`; the first
/// multiplier below the first breakpoint.
pub fn step_capacity(c: u64, params: &GravityParams) -> f64 {
    params
        .breakpoints
        .iter()
        .rev()
        .find(|b| b.min_capacity <= c)
        .or(params.breakpoints.first())
        .map_or(1.0, |b| b.multiplier)
}

/// Assignment probabilities of an agent at `at` over `components`.
pub fn gravity_probabilities(at: GeoPoint, components: &[&EnvironmentalComponent], params: &GravityParams) -> Vec<f64> {
    let w: Vec<f64> = components
        .iter()
        .map(|c| step_capacity(c.capacity, params) / great_circle_distance(at, c.location).max(params.distance_floor_km))
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub agent_id: String,
    pub kind: String,
    pub component_id: String,
}

/// One independent draw per agent among the components of `kind`.
/// Consecutive agents at the same location share the weight computation.
pub fn gravity_assign<R: Rng + ?Sized>(
    agents: &[(String, GeoPoint)],
    components: &EnvironmentalComponentSet,
    kind: &str,
    params: &GravityParams,
    rng: &mut R,
) -> Result<Vec<Assignment>, AssignmentError> {
    params.validate()?;
    let comps: Vec<&EnvironmentalComponent> = components.of_kind(kind).collect();
    if comps.is_empty() {
        return Err(AssignmentError::NoComponents(kind.to_string()));
    }
    let mut cached: Option<(GeoPoint, Vec<f64>)> = None;
    let mut out = Vec::with_capacity(agents.len());
    for (id, at) in agents {
        if !at.is_valid() {
            return Err(AssignmentError::InvalidLocation(id.clone()));
        }
        if cached.as_ref().is_none_or(|(p, _)| p != at) {
            let mut cdf = gravity_probabilities(*at, &comps, params);
            let mut acc = 0.0;
            for x in cdf.iter_mut() {
                acc += *x;
                *x = acc;
            }
            cached = Some((*at, cdf));
        }
        let cdf = &cached.as_ref().unwrap().1;
        let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
        let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        out.push(Assignment {
            agent_id: id.clone(),
            kind: kind.to_string(),
            component_id: comps[i].id.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityUse {
    pub component_id: String,
    pub kind: String,
    pub capacity: u64,
    pub assigned: u64,
    pub utilization: f64,
}

/// Assigned agents per component relative to its capacity.
pub fn capacity_utilization(assignments: &[Assignment], components: &EnvironmentalComponentSet, kind: &str) -> Vec<CapacityUse> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for a in assignments.iter().filter(|a| a.kind == kind) {
        *counts.entry(a.component_id.as_str()).or_default() += 1;
    }
    components
        .of_kind(kind)
        .map(|c| {
            let assigned = counts.get(c.id.as_str()).copied().unwrap_or(0);
            CapacityUse {
                component_id: c.id.clone(),
                kind: c.kind.clone(),
                capacity: c.capacity,
                assigned,
                utilization: assigned as f64 / c.capacity as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EARTH_RADIUS_KM;
    use crate::rng::seeded;

    fn comp(id: &str, lon: f64, lat: f64, capacity: u64) -> EnvironmentalComponent {
        EnvironmentalComponent {
            id: id.into(),
            kind: "school".into(),
            location: GeoPoint::new(lon, lat).unwrap(),
            capacity,
        }
    }

    fn km_to_deg(km: f64) -> f64 {
        km * 180.0 / (std::f64::consts::PI * EARTH_RADIUS_KM)
    }

    fn agents(n: usize) -> Vec<(String, GeoPoint)> {
        (0..n).map(|i| (format!("a{i}"), GeoPoint::new(0.0, 0.0).unwrap())).collect()
    }

    #[test]
    fn step_lookup() {
        let bp = |min_capacity, multiplier| Breakpoint { min_capacity, multiplier };
        let p = GravityParams {
            breakpoints: vec![bp(0, 1.0), bp(100, 2.0), bp(500, 4.0)],
            ..Default::default()
        };
        assert_eq!(step_capacity(50, &p), 1.0);
        assert_eq!(step_capacity(100, &p), 2.0);
        assert_eq!(step_capacity(10000, &p), 4.0);
        let late = GravityParams {
            breakpoints: vec![bp(10, 3.0)],
            ..Default::default()
        };
        assert_eq!(step_capacity(1, &late), 3.0);
    }

    #[test]
    fn invalid_params() {
        let mut p = GravityParams::default();
        p.breakpoints[2].multiplier = 1.5;
        assert!(p.validate().is_err());
        let empty = GravityParams {
            breakpoints: vec![],
            ..Default::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn single_component_takes_everyone() {
        let set = EnvironmentalComponentSet::new(vec![comp("S", 0.1, 0.1, 10)]).unwrap();
        let a = gravity_assign(&agents(50), &set, "school", &GravityParams::default(), &mut seeded(1)).unwrap();
        assert!(a.iter().all(|x| x.component_id == "S"));
        assert!(gravity_assign(&agents(1), &set, "work", &GravityParams::default(), &mut seeded(1)).is_err());
    }

    fn split(set: &EnvironmentalComponentSet, p0: f64) {
        let n = 20_000;
        let a = gravity_assign(&agents(n), set, "school", &GravityParams::default(), &mut seeded(11)).unwrap();
        let c0 = a.iter().filter(|x| x.component_id == "A").count() as f64;
        let sd = (n as f64 * p0 * (1.0 - p0)).sqrt();
        assert!((c0 - n as f64 * p0).abs() < 3.0 * sd, "{c0}");
    }

    #[test]
    fn equidistant_components_split_evenly() {
        let d = km_to_deg(1.0);
        let set = EnvironmentalComponentSet::new(vec![comp("A", d, 0.0, 10), comp("B", -d, 0.0, 10)]).unwrap();
        split(&set, 0.5);
    }

    #[test]
    fn inverse_distance_weights() {
        let set = EnvironmentalComponentSet::new(vec![
            comp("A", km_to_deg(1.0), 0.0, 10),
            comp("B", km_to_deg(2.0), 0.0, 10),
        ])
        .unwrap();
        let c: Vec<&EnvironmentalComponent> = set.components.iter().collect();
        let p = gravity_probabilities(GeoPoint::new(0.0, 0.0).unwrap(), &c, &GravityParams::default());
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-6 && (p[1] - 1.0 / 3.0).abs() < 1e-6);
        split(&set, 2.0 / 3.0);
    }

    #[test]
    fn invariances() {
        let comps = [comp("A", 0.01, 0.02, 30), comp("B", -0.03, 0.01, 300), comp("C", 0.02, -0.05, 2000)];
        let c: Vec<&EnvironmentalComponent> = comps.iter().collect();
        let at = GeoPoint::new(0.001, 0.002).unwrap();
        let base = GravityParams::default();
        let p = gravity_probabilities(at, &c, &base);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut scaled = base.clone();
        scaled.breakpoints.iter_mut().for_each(|b| b.multiplier *= 4.0);
        assert_eq!(gravity_probabilities(at, &c, &scaled), p);
        // doubling every distance along the equator from the origin
        let far: Vec<EnvironmentalComponent> = [(0.5, 30), (-1.0, 300), (2.0, 2000)]
            .iter()
            .enumerate()
            .map(|(i, &(x, cap))| comp(&i.to_string(), x, 0.0, cap))
            .collect();
        let near: Vec<EnvironmentalComponent> = far.iter().map(|c| comp(&c.id, c.location.lon / 2.0, 0.0, c.capacity)).collect();
        let origin = GeoPoint::new(0.0, 0.0).unwrap();
        let pf = gravity_probabilities(origin, &far.iter().collect::<Vec<_>>(), &base);
        let pn = gravity_probabilities(origin, &near.iter().collect::<Vec<_>>(), &base);
        for (a, b) in pf.iter().zip(&pn) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn coincident_agent_uses_floor() {
        let comps = [comp("A", 0.0, 0.0, 10), comp("B", km_to_deg(0.02), 0.0, 10)];
        let c: Vec<&EnvironmentalComponent> = comps.iter().collect();
        let p = gravity_probabilities(GeoPoint::new(0.0, 0.0).unwrap(), &c, &GravityParams::default());
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn utilization_counts() {
        let set = EnvironmentalComponentSet::new(vec![comp("A", 0.0, 0.0, 4), comp("B", 1.0, 0.0, 10)]).unwrap();
        let a = vec![
            Assignment {
                agent_id: "x".into(),
                kind: "school".into(),
                component_id: "A".into(),
            };
            2
        ];
        let u = capacity_utilization(&a, &set, "school");
        assert_eq!(u[0].assigned, 2);
        assert_eq!(u[0].utilization, 0.5);
        assert_eq!(u[1].assigned, 0);
    }
}
