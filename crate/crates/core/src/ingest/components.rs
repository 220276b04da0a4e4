use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_writer, write_err, CsvInput, IngestError};
use crate::geometry::GeoPoint;

/// A school, workplace, place of worship, ... with a location and capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentalComponent {
    pub id: String,
    pub kind: String,
    pub location: GeoPoint,
    pub capacity: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentalComponentSet {
    pub components: Vec<EnvironmentalComponent>,
}

impl EnvironmentalComponentSet {
    pub fn new(components: Vec<EnvironmentalComponent>) -> Result<Self, String> {
        let mut ids = HashSet::new();
        for c in &components {
            if c.capacity < 1 {
                return Err(format!("component `{}` has capacity 0", c.id));
            }
            if !c.location.is_valid() {
                return Err(format!("component `{}` has an invalid location", c.id));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(format!("duplicate component_id `{}`", c.id));
            }
        }
        Ok(Self { components })
    }

    pub fn kinds(&self) -> BTreeSet<&str> {
        self.components.iter().map(|c| c.kind.as_str()).collect()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a EnvironmentalComponent> + 'a {
        self.components.iter().filter(move |c| c.kind == kind)
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Reads `component_id,kind,longitude,latitude,capacity`.
pub fn load_components(path: &Path) -> Result<EnvironmentalComponentSet, IngestError> {
    let cols = ["component_id", "kind", "longitude", "latitude", "capacity"];
    let mut input = CsvInput::open(path, &cols)?;
    let idx: Vec<usize> = cols.iter().map(|c| input.column(c).unwrap()).collect();
    let path = input.path().to_path_buf();
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for row in input.rows() {
        let (line, rec) = row?;
        let id = rec[idx[0]].to_string();
        if id.is_empty() {
            return Err(IngestError::at(&path, line, "empty component_id"));
        }
        if !ids.insert(id.clone()) {
            return Err(IngestError::at(&path, line, format!("duplicate component_id `{id}`")));
        }
        let num = |i: usize, name: &str| -> Result<f64, IngestError> {
            rec[idx[i]]
                .parse::<f64>()
                .map_err(|_| IngestError::at(&path, line, format!("`{name}` is not a number")))
        };
        let (lon, lat) = (num(2, "longitude")?, num(3, "latitude")?);
        let location = GeoPoint::new(lon, lat).map_err(|e| IngestError::at(&path, line, e.to_string()))?;
        let capacity: u64 = match rec[idx[4]].parse::<u64>() {
            Ok(c) if c >= 1 => c,
            _ => {
                return Err(IngestError::at(&path, line, format!("capacity must be an integer ≥ 1, got {:?}", &rec[idx[4]])));
            }
        };
        out.push(EnvironmentalComponent {
            id,
            kind: rec[idx[1]].to_string(),
            location,
            capacity,
        });
    }
    Ok(EnvironmentalComponentSet { components: out })
}

pub fn write_components(path: &Path, set: &EnvironmentalComponentSet) -> Result<(), IngestError> {
    let mut w = csv_writer(path)?;
    w.write_record(["component_id", "kind", "longitude", "latitude", "capacity"])
        .map_err(|e| write_err(path, e))?;
    for c in &set.components {
        w.write_record([
            c.id.as_str(),
            &c.kind,
            &c.location.lon.to_string(),
            &c.location.lat.to_string(),
            &c.capacity.to_string(),
        ])
        .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

/// Known first moment M_r of a household variable in a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTarget {
    pub region_id: String,
    pub variable: String,
    pub moment: f64,
}

/// Reads `region_id,variable,moment`.
pub fn load_moments(path: &Path) -> Result<Vec<MomentTarget>, IngestError> {
    let mut input = CsvInput::open(path, &["region_id", "variable", "moment"])?;
    let (ri, vi, mi) = (
        input.column("region_id").unwrap(),
        input.column("variable").unwrap(),
        input.column("moment").unwrap(),
    );
    let path = input.path().to_path_buf();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in input.rows() {
        let (line, rec) = row?;
        let moment: f64 = rec[mi]
            .parse()
            .ok()
            .filter(|m: &f64| m.is_finite())
            .ok_or_else(|| IngestError::at(&path, line, format!("moment is not a finite number: {:?}", &rec[mi])))?;
        let region_id = rec[ri].to_string();
        if !seen.insert(region_id.clone()) {
            return Err(IngestError::at(&path, line, format!("second moment target for region `{region_id}`")));
        }
        out.push(MomentTarget {
            region_id,
            variable: rec[vi].to_string(),
            moment,
        });
    }
    Ok(out)
}

pub fn write_moments(path: &Path, targets: &[MomentTarget]) -> Result<(), IngestError> {
    let mut w = csv_writer(path)?;
    w.write_record(["region_id", "variable", "moment"]).map_err(|e| write_err(path, e))?;
    for t in targets {
        w.write_record([t.region_id.as_str(), &t.variable, &t.moment.to_string()])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            f.path(),
            "component_id,kind,longitude,latitude,capacity\nS1,school,-75.5,39.1,400\nW1,workplace,-75.51,39.12,12\n",
        )
        .unwrap();
        let set = load_components(f.path()).unwrap();
        assert_eq!(set.components.len(), 2);
        assert_eq!(set.kinds().into_iter().collect::<Vec<_>>(), ["school", "workplace"]);
        let g = tempfile::NamedTempFile::new().unwrap();
        write_components(g.path(), &set).unwrap();
        assert_eq!(load_components(g.path()).unwrap(), set);
    }

    #[test]
    fn bad_components() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "component_id,kind,longitude,latitude,capacity\nS1,school,0,0,0\n").unwrap();
        assert!(load_components(f.path()).unwrap_err().to_string().contains("capacity"));
        std::fs::write(f.path(), "component_id,kind,longitude,latitude,capacity\nS1,school,0,95,3\n").unwrap();
        assert!(load_components(f.path()).is_err());
    }

    #[test]
    fn moments_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "region_id,variable,moment\nGM,n_persons,5.25\n").unwrap();
        let m = load_moments(f.path()).unwrap();
        assert_eq!(m[0].moment, 5.25);
        let g = tempfile::NamedTempFile::new().unwrap();
        write_moments(g.path(), &m).unwrap();
        assert_eq!(load_moments(g.path()).unwrap(), m);
    }
}
