use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LocationMethod, Method, PipelineError, RegionError, SyntheticEcosystem};
use crate::diagnostics::IpfSummary;
use crate::ingest::{CountType, MicrodataTable, Value};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn household_file(region_id: &str) -> String {
    format!("household_{region_id}.csv")
}

pub fn people_file(region_id: &str) -> String {
    format!("people_{region_id}.csv")
}

pub fn env_file(kind: &str, region_id: &str) -> String {
    format!("env_{kind}_{region_id}.csv")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    /// Data rows, excluding the header.
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionManifest {
    pub region_id: String,
    pub seed: u64,
    pub pool: Option<String>,
    pub count: u64,
    pub count_type: CountType,
    pub ok: bool,
    pub households: usize,
    pub persons: usize,
    pub files: Vec<FileEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipf: Option<IpfSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Index of a run's output files. Deterministic: regions in id order and no
/// timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub method: Method,
    pub location: LocationMethod,
    pub environments: Vec<String>,
    pub regions: Vec<RegionManifest>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| PipelineError::Io { path, source: e })
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, PipelineError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Io {
        path: path.clone(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

struct Sink<'a> {
    path: &'a Path,
    out: csv::Writer<BufWriter<File>>,
    rows: usize,
}

impl<'a> Sink<'a> {
    fn create(path: &'a Path, header: &[&str]) -> Result<Self, RegionError> {
        let file = File::create(path).map_err(|e| RegionError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut s = Sink {
            path,
            out: csv::Writer::from_writer(BufWriter::new(file)),
            rows: 0,
        };
        s.record(header)?;
        s.rows = 0;
        Ok(s)
    }

    fn record<I, T>(&mut self, fields: I) -> Result<(), RegionError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.rows += 1;
        self.out.write_record(fields).map_err(|e| self.io(e.into()))
    }

    fn io(&self, e: std::io::Error) -> RegionError {
        RegionError::Io {
            path: self.path.to_path_buf(),
            source: e,
        }
    }

    fn finish(mut self) -> Result<usize, RegionError> {
        self.out.flush().map_err(|e| self.io(e))?;
        Ok(self.rows)
    }
}

fn cell(v: Option<&Value>) -> String {
    v.map(ToString::to_string).unwrap_or_default()
}

/// Coordinates are written with 8 decimals (about a millimetre).
fn coord(x: f64) -> String {
    format!("{x:.8}")
}

/// Writes the household, people and per-kind environment files of one region.
pub fn write_outputs(eco: &SyntheticEcosystem, micro: &MicrodataTable, dir: &Path) -> Result<Vec<FileEntry>, RegionError> {
    std::fs::create_dir_all(dir).map_err(|e| RegionError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let rid = &eco.region_id;
    let mut files = Vec::new();

    let hh_vars = micro.household_vars();
    let name = household_file(rid);
    let path = dir.join(&name);
    let mut header = vec!["household_id", "region_id", "longitude", "latitude"];
    header.extend(hh_vars.iter().map(String::as_str));
    header.push("source_record_id");
    let mut sink = Sink::create(&path, &header)?;
    for h in &eco.households {
        let rec = &micro.households()[h.source];
        let mut row = vec![h.household_id.clone(), rid.clone(), coord(h.location.lon), coord(h.location.lat)];
        row.extend(hh_vars.iter().map(|v| cell(rec.values.get(v))));
        row.push(rec.record_id.clone());
        sink.record(&row)?;
    }
    files.push(FileEntry { name, rows: sink.finish()? });

    let p_vars = micro.person_vars();
    let name = people_file(rid);
    let path = dir.join(&name);
    let mut header = vec!["person_id", "household_id"];
    header.extend(p_vars.iter().map(String::as_str));
    let mut sink = Sink::create(&path, &header)?;
    for p in &eco.persons {
        let rec = &micro.persons()[p.source];
        let mut row = vec![p.person_id.clone(), eco.households[p.household].household_id.clone()];
        row.extend(p_vars.iter().map(|v| cell(rec.values.get(v))));
        sink.record(&row)?;
    }
    files.push(FileEntry { name, rows: sink.finish()? });

    for (kind, assignments) in &eco.assignments {
        let name = env_file(kind, rid);
        let path = dir.join(&name);
        let mut sink = Sink::create(&path, &["agent_id", "kind", "component_id"])?;
        for a in assignments {
            sink.record([&a.agent_id, &a.kind, &a.component_id])?;
        }
        files.push(FileEntry { name, rows: sink.finish()? });
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{micro_with_sizes, square_inputs, test_config};
    use super::super::{generate_region, SyntheticHousehold};
    use super::*;
    use crate::geometry::GeoPoint;
    use crate::ingest::PopulationCount;

    fn eco(n: u64) -> (SyntheticEcosystem, MicrodataTable) {
        let micro = micro_with_sizes(&[2, 3]);
        let counts = vec![PopulationCount {
            region_id: "R1".into(),
            count: n,
            count_type: CountType::Households,
        }];
        let inputs = square_inputs(micro.clone(), counts);
        (generate_region(&inputs.counts[0], &inputs, &test_config(), 4).unwrap(), micro)
    }

    #[test]
    fn empty_region_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let (e, micro) = eco(0);
        let files = write_outputs(&e, &micro, dir.path()).unwrap();
        assert!(files.iter().all(|f| f.rows == 0));
        let text = std::fs::read_to_string(dir.path().join("household_R1.csv")).unwrap();
        assert_eq!(text, "household_id,region_id,longitude,latitude,tenure,source_record_id\n");
        let text = std::fs::read_to_string(dir.path().join("people_R1.csv")).unwrap();
        assert_eq!(text, "person_id,household_id,age\n");
    }

    #[test]
    fn row_counts_match_the_ecosystem() {
        let dir = tempfile::tempdir().unwrap();
        let (mut e, micro) = eco(0);
        e.households = vec![
            SyntheticHousehold {
                household_id: "R1-1".into(),
                source: 0,
                location: GeoPoint { lon: -75.5, lat: 39.25 },
            },
            SyntheticHousehold {
                household_id: "R1-2".into(),
                source: 1,
                location: GeoPoint { lon: -75.123456789, lat: 39.0 },
            },
        ];
        e.persons = micro.households()[0]
            .persons
            .iter()
            .map(|&p| (0, p))
            .chain(micro.households()[1].persons.iter().map(|&p| (1, p)))
            .enumerate()
            .map(|(i, (h, p))| super::super::SyntheticPerson {
                person_id: format!("x{i}"),
                household: h,
                source: p,
            })
            .collect();
        write_outputs(&e, &micro, dir.path()).unwrap();
        let hh = std::fs::read_to_string(dir.path().join("household_R1.csv")).unwrap();
        let people = std::fs::read_to_string(dir.path().join("people_R1.csv")).unwrap();
        assert_eq!(hh.lines().count(), 3);
        assert_eq!(people.lines().count(), 6);
        let row: Vec<&str> = hh.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row, ["R1-1", "R1", "-75.50000000", "39.25000000", "own", "h0"]);
        let lon: f64 = hh.lines().nth(2).unwrap().split(',').nth(2).unwrap().parse().unwrap();
        assert!((lon - -75.123456789).abs() < 5e-9);
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            version: "1".into(),
            seed: 3,
            method: Method::Ipf,
            location: LocationMethod::Uniform,
            environments: vec!["school".into()],
            regions: vec![RegionManifest {
                region_id: "A".into(),
                seed: 11,
                pool: Some("p".into()),
                count: 5,
                count_type: CountType::Persons,
                ok: true,
                households: 2,
                persons: 5,
                files: vec![FileEntry {
                    name: "household_A.csv".into(),
                    rows: 2,
                }],
                ipf: None,
                error: None,
            }],
        };
        m.write(dir.path()).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }
}
