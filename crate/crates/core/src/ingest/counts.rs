use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_writer, write_err, CsvInput, IngestError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountType {
    Persons,
    Households,
}

impl CountType {
    pub fn as_str(&self) -> &'static str {
        match self {
            CountType::Persons => "persons",
            CountType::Households => "households",
        }
    }
}

/// Number of agents to synthesize in a region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationCount {
    pub region_id: String,
    pub count: u64,
    pub count_type: CountType,
}

/// Reads `region_id,count,count_type`.
pub fn load_counts(path: &Path) -> Result<Vec<PopulationCount>, IngestError> {
    let mut input = CsvInput::open(path, &["region_id", "count", "count_type"])?;
    let (ci, ni, ti) = (
        input.column("region_id").unwrap(),
        input.column("count").unwrap(),
        input.column("count_type").unwrap(),
    );
    let path = input.path().to_path_buf();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in input.rows() {
        let (line, rec) = row?;
        let region_id = rec[ci].to_string();
        if region_id.is_empty() {
            return Err(IngestError::at(&path, line, "empty region_id"));
        }
        if !seen.insert(region_id.clone()) {
            return Err(IngestError::at(&path, line, format!("duplicate region_id `{region_id}`")));
        }
        let raw = &rec[ni];
        let count: u64 = match raw.parse::<i64>() {
            Ok(c) if c < 0 => {
                return Err(IngestError::at(&path, line, format!("negative count {c}")));
            }
            Ok(c) => c as u64,
            Err(_) => {
                return Err(IngestError::at(&path, line, format!("count is not an integer: {raw:?}")));
            }
        };
        let count_type = match rec[ti].to_ascii_lowercase().as_str() {
            "persons" => CountType::Persons,
            "households" => CountType::Households,
            other => {
                return Err(IngestError::at(
                    &path,
                    line,
                    format!("unknown count_type `{other}` (expected persons or households)"),
                ));
            }
        };
        out.push(PopulationCount {
            region_id,
            count,
            count_type,
        });
    }
    Ok(out)
}

pub fn write_counts(path: &Path, counts: &[PopulationCount]) -> Result<(), IngestError> {
    let mut w = csv_writer(path)?;
    w.write_record(["region_id", "count", "count_type"])
        .map_err(|e| write_err(path, e))?;
    for c in counts {
        w.write_record([c.region_id.as_str(), &c.count.to_string(), c.count_type.as_str()])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_rows() {
        let f = file("region_id,count,count_type\nR1,1000,persons\nR2,40,households\n");
        let counts = load_counts(f.path()).unwrap();
        assert_eq!(
            counts[0],
            PopulationCount {
                region_id: "R1".into(),
                count: 1000,
                count_type: CountType::Persons
            }
        );
        assert_eq!(counts[1].count_type, CountType::Households);
    }

    #[test]
    fn duplicate_region_is_error() {
        let f = file("region_id,count,count_type\nR1,1,persons\nR1,2,persons\n");
        let err = load_counts(f.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":3:") && msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn negative_count_is_error() {
        let f = file("region_id,count,count_type\nR2,-5,persons\n");
        let msg = load_counts(f.path()).unwrap_err().to_string();
        assert!(msg.contains("negative"), "{msg}");
    }

    #[test]
    fn other_malformations() {
        let missing = file("region_id,count\nR1,3\n");
        assert!(load_counts(missing.path()).unwrap_err().to_string().contains("count_type"));
        let unknown = file("region_id,count,count_type\nR1,3,dogs\n");
        assert!(load_counts(unknown.path()).unwrap_err().to_string().contains("dogs"));
        let ragged = file("region_id,count,count_type\nR1,3\n");
        assert!(load_counts(ragged.path()).unwrap_err().to_string().contains(":2"));
        let nonint = file("region_id,count,count_type\nR1,3.5,persons\n");
        assert!(load_counts(nonint.path()).is_err());
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(rows in proptest::collection::btree_map("[A-Za-z0-9_-]{1,8}", (0u64..10_000_000, any::<bool>()), 0..20)) {
            let counts: Vec<PopulationCount> = rows
                .into_iter()
                .map(|(region_id, (count, p))| PopulationCount {
                    region_id,
                    count,
                    count_type: if p { CountType::Persons } else { CountType::Households },
                })
                .collect();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_counts(f.path(), &counts).unwrap();
            prop_assert_eq!(load_counts(f.path()).unwrap(), counts);
        }
    }
}
