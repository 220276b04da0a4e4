use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_writer, parse_nonneg, write_err, CsvInput, IngestError};

/// Relative disagreement allowed between the totals of different variables
/// of the same region before a warning is raised.
pub const MARGINAL_TOLERANCE: f64 = 0.005;

/// Category totals T_k for one variable of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTable {
    pub region_id: String,
    pub variable: String,
    pub categories: Vec<String>,
    pub totals: Vec<f64>,
}

impl MarginalTable {
    /// n = Σ_k T_k.
    pub fn total(&self) -> f64 {
        self.totals.iter().sum()
    }

    /// T_k / n. All zeros when n = 0.
    pub fn proportions(&self) -> Vec<f64> {
        let n = self.total();
        self.totals
            .iter()
            .map(|t| if n > 0.0 { t / n } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalWarning {
    pub region_id: String,
    pub variables: (String, String),
    pub totals: (f64, f64),
    pub relative_difference: f64,
}

/// Reads `region_id,variable,category,total`. Tables are grouped by
/// (region, variable) in order of first appearance, categories in file order.
/// A row with empty `category` and `total` declares a variable with no
/// categories, which is rejected.
pub fn load_marginals(path: &Path) -> Result<Vec<MarginalTable>, IngestError> {
    let mut input = CsvInput::open(path, &["region_id", "variable", "category", "total"])?;
    let cols: Vec<usize> = ["region_id", "variable", "category", "total"]
        .iter()
        .map(|c| input.column(c).unwrap())
        .collect();
    let path = input.path().to_path_buf();
    let mut order: Vec<(String, String)> = Vec::new();
    let mut tables: BTreeMap<(String, String), (u64, MarginalTable)> = BTreeMap::new();

    for row in input.rows() {
        let (line, rec) = row?;
        let (region, variable) = (rec[cols[0]].to_string(), rec[cols[1]].to_string());
        if region.is_empty() || variable.is_empty() {
            return Err(IngestError::at(&path, line, "empty region_id or variable"));
        }
        let key = (region.clone(), variable.clone());
        let entry = tables.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (
                line,
                MarginalTable {
                    region_id: region,
                    variable,
                    categories: Vec::new(),
                    totals: Vec::new(),
                },
            )
        });
        let (category, raw) = (&rec[cols[2]], &rec[cols[3]]);
        if category.is_empty() && raw.is_empty() {
            continue;
        }
        if category.is_empty() {
            return Err(IngestError::at(&path, line, "empty category"));
        }
        if entry.1.categories.iter().any(|c| c == category) {
            return Err(IngestError::at(&path, line, format!("duplicate category `{category}`")));
        }
        let total = parse_nonneg(&path, line, "total", raw)?;
        entry.1.categories.push(category.to_string());
        entry.1.totals.push(total);
    }

    order
        .into_iter()
        .map(|key| {
            let (line, t) = tables.remove(&key).unwrap();
            if t.categories.is_empty() {
                Err(IngestError::at(
                    &path,
                    line,
                    format!("variable `{}` of region `{}` has no categories", t.variable, t.region_id),
                ))
            } else {
                Ok(t)
            }
        })
        .collect()
}

pub fn write_marginals(path: &Path, tables: &[MarginalTable]) -> Result<(), IngestError> {
    let mut w = csv_writer(path)?;
    w.write_record(["region_id", "variable", "category", "total"])
        .map_err(|e| write_err(path, e))?;
    for t in tables {
        for (c, v) in t.categories.iter().zip(&t.totals) {
            w.write_record([t.region_id.as_str(), &t.variable, c, &v.to_string()])
                .map_err(|e| write_err(path, e))?;
        }
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

/// Flags regions whose per-variable totals disagree by more than
/// [`MARGINAL_TOLERANCE`] (relative to the larger total).
pub fn check_marginal_consistency(tables: &[MarginalTable]) -> Vec<MarginalWarning> {
    let mut by_region: BTreeMap<&str, Vec<&MarginalTable>> = BTreeMap::new();
    for t in tables {
        by_region.entry(&t.region_id).or_default().push(t);
    }
    let mut out = Vec::new();
    for (region, ts) in by_region {
        let lo = ts.iter().min_by(|a, b| a.total().total_cmp(&b.total())).unwrap();
        let hi = ts.iter().max_by(|a, b| a.total().total_cmp(&b.total())).unwrap();
        let (a, b) = (lo.total(), hi.total());
        if b <= 0.0 {
            continue;
        }
        let rel = (b - a) / b;
        if rel > MARGINAL_TOLERANCE {
            out.push(MarginalWarning {
                region_id: region.to_string(),
                variables: (lo.variable.clone(), hi.variable.clone()),
                totals: (a, b),
                relative_difference: rel,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), contents).unwrap();
        f
    }

    #[test]
    fn groups_by_region_and_variable() {
        let f = file(
            "region_id,variable,category,total\n\
             R1,age,0-17,300\nR1,age,18+,700\nR1,sex,f,510\nR1,sex,m,490\nR2,age,0-17,10\n",
        );
        let t = load_marginals(f.path()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].categories, ["0-17", "18+"]);
        assert_eq!(t[0].totals, [300.0, 700.0]);
        assert_eq!(t[0].total(), 1000.0);
        assert_eq!(t[2].region_id, "R2");
        assert!(check_marginal_consistency(&t).is_empty());
    }

    #[test]
    fn disagreeing_totals_are_flagged() {
        let f = file("region_id,variable,category,total\nR1,age,a,500\nR1,age,b,500\nR1,sex,f,1010\n");
        let w = check_marginal_consistency(&load_marginals(f.path()).unwrap());
        assert_eq!(w.len(), 1);
        assert!((w[0].relative_difference - 10.0 / 1010.0).abs() < 1e-12);
        // 0.4% passes
        let f = file("region_id,variable,category,total\nR1,age,a,1000\nR1,sex,f,1004\n");
        assert!(check_marginal_consistency(&load_marginals(f.path()).unwrap()).is_empty());
    }

    #[test]
    fn empty_block_is_error() {
        let f = file("region_id,variable,category,total\nR1,age,,\n");
        let msg = load_marginals(f.path()).unwrap_err().to_string();
        assert!(msg.contains("no categories") && msg.contains(":2:"), "{msg}");
    }

    #[test]
    fn negative_total_is_error() {
        let f = file("region_id,variable,category,total\nR1,age,a,-1\n");
        assert!(load_marginals(f.path()).unwrap_err().to_string().contains("nonnegative"));
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(
            raw in proptest::collection::btree_map(
                ("[A-Z][0-9]", "[a-z]{1,5}"),
                proptest::collection::btree_map("[a-z0-9+-]{1,6}", 0.0f64..1e7, 1..6),
                1..8,
            )
        ) {
            let tables: Vec<MarginalTable> = raw
                .into_iter()
                .map(|((region_id, variable), cats)| MarginalTable {
                    region_id,
                    variable,
                    categories: cats.keys().cloned().collect(),
                    totals: cats.values().copied().collect(),
                })
                .collect();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_marginals(f.path(), &tables).unwrap();
            prop_assert_eq!(load_marginals(f.path()).unwrap(), tables);
        }
    }
}
