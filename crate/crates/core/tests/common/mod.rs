#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use synpop::geometry::{PolygonRegion, RegionGeometry};
use synpop::ingest::{
    CountType, MarginalTable, MicrodataRecord, MicrodataTable, PopulationCount, RecordRole, Schema, Value,
    VariableDecl, VariableKind, VariableLevel,
};
use synpop::pipeline::{GenerationConfig, Inputs, Pool};

pub const CAT3: [&str; 3] = ["a", "b", "c"];
pub const CAT6: [&str; 6] = ["k0", "k1", "k2", "k3", "k4", "k5"];

pub fn example_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example")
}

fn decl(name: &str, kind: VariableKind, level: VariableLevel) -> VariableDecl {
    VariableDecl {
        name: name.into(),
        kind,
        level,
    }
}

/// A pool with four correlated household variables (3, 4, 5 and 6
/// categories) and 1 to 6 persons per household, all weights 1.
pub fn synthetic_pool<R: Rng>(households: usize, rng: &mut R) -> MicrodataTable {
    let schema = Schema {
        variables: vec![
            decl("v1", VariableKind::Categorical, VariableLevel::Household),
            decl("v2", VariableKind::Ordinal, VariableLevel::Household),
            decl("v3", VariableKind::Ordinal, VariableLevel::Household),
            decl("v4", VariableKind::Categorical, VariableLevel::Household),
            decl("age", VariableKind::Ordinal, VariableLevel::Person),
        ],
    };
    let mut records = Vec::new();
    for h in 0..households {
        let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let noise = |rng: &mut R, s: f64| (rng.random::<f64>() - 0.5) * s;
        let v1 = ((z + 1.0) * 1.5 + noise(rng, 1.5)).clamp(0.0, 2.999) as usize;
        let v2 = ((z + 1.0) * 2.0 + noise(rng, 2.0)).clamp(0.0, 3.999) as usize;
        let v3 = (rng.random::<f64>() * 5.0) as usize;
        let v4 = (((z + 1.0) * 3.0 + noise(rng, 4.0)).clamp(0.0, 5.999)) as usize;
        let size = 1 + ((v2 as f64 * 1.2 + rng.random::<f64>() * 2.5) as usize).min(5);
        let serial = format!("h{h}");
        records.push(MicrodataRecord {
            record_id: serial.clone(),
            household_serial: serial.clone(),
            role: RecordRole::Household,
            weight: 1.0,
            characteristics: BTreeMap::from([
                ("v1".to_string(), Value::Category(CAT3[v1].into())),
                ("v2".to_string(), Value::Number(v2 as f64)),
                ("v3".to_string(), Value::Number(v3 as f64)),
                ("v4".to_string(), Value::Category(CAT6[v4].into())),
            ]),
        });
        for p in 0..size {
            records.push(MicrodataRecord {
                record_id: format!("{serial}p{p}"),
                household_serial: serial.clone(),
                role: RecordRole::Person,
                weight: 1.0,
                characteristics: BTreeMap::from([("age".to_string(), Value::Number(rng.random_range(0..90) as f64))]),
            });
        }
    }
    MicrodataTable::from_records(schema, records).unwrap()
}

pub fn categories(var: &str) -> Vec<String> {
    match var {
        "v1" => CAT3.iter().map(|s| s.to_string()).collect(),
        "v2" => (0..4).map(|i| i.to_string()).collect(),
        "v3" => (0..5).map(|i| i.to_string()).collect(),
        "v4" => CAT6.iter().map(|s| s.to_string()).collect(),
        _ => unreachable!(),
    }
}

/// Category proportions of a household variable in the pool (unweighted).
pub fn pool_proportions(micro: &MicrodataTable, var: &str) -> Vec<f64> {
    let cats = categories(var);
    let mut counts = vec![0.0; cats.len()];
    for h in micro.households() {
        let label = match &h.values[var] {
            Value::Number(x) => format!("{x}"),
            Value::Category(s) => s.clone(),
        };
        counts[cats.iter().position(|c| *c == label).unwrap()] += 1.0;
    }
    let n: f64 = counts.iter().sum();
    counts.into_iter().map(|c| c / n).collect()
}

/// Region marginals: pool proportions times exp(σ·U(−√3, √3)), renormalized
/// to `total`.
pub fn perturbed_marginals<R: Rng>(
    micro: &MicrodataTable,
    region_id: &str,
    total: f64,
    sigma: f64,
    rng: &mut R,
) -> Vec<MarginalTable> {
    ["v1", "v2", "v3", "v4"]
        .iter()
        .map(|var| {
            let p = pool_proportions(micro, var);
            let q: Vec<f64> = p
                .iter()
                .map(|x| x * (sigma * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0)).exp())
                .collect();
            let s: f64 = q.iter().sum();
            MarginalTable {
                region_id: region_id.into(),
                variable: var.to_string(),
                categories: categories(var),
                totals: q.iter().map(|x| total * x / s).collect(),
            }
        })
        .collect()
}

/// Region `i` is a 0.02° square east of region `i − 1`.
pub fn square(i: usize) -> RegionGeometry {
    let x = -75.6 + 0.03 * i as f64;
    RegionGeometry::new(vec![PolygonRegion::rect(x, 39.6, x + 0.02, 39.62).unwrap()]).unwrap()
}

pub fn count(id: &str, n: u64, count_type: CountType) -> PopulationCount {
    PopulationCount {
        region_id: id.into(),
        count: n,
        count_type,
    }
}

pub fn inputs_for(micro: MicrodataTable, counts: Vec<PopulationCount>) -> Inputs {
    let geography = counts.iter().enumerate().map(|(i, c)| (c.region_id.clone(), square(i))).collect();
    Inputs {
        counts,
        geography,
        pools: vec![Pool {
            id: "puma".into(),
            micro,
            regions: None,
        }],
        ..Default::default()
    }
}

pub fn config(output_dir: &Path) -> GenerationConfig {
    let mut cfg: GenerationConfig = serde_json::from_str(
        r#"{"counts": "counts.csv", "geography": "geo.json", "microdata": [{"id": "puma", "path": "puma.csv"}]}"#,
    )
    .unwrap();
    cfg.output_dir = output_dir.to_path_buf();
    cfg
}

/// Every file in `dir` by name, with its bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}
