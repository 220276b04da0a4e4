use std::collections::HashMap;
use std::path::Path;

use super::output::{env_file, household_file, people_file, read_manifest};
use super::{Inputs, PipelineError};
use crate::assignment::{capacity_utilization, Assignment};
use crate::diagnostics::{
    build_report, map_file_name, render_markdown, render_svg_map, DiagnosticsReport, RegionObservation,
    VariableComparison, MAP_POINTS,
};
use crate::geometry::GeoPoint;
use crate::ingest::{MarginalTable, MicrodataTable, Value, N_PERSONS};
use crate::tables::Binning;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const REPORT_FILE: &str = "report.md";

/// A CSV file held in memory with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_csv_table(path: &Path) -> Result<CsvTable, PipelineError> {
    let bad = |e: csv::Error| PipelineError::Config(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(bad)?;
    let header = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(bad)?;
    Ok(CsvTable { header, rows })
}

fn parse_value(raw: &str, numeric: bool) -> Option<Value> {
    if raw.is_empty() {
        return None;
    }
    if numeric {
        raw.parse().ok().map(Value::Number)
    } else {
        Some(Value::Category(raw.to_string()))
    }
}

/// Generated counts per marginal category, or `None` when the variable is not
/// present in the output files.
fn compare(
    table: &MarginalTable,
    micro: &MicrodataTable,
    households: &CsvTable,
    people: &CsvTable,
    persons_per_household: &HashMap<&str, usize>,
) -> Option<VariableComparison> {
    let binning = match Binning::from_marginal(table, micro) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("region `{}`: cannot compare `{}`: {e}", table.region_id, table.variable);
            return None;
        }
    };
    let numeric = binning.kind.is_numeric();
    let mut generated = vec![0.0; binning.len()];
    let mut add = |v: Option<Value>| {
        if let Some(k) = v.and_then(|v| binning.bin(&v)) {
            generated[k] += 1.0;
        }
    };
    if let Some(c) = households.column(&table.variable) {
        households.rows.iter().for_each(|r| add(parse_value(&r[c], numeric)));
    } else if table.variable == N_PERSONS {
        let id = households.column("household_id")?;
        for r in &households.rows {
            let n = persons_per_household.get(&r[id]).copied().unwrap_or(0);
            add(Some(Value::Number(n as f64)));
        }
    } else if let Some(c) = people.column(&table.variable) {
        people.rows.iter().for_each(|r| add(parse_value(&r[c], numeric)));
    } else {
        log::warn!("region `{}`: `{}` is not in the output files", table.region_id, table.variable);
        return None;
    }
    Some(VariableComparison {
        variable: table.variable.clone(),
        categories: table.categories.clone(),
        generated,
        target: table.totals.clone(),
    })
}

/// Reads a run's output files back and pairs them with the region marginals.
pub fn collect_observations(inputs: &Inputs, dir: &Path) -> Result<Vec<RegionObservation>, PipelineError> {
    let manifest = read_manifest(dir)?;
    let mut out = Vec::new();
    for r in manifest.regions.iter().filter(|r| r.ok) {
        let rid = &r.region_id;
        let Some(pool) = inputs.pools.iter().find(|p| Some(&p.id) == r.pool.as_ref()) else {
            log::warn!("region `{rid}`: microdata pool {:?} is not in the config", r.pool);
            continue;
        };
        let households = read_csv_table(&dir.join(household_file(rid)))?;
        let people = read_csv_table(&dir.join(people_file(rid)))?;
        let mut persons_per_household: HashMap<&str, usize> = HashMap::new();
        if let Some(c) = people.column("household_id") {
            for row in &people.rows {
                *persons_per_household.entry(row.get(c).unwrap_or("")).or_default() += 1;
            }
        }
        let comparisons = inputs
            .marginals
            .get(rid)
            .into_iter()
            .flatten()
            .filter_map(|t| compare(t, &pool.micro, &households, &people, &persons_per_household))
            .collect();

        let mut capacity = Vec::new();
        for env in &inputs.environments {
            let kind = &env.spec.kind;
            let path = dir.join(env_file(kind, rid));
            if !path.exists() {
                continue;
            }
            let t = read_csv_table(&path)?;
            let (a, c) = (t.column("agent_id"), t.column("component_id"));
            let assignments: Vec<Assignment> = match (a, c) {
                (Some(a), Some(c)) => t
                    .rows
                    .iter()
                    .map(|row| Assignment {
                        agent_id: row[a].to_string(),
                        kind: kind.clone(),
                        component_id: row[c].to_string(),
                    })
                    .collect(),
                _ => Vec::new(),
            };
            capacity.extend(capacity_utilization(&assignments, &env.components, kind));
        }

        let (lon, lat) = (households.column("longitude"), households.column("latitude"));
        let stride = households.rows.len().div_ceil(MAP_POINTS).max(1);
        let locations: Vec<GeoPoint> = match (lon, lat) {
            (Some(x), Some(y)) => households
                .rows
                .iter()
                .step_by(stride)
                .filter_map(|row| Some(GeoPoint { lon: row[x].parse().ok()?, lat: row[y].parse().ok()? }))
                .collect(),
            _ => Vec::new(),
        };
        let geo = inputs.geography.get(rid);
        let outline = geo
            .map(|g| {
                g.parts()
                    .iter()
                    .flat_map(|p| std::iter::once(p.exterior().to_vec()).chain(p.holes().iter().cloned()))
                    .collect()
            })
            .unwrap_or_default();

        out.push(RegionObservation {
            region_id: rid.clone(),
            family: pool.id.clone(),
            method: manifest.method.to_string(),
            households: households.rows.len() as u64,
            persons: people.rows.len() as u64,
            household_variables: households
                .header
                .get(4..households.header.len().saturating_sub(1))
                .unwrap_or_default()
                .to_vec(),
            person_variables: people.header.iter().skip(2).cloned().collect(),
            comparisons,
            ipf: r.ipf.clone(),
            capacity,
            locations,
            bbox: geo.map(|g| g.bbox()),
            outline,
        });
    }
    Ok(out)
}

/// Builds the diagnostics report for a run directory and writes
/// `diagnostics.json` next to the outputs.
pub fn diagnose(inputs: &Inputs, dir: &Path) -> Result<(DiagnosticsReport, Vec<RegionObservation>), PipelineError> {
    let manifest = read_manifest(dir)?;
    let obs = collect_observations(inputs, dir)?;
    let report = build_report(&obs, manifest.seed, &manifest.version);
    let path = dir.join(DIAGNOSTICS_FILE);
    let mut text = report.to_json();
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| PipelineError::Io { path, source: e })?;
    Ok((report, obs))
}

/// Writes `report.md` and one SVG map per region; returns the written names.
pub fn write_report(report: &DiagnosticsReport, obs: &[RegionObservation], dir: &Path) -> Result<Vec<String>, PipelineError> {
    let mut written = Vec::new();
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, render_markdown(report)).map_err(|e| PipelineError::Io { path, source: e })?;
    written.push(REPORT_FILE.to_string());
    for o in obs {
        if let Some(svg) = render_svg_map(o) {
            let name = map_file_name(&o.region_id);
            let path = dir.join(&name);
            std::fs::write(&path, svg).map_err(|e| PipelineError::Io { path, source: e })?;
            written.push(name);
        }
    }
    Ok(written)
}
