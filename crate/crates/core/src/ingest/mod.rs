//! Loading and validating the interchange inputs: counts, geographies,
//! microdata, marginals, moment targets and environmental components.
//!
//! Every malformed input is reported as an [`IngestError`] naming the file,
//! the line (when one applies) and the rule that was violated.

mod components;
mod counts;
mod geography;
mod marginals;
mod microdata;

pub use components::{
    load_components, load_moments, write_components, write_moments, EnvironmentalComponent,
    EnvironmentalComponentSet, MomentTarget,
};
pub use counts::{load_counts, write_counts, CountType, PopulationCount};
pub use geography::{
    load_geography, load_roads, load_weighted_geometry, write_geography, write_roads,
};
pub use marginals::{
    check_marginal_consistency, load_marginals, write_marginals, MarginalTable, MarginalWarning,
    MARGINAL_TOLERANCE,
};
pub use microdata::{
    load_microdata, load_schema, schema_path_for, write_microdata, HouseholdRecord,
    MicrodataRecord, MicrodataTable, PersonRecord, RecordRole, Schema, VariableDecl, VariableKind,
    VariableLevel, N_PERSONS,
};

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{}: {rule}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Invalid {
        path: PathBuf,
        line: Option<u64>,
        rule: String,
    },
}

impl IngestError {
    pub(crate) fn at(path: &Path, line: u64, rule: impl Into<String>) -> Self {
        IngestError::Invalid {
            path: path.to_path_buf(),
            line: Some(line),
            rule: rule.into(),
        }
    }

    pub(crate) fn file(path: &Path, rule: impl Into<String>) -> Self {
        IngestError::Invalid {
            path: path.to_path_buf(),
            line: None,
            rule: rule.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            IngestError::Io { path, .. } | IngestError::Invalid { path, .. } => path,
        }
    }
}

/// A characteristic value: a category label or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            Value::Category(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Category(s) => f.write_str(s),
        }
    }
}

pub(crate) struct CsvInput {
    path: PathBuf,
    reader: csv::Reader<File>,
    headers: csv::StringRecord,
}

impl CsvInput {
    pub(crate) fn open(path: &Path, required: &[&str]) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .clone();
        for col in required {
            if !headers.iter().any(|h| h == *col) {
                return Err(IngestError::at(path, 1, format!("missing required column `{col}`")));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            headers,
        })
    }

    pub(crate) fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub(crate) fn headers(&self) -> &csv::StringRecord {
        &self.headers
    }

    pub(crate) fn path(&self) -> &Path {
        &self.path
    }

    /// Rows paired with their 1-based line numbers.
    pub(crate) fn rows(&mut self) -> impl Iterator<Item = Result<(u64, csv::StringRecord), IngestError>> + '_ {
        let path = self.path.clone();
        self.reader.records().map(move |r| {
            let rec = r.map_err(|e| csv_error(&path, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            Ok((line, rec))
        })
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line());
    let rule = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("row has {len} fields, header has {expected_len}")
        }
        csv::ErrorKind::Io(io) => io.to_string(),
        _ => e.to_string(),
    };
    match line {
        Some(line) => IngestError::at(path, line, rule),
        None => IngestError::file(path, rule),
    }
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>, IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn write_err(path: &Path, e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::io(path, io),
        other => IngestError::file(path, format!("{other:?}")),
    }
}

pub(crate) fn parse_nonneg(
    path: &Path,
    line: u64,
    column: &str,
    raw: &str,
) -> Result<f64, IngestError> {
    let x: f64 = raw
        .parse()
        .map_err(|_| IngestError::at(path, line, format!("`{column}` is not a number: {raw:?}")))?;
    if !x.is_finite() || x < 0.0 {
        return Err(IngestError::at(path, line, format!("`{column}` must be a nonnegative finite number, got {raw}")));
    }
    Ok(x)
}
