//! Dense contingency tables over binned household characteristics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{MarginalTable, MicrodataTable, Value, VariableKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("microdata has no household records")]
    EmptyMicrodata,
    #[error("household `{record_id}`: value {value} of `{variable}` falls in no category")]
    Unbinnable {
        record_id: String,
        variable: String,
        value: String,
    },
    #[error("household `{record_id}` has no value for `{variable}`")]
    MissingValue { record_id: String, variable: String },
    #[error("variable `{0}` is not in the microdata schema")]
    UnknownVariable(String),
    #[error("dimension {dim} out of range for a {dims}-dimensional table")]
    DimensionOutOfRange { dim: usize, dims: usize },
    #[error("cells do not match the table shape: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("cell value {0} is negative or not finite")]
    BadCell(f64),
    #[error("category label `{label}` of `{variable}`: {rule}")]
    BadCategory {
        variable: String,
        label: String,
        rule: String,
    },
}

/// Which raw values fall into a category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinRule {
    /// Categorical labels (numbers compared by their printed form).
    Values(Vec<String>),
    /// Closed numeric interval; `max` may be infinite for an open-ended bin.
    Range { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub label: String,
    pub rule: BinRule,
}

/// Category definitions for one variable, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    pub variable: String,
    pub kind: VariableKind,
    pub categories: Vec<Category>,
    representatives: Vec<Option<f64>>,
}

impl Binning {
    /// `data_max` closes open-ended numeric bins when computing midpoints.
    pub fn new(variable: &str, kind: VariableKind, categories: Vec<Category>, data_max: Option<f64>) -> Self {
        let representatives = categories
            .iter()
            .map(|c| match c.rule {
                BinRule::Values(_) => None,
                BinRule::Range { min, max } => {
                    let hi = if max.is_finite() { max } else { data_max.unwrap_or(min).max(min) };
                    Some(0.5 * (min + hi))
                }
            })
            .collect();
        Self {
            variable: variable.to_string(),
            kind,
            categories,
            representatives,
        }
    }

    /// Categories implied by a marginal table's labels. Categorical labels
    /// match themselves; numeric labels are read as `a-b`, `a+` or `a`.
    pub fn from_marginal(table: &MarginalTable, micro: &MicrodataTable) -> Result<Self, TableError> {
        let kind = micro
            .schema()
            .kind(&table.variable)
            .ok_or_else(|| TableError::UnknownVariable(table.variable.clone()))?;
        let categories = table
            .categories
            .iter()
            .map(|label| {
                let rule = if kind.is_numeric() {
                    parse_range(label).ok_or_else(|| TableError::BadCategory {
                        variable: table.variable.clone(),
                        label: label.clone(),
                        rule: "expected `a-b`, `a+` or a number".into(),
                    })?
                } else {
                    BinRule::Values(vec![label.clone()])
                };
                Ok(Category {
                    label: label.clone(),
                    rule,
                })
            })
            .collect::<Result<Vec<_>, TableError>>()?;
        Ok(Self::new(&table.variable, kind, categories, data_max(micro, &table.variable)))
    }

    pub fn labels(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.label.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Index of the first category containing `v`.
    pub fn bin(&self, v: &Value) -> Option<usize> {
        self.categories.iter().position(|c| match (&c.rule, v) {
            (BinRule::Values(labels), v) => {
                let s = v.to_string();
                labels.contains(&s)
            }
            (BinRule::Range { min, max }, Value::Number(x)) => *x >= *min && *x <= *max,
            (BinRule::Range { .. }, Value::Category(_)) => false,
        })
    }

    /// Bin midpoint d_i^c for numeric categories.
    pub fn representative(&self, k: usize) -> Option<f64> {
        self.representatives[k]
    }
}

fn parse_range(label: &str) -> Option<BinRule> {
    let label = label.trim();
    if let Some(a) = label.strip_suffix('+') {
        let min = a.trim().parse::<f64>().ok()?;
        return Some(BinRule::Range { min, max: f64::INFINITY });
    }
    if let Ok(x) = label.parse::<f64>() {
        return Some(BinRule::Range { min: x, max: x });
    }
    // a leading minus belongs to the first number
    let split = label.char_indices().skip(1).find(|&(_, c)| c == '-').map(|(i, _)| i)?;
    let min = label[..split].trim().parse::<f64>().ok()?;
    let max = label[split + 1..].trim().parse::<f64>().ok()?;
    (min <= max).then_some(BinRule::Range { min, max })
}

fn data_max(micro: &MicrodataTable, var: &str) -> Option<f64> {
    (0..micro.households().len())
        .filter_map(|h| micro.household_value(h, var).and_then(|v| v.as_number()))
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub variable: String,
    pub categories: Vec<String>,
}

/// m-dimensional table of nonnegative cells in row-major order (last axis
/// fastest). Cells may be marked structural zeros, which ε-substitution
/// leaves at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    axes: Vec<Axis>,
    shape: Vec<usize>,
    cells: Vec<f64>,
    structural: Vec<bool>,
}

impl ContingencyTable {
    pub fn new(axes: Vec<Axis>, cells: Vec<f64>) -> Result<Self, TableError> {
        let shape: Vec<usize> = axes.iter().map(|a| a.categories.len()).collect();
        let expected = shape.iter().product();
        if cells.len() != expected {
            return Err(TableError::Shape { expected, got: cells.len() });
        }
        if let Some(&c) = cells.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(TableError::BadCell(c));
        }
        let structural = vec![false; cells.len()];
        Ok(Self {
            axes,
            shape,
            cells,
            structural,
        })
    }

    pub fn zeros(axes: Vec<Axis>) -> Self {
        let n = axes.iter().map(|a| a.categories.len()).product();
        Self::new(axes, vec![0.0; n]).unwrap()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [f64] {
        &mut self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.shape).fold(0, |acc, (&c, &n)| acc * n + c)
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for (slot, &n) in out.iter_mut().zip(&self.shape).rev() {
            *slot = index % n;
            index /= n;
        }
        out
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.cells[self.index(coords)]
    }

    /// Sums over every dimension except `j` (0-based).
    pub fn marginal_of(&self, j: usize) -> Result<Vec<f64>, TableError> {
        if j >= self.dims() {
            return Err(TableError::DimensionOutOfRange { dim: j, dims: self.dims() });
        }
        let inner: usize = self.shape[j + 1..].iter().product();
        let nj = self.shape[j];
        let mut out = vec![0.0; nj];
        for (i, c) in self.cells.iter().enumerate() {
            out[(i / inner) % nj] += c;
        }
        Ok(out)
    }

    /// Marks cells that must stay zero.
    pub fn mark_structural(&mut self, coords: &[usize]) {
        let i = self.index(coords);
        self.structural[i] = true;
        self.cells[i] = 0.0;
    }

    pub fn is_structural(&self, index: usize) -> bool {
        self.structural[index]
    }

    /// Replaces non-structural zero cells with `eps`.
    pub fn with_epsilon(mut self, eps: f64) -> Self {
        for (c, s) in self.cells.iter_mut().zip(&self.structural) {
            if *c == 0.0 && !s {
                *c = eps;
            }
        }
        self
    }

    /// Scales cells to sum to 1. A zero table stays zero.
    pub fn normalized(mut self) -> Self {
        let n = self.total();
        if n > 0.0 {
            self.cells.iter_mut().for_each(|c| *c /= n);
        }
        self
    }

    /// Debug dump: `i₁,…,i_m,value` with 0-based category indices.
    pub fn write_debug(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<&str> = self.axes.iter().map(|a| a.variable.as_str()).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (i, c) in self.cells.iter().enumerate() {
            let idx: Vec<String> = self.coords(i).iter().map(ToString::to_string).collect();
            writeln!(w, "{},{c}", idx.join(","))?;
        }
        w.flush()
    }
}

/// Cell coordinates of every household, or the first binning failure.
pub fn household_cells(micro: &MicrodataTable, binnings: &[Binning]) -> Result<Vec<Vec<usize>>, TableError> {
    micro
        .households()
        .iter()
        .enumerate()
        .map(|(h, rec)| {
            binnings
                .iter()
                .map(|b| {
                    let v = micro.household_value(h, &b.variable).ok_or_else(|| TableError::MissingValue {
                        record_id: rec.record_id.clone(),
                        variable: b.variable.clone(),
                    })?;
                    b.bin(&v).ok_or_else(|| TableError::Unbinnable {
                        record_id: rec.record_id.clone(),
                        variable: b.variable.clone(),
                        value: v.to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Seed table: each cell is the summed base weight of the households in it.
pub fn seed_from_microdata(micro: &MicrodataTable, binnings: &[Binning]) -> Result<ContingencyTable, TableError> {
    if micro.households().is_empty() {
        return Err(TableError::EmptyMicrodata);
    }
    let axes = binnings
        .iter()
        .map(|b| Axis {
            variable: b.variable.clone(),
            categories: b.labels(),
        })
        .collect();
    let mut table = ContingencyTable::zeros(axes);
    for (h, coords) in household_cells(micro, binnings)?.into_iter().enumerate() {
        let i = table.index(&coords);
        table.cells[i] += micro.households()[h].weight;
    }
    Ok(table)
}
