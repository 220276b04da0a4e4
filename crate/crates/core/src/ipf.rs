//! Iterative proportional fitting and distance-weighted record selection.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::ingest::{MarginalTable, MicrodataTable, Value};
use crate::tables::{household_cells, Binning, ContingencyTable, TableError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IpfError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("targets do not conform to the table: {0}")]
    NonConformable(String),
    #[error("`{variable}` category `{category}` has a positive target but every cell in its slice is a structural zero")]
    UnattainableTarget { variable: String, category: String },
    #[error("record has no value for `{0}`")]
    MissingVariable(String),
    #[error("`{0}` is ordinal but a value is not numeric")]
    NotNumeric(String),
    #[error("microdata has no household records")]
    EmptyMicrodata,
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpfConfig {
    /// Largest allowed |fitted − target| on the proportion scale.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Replacement for non-structural zero seed cells.
    pub epsilon: f64,
}

impl Default for IpfConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
            epsilon: 0.01,
        }
    }
}

impl IpfConfig {
    pub fn validate(&self) -> Result<(), IpfError> {
        if !(self.tolerance > 0.0) {
            return Err(IpfError::Config(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations < 1 {
            return Err(IpfError::Config("max_iterations must be ≥ 1".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(IpfError::Config(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Parameters of the record-to-cell closeness D(p, c).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeckmanParams {
    /// Exponent applied to ordinal differences.
    pub k: f64,
    /// Per-variable overrides of `k`.
    pub k_per_variable: BTreeMap<String, f64>,
    /// Categorical agreement parameter in [0, 1).
    pub alpha: f64,
}

impl Default for BeckmanParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            k_per_variable: BTreeMap::new(),
            alpha: 0.0,
        }
    }
}

impl BeckmanParams {
    pub fn validate(&self) -> Result<(), IpfError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(IpfError::Config(format!("alpha must be in [0, 1), got {}", self.alpha)));
        }
        for k in std::iter::once(&self.k).chain(self.k_per_variable.values()) {
            if !(*k > 0.0 && k.is_finite()) {
                return Err(IpfError::Config(format!("k must be a positive number, got {k}")));
            }
        }
        Ok(())
    }

    pub fn k_for(&self, variable: &str) -> f64 {
        self.k_per_variable.get(variable).copied().unwrap_or(self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpfResult {
    /// Fitted proportions (sum 1).
    pub table: ContingencyTable,
    pub iterations: usize,
    pub converged: bool,
    pub max_deviation: f64,
    /// Max marginal deviation after each full sweep.
    pub history: Vec<f64>,
    /// Sweeps whose deviation exceeded the previous sweep's.
    pub monotonicity_violations: Vec<usize>,
}

fn target_proportions(seed: &ContingencyTable, targets: &[MarginalTable]) -> Result<Vec<Vec<f64>>, IpfError> {
    if targets.len() != seed.dims() {
        return Err(IpfError::NonConformable(format!(
            "{} targets for a {}-dimensional table",
            targets.len(),
            seed.dims()
        )));
    }
    seed.axes()
        .iter()
        .map(|axis| {
            let t = targets
                .iter()
                .find(|t| t.variable == axis.variable)
                .ok_or_else(|| IpfError::NonConformable(format!("no target for `{}`", axis.variable)))?;
            if t.categories != axis.categories {
                return Err(IpfError::NonConformable(format!(
                    "`{}` target categories {:?} differ from table categories {:?}",
                    axis.variable, t.categories, axis.categories
                )));
            }
            let n = t.total();
            if n <= 0.0 {
                return Err(IpfError::NonConformable(format!("`{}` target total is 0", axis.variable)));
            }
            Ok(t.totals.iter().map(|x| x / n).collect())
        })
        .collect()
}

fn max_deviation(table: &ContingencyTable, props: &[Vec<f64>]) -> f64 {
    let mut dev: f64 = 0.0;
    for (j, target) in props.iter().enumerate() {
        let m = table.marginal_of(j).unwrap();
        for (a, b) in m.iter().zip(target) {
            dev = dev.max((a - b).abs());
        }
    }
    dev
}

/// Raking: each sweep rescales, dimension by dimension, the slice i_j = k by
/// (T_k/n) / (current slice mass). The seed is normalized first; structural
/// zeros stay zero.
pub fn ipf_fit(seed: &ContingencyTable, targets: &[MarginalTable], cfg: &IpfConfig) -> Result<IpfResult, IpfError> {
    cfg.validate()?;
    let props = target_proportions(seed, targets)?;
    let mut table = seed.clone().normalized();

    for (j, target) in props.iter().enumerate() {
        let m = table.marginal_of(j)?;
        for (k, (&mass, &t)) in m.iter().zip(target).enumerate() {
            if t > 0.0 && mass == 0.0 {
                return Err(IpfError::UnattainableTarget {
                    variable: table.axes()[j].variable.clone(),
                    category: table.axes()[j].categories[k].clone(),
                });
            }
        }
    }

    let shape = table.shape().to_vec();
    let mut history = Vec::new();
    let mut violations = Vec::new();
    let mut converged = false;
    for t in 1..=cfg.max_iterations {
        for (j, target) in props.iter().enumerate() {
            let m = table.marginal_of(j)?;
            let factors: Vec<f64> = m
                .iter()
                .zip(target)
                .map(|(&mass, &t)| if mass > 0.0 { t / mass } else { 0.0 })
                .collect();
            let inner: usize = shape[j + 1..].iter().product();
            let nj = shape[j];
            for (i, c) in table.cells_mut().iter_mut().enumerate() {
                *c *= factors[(i / inner) % nj];
            }
        }
        let dev = max_deviation(&table, &props);
        if let Some(&prev) = history.last() {
            if dev > prev {
                log::warn!("IPF deviation rose from {prev:e} to {dev:e} at sweep {t}");
                violations.push(t);
            }
        }
        history.push(dev);
        if dev < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(IpfResult {
        table,
        iterations: history.len(),
        converged,
        max_deviation: *history.last().unwrap(),
        history,
        monotonicity_violations: violations,
    })
}

/// How one variable enters D(p, c).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeckmanVariable {
    pub name: String,
    /// Member of J (ordinal/continuous); otherwise categorical.
    pub ordinal: bool,
    /// Range r_i of the variable in the microdata.
    pub range: f64,
}

fn ordinal_factor(dp: f64, dc: f64, range: f64, k: f64) -> f64 {
    let diff = (dp - dc).abs();
    if diff == 0.0 {
        return 1.0;
    }
    if range <= 0.0 {
        return 0.0;
    }
    (1.0 - (diff / range).powf(k)).max(0.0)
}

fn categorical_factor(equal: bool, alpha: f64) -> f64 {
    // 1 − δ with δ = α on agreement and 1 − α on disagreement
    if equal {
        1.0 - alpha
    } else {
        alpha
    }
}

/// D(p, c) = w_p · Π_{i∈J} (1 − |(d_i^p − d_i^c)/r_i|^k) · Π_{i∉J} (1 − δ_i),
/// clamped at 0. `cell[i]` is d_i^c: a number for ordinal variables, a label
/// for categorical ones.
pub fn beckman_distance(
    weight: f64,
    record: &BTreeMap<String, Value>,
    cell: &[Value],
    variables: &[BeckmanVariable],
    params: &BeckmanParams,
) -> Result<f64, IpfError> {
    let mut d = weight;
    for (var, dc) in variables.iter().zip(cell) {
        let dp = record.get(&var.name).ok_or_else(|| IpfError::MissingVariable(var.name.clone()))?;
        d *= if var.ordinal {
            let (Some(a), Some(b)) = (dp.as_number(), dc.as_number()) else {
                return Err(IpfError::NotNumeric(var.name.clone()));
            };
            ordinal_factor(a, b, var.range, params.k_for(&var.name))
        } else {
            categorical_factor(dp.to_string() == dc.to_string(), params.alpha)
        };
    }
    Ok(d.max(0.0))
}

/// Largest-remainder apportionment of `n` over `proportions`; ties in the
/// remainder are broken by a random order drawn from `rng`.
pub fn quotas<R: Rng + ?Sized>(proportions: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = proportions.iter().sum();
    if proportions.is_empty() || total <= 0.0 {
        return vec![0; proportions.len()];
    }
    let exact: Vec<f64> = proportions.iter().map(|p| p / total * n as f64).collect();
    let mut q: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = q.iter().sum();
    let mut order: Vec<(f64, u64, usize)> = exact
        .iter()
        .enumerate()
        .map(|(i, x)| (x - x.floor(), rng.random::<u64>(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, _, i) in order.iter().take(n.saturating_sub(assigned)) {
        q[i] += 1;
    }
    q
}

/// Households grouped by cell, with within-group weight samplers.
struct Groups {
    coords: Vec<Vec<usize>>,
    weight: Vec<f64>,
    members: Vec<Vec<usize>>,
    within: Vec<Option<AliasTable>>,
}

impl Groups {
    fn new(micro: &MicrodataTable, binnings: &[Binning]) -> Result<Self, IpfError> {
        let cells = household_cells(micro, binnings)?;
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut g = Groups {
            coords: Vec::new(),
            weight: Vec::new(),
            members: Vec::new(),
            within: Vec::new(),
        };
        for (h, c) in cells.into_iter().enumerate() {
            let next = g.coords.len();
            let gi = *index.entry(c.clone()).or_insert(next);
            if gi == next {
                g.coords.push(c);
                g.weight.push(0.0);
                g.members.push(Vec::new());
            }
            g.weight[gi] += micro.households()[h].weight;
            g.members[gi].push(h);
        }
        g.within = g
            .members
            .iter()
            .map(|m| {
                let w: Vec<f64> = m.iter().map(|&h| micro.households()[h].weight).collect();
                AliasTable::new(&w).ok()
            })
            .collect();
        Ok(g)
    }
}

/// Draws `n_households` household indices: cell quotas by largest remainder
/// from the fitted proportions, then within each cell households with
/// probability D(p, c) / Σ_j D(j, c). The household's own d_i^p is the
/// midpoint of the bin it falls in, so a household inside the cell has
/// ordinal factor 1. A cell where every D is 0 falls back to uniform
/// sampling over all households.
pub fn ipf_sample_region<R: Rng + ?Sized>(
    fit: &IpfResult,
    micro: &MicrodataTable,
    binnings: &[Binning],
    n_households: usize,
    params: &BeckmanParams,
    rng: &mut R,
) -> Result<Vec<usize>, IpfError> {
    params.validate()?;
    if micro.households().is_empty() {
        return Err(IpfError::EmptyMicrodata);
    }
    if binnings.len() != fit.table.dims() {
        return Err(IpfError::NonConformable(format!(
            "{} binnings for a {}-dimensional table",
            binnings.len(),
            fit.table.dims()
        )));
    }
    let groups = Groups::new(micro, binnings)?;
    let vars: Vec<(bool, f64, f64)> = binnings
        .iter()
        .map(|b| {
            (
                b.kind.is_numeric(),
                micro.range(&b.variable).unwrap_or(0.0),
                params.k_for(&b.variable),
            )
        })
        .collect();
    let factor = |gc: &[usize], cc: &[usize]| -> f64 {
        let mut d = 1.0;
        for (j, &(ordinal, range, k)) in vars.iter().enumerate() {
            d *= if ordinal {
                match (binnings[j].representative(gc[j]), binnings[j].representative(cc[j])) {
                    (Some(a), Some(b)) => ordinal_factor(a, b, range, k),
                    _ => categorical_factor(gc[j] == cc[j], params.alpha),
                }
            } else {
                categorical_factor(gc[j] == cc[j], params.alpha)
            };
            if d == 0.0 {
                break;
            }
        }
        d
    };

    let q = quotas(fit.table.cells(), n_households, rng);
    let mut uniform: Option<AliasTable> = None;
    let mut out = Vec::with_capacity(n_households);
    for (cell, &quota) in q.iter().enumerate() {
        if quota == 0 {
            continue;
        }
        let cc = fit.table.coords(cell);
        let d: Vec<f64> = groups
            .coords
            .iter()
            .zip(&groups.weight)
            .map(|(gc, w)| w * factor(gc, &cc))
            .collect();
        match AliasTable::new(&d) {
            Ok(between) => {
                for _ in 0..quota {
                    let g = between.sample(rng);
                    let within = groups.within[g].as_ref().expect("group with positive D has positive weight");
                    out.push(groups.members[g][within.sample(rng)]);
                }
            }
            Err(_) => {
                log::warn!("no household is close to cell {cc:?}; sampling it uniformly");
                let u = uniform.get_or_insert_with(|| {
                    AliasTable::new(&vec![1.0; micro.households().len()]).unwrap()
                });
                out.extend((0..quota).map(|_| u.sample(rng)));
            }
        }
    }
    Ok(out)
}
