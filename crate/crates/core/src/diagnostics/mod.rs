//! Post-generation checks: mean absolute error of marginals, Pearson χ²
//! goodness of fit with Bonferroni adjustment, and region reports.

mod gamma;
mod render;

pub use gamma::{chi_square_sf, gamma_p, gamma_q, ln_gamma};
pub use render::{render_markdown, render_svg_map};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::CapacityUse;
use crate::geometry::{BoundingBox, GeoPoint};

/// Significance level applied to Bonferroni-adjusted p-values.
pub const REJECTION_LEVEL: f64 = 0.05;
/// Categories with fewer expected counts are pooled.
pub const MIN_EXPECTED: f64 = 5.0;
/// Largest number of household locations drawn on a region map.
pub const MAP_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    NoObservations,
    #[error("expected proportions must be nonnegative and sum to 1")]
    BadExpected,
    #[error("category has expected count 0 but {0} observations")]
    ImpossibleObservation(f64),
}

/// Mean over categories of |generated − true|.
pub fn mae(generated: &[f64], truth: &[f64]) -> Result<f64, DiagnosticsError> {
    if generated.len() != truth.len() {
        return Err(DiagnosticsError::LengthMismatch(generated.len(), truth.len()));
    }
    if generated.is_empty() {
        return Ok(0.0);
    }
    Ok(generated.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / generated.len() as f64)
}

/// Pearson statistic before any multiple-testing adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofStat {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Category groups after pooling, as indices into the input.
    pub groups: Vec<Vec<usize>>,
}

/// Merges categories with expected count below [`MIN_EXPECTED`] into an
/// adjacent category: the smallest group is merged into whichever neighbour
/// has the smaller expected count (the left one on ties), until every group
/// reaches the threshold or only one group remains.
fn pool(expected: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<(Vec<usize>, f64)> = expected.iter().enumerate().map(|(i, &e)| (vec![i], e)).collect();
    while groups.len() > 1 {
        let (i, &(_, e)) = groups
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .unwrap();
        if e >= MIN_EXPECTED {
            break;
        }
        let j = match (i.checked_sub(1), (i + 1 < groups.len()).then_some(i + 1)) {
            (Some(l), Some(r)) => {
                if groups[r].1 < groups[l].1 {
                    r
                } else {
                    l
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => unreachable!(),
        };
        let (lo, hi) = (i.min(j), i.max(j));
        let (idx, e_hi) = groups.remove(hi);
        groups[lo].0.extend(idx);
        groups[lo].1 += e_hi;
    }
    groups.into_iter().map(|(g, _)| g).collect()
}

/// Pearson χ² of observed counts against expected proportions, with
/// E_k = N · proportion_k and sparse categories pooled first.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<GofStat, DiagnosticsError> {
    if observed.len() != expected.len() {
        return Err(DiagnosticsError::LengthMismatch(observed.len(), expected.len()));
    }
    let n: f64 = observed.iter().sum();
    if !(n > 0.0) {
        return Err(DiagnosticsError::NoObservations);
    }
    let total: f64 = expected.iter().sum();
    if expected.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
        return Err(DiagnosticsError::BadExpected);
    }
    let e: Vec<f64> = expected.iter().map(|p| n * p / total).collect();
    let groups = pool(&e);
    let mut statistic = 0.0;
    for g in &groups {
        let o: f64 = g.iter().map(|&i| observed[i]).sum();
        let ex: f64 = g.iter().map(|&i| e[i]).sum();
        if ex == 0.0 {
            if o > 0.0 {
                return Err(DiagnosticsError::ImpossibleObservation(o));
            }
            continue;
        }
        statistic += (o - ex).powi(2) / ex;
    }
    let df = groups.len() - 1;
    let p_value = if df == 0 { 1.0 } else { chi_square_sf(statistic, df as f64) };
    Ok(GofStat {
        statistic,
        df,
        p_value,
        groups,
    })
}

/// min(1, m · p) for each p.
pub fn bonferroni_adjust(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|p| (p * m.max(1) as f64).min(1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub region_id: String,
    pub variable: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub adjusted_p_value: f64,
    /// Size of the Bonferroni family this test belongs to.
    pub family_size: usize,
    pub rejected: bool,
}

/// Generated household counts for one variable next to the region's
/// marginal totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableComparison {
    pub variable: String,
    pub categories: Vec<String>,
    pub generated: Vec<f64>,
    pub target: Vec<f64>,
}

impl VariableComparison {
    pub fn generated_proportions(&self) -> Vec<f64> {
        proportions(&self.generated)
    }

    pub fn target_proportions(&self) -> Vec<f64> {
        proportions(&self.target)
    }
}

fn proportions(v: &[f64]) -> Vec<f64> {
    let n: f64 = v.iter().sum();
    v.iter().map(|x| if n > 0.0 { x / n } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpfSummary {
    pub iterations: usize,
    pub converged: bool,
    pub max_deviation: f64,
    pub monotonicity_violations: Vec<usize>,
}

/// Everything the report needs about one generated region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionObservation {
    pub region_id: String,
    /// Bonferroni family: regions sharing a microdata pool.
    pub family: String,
    pub method: String,
    pub households: u64,
    pub persons: u64,
    pub household_variables: Vec<String>,
    pub person_variables: Vec<String>,
    pub comparisons: Vec<VariableComparison>,
    pub ipf: Option<IpfSummary>,
    pub capacity: Vec<CapacityUse>,
    /// Map subsample of household locations.
    #[serde(skip)]
    pub locations: Vec<GeoPoint>,
    #[serde(skip)]
    pub bbox: Option<BoundingBox>,
    /// Region rings (exteriors and holes) drawn under the points.
    #[serde(skip)]
    pub outline: Vec<Vec<GeoPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeEntry {
    pub variable: String,
    pub method: String,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barplot {
    pub variable: String,
    pub categories: Vec<String>,
    pub generated: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region_id: String,
    pub family: String,
    pub method: String,
    pub households: u64,
    pub persons: u64,
    pub household_variables: Vec<String>,
    pub person_variables: Vec<String>,
    pub mae: Vec<MaeEntry>,
    pub barplots: Vec<Barplot>,
    pub ipf: Option<IpfSummary>,
    pub capacity: Vec<CapacityUse>,
    pub map: Option<String>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub version: String,
    pub seed: u64,
    pub regions: Vec<RegionReport>,
    pub tests: Vec<GofResult>,
    pub flagged_regions: Vec<String>,
    pub rejected_tests: usize,
    pub total_tests: usize,
}

impl DiagnosticsReport {
    pub fn rejection_fraction(&self) -> f64 {
        if self.total_tests == 0 {
            0.0
        } else {
            self.rejected_tests as f64 / self.total_tests as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Map file name for a region.
pub fn map_file_name(region_id: &str) -> String {
    format!("map_{region_id}.svg")
}

/// Assembles the report. Regions are listed in id order; each (family,
/// variable) pair forms one Bonferroni family whose size is the number of
/// tests in it.
pub fn build_report(observations: &[RegionObservation], seed: u64, version: &str) -> DiagnosticsReport {
    let mut obs: Vec<&RegionObservation> = observations.iter().collect();
    obs.sort_by(|a, b| a.region_id.cmp(&b.region_id));

    struct Raw {
        region: usize,
        variable: String,
        family: (String, String),
        stat: GofStat,
    }
    let mut raw = Vec::new();
    let mut failures: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (ri, o) in obs.iter().enumerate() {
        for c in &o.comparisons {
            match chi_square_gof(&c.generated, &c.target_proportions()) {
                Ok(stat) => raw.push(Raw {
                    region: ri,
                    variable: c.variable.clone(),
                    family: (o.family.clone(), c.variable.clone()),
                    stat,
                }),
                Err(DiagnosticsError::NoObservations) => {}
                Err(e) => failures.entry(ri).or_default().push(format!("{}: {e}", c.variable)),
            }
        }
    }
    let mut family_size: BTreeMap<&(String, String), usize> = BTreeMap::new();
    for r in &raw {
        *family_size.entry(&r.family).or_default() += 1;
    }
    let tests: Vec<GofResult> = raw
        .iter()
        .map(|r| {
            let m = family_size[&r.family];
            let adjusted = bonferroni_adjust(&[r.stat.p_value], m)[0];
            GofResult {
                region_id: obs[r.region].region_id.clone(),
                variable: r.variable.clone(),
                statistic: r.stat.statistic,
                df: r.stat.df,
                p_value: r.stat.p_value,
                adjusted_p_value: adjusted,
                family_size: m,
                rejected: adjusted < REJECTION_LEVEL,
            }
        })
        .collect();

    let regions: Vec<RegionReport> = obs
        .iter()
        .enumerate()
        .map(|(ri, o)| {
            let mut flags: Vec<String> = tests
                .iter()
                .filter(|t| t.region_id == o.region_id && t.rejected)
                .map(|t| format!("χ² rejected for `{}` (adjusted p = {:.3e})", t.variable, t.adjusted_p_value))
                .collect();
            flags.extend(failures.get(&ri).into_iter().flatten().map(|f| format!("χ² not computable: {f}")));
            if let Some(ipf) = &o.ipf {
                if !ipf.converged {
                    flags.push(format!(
                        "IPF did not converge in {} iterations (max deviation {:.3e})",
                        ipf.iterations, ipf.max_deviation
                    ));
                }
            }
            let mae = o
                .comparisons
                .iter()
                .filter(|c| c.generated.iter().sum::<f64>() > 0.0)
                .map(|c| MaeEntry {
                    variable: c.variable.clone(),
                    method: o.method.clone(),
                    mae: mae(&c.generated_proportions(), &c.target_proportions()).unwrap_or(f64::NAN),
                })
                .collect();
            let barplots = o
                .comparisons
                .iter()
                .map(|c| Barplot {
                    variable: c.variable.clone(),
                    categories: c.categories.clone(),
                    generated: c.generated_proportions(),
                    target: c.target_proportions(),
                })
                .collect();
            RegionReport {
                region_id: o.region_id.clone(),
                family: o.family.clone(),
                method: o.method.clone(),
                households: o.households,
                persons: o.persons,
                household_variables: o.household_variables.clone(),
                person_variables: o.person_variables.clone(),
                mae,
                barplots,
                ipf: o.ipf.clone(),
                capacity: o.capacity.clone(),
                map: o.bbox.map(|_| map_file_name(&o.region_id)),
                flags,
            }
        })
        .collect();

    let flagged_regions = regions.iter().filter(|r| !r.flags.is_empty()).map(|r| r.region_id.clone()).collect();
    let rejected_tests = tests.iter().filter(|t| t.rejected).count();
    DiagnosticsReport {
        version: version.to_string(),
        seed,
        regions,
        total_tests: tests.len(),
        tests,
        flagged_regions,
        rejected_tests,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert!((mae(&[0.5, 0.5], &[0.6, 0.4]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(mae(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(mae(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn gof_examples() {
        let exact = chi_square_gof(&[10.0, 20.0, 30.0], &[1.0 / 6.0, 2.0 / 6.0, 0.5]).unwrap();
        assert!(exact.statistic.abs() < 1e-12);
        assert!((exact.p_value - 1.0).abs() < 1e-12);

        let g = chi_square_gof(&[12.0, 18.0, 30.0], &[1.0 / 6.0, 2.0 / 6.0, 0.5]).unwrap();
        assert!((g.statistic - 0.6).abs() < 1e-12);
        assert_eq!(g.df, 2);
        assert!((g.p_value - (-0.3f64).exp()).abs() < 1e-4);

        assert!(chi_square_gof(&[0.0, 0.0], &[0.5, 0.5]).is_err());
        assert!(chi_square_gof(&[1.0, 2.0], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn sparse_categories_pool_into_neighbours() {
        // expected 2, 48, 48, 2 → the tails fold into their neighbours
        let g = chi_square_gof(&[3.0, 47.0, 48.0, 2.0], &[0.02, 0.48, 0.48, 0.02]).unwrap();
        assert_eq!(g.groups, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(g.df, 1);
        // everything sparse collapses to a single group
        let g = chi_square_gof(&[1.0, 1.0, 1.0], &[0.3, 0.3, 0.4]).unwrap();
        assert_eq!(g.df, 0);
        assert_eq!(g.p_value, 1.0);
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni_adjust(&[0.03], 1), [0.03]);
        assert!((bonferroni_adjust(&[0.01], 5)[0] - 0.05).abs() < 1e-15);
        assert_eq!(bonferroni_adjust(&[0.5], 5), [1.0]);
    }

    proptest! {
        #[test]
        fn statistic_is_label_invariant(
            cells in proptest::collection::vec((10.0f64..200.0, 1u32..10), 2..8),
            rot in 0usize..8,
        ) {
            let obs: Vec<f64> = cells.iter().map(|c| c.0.round()).collect();
            let w: Vec<f64> = cells.iter().map(|c| c.1 as f64).collect();
            let total: f64 = w.iter().sum();
            let n: f64 = obs.iter().sum();
            prop_assume!(w.iter().all(|x| n * x / total >= MIN_EXPECTED));
            let exp: Vec<f64> = w.iter().map(|x| x / total).collect();
            let a = chi_square_gof(&obs, &exp).unwrap();
            let k = rot % obs.len();
            let (mut o2, mut e2) = (obs.clone(), exp.clone());
            o2.rotate_left(k);
            e2.rotate_left(k);
            o2.reverse();
            e2.reverse();
            let b = chi_square_gof(&o2, &e2).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
            prop_assert!(a.statistic >= 0.0 && (0.0..=1.0).contains(&a.p_value));
        }

        #[test]
        fn adjusted_is_monotone_and_never_below_raw(mut p in proptest::collection::vec(0.0f64..=1.0, 1..20), m in 1usize..50) {
            p.sort_by(f64::total_cmp);
            let adj = bonferroni_adjust(&p, m);
            for (a, r) in adj.iter().zip(&p) {
                prop_assert!(a >= r);
            }
            for w in adj.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }
    }

    fn observation(id: &str, generated: Vec<f64>, target: Vec<f64>) -> RegionObservation {
        RegionObservation {
            region_id: id.into(),
            family: "pool".into(),
            method: "srs".into(),
            households: generated.iter().sum::<f64>() as u64,
            persons: 0,
            household_variables: vec!["tenure".into()],
            person_variables: vec![],
            comparisons: vec![VariableComparison {
                variable: "tenure".into(),
                categories: vec!["own".into(), "rent".into()],
                generated,
                target,
            }],
            ipf: None,
            capacity: vec![],
            locations: vec![],
            bbox: None,
            outline: vec![],
        }
    }

    #[test]
    fn report_flags_only_divergent_regions() {
        let clean = build_report(&[observation("A", vec![500.0, 500.0], vec![50.0, 50.0])], 1, "t");
        assert!(clean.flagged_regions.is_empty());
        assert_eq!(clean.total_tests, 1);

        let obs = [
            observation("B", vec![900.0, 100.0], vec![50.0, 50.0]),
            observation("A", vec![498.0, 502.0], vec![50.0, 50.0]),
        ];
        let r = build_report(&obs, 1, "t");
        assert_eq!(r.flagged_regions, ["B"]);
        assert_eq!(r.regions[0].region_id, "A");
        assert!(r.tests.iter().all(|t| t.family_size == 2));
        assert_eq!(r.to_json(), build_report(&obs, 1, "t").to_json());
    }

    #[test]
    fn nonconverged_ipf_is_flagged() {
        let mut o = observation("A", vec![500.0, 500.0], vec![50.0, 50.0]);
        o.ipf = Some(IpfSummary {
            iterations: 100,
            converged: false,
            max_deviation: 1e-3,
            monotonicity_violations: vec![],
        });
        assert_eq!(build_report(&[o], 1, "t").flagged_regions, ["A"]);
    }
}
