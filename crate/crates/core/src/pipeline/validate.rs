use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{region_seed_table, GenerationConfig, Inputs, LocationMethod, Method};
use crate::geometry::RoadSampler;
use crate::ingest::check_marginal_consistency;
use crate::ipf::ipf_fit;
use crate::sampling::mm_weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleStatus {
    Pass,
    Warn,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleResult {
    pub rule: String,
    pub status: RuleStatus,
    pub details: Vec<String>,
}

/// Rule-by-rule input check. `ok` is false iff some rule failed; warnings do
/// not fail validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub rules: Vec<RuleResult>,
}

struct Rules(Vec<RuleResult>);

impl Rules {
    fn push(&mut self, rule: &str, failures: Vec<String>) {
        let status = if failures.is_empty() { RuleStatus::Pass } else { RuleStatus::Fail };
        self.0.push(RuleResult {
            rule: rule.into(),
            status,
            details: failures,
        });
    }

    fn warn(&mut self, rule: &str, warnings: Vec<String>) {
        let status = if warnings.is_empty() { RuleStatus::Pass } else { RuleStatus::Warn };
        self.0.push(RuleResult {
            rule: rule.into(),
            status,
            details: warnings,
        });
    }

    fn skip(&mut self, rule: &str, why: &str) {
        self.0.push(RuleResult {
            rule: rule.into(),
            status: RuleStatus::Skipped,
            details: vec![why.into()],
        });
    }
}

const REGION_RULES: [&str; 6] = [
    "every region has a geography",
    "every region has location inputs",
    "every region has a microdata pool",
    "method inputs are usable",
    "marginal totals agree across variables",
    "environments have components",
];

pub fn validate_inputs(cfg: &GenerationConfig) -> ValidationReport {
    let mut rules = Rules(Vec::new());
    rules.push("configuration is consistent", cfg.check());
    let inputs = match Inputs::load_unchecked(cfg) {
        Ok(i) => {
            rules.push("input files load", Vec::new());
            i
        }
        Err(errors) => {
            rules.push("input files load", errors);
            for r in REGION_RULES {
                rules.skip(r, "inputs did not load");
            }
            return finish(rules);
        }
    };
    let active: Vec<_> = inputs.counts.iter().filter(|c| c.count > 0).collect();

    rules.push(
        REGION_RULES[0],
        inputs
            .counts
            .iter()
            .filter(|c| !inputs.geography.contains_key(&c.region_id))
            .map(|c| format!("`{}` has no geography feature", c.region_id))
            .collect(),
    );

    let mut missing = Vec::new();
    for c in &active {
        let rid = &c.region_id;
        match cfg.location {
            LocationMethod::Uniform => {}
            LocationMethod::Roads => match inputs.roads.get(rid) {
                None => missing.push(format!("`{rid}` has no roads")),
                Some(r) => {
                    if let Err(e) = RoadSampler::new(r) {
                        missing.push(format!("`{rid}`: {e}"));
                    }
                }
            },
            LocationMethod::Weighted => {
                if !inputs.location_weights.contains_key(rid) {
                    missing.push(format!("`{rid}` has no location weights"));
                }
            }
        }
    }
    rules.push(REGION_RULES[1], missing);

    rules.push(
        REGION_RULES[2],
        inputs
            .counts
            .iter()
            .filter(|c| inputs.pool_for(&c.region_id).is_none())
            .map(|c| format!("`{}` is not served by any microdata pool", c.region_id))
            .collect(),
    );

    let mut problems = Vec::new();
    for c in &active {
        let rid = &c.region_id;
        let Some(pool) = inputs.pool_for(rid) else { continue };
        match cfg.method {
            Method::Srs => {}
            Method::Mm => match inputs.moments.get(rid) {
                None => problems.push(format!("`{rid}` has no moment target")),
                Some(t) => {
                    if let Err(e) = mm_weights(&pool.micro, t) {
                        problems.push(format!("`{rid}`: {e}"));
                    }
                }
            },
            Method::Ipf => match inputs.marginals.get(rid) {
                None => problems.push(format!("`{rid}` has no marginal tables")),
                Some(m) => {
                    let fit = region_seed_table(&pool.micro, m, cfg)
                        .and_then(|(seed, _)| ipf_fit(&seed, m, &cfg.ipf).map_err(Into::into));
                    if let Err(e) = fit {
                        problems.push(format!("`{rid}`: {e}"));
                    }
                }
            },
        }
    }
    rules.push(REGION_RULES[3], problems);

    let all: Vec<_> = inputs.marginals.values().flatten().cloned().collect();
    rules.warn(
        REGION_RULES[4],
        check_marginal_consistency(&all)
            .into_iter()
            .map(|w| {
                format!(
                    "`{}`: `{}` totals {} vs `{}` totals {} ({:.2}%)",
                    w.region_id,
                    w.variables.0,
                    w.totals.0,
                    w.variables.1,
                    w.totals.1,
                    100.0 * w.relative_difference
                )
            })
            .collect(),
    );

    rules.push(
        REGION_RULES[5],
        inputs
            .environments
            .iter()
            .filter(|e| e.components.is_empty())
            .map(|e| format!("no components of kind `{}` in {}", e.spec.kind, e.spec.components.display()))
            .collect(),
    );
    finish(rules)
}

fn finish(rules: Rules) -> ValidationReport {
    ValidationReport {
        ok: rules.0.iter().all(|r| r.status != RuleStatus::Fail),
        rules: rules.0,
    }
}

impl Inputs {
    /// Loads every file it can and reports each failure, instead of stopping
    /// at the first one.
    fn load_unchecked(cfg: &GenerationConfig) -> Result<Self, Vec<String>> {
        let mut errors = Vec::new();
        let mut ids = BTreeSet::new();
        let mut lenient = cfg.clone();
        lenient.microdata.retain(|p| ids.insert(p.pool_id()));
        lenient.environments.retain(|e| (0.0..=1.0).contains(&e.assignment_fraction) && e.gravity.validate().is_ok());
        lenient.jobs = lenient.jobs.max(1);
        lenient.ipf = Default::default();
        lenient.beckman = Default::default();
        if lenient.method == Method::Ipf && lenient.marginals.is_none()
            || lenient.method == Method::Mm && lenient.moments.is_none()
        {
            lenient.method = Method::Srs;
        }
        if lenient.location == LocationMethod::Roads && lenient.roads.is_none()
            || lenient.location == LocationMethod::Weighted && lenient.location_weights.is_none()
        {
            lenient.location = LocationMethod::Uniform;
        }
        if lenient.microdata.iter().filter(|p| p.regions.is_none()).count() > 1 {
            let mut seen = false;
            lenient.microdata.retain(|p| p.regions.is_some() || !std::mem::replace(&mut seen, true));
        }
        let mut inputs = Inputs::default();
        let mut attempt = |f: &mut dyn FnMut() -> Result<(), crate::ingest::IngestError>| {
            if let Err(e) = f() {
                errors.push(e.to_string());
            }
        };
        attempt(&mut || {
            inputs.counts = crate::ingest::load_counts(&lenient.counts)?;
            Ok(())
        });
        attempt(&mut || {
            inputs.geography = crate::ingest::load_geography(&lenient.geography)?;
            Ok(())
        });
        if let Some(p) = &lenient.roads {
            attempt(&mut || {
                inputs.roads = crate::ingest::load_roads(p)?;
                Ok(())
            });
        }
        if let Some(p) = &lenient.location_weights {
            attempt(&mut || {
                inputs.location_weights = crate::ingest::load_weighted_geometry(p)?;
                Ok(())
            });
        }
        for pool in &lenient.microdata {
            attempt(&mut || {
                inputs.pools.push(super::Pool {
                    id: pool.pool_id(),
                    micro: crate::ingest::load_microdata(&pool.path, pool.schema.as_deref())?,
                    regions: pool.regions.as_ref().map(|r| r.iter().cloned().collect()),
                });
                Ok(())
            });
        }
        if let Some(p) = &lenient.marginals {
            attempt(&mut || {
                for t in crate::ingest::load_marginals(p)? {
                    inputs.marginals.entry(t.region_id.clone()).or_default().push(t);
                }
                Ok(())
            });
        }
        if let Some(p) = &lenient.moments {
            attempt(&mut || {
                inputs.moments = crate::ingest::load_moments(p)?
                    .into_iter()
                    .map(|m| (m.region_id.clone(), m))
                    .collect();
                Ok(())
            });
        }
        for spec in &lenient.environments {
            attempt(&mut || {
                let all = crate::ingest::load_components(&spec.components)?;
                let components =
                    crate::ingest::EnvironmentalComponentSet::new(all.of_kind(&spec.kind).cloned().collect())
                        .expect("a subset of a valid set is valid");
                inputs.environments.push(super::Environment {
                    spec: spec.clone(),
                    components,
                });
                Ok(())
            });
        }
        if errors.is_empty() {
            Ok(inputs)
        } else {
            Err(errors)
        }
    }
}
