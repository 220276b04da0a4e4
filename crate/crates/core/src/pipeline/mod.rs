//! Per-region generation and the region-parallel driver.
//!
//! A region job samples household records, expands their persons, places
//! every household, and assigns persons to environmental components. Each job
//! reads only shared immutable inputs and its own random streams, so regions
//! can run in any order on any number of threads.

mod config;
mod observe;
mod output;
mod validate;

pub use config::{EnvironmentSpec, GenerationConfig, LocationMethod, Method, MicrodataPool};
pub use observe::{
    collect_observations, diagnose, read_csv_table, write_report, CsvTable, DIAGNOSTICS_FILE, REPORT_FILE,
};
pub use output::{
    household_file, people_file, env_file, read_manifest, write_outputs, FileEntry, Manifest, RegionManifest,
    MANIFEST_FILE,
};
pub use validate::{validate_inputs, RuleResult, RuleStatus, ValidationReport};

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::assignment::{gravity_assign, Assignment, AssignmentError};
use crate::diagnostics::IpfSummary;
use crate::geometry::{GeoPoint, GeometryError, PointSampler, Polyline, RegionGeometry, WeightedGeometrySet};
use crate::ingest::{
    check_marginal_consistency, load_components, load_counts, load_geography, load_marginals, load_microdata,
    load_moments, load_roads, load_weighted_geometry, CountType, EnvironmentalComponentSet, IngestError,
    MarginalTable, MicrodataTable, MomentTarget, PopulationCount,
};
use crate::ipf::{ipf_fit, ipf_sample_region, IpfError, IpfResult};
use crate::rng::{region_seed, substream};
use crate::sampling::{mm_weights, SamplingError};
use crate::tables::{seed_from_microdata, Binning, ContingencyTable, TableError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("region `{region_id}`: {source}")]
    Region {
        region_id: String,
        #[source]
        source: RegionError,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum RegionError {
    #[error("{0}")]
    Missing(String),
    #[error(transparent)]
    Ipf(#[from] IpfError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A loaded microdata pool.
#[derive(Debug, Clone)]
pub struct Pool {
    pub id: String,
    pub micro: MicrodataTable,
    pub regions: Option<BTreeSet<String>>,
}

/// A loaded environment: its spec and the components of its kind.
#[derive(Debug, Clone)]
pub struct Environment {
    pub spec: EnvironmentSpec,
    pub components: EnvironmentalComponentSet,
}

/// Every input a run needs, loaded and indexed by region.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub counts: Vec<PopulationCount>,
    pub geography: BTreeMap<String, RegionGeometry>,
    pub roads: BTreeMap<String, Vec<Polyline>>,
    pub location_weights: BTreeMap<String, WeightedGeometrySet>,
    pub pools: Vec<Pool>,
    pub marginals: BTreeMap<String, Vec<MarginalTable>>,
    pub moments: BTreeMap<String, MomentTarget>,
    pub environments: Vec<Environment>,
}

impl Inputs {
    pub fn load(cfg: &GenerationConfig) -> Result<Self, PipelineError> {
        let problems = cfg.check();
        if !problems.is_empty() {
            return Err(PipelineError::Config(problems.join("; ")));
        }
        let mut inputs = Inputs {
            counts: load_counts(&cfg.counts)?,
            geography: load_geography(&cfg.geography)?,
            ..Default::default()
        };
        if let Some(p) = &cfg.roads {
            inputs.roads = load_roads(p)?;
        }
        if let Some(p) = &cfg.location_weights {
            inputs.location_weights = load_weighted_geometry(p)?;
        }
        for pool in &cfg.microdata {
            inputs.pools.push(Pool {
                id: pool.pool_id(),
                micro: load_microdata(&pool.path, pool.schema.as_deref())?,
                regions: pool.regions.as_ref().map(|r| r.iter().cloned().collect()),
            });
        }
        if let Some(p) = &cfg.marginals {
            let tables = load_marginals(p)?;
            for w in check_marginal_consistency(&tables) {
                log::warn!(
                    "region `{}`: `{}` and `{}` totals differ by {:.2}%",
                    w.region_id,
                    w.variables.0,
                    w.variables.1,
                    100.0 * w.relative_difference
                );
            }
            for t in tables {
                inputs.marginals.entry(t.region_id.clone()).or_default().push(t);
            }
        }
        if let Some(p) = &cfg.moments {
            inputs.moments = load_moments(p)?.into_iter().map(|m| (m.region_id.clone(), m)).collect();
        }
        for spec in &cfg.environments {
            let all = load_components(&spec.components)?;
            let components = EnvironmentalComponentSet::new(all.of_kind(&spec.kind).cloned().collect())
                .map_err(|e| PipelineError::Config(format!("{}: {e}", spec.components.display())))?;
            inputs.environments.push(Environment {
                spec: spec.clone(),
                components,
            });
        }
        Ok(inputs)
    }

    /// The pool listing `region_id`, else the pool without a region list.
    pub fn pool_for(&self, region_id: &str) -> Option<&Pool> {
        self.pools
            .iter()
            .find(|p| p.regions.as_ref().is_some_and(|r| r.contains(region_id)))
            .or_else(|| self.pools.iter().find(|p| p.regions.is_none()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHousehold {
    pub household_id: String,
    /// Index into the pool's households.
    pub source: usize,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPerson {
    pub person_id: String,
    /// Index into [`SyntheticEcosystem::households`].
    pub household: usize,
    /// Index into the pool's persons.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEcosystem {
    pub region_id: String,
    pub pool_id: String,
    pub households: Vec<SyntheticHousehold>,
    pub persons: Vec<SyntheticPerson>,
    /// Assignments per environment kind.
    pub assignments: BTreeMap<String, Vec<Assignment>>,
    pub ipf: Option<IpfSummary>,
}

impl SyntheticEcosystem {
    pub fn n_households(&self) -> usize {
        self.households.len()
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }
}

/// Seed table for a region's marginals with structural zeros and ε applied.
pub fn region_seed_table(
    micro: &MicrodataTable,
    marginals: &[MarginalTable],
    cfg: &GenerationConfig,
) -> Result<(ContingencyTable, Vec<Binning>), RegionError> {
    let binnings = marginals
        .iter()
        .map(|t| Binning::from_marginal(t, micro))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seed = seed_from_microdata(micro, &binnings)?;
    for zero in &cfg.structural_zeros {
        let mut fixed: Vec<Option<usize>> = vec![None; binnings.len()];
        for (var, label) in zero {
            let j = binnings
                .iter()
                .position(|b| &b.variable == var)
                .ok_or_else(|| RegionError::Missing(format!("structural zero names unknown variable `{var}`")))?;
            let k = binnings[j]
                .labels()
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| RegionError::Missing(format!("structural zero names unknown category `{var}={label}`")))?;
            fixed[j] = Some(k);
        }
        for i in 0..seed.len() {
            let c = seed.coords(i);
            if fixed.iter().zip(&c).all(|(f, &k)| f.is_none_or(|f| f == k)) {
                seed.mark_structural(&c);
            }
        }
    }
    Ok((seed.with_epsilon(cfg.ipf.epsilon), binnings))
}

/// Draws until `done(count drawn, persons drawn)`; a guard stops pools whose
/// households carry no persons from looping forever.
fn draw_until<R: Rng + ?Sized>(
    micro: &MicrodataTable,
    mut draw: impl FnMut(&mut R) -> usize,
    count: u64,
    count_type: CountType,
    rng: &mut R,
) -> Result<Vec<usize>, RegionError> {
    let mut out = Vec::new();
    match count_type {
        CountType::Households => out.extend((0..count).map(|_| draw(rng))),
        CountType::Persons => {
            if count > 0 && micro.max_household_size() == 0 {
                return Err(RegionError::Missing("person count requested but microdata households have no persons".into()));
            }
            let guard = count.saturating_mul(1000).saturating_add(1000);
            let mut persons = 0u64;
            while persons < count {
                if out.len() as u64 >= guard {
                    return Err(RegionError::Missing("sampled households carry too few persons to reach the count".into()));
                }
                let h = draw(rng);
                persons += micro.households()[h].persons.len() as u64;
                out.push(h);
            }
        }
    }
    Ok(out)
}

fn summary(fit: &IpfResult) -> IpfSummary {
    IpfSummary {
        iterations: fit.iterations,
        converged: fit.converged,
        max_deviation: fit.max_deviation,
        monotonicity_violations: fit.monotonicity_violations.clone(),
    }
}

/// Households under IPF: a batch is drawn with exact cell quotas and shuffled.
/// For a person count, batches sized from the mean household size are consumed
/// until the cumulative person count first reaches the target.
fn ipf_households<R: Rng + ?Sized>(
    region: &PopulationCount,
    micro: &MicrodataTable,
    inputs: &Inputs,
    cfg: &GenerationConfig,
    rng: &mut R,
) -> Result<(Vec<usize>, IpfSummary), RegionError> {
    let marginals = inputs
        .marginals
        .get(&region.region_id)
        .ok_or_else(|| RegionError::Missing("no marginal tables for this region".into()))?;
    let (seed, binnings) = region_seed_table(micro, marginals, cfg)?;
    let fit = ipf_fit(&seed, marginals, &cfg.ipf)?;
    if !fit.converged {
        log::warn!(
            "region `{}`: IPF stopped after {} iterations at deviation {:.3e}",
            region.region_id,
            fit.iterations,
            fit.max_deviation
        );
    }
    let batch = |n: usize, rng: &mut R| -> Result<Vec<usize>, RegionError> {
        let mut hh = ipf_sample_region(&fit, micro, &binnings, n, &cfg.beckman, rng)?;
        hh.shuffle(rng);
        Ok(hh)
    };
    let out = match region.count_type {
        CountType::Households => batch(region.count as usize, rng)?,
        CountType::Persons => {
            let (mut wsum, mut psum) = (0.0, 0.0);
            for h in micro.households() {
                wsum += h.weight;
                psum += h.weight * h.persons.len() as f64;
            }
            if region.count > 0 && !(psum > 0.0) {
                return Err(RegionError::Missing("person count requested but microdata households have no persons".into()));
            }
            let mean = psum / wsum;
            let mut out = Vec::new();
            let mut persons = 0u64;
            let mut rounds = 0;
            while persons < region.count {
                rounds += 1;
                if rounds > 1000 {
                    return Err(RegionError::Missing("sampled households carry too few persons to reach the count".into()));
                }
                let n = ((region.count - persons) as f64 / mean).ceil() as usize + 1;
                for h in batch(n, rng)? {
                    if persons >= region.count {
                        break;
                    }
                    persons += micro.households()[h].persons.len() as u64;
                    out.push(h);
                }
            }
            out
        }
    };
    Ok((out, summary(&fit)))
}

enum Locator {
    Area(crate::geometry::AreaSampler),
    Roads(crate::geometry::RoadSampler),
    Weighted(crate::geometry::WeightedSampler),
}

impl Locator {
    fn new(region_id: &str, inputs: &Inputs, method: LocationMethod) -> Result<Self, RegionError> {
        let missing = |what: &str| RegionError::Missing(format!("no {what} for this region"));
        Ok(match method {
            LocationMethod::Uniform => {
                Locator::Area(inputs.geography.get(region_id).ok_or_else(|| missing("geography"))?.sampler()?)
            }
            LocationMethod::Roads => {
                Locator::Roads(crate::geometry::RoadSampler::new(inputs.roads.get(region_id).ok_or_else(|| missing("roads"))?)?)
            }
            LocationMethod::Weighted => Locator::Weighted(
                inputs.location_weights.get(region_id).ok_or_else(|| missing("location weights"))?.sampler()?,
            ),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GeoPoint {
        match self {
            Locator::Area(s) => s.sample_point(rng),
            Locator::Roads(s) => s.sample_point(rng),
            Locator::Weighted(s) => s.sample_point(rng),
        }
    }
}

/// Generates one region from its own seed: household records, their persons,
/// one location per household, then environment assignments.
pub fn generate_region(
    region: &PopulationCount,
    inputs: &Inputs,
    cfg: &GenerationConfig,
    seed: u64,
) -> Result<SyntheticEcosystem, RegionError> {
    let rid = &region.region_id;
    let pool = inputs
        .pool_for(rid)
        .ok_or_else(|| RegionError::Missing("no microdata pool serves this region".into()))?;
    let micro = &pool.micro;
    let mut eco = SyntheticEcosystem {
        region_id: rid.clone(),
        pool_id: pool.id.clone(),
        households: Vec::new(),
        persons: Vec::new(),
        assignments: inputs
            .environments
            .iter()
            .map(|e| (e.spec.kind.clone(), Vec::new()))
            .collect(),
        ipf: None,
    };
    if region.count == 0 {
        return Ok(eco);
    }
    if micro.is_empty() {
        return Err(SamplingError::EmptyMicrodata.into());
    }

    let mut rng = substream(seed, "characteristics");
    let sources = match cfg.method {
        Method::Srs => {
            let len = micro.households().len();
            draw_until(micro, |r| r.random_range(0..len), region.count, region.count_type, &mut rng)?
        }
        Method::Mm => {
            let target = inputs
                .moments
                .get(rid)
                .ok_or_else(|| RegionError::Missing("no moment target for this region".into()))?;
            let table = AliasTable::new(&mm_weights(micro, target)?).map_err(SamplingError::from)?;
            draw_until(micro, |r| table.sample(r), region.count, region.count_type, &mut rng)?
        }
        Method::Ipf => {
            let (hh, s) = ipf_households(region, micro, inputs, cfg, &mut rng)?;
            eco.ipf = Some(s);
            hh
        }
    };

    let locator = Locator::new(rid, inputs, cfg.location)?;
    let mut rng = substream(seed, "locations");
    eco.households = sources
        .iter()
        .enumerate()
        .map(|(i, &source)| SyntheticHousehold {
            household_id: format!("{rid}-{}", i + 1),
            source,
            location: locator.sample(&mut rng),
        })
        .collect();
    for (h, hh) in eco.households.iter().enumerate() {
        for (j, &p) in micro.households()[hh.source].persons.iter().enumerate() {
            eco.persons.push(SyntheticPerson {
                person_id: format!("{}-{}", hh.household_id, j + 1),
                household: h,
                source: p,
            });
        }
    }

    for env in &inputs.environments {
        let kind = &env.spec.kind;
        let mut rng = substream(seed, &format!("env:{kind}"));
        let fraction = env.spec.assignment_fraction;
        let agents: Vec<(String, GeoPoint)> = eco
            .persons
            .iter()
            .filter(|_| fraction >= 1.0 || rng.random::<f64>() < fraction)
            .map(|p| (p.person_id.clone(), eco.households[p.household].location))
            .collect();
        let assigned = gravity_assign(&agents, &env.components, kind, &env.spec.gravity, &mut rng)?;
        eco.assignments.insert(kind.clone(), assigned);
    }
    Ok(eco)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRun {
    pub region_id: String,
    pub ok: bool,
    pub households: usize,
    pub persons: usize,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run summary printed after generation. Carries wall times, so unlike the
/// manifest it is not reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub regions: Vec<RegionRun>,
    pub households: usize,
    pub persons: usize,
    pub failed: usize,
    pub wall_time_ms: f64,
}

fn run_region(
    region: &PopulationCount,
    inputs: &Inputs,
    cfg: &GenerationConfig,
) -> Result<(RegionManifest, RegionRun), PipelineError> {
    let start = Instant::now();
    let seed = region_seed(cfg.seed, &region.region_id);
    let result = generate_region(region, inputs, cfg, seed).and_then(|eco| {
        let pool = inputs.pool_for(&region.region_id).expect("generated regions have a pool");
        let files = write_outputs(&eco, &pool.micro, &cfg.output_dir)?;
        Ok((eco, files))
    });
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok((eco, files)) => Ok((
            RegionManifest {
                region_id: region.region_id.clone(),
                seed,
                pool: Some(eco.pool_id.clone()),
                count: region.count,
                count_type: region.count_type,
                ok: true,
                households: eco.n_households(),
                persons: eco.n_persons(),
                files,
                ipf: eco.ipf.clone(),
                error: None,
            },
            RegionRun {
                region_id: region.region_id.clone(),
                ok: true,
                households: eco.n_households(),
                persons: eco.n_persons(),
                wall_time_ms,
                error: None,
            },
        )),
        Err(e) if !cfg.strict => {
            log::error!("region `{}` failed: {e}", region.region_id);
            Ok((
                RegionManifest {
                    region_id: region.region_id.clone(),
                    seed,
                    pool: inputs.pool_for(&region.region_id).map(|p| p.id.clone()),
                    count: region.count,
                    count_type: region.count_type,
                    ok: false,
                    households: 0,
                    persons: 0,
                    files: Vec::new(),
                    ipf: None,
                    error: Some(e.to_string()),
                },
                RegionRun {
                    region_id: region.region_id.clone(),
                    ok: false,
                    households: 0,
                    persons: 0,
                    wall_time_ms,
                    error: Some(e.to_string()),
                },
            ))
        }
        Err(source) => Err(PipelineError::Region {
            region_id: region.region_id.clone(),
            source,
        }),
    }
}

/// Runs every region on a pool of `cfg.jobs` threads, writing each region's
/// files as it completes, then the manifest in region order.
pub fn generate_with_inputs(inputs: &Inputs, cfg: &GenerationConfig) -> Result<RunSummary, PipelineError> {
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::Io {
        path: cfg.output_dir.clone(),
        source: e,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    let mut results: Vec<(RegionManifest, RegionRun)> = pool.install(|| {
        inputs
            .counts
            .par_iter()
            .map(|region| run_region(region, inputs, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    results.sort_by(|a, b| a.0.region_id.cmp(&b.0.region_id));
    let (regions, runs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let manifest = Manifest {
        version: cfg.version.clone(),
        seed: cfg.seed,
        method: cfg.method,
        location: cfg.location,
        environments: cfg.environments.iter().map(|e| e.kind.clone()).collect(),
        regions,
    };
    manifest.write(&cfg.output_dir)?;
    Ok(RunSummary {
        version: cfg.version.clone(),
        seed: cfg.seed,
        output_dir: cfg.output_dir.clone(),
        households: runs.iter().map(|r| r.households).sum(),
        persons: runs.iter().map(|r| r.persons).sum(),
        failed: runs.iter().filter(|r| !r.ok).count(),
        regions: runs,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Loads every input named by the config, then generates all regions.
pub fn generate_ecosystem(cfg: &GenerationConfig) -> Result<RunSummary, PipelineError> {
    let inputs = Inputs::load(cfg)?;
    generate_with_inputs(&inputs, cfg)
}
