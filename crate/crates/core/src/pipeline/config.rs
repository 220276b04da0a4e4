use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::assignment::GravityParams;
use crate::ipf::{BeckmanParams, IpfConfig};

/// How household records are drawn from microdata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Srs,
    Ipf,
    Mm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Srs => "srs",
            Method::Ipf => "ipf",
            Method::Mm => "mm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How household locations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationMethod {
    #[default]
    Uniform,
    Roads,
    Weighted,
}

impl LocationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            LocationMethod::Uniform => "uniform",
            LocationMethod::Roads => "roads",
            LocationMethod::Weighted => "weighted",
        }
    }
}

/// A microdata file and the regions it serves. A pool without a region list
/// serves every region not claimed by another pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrodataPool {
    /// Defaults to the file stem.
    #[serde(default)]
    pub id: Option<String>,
    pub path: PathBuf,
    /// Defaults to `<path>.schema.json`.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub regions: Option<Vec<String>>,
}

impl MicrodataPool {
    pub fn pool_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "microdata".into())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub kind: String,
    pub components: PathBuf,
    #[serde(default)]
    pub gravity: GravityParams,
    /// Probability that a person takes part in this environment.
    #[serde(default = "one")]
    pub assignment_fraction: f64,
}

fn one() -> f64 {
    1.0
}

fn one_job() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

fn default_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub counts: PathBuf,
    pub geography: PathBuf,
    #[serde(default)]
    pub roads: Option<PathBuf>,
    #[serde(default)]
    pub location_weights: Option<PathBuf>,
    pub microdata: Vec<MicrodataPool>,
    #[serde(default)]
    pub marginals: Option<PathBuf>,
    #[serde(default)]
    pub moments: Option<PathBuf>,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub location: LocationMethod,
    #[serde(default)]
    pub environments: Vec<EnvironmentSpec>,
    #[serde(default)]
    pub ipf: IpfConfig,
    #[serde(default)]
    pub beckman: BeckmanParams,
    /// Each entry maps variables to categories; every seed cell matching all
    /// of them is held at zero.
    #[serde(default)]
    pub structural_zeros: Vec<BTreeMap<String, String>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_job")]
    pub jobs: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_version")]
    pub version: String,
    /// Abort on the first failing region instead of skipping it.
    #[serde(default)]
    pub strict: bool,
}

impl GenerationConfig {
    /// Parses a config file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.counts);
        fix(&mut self.geography);
        self.roads.iter_mut().for_each(fix);
        self.location_weights.iter_mut().for_each(fix);
        self.marginals.iter_mut().for_each(fix);
        self.moments.iter_mut().for_each(fix);
        for pool in &mut self.microdata {
            fix(&mut pool.path);
            pool.schema.iter_mut().for_each(fix);
        }
        for env in &mut self.environments {
            fix(&mut env.components);
        }
        fix(&mut self.output_dir);
    }

    /// Checks that need no input files.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.jobs < 1 {
            problems.push("jobs must be ≥ 1".to_string());
        }
        if self.microdata.is_empty() {
            problems.push("at least one microdata pool is required".into());
        }
        let mut ids = BTreeSet::new();
        for pool in &self.microdata {
            if !ids.insert(pool.pool_id()) {
                problems.push(format!("duplicate microdata pool id `{}`", pool.pool_id()));
            }
        }
        if self.microdata.iter().filter(|p| p.regions.is_none()).count() > 1 {
            problems.push("only one microdata pool may omit its region list".into());
        }
        match self.method {
            Method::Ipf if self.marginals.is_none() => problems.push("method ipf requires `marginals`".into()),
            Method::Mm if self.moments.is_none() => problems.push("method mm requires `moments`".into()),
            _ => {}
        }
        match self.location {
            LocationMethod::Roads if self.roads.is_none() => problems.push("location roads requires `roads`".into()),
            LocationMethod::Weighted if self.location_weights.is_none() => {
                problems.push("location weighted requires `location_weights`".into())
            }
            _ => {}
        }
        if let Err(e) = self.ipf.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.beckman.validate() {
            problems.push(e.to_string());
        }
        let mut kinds = BTreeSet::new();
        for env in &self.environments {
            if !kinds.insert(env.kind.as_str()) {
                problems.push(format!("environment kind `{}` listed twice", env.kind));
            }
            if env.kind.is_empty() || env.kind.contains(['/', '\\']) {
                problems.push(format!("environment kind `{}` is not usable in a file name", env.kind));
            }
            if !(0.0..=1.0).contains(&env.assignment_fraction) {
                problems.push(format!(
                    "environment `{}`: assignment_fraction must lie in [0, 1], got {}",
                    env.kind, env.assignment_fraction
                ));
            }
            if let Err(e) = env.gravity.validate() {
                problems.push(format!("environment `{}`: {e}", env.kind));
            }
        }
        problems
    }
}
