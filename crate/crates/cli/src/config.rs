//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use treeauto::automata::{catalog, AutomatonDoc, AutomatonSpec};
use treeauto::distmap::StateDistribution;
use treeauto::offspring::DistributionConfig;

use crate::Failure;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub automaton: AutomatonSource,
    #[serde(default)]
    pub distribution: Option<DistributionConfig>,
    /// Index into the sorted fixed points, or an explicit distribution.
    #[serde(default)]
    pub fixed_point: Option<FixedPointChoice>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum AutomatonSource {
    Catalog(CatalogRef),
    File(FileRef),
    Inline(AutomatonDoc),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogRef {
    pub catalog: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum FixedPointChoice {
    Index(usize),
    Explicit(ExplicitNu),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitNu {
    pub nu: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl SweepConfig {
    /// Grid `lo, lo + step, ...` up to `hi` (inclusive within half a step).
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub depth: usize,
    pub samples: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Shape in the Newick-like syntax, e.g. `"((,),(,,))"`.
    pub tree: String,
    /// Frontier level; defaults to the tree's height.
    #[serde(default)]
    pub depth: Option<usize>,
}

/// A parsed configuration with its automaton compiled.
pub struct Loaded {
    pub config: Config,
    pub spec: AutomatonSpec,
}

impl Loaded {
    pub fn distribution(&self) -> Result<&DistributionConfig, Failure> {
        self.config
            .distribution
            .as_ref()
            .ok_or_else(|| Failure::Config("config has no \"distribution\"".into()))
    }

    /// Explicit ν from the config, if given.
    pub fn explicit_nu(&self) -> Result<Option<StateDistribution>, Failure> {
        match &self.config.fixed_point {
            Some(FixedPointChoice::Explicit(e)) => {
                if e.nu.len() != self.spec.k() {
                    return Err(Failure::Config(format!(
                        "nu has {} entries, automaton has {} colours",
                        e.nu.len(),
                        self.spec.k()
                    )));
                }
                StateDistribution::new(e.nu.clone()).map(Some).map_err(Failure::config)
            }
            _ => Ok(None),
        }
    }
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: Config = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let spec = match &config.automaton {
        AutomatonSource::Catalog(c) => catalog::by_name(&c.catalog)
            .ok_or_else(|| Failure::Config(format!("unknown catalog automaton {:?}", c.catalog)))?,
        AutomatonSource::File(f) => {
            let p = base.join(&f.path);
            let text = fs::read_to_string(&p)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
            AutomatonSpec::from_json(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        AutomatonSource::Inline(doc) => doc.compile().map_err(Failure::config)?,
    };
    if let Some(d) = &config.distribution {
        d.build().map_err(Failure::config)?;
    }
    if let Some(s) = &config.sweep {
        if !(s.lo < s.hi && s.step > 0.0) {
            return Err(Failure::Config("sweep needs lo < hi and step > 0".into()));
        }
    }
    Ok(Loaded { config, spec })
}
