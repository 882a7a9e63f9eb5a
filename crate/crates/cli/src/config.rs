//! Run configuration: a TOML file naming either a catalog scenario or a full
//! inline setup, plus seed, output directory and emit flags.

use crate::Failure;
use phsim::scenarios::{configure, InlineSpec, Overrides, Scenario};
use serde::Deserialize;
use std::path::{Path, PathBuf};

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Emit {
    #[serde(default = "yes")]
    pub trace: bool,
    #[serde(default = "yes")]
    pub summary: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit { trace: true, summary: true }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// each entry is layered over the top-level overrides
    pub variants: Vec<Overrides>,
    /// run every variant with each of these seeds; defaults to the config seed
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<String>,
    pub inline: Option<InlineSpec>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub emit: Emit,
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    /// The config file (if any) with command-line values layered on top.
    pub fn assemble(path: Option<&Path>, scenario: Option<String>, seed: Option<u64>, sets: &[String]) -> Result<Self, Failure> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(name) = scenario {
            if cfg.scenario.is_some() || cfg.inline.is_some() {
                return Err(Failure::Config("--scenario given but the config already names a setup".into()));
            }
            cfg.scenario = Some(name);
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.overrides = cfg.overrides.merged(&parse_sets(sets)?);
        Ok(cfg)
    }

    pub fn name(&self) -> &str {
        self.scenario.as_deref().unwrap_or("inline")
    }

    /// Exactly one of `scenario` and `inline` must be present.
    pub fn resolve(&self, extra: &Overrides) -> Result<Scenario, Failure> {
        let overrides = self.overrides.merged(extra);
        match (&self.scenario, &self.inline) {
            (Some(_), Some(_)) => Err(Failure::Config("config names both a scenario and an inline setup".into())),
            (None, None) => Err(Failure::Config("config names neither a scenario nor an inline setup".into())),
            (Some(name), None) => configure(name, &overrides).map_err(|e| Failure::Config(e.to_string())),
            (None, Some(inline)) => {
                let mut s = inline.clone().into_scenario("inline").map_err(|e| Failure::Config(e.to_string()))?;
                s.apply_inline_overrides(&overrides).map_err(|e| Failure::Config(e.to_string()))?;
                Ok(s)
            }
        }
    }
}

/// `key=value` pairs in TOML syntax; bare words are taken as strings.
pub fn parse_sets(sets: &[String]) -> Result<Overrides, Failure> {
    let mut table = toml::Table::new();
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| Failure::Config(format!("--set expects key=value, got '{s}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        table.insert(k.to_string(), value);
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Failure::Config(format!("--set: {e}")))
}
