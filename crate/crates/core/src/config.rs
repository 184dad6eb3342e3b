//! TOML run configuration.
//!
//! Every key is optional except `schema_version`. Unknown keys are rejected. Relative
//! paths are resolved against the directory holding the config file.
//!
//! ```toml
//! schema_version = 1
//! profile = "desk"            # or "paper"; sets core size and GDP eta unless given below
//! scenario = "lr_sweep"
//! seeds = [1, 2, 3]
//! sweep = ["0.1", "1", "10"]
//! methods = ["iterative-SD", "gdp-SD"]
//! target_range = 0.8
//! checkpoint_every = 25
//!
//! [core]
//! rows = 64
//! cols = 64
//! device = "pcm1"
//! t_prog_step = 0.01
//! [core.adc]
//! n_bits = 10
//! i_max = 360.0
//! beta_nl = 0.02
//! sigma_lsb = 0.25
//!
//! [gdp]
//! eta = 2.0
//! batch_size = 256
//! iterations = 500
//!
//! [iterative]
//! max_sweeps = 50
//!
//! [characterization]
//! n_inputs = 1024
//!
//! [program]
//! method = "gdp-SD"
//! target = "random"           # or "zero"
//! snapshot = "core.snap"      # `characterize` reads this instead of building a fresh core
//!
//! [inference]
//! mlp = "net.json"
//! dataset = "test.csv"
//! methods = ["iterative-SD", "gdp-SD"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::characterization::CharacterizationConfig;
use crate::error::{Error, Result};
use crate::experiments::{CoreSpec, Method, Profile, ScenarioKind, ScenarioSpec};
use crate::inference::MapConfig;
use crate::programming::{GdpConfig, IterativeConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// Uniform on [-1, 1] clipped to `target_range`, seeded per run.
    #[default]
    Random,
    Zero,
}

impl std::str::FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(TargetKind::Random),
            "zero" => Ok(TargetKind::Zero),
            _ => Err(Error::Unknown { kind: "target", name: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSection {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub target: TargetKind,
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
}

fn default_method() -> Method {
    Method::GdpSd
}

impl Default for ProgramSection {
    fn default() -> Self {
        Self { method: default_method(), target: TargetKind::Random, snapshot: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InferenceSection {
    /// `None` means the bundled demo network.
    #[serde(default)]
    pub mlp: Option<PathBuf>,
    /// `None` means the bundled demo test set.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Empty means iterative-SD and gdp-SD.
    #[serde(default)]
    pub methods: Vec<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub profile: Option<Profile>,
    #[serde(default)]
    pub scenario: Option<ScenarioKind>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub core: CoreSpec,
    #[serde(default)]
    pub iterative: IterativeConfig,
    #[serde(default)]
    pub gdp: GdpConfig,
    #[serde(default)]
    pub characterization: CharacterizationConfig,
    #[serde(default)]
    pub sweep: Vec<String>,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default = "default_range")]
    pub target_range: f64,
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub program: ProgramSection,
    #[serde(default)]
    pub inference: InferenceSection,
    /// Keys the profile must not override because the file sets them.
    #[serde(skip)]
    explicit: Explicit,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Explicit {
    rows: bool,
    cols: bool,
    eta: bool,
}

fn default_range() -> f64 {
    ScenarioSpec::new(ScenarioKind::SdTdConvergence).target_range
}
fn default_every() -> usize {
    ScenarioSpec::new(ScenarioKind::SdTdConvergence).checkpoint_every
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            profile: None,
            scenario: None,
            seeds: None,
            core: CoreSpec::default(),
            iterative: IterativeConfig::default(),
            gdp: GdpConfig::default(),
            characterization: CharacterizationConfig::default(),
            sweep: vec![],
            methods: vec![],
            target_range: default_range(),
            checkpoint_every: default_every(),
            program: ProgramSection::default(),
            inference: InferenceSection::default(),
            explicit: Explicit::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// A configuration problem, reported with the offending file when there is one.
#[derive(Debug)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}: {}", p.display(), self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        ConfigError { path: None, message: e.to_string() }
    }
}

fn has_key(table: &toml::Table, section: &str, key: &str) -> bool {
    table.get(section).and_then(|s| s.as_table()).is_some_and(|s| s.contains_key(key))
}

impl Config {
    /// Parse and validate config text. Parse errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError { path: None, message };
        let table: toml::Table = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        match table.get("schema_version") {
            None => return Err(err("missing required key `schema_version`".into())),
            Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(err(format!("unsupported schema_version {v}; this build reads version {SCHEMA_VERSION}")))
            }
        }
        let mut cfg: Config = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        cfg.explicit = Explicit {
            rows: has_key(&table, "core", "rows"),
            cols: has_key(&table, "core", "cols"),
            eta: has_key(&table, "gdp", "eta"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let with_path = |mut e: ConfigError| {
            e.path = Some(path.to_path_buf());
            e
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| with_path(ConfigError { path: None, message: format!("cannot read: {e}") }))?;
        let mut cfg = Self::parse(&text).map_err(with_path)?;
        cfg.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(kind) = self.scenario {
            self.scenario_spec(kind, None).validate()?;
        } else {
            self.scenario_spec(ScenarioKind::SdTdConvergence, None).validate()?;
        }
        Ok(())
    }

    /// Profile given on the command line wins over the file.
    pub fn profile(&self, cli: Option<Profile>) -> Profile {
        cli.or(self.profile).unwrap_or_default()
    }

    /// Apply the profile to every size/eta key the file leaves unset.
    pub fn apply_profile(&mut self, profile: Profile) {
        if !self.explicit.rows {
            self.core.rows = profile.size();
        }
        if !self.explicit.cols {
            self.core.cols = profile.size();
        }
        if !self.explicit.eta {
            self.gdp.eta = profile.eta();
        }
        self.profile = Some(profile);
    }

    pub fn scenario_spec(&self, scenario: ScenarioKind, seeds: Option<&[u64]>) -> ScenarioSpec {
        let mut spec = ScenarioSpec::new(scenario);
        spec.core = self.core.clone();
        spec.iterative = self.iterative.clone();
        spec.gdp = self.gdp.clone();
        spec.characterization = self.characterization.clone();
        if let Some(s) = seeds.map(<[u64]>::to_vec).or_else(|| self.seeds.clone()) {
            spec.seeds = s;
        }
        spec.sweep = self.sweep.clone();
        spec.methods = self.methods.clone();
        spec.target_range = self.target_range;
        spec.checkpoint_every = self.checkpoint_every;
        spec
    }

    pub fn map_config(&self) -> MapConfig {
        MapConfig {
            core: self.core.clone(),
            iterative: self.iterative.clone(),
            gdp: self.gdp.clone(),
            characterization: self.characterization.clone(),
            target_range: self.target_range,
        }
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gives_defaults() {
        let cfg = Config::parse("schema_version = 1\n").unwrap();
        assert_eq!(cfg.core, CoreSpec::default());
        assert_eq!(cfg.gdp, GdpConfig::default());
        assert_eq!(cfg.program.method, Method::GdpSd);
    }

    #[test]
    fn overrides_reach_the_spec() {
        let text = r#"
schema_version = 1
scenario = "batch_sweep"
seeds = [4, 5]
sweep = ["32", "64"]
target_range = 0.5
[core]
device = "pcm2"
t_prog_step = 1.0
[core.adc]
n_bits = 8
i_max = 100.0
beta_nl = 0.1
sigma_lsb = 0.0
[gdp]
batch_size = 64
u_clip = 0.5
[characterization]
n_inputs = 300
"#;
        let cfg = Config::parse(text).unwrap();
        let spec = cfg.scenario_spec(cfg.scenario.unwrap(), None);
        assert_eq!(spec.seeds, vec![4, 5]);
        assert_eq!(spec.core.adc.as_ref().unwrap().n_bits, 8);
        assert_eq!(spec.gdp.u_clip, 0.5);
        assert_eq!(spec.characterization.n_inputs, Some(300));
        assert_eq!(spec.target_range, 0.5);
        assert_eq!(cfg.scenario_spec(ScenarioKind::BatchSweep, Some(&[9])).seeds, vec![9]);
    }

    #[test]
    fn profile_respects_explicit_keys() {
        let mut cfg = Config::parse("schema_version = 1\n[core]\nrows = 32\n").unwrap();
        cfg.apply_profile(Profile::Paper);
        assert_eq!((cfg.core.rows, cfg.core.cols, cfg.gdp.eta), (32, 256, 1.0));
        let mut cfg = Config::parse("schema_version = 1\n[gdp]\neta = 3.0\n").unwrap();
        cfg.apply_profile(Profile::Paper);
        assert_eq!(cfg.gdp.eta, 3.0);
    }

    #[test]
    fn errors_name_line_and_field() {
        let e = Config::parse("schema_version = 1\n[gdp]\nbatch_size = \"big\"\n").unwrap_err();
        assert!(e.message.contains("line 3"), "{e}");
        let e = Config::parse("schema_version = 1\n[gdp]\nbatchsize = 3\n").unwrap_err();
        assert!(e.message.contains("batchsize"), "{e}");
        let e = Config::parse("schema_version = 1\n[gdp]\neta = -1.0\n").unwrap_err();
        assert!(e.message.contains("eta"), "{e}");
        let e = Config::parse("schema_version = 2\n").unwrap_err();
        assert!(e.message.contains("schema_version"), "{e}");
        assert!(Config::parse("[core]\nrows = 8\n").unwrap_err().message.contains("schema_version"));
    }

    #[test]
    fn load_reports_path_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "schema_version = 1\nseeds = \"x\"\n").unwrap();
        let e = Config::load(&p).unwrap_err();
        assert!(e.to_string().starts_with(&p.display().to_string()));
        std::fs::write(&p, "schema_version = 1\n").unwrap();
        let cfg = Config::load(&p).unwrap();
        assert_eq!(cfg.resolve_path(Path::new("a.csv")), dir.path().join("a.csv"));
        assert!(Config::load(&dir.path().join("missing.toml")).is_err());
    }
}
