use std::path::{Path, PathBuf};

use hhlink::data::{AttributeSchema, MissingPolicy, SyntheticConfig};
use hhlink::evaluation::SplitSpec;
use hhlink::household::PairSampling;
use hhlink::pipeline::{FsConfig, HhlinkConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Hhlink,
    FsBaseline,
}

/// Input file locations. Unset entries fall back to the standard file names
/// inside the data directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub dir: Option<PathBuf>,
    pub wave1: Option<PathBuf>,
    pub wave2: Option<PathBuf>,
    pub wave3: Option<PathBuf>,
    pub truth_households: Option<PathBuf>,
    pub truth_individuals: Option<PathBuf>,
    pub truth23_households: Option<PathBuf>,
    pub truth23_individuals: Option<PathBuf>,
    /// Directory holding fitted model files; defaults to the output directory.
    pub models: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Write every scored household pair, not only the matches. Needed for the
    /// rank-of-truth table when evaluating from files.
    pub household_scores: bool,
    /// Write the household Hausdorff distance table (diagnostic).
    pub distances: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            household_scores: true,
            distances: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateOptions {
    pub train_fraction: f64,
    pub n_repeats: usize,
    /// Also run the Fellegi-Sunter baseline on every test part.
    pub include_fs: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        let spec = SplitSpec::default();
        ValidateOptions {
            train_fraction: spec.train_fraction,
            n_repeats: spec.n_repeats,
            include_fs: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Master seed; copied into every stochastic component.
    pub seed: u64,
    /// Schema file (TOML or JSON); the survey default when unset.
    pub schema: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub data: DataPaths,
    pub missing: MissingPolicy,
    pub simulate: SyntheticConfig,
    pub hhlink: HhlinkConfig,
    pub fs: FsConfig,
    pub validate: ValidateOptions,
    pub output: OutputOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::default(),
            seed: 1,
            schema: None,
            output_dir: PathBuf::from("hhlink-out"),
            data: DataPaths::default(),
            missing: MissingPolicy::default(),
            simulate: SyntheticConfig::default(),
            hhlink: HhlinkConfig::default(),
            fs: FsConfig::default(),
            validate: ValidateOptions::default(),
            output: OutputOptions::default(),
        }
    }
}

/// Builds the configuration: defaults, then the file, then `--set` overrides.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::new("E_IO", format!("cannot read {}: {e}", path.display()))
            })?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::config(e.to_string()))
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// value when it parses as one, otherwise as a bare string.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set expects key=value, got {item:?}")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("invalid key {key:?}")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("{key:?}: {part:?} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Copies the master seed into every component that draws random numbers.
    pub fn propagate_seed(&mut self) {
        self.simulate.seed = self.seed;
        self.hhlink.individual.seed = self.seed;
        if let PairSampling::SubsampleNegatives { seed, .. } = &mut self.hhlink.household.sampling {
            *seed = self.seed;
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            seed: self.seed,
            train_fraction: self.validate.train_fraction,
            n_repeats: self.validate.n_repeats,
        }
    }

    pub fn load_schema(&self) -> Result<AttributeSchema, CliError> {
        let Some(path) = &self.schema else {
            return Ok(AttributeSchema::shiw_default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("E_IO", format!("cannot read {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::new("E_SCHEMA", format!("{}: {e}", path.display())))
    }

    /// Checks the option groups the method needs before any work starts.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), CliError> {
        self.hhlink.validate()?;
        self.fs.validate(schema)?;
        self.simulate.validate()?;
        self.split_spec().validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::new("E_CONFIG", e.to_string()))
    }

    fn data_dir(&self) -> &Path {
        self.data.dir.as_deref().unwrap_or(&self.output_dir)
    }

    fn data_file(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit
            .clone()
            .unwrap_or_else(|| self.data_dir().join(name))
    }

    pub fn wave_path(&self, w: usize) -> PathBuf {
        let explicit = match w {
            1 => &self.data.wave1,
            2 => &self.data.wave2,
            _ => &self.data.wave3,
        };
        self.data_file(explicit, &format!("wave{w}.csv"))
    }

    /// Truth files linking wave `w` to wave `w + 1`.
    pub fn truth_paths(&self, w: usize) -> (PathBuf, PathBuf) {
        if w == 1 {
            (
                self.data_file(&self.data.truth_households, TRUTH_HOUSEHOLDS),
                self.data_file(&self.data.truth_individuals, TRUTH_INDIVIDUALS),
            )
        } else {
            (
                self.data_file(&self.data.truth23_households, TRUTH23_HOUSEHOLDS),
                self.data_file(&self.data.truth23_individuals, TRUTH23_INDIVIDUALS),
            )
        }
    }

    pub fn model_path(&self, name: &str) -> PathBuf {
        self.data
            .models
            .as_deref()
            .unwrap_or(&self.output_dir)
            .join(name)
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

pub const TRUTH_HOUSEHOLDS: &str = "truth_households.csv";
pub const TRUTH_INDIVIDUALS: &str = "truth_individuals.csv";
pub const TRUTH23_HOUSEHOLDS: &str = "truth23_households.csv";
pub const TRUTH23_INDIVIDUALS: &str = "truth23_individuals.csv";
