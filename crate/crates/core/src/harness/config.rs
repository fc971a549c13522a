use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::data::{self, CsvSchema, Dataset, SplitSpec, SyntheticSpec};
use crate::encoding::{self, DimensionSpec, SpaceSpec};
use crate::nn::ArchKind;
use crate::optimizer::OptimizerConfig;
use crate::qsim::NoiseSpec;

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetRef {
    Bundled { name: String },
    Csv { path: PathBuf, #[serde(default)] schema: CsvSchema },
    Synthetic(SyntheticSpec),
}

impl Default for DatasetRef {
    fn default() -> Self {
        DatasetRef::Bundled { name: "pima".into() }
    }
}

impl DatasetRef {
    /// Bundled name, `synthetic`, or a CSV path whose last column is the
    /// label.
    pub fn parse(s: &str) -> Self {
        if data::BUNDLED.contains(&s) {
            DatasetRef::Bundled { name: s.to_string() }
        } else if s == "synthetic" {
            DatasetRef::Synthetic(SyntheticSpec::default())
        } else {
            DatasetRef::Csv { path: s.into(), schema: CsvSchema::default() }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DatasetRef::Bundled { name } => name.clone(),
            DatasetRef::Csv { path, .. } => {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into())
            }
            DatasetRef::Synthetic(s) => format!("synthetic-k{}-d{}+{}", s.k, s.d_informative, s.d_noise),
        }
    }

    pub fn load(&self) -> Result<Dataset, HarnessError> {
        let ds = match self {
            DatasetRef::Bundled { name } => data::bundled(name),
            DatasetRef::Csv { path, schema } => data::load_csv(path, schema),
            DatasetRef::Synthetic(s) => data::synthesize(s),
        };
        ds.map_err(HarnessError::Dataset)
    }
}

/// Conditions of the default noise sweep, noiseless first.
pub fn default_noise_grid() -> Vec<NoiseSpec> {
    let mut g = vec![NoiseSpec::none()];
    g.extend([0.001, 0.005, 0.01].map(|p| NoiseSpec::bit_flip(p).unwrap()));
    g.extend([0.005, 0.02].map(|p| NoiseSpec::depolarizing(p).unwrap()));
    g.extend([0.01, 0.05].map(|p| NoiseSpec::amplitude_damping(p).unwrap()));
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetRef,
    pub arch: ArchKind,
    pub optimizer: OptimizerConfig,
    pub split: SplitSpec,
    pub arch_dims: Vec<DimensionSpec>,
    pub inner_epochs: usize,
    pub final_epochs: usize,
    pub repeats: usize,
    pub output_dir: PathBuf,
    pub noise_grid: Vec<NoiseSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetRef::default(),
            arch: ArchKind::Shallow,
            optimizer: OptimizerConfig::default(),
            split: SplitSpec::default(),
            arch_dims: encoding::default_arch_dims(8),
            inner_epochs: 5,
            final_epochs: 10,
            repeats: 1,
            output_dir: PathBuf::from("runs"),
            noise_grid: default_noise_grid(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Applies `dotted.path=value` edits. Values are parsed as JSON when
    /// possible and taken as strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, HarnessError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) =
                o.split_once('=').ok_or_else(|| HarnessError::Config(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, path, value)?;
        }
        serde_json::from_value(doc).map_err(|e| HarnessError::Config(format!("after overrides: {e}")))
    }

    pub fn space(&self, ds: &Dataset) -> Result<SpaceSpec, HarnessError> {
        SpaceSpec::new(ds.n_features(), self.arch_dims.clone())
            .map(|s| s.with_feature_names(&ds.feature_names))
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |m: String| Err(HarnessError::Config(m));
        self.optimizer.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.split.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.repeats == 0 {
            return cfg("repeats must be at least 1".into());
        }
        if self.inner_epochs == 0 {
            return cfg("inner_epochs must be at least 1".into());
        }
        let probe = SpaceSpec::new(1, self.arch_dims.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
        for name in [
            encoding::DROPOUT,
            encoding::HIDDEN_WIDTH,
            encoding::LEARNING_RATE,
            encoding::BATCH_SIZE,
            encoding::WEIGHT_DECAY,
            encoding::N_HIDDEN_LAYERS,
        ] {
            if probe.dim_index(name).is_none() {
                return cfg(format!("arch_dims lacks `{name}`"));
            }
        }
        if self.noise_grid.is_empty() {
            return cfg("noise_grid must not be empty".into());
        }
        Ok(())
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), HarnessError> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    if !map.contains_key(*key) {
                        // Variant payloads (e.g. a noise spec) may omit keys;
                        // unknown ones are still rejected when re-parsing.
                        map.insert(key.to_string(), Value::Null);
                    }
                    map.get_mut(*key).unwrap()
                } else {
                    map.get_mut(*key).ok_or_else(|| HarnessError::Config(format!("unknown config key `{path}`")))?
                }
            }
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| HarnessError::Config(format!("`{key}` in `{path}` is not an index")))?;
                items.get_mut(idx).ok_or_else(|| HarnessError::Config(format!("index {idx} out of range in `{path}`")))?
            }
            _ => return Err(HarnessError::Config(format!("`{path}` descends into a scalar"))),
        };
    }
    *cur = value;
    Ok(())
}
