//! Run configuration: a TOML file, `--set key=value` overrides and the
//! frozen copy written next to every run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rbse::data::{
    binarize, generate_synthetic, load_idx, load_mnist_test, load_mnist_train, mnist_dir, mnist_pools, read_cache,
    verify_mnist,
};
use rbse::{Dataset, Shape};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

/// Name of the frozen configuration inside an output directory.
pub const FROZEN_CONFIG: &str = "config.toml";

/// Reads `path` (if any), applies `overrides` and deserializes the result.
pub fn resolve<C: DeserializeOwned>(path: Option<&Path>, overrides: &[String]) -> CliResult<C> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(CliError::file(p))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(vec![format!("{}: {e}", p.display())]))?
        }
        None => Table::new(),
    };
    let mut problems = Vec::new();
    for o in overrides {
        if let Err(e) = apply_override(&mut table, o) {
            problems.push(e);
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(vec![e.message().to_string()]))
}

/// Applies one `a.b.c=value` override. The value is parsed as TOML and falls
/// back to a plain string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override `{spec}` has an empty key segment"));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("override `{spec}`: `{p}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Writes the resolved configuration to `dir/config.toml` and returns its
/// SHA-256.
pub fn freeze<C: Serialize>(cfg: &C, dir: &Path) -> CliResult<String> {
    let text = to_toml(cfg)?;
    fs::create_dir_all(dir).map_err(CliError::file(dir))?;
    let path = dir.join(FROZEN_CONFIG);
    fs::write(&path, &text).map_err(CliError::file(&path))?;
    Ok(config_hash(&text))
}

pub fn to_toml<C: Serialize>(cfg: &C) -> CliResult<String> {
    toml::to_string(cfg).map_err(|e| CliError::Format(format!("cannot serialize configuration: {e}")))
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Mnist,
    Idx,
    Cache,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MnistPool {
    /// First 50,000 training images, labels dropped.
    #[default]
    Unlabeled,
    /// Last 10,000 training images plus the 10,000 test images.
    OneShot,
    Train,
    Test,
}

/// Where a run's examples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub shape: Shape,
    pub n: usize,
    pub noise_std: f64,
    pub data_seed: u64,
    /// MNIST directory; defaults to `$RBSE_DATA_DIR/mnist`.
    pub dir: Option<PathBuf>,
    pub pool: MnistPool,
    pub verify: bool,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub path: Option<PathBuf>,
    /// Keep only the first `limit` examples.
    pub limit: Option<usize>,
    /// Threshold for deterministic binarization.
    pub binarize: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            shape: Shape::Ring,
            n: 500,
            noise_std: 0.02,
            data_seed: 0,
            dir: None,
            pool: MnistPool::Unlabeled,
            verify: true,
            images: None,
            labels: None,
            path: None,
            limit: None,
            binarize: None,
        }
    }
}

impl DataConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        match self.source {
            DataSource::Synthetic => {
                if self.n == 0 {
                    bad.push("data.n must be at least 1".to_string());
                }
                if !(self.noise_std >= 0.0) {
                    bad.push(format!("data.noise_std must be non-negative, got {}", self.noise_std));
                }
            }
            DataSource::Mnist => {
                let dir = self.mnist_dir();
                if !dir.is_dir() {
                    bad.push(format!("data.dir {} does not exist", dir.display()));
                }
            }
            DataSource::Idx => {
                for (name, p) in [("data.images", &self.images), ("data.labels", &self.labels)] {
                    match p {
                        None => bad.push(format!("{name} is required for idx data")),
                        Some(p) if !p.is_file() => bad.push(format!("{name} {} does not exist", p.display())),
                        _ => {}
                    }
                }
            }
            DataSource::Cache => match &self.path {
                None => bad.push("data.path is required for cached data".to_string()),
                Some(p) if !p.is_file() => bad.push(format!("data.path {} does not exist", p.display())),
                _ => {}
            },
        }
        if let Some(t) = self.binarize {
            if !(0.0..=1.0).contains(&t) {
                bad.push(format!("data.binarize must lie in [0, 1], got {t}"));
            }
        }
        if self.limit == Some(0) {
            bad.push("data.limit must be at least 1".to_string());
        }
        bad
    }

    pub fn mnist_dir(&self) -> PathBuf {
        self.dir.clone().unwrap_or_else(mnist_dir)
    }

    pub fn load(&self) -> CliResult<Dataset<f64>> {
        let bad = self.problems();
        if !bad.is_empty() {
            return Err(CliError::Config(bad));
        }
        let mut ds = match self.source {
            DataSource::Synthetic => generate_synthetic(self.shape, self.n, self.noise_std, self.data_seed)?,
            DataSource::Mnist => {
                let dir = self.mnist_dir();
                if self.verify {
                    verify_mnist(&dir)?;
                }
                match self.pool {
                    MnistPool::Unlabeled => mnist_pools(&dir)?.0,
                    MnistPool::OneShot => mnist_pools(&dir)?.1,
                    MnistPool::Train => load_mnist_train(&dir)?,
                    MnistPool::Test => load_mnist_test(&dir)?,
                }
            }
            DataSource::Idx => load_idx(
                self.images.as_deref().expect("validated"),
                self.labels.as_deref().expect("validated"),
            )?,
            DataSource::Cache => read_cache(self.path.as_deref().expect("validated"))?,
        };
        if let Some(n) = self.limit {
            ds = ds.head(n);
        }
        if let Some(t) = self.binarize {
            ds = binarize(&ds, t);
        }
        Ok(ds)
    }
}

/// Collects `problems` into a config error when non-empty.
pub fn check(problems: Vec<String>) -> CliResult<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(problems))
    }
}

/// Adds the entries of a core `InvalidConfig` to `problems`, prefixed by `section`.
pub fn collect(problems: &mut Vec<String>, section: &str, result: rbse::Result<()>) {
    match result {
        Ok(()) => {}
        Err(rbse::Error::InvalidConfig(v)) => problems.extend(v.into_iter().map(|p| format!("{section}.{p}"))),
        Err(e) => problems.push(format!("{section}: {e}")),
    }
}
