//! `oneshot`: the four-pipeline comparison over repeated one-shot splits.

use std::fs;
use std::path::{Path, PathBuf};

use rbse::classifier::{run_one_shot, OneShotConfig, OneShotModels, OneShotResult};
use serde::{Deserialize, Serialize};

use crate::config::{check, collect, freeze, DataConfig, DataSource, MnistPool};
use crate::error::{CliError, CliResult};
use crate::model_file::{load_model, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneShotRunConfig {
    /// Labeled pool the splits are drawn from.
    pub data: DataConfig,
    pub rbm_model: PathBuf,
    pub rbse_model: PathBuf,
    pub oneshot: OneShotConfig,
}

impl Default for OneShotRunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                source: DataSource::Mnist,
                pool: MnistPool::OneShot,
                binarize: Some(rbse::data::DEFAULT_BINARIZE_THRESHOLD),
                ..DataConfig::default()
            },
            rbm_model: PathBuf::from("rbm/model.json"),
            rbse_model: PathBuf::from("rbse/model.json"),
            oneshot: OneShotConfig::default(),
        }
    }
}

impl OneShotRunConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut bad = self.data.problems();
        for (name, p) in [("rbm_model", &self.rbm_model), ("rbse_model", &self.rbse_model)] {
            if !p.is_file() {
                bad.push(format!("{name} {} does not exist", p.display()));
            }
        }
        collect(&mut bad, "oneshot", self.oneshot.validate());
        bad
    }
}

pub fn run(cfg: &OneShotRunConfig, out: &Path) -> CliResult<OneShotResult> {
    check(cfg.problems())?;
    let rbm = match load_model(&cfg.rbm_model)?.0 {
        Model::Rbm(p) => p,
        Model::Rbse(_) => {
            return Err(CliError::Validation(format!(
                "rbm_model {} holds an ensemble",
                cfg.rbm_model.display()
            )))
        }
    };
    let ensemble = match load_model(&cfg.rbse_model)?.0 {
        Model::Rbse(e) => e,
        Model::Rbm(_) => {
            return Err(CliError::Validation(format!(
                "rbse_model {} holds a plain RBM",
                cfg.rbse_model.display()
            )))
        }
    };
    let pool = cfg.data.load()?;
    freeze(cfg, out)?;
    let models = OneShotModels {
        rbm: &rbm,
        ensemble: &ensemble,
    };
    let result = run_one_shot(&models, &pool, &cfg.oneshot)?;
    write_result(&result, out)?;
    Ok(result)
}

pub fn write_result(result: &OneShotResult, out: &Path) -> CliResult<()> {
    let path = out.join("oneshot.csv");
    fs::write(&path, result.to_csv()?).map_err(CliError::file(&path))?;
    let path = out.join("oneshot_summary.json");
    fs::write(&path, result.summary_json()? + "\n").map_err(CliError::file(&path))?;
    Ok(())
}
