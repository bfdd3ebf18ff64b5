//! `train-rbm` and `train-rbse`.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rbse::training::{train, train_rbm, EpochRecord, TrainConfig, TrainHistory};
use rbse::{derive_rng, EnsembleParams, Family};
use serde::{Deserialize, Serialize};

use crate::config::{check, collect, freeze, DataConfig};
use crate::error::{CliError, CliResult};
use crate::model_file::{Model, ModelFile, Provenance};

/// Stream id for parameter initialization under the training seed.
pub const INIT_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbmRunConfig {
    pub data: DataConfig,
    pub hidden: usize,
    pub train: TrainConfig,
}

impl Default for RbmRunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            hidden: 8,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbseRunConfig {
    pub data: DataConfig,
    pub hidden: usize,
    pub family: Family,
    pub train: TrainConfig,
}

impl Default for RbseRunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            hidden: 8,
            family: Family::Bernoulli,
            train: TrainConfig::default(),
        }
    }
}

fn problems(data: &DataConfig, hidden: usize, train: &TrainConfig) -> Vec<String> {
    let mut bad = data.problems();
    if hidden == 0 {
        bad.push("hidden must be at least 1".to_string());
    }
    collect(&mut bad, "train", train.validate());
    bad
}

/// Timing sidecar; the only output that varies between identical runs.
#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    started_unix_secs: u64,
    epoch_secs: Vec<f64>,
}

fn progress(quiet: bool) -> impl FnMut(&EpochRecord) {
    move |r: &EpochRecord| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  recon {:.6}  |grad loc| {:.4e}  |grad spread| {:.4e}  {:.1}s",
                r.epoch, r.recon_error, r.loc_grad_norm, r.spread_grad_norm, r.wall_clock_secs
            );
        }
    }
}

fn write_outputs(
    out: &Path,
    command: &str,
    model: &Model,
    history: &TrainHistory,
    provenance: Provenance,
    started: u64,
) -> CliResult<()> {
    ModelFile::from_model(model, provenance).save(&out.join("model.json"))?;
    let path = out.join("history.csv");
    fs::write(&path, history.to_csv()?).map_err(CliError::file(&path))?;
    let meta = RunMeta {
        command,
        started_unix_secs: started,
        epoch_secs: history.timings(),
    };
    let path = out.join("run.json");
    let text = serde_json::to_string_pretty(&meta).map_err(rbse::Error::from)?;
    fs::write(&path, text + "\n").map_err(CliError::file(&path))?;
    Ok(())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn run_rbm(cfg: &RbmRunConfig, out: &Path, quiet: bool) -> CliResult<Model> {
    check(problems(&cfg.data, cfg.hidden, &cfg.train))?;
    let started = now();
    let data = cfg.data.load()?;
    let hash = freeze(cfg, out)?;
    let init = rbse::rbm::init_params(data.visible(), cfg.hidden, &mut derive_rng(cfg.train.seed, &[INIT_STREAM]));
    let (params, history) = train_rbm(&init, data.examples.view(), &cfg.train, progress(quiet))?;
    let model = Model::Rbm(params);
    let provenance = Provenance {
        command: "train-rbm".into(),
        config_hash: hash,
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
    };
    write_outputs(out, "train-rbm", &model, &history, provenance, started)?;
    Ok(model)
}

pub fn run_rbse(cfg: &RbseRunConfig, out: &Path, quiet: bool) -> CliResult<Model> {
    check(problems(&cfg.data, cfg.hidden, &cfg.train))?;
    let started = now();
    let data = cfg.data.load()?;
    let hash = freeze(cfg, out)?;
    let init = EnsembleParams::init(
        cfg.family,
        data.visible(),
        cfg.hidden,
        &mut derive_rng(cfg.train.seed, &[INIT_STREAM]),
    );
    let (ens, history) = train(&init, data.examples.view(), &cfg.train, progress(quiet))?;
    let model = Model::Rbse(ens);
    let provenance = Provenance {
        command: "train-rbse".into(),
        config_hash: hash,
        seed: cfg.train.seed,
        epochs: cfg.train.epochs,
    };
    write_outputs(out, "train-rbse", &model, &history, provenance, started)?;
    Ok(model)
}
