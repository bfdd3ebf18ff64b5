//! `represent`: dump representation sets for every example of a dataset.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rbse::representation::{
    dropconnect_representations, stochastic_representations, Generator, DEFAULT_BURN_IN,
};
use rbse::derive_rng;
use serde::{Deserialize, Serialize};

use crate::config::{check, freeze, DataConfig};
use crate::error::{CliError, CliResult};
use crate::model_file::{load_model, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentConfig {
    pub data: DataConfig,
    pub model: PathBuf,
    pub generator: Generator,
    pub m_rep: usize,
    pub burn_in: usize,
    pub drop_keep: f64,
    pub seed: u64,
}

impl Default for RepresentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            model: PathBuf::from("model.json"),
            generator: Generator::Rbse,
            m_rep: 10,
            burn_in: DEFAULT_BURN_IN,
            drop_keep: 0.5,
            seed: 0,
        }
    }
}

impl RepresentConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut bad = self.data.problems();
        if !self.model.is_file() {
            bad.push(format!("model {} does not exist", self.model.display()));
        }
        if self.m_rep == 0 {
            bad.push("m_rep must be at least 1".to_string());
        }
        if !(self.drop_keep > 0.0 && self.drop_keep <= 1.0) {
            bad.push(format!("drop_keep must lie in (0, 1], got {}", self.drop_keep));
        }
        bad
    }
}

/// One block of representations per data row; row `i` draws from stream `[i]`.
fn represent(cfg: &RepresentConfig, model: &Model, data: &Array2<f64>) -> CliResult<Vec<Array2<f64>>> {
    data.outer_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = derive_rng(cfg.seed, &[i as u64]);
            let reps = match (cfg.generator, model) {
                (Generator::Deterministic, m) => {
                    let h = rbse::representation::deterministic_representation(&m.mean_rbm(), v)?;
                    h.insert_axis(ndarray::Axis(0))
                }
                (Generator::Rbse, Model::Rbse(e)) => {
                    stochastic_representations(e, v, cfg.m_rep, cfg.burn_in, &mut rng)?.reps
                }
                (Generator::Rbse, Model::Rbm(_)) => {
                    return Err(CliError::Validation(
                        "generator rbse needs an ensemble model".to_string(),
                    ))
                }
                (Generator::Dropconnect, m) => {
                    dropconnect_representations(&m.mean_rbm(), cfg.drop_keep, v, cfg.m_rep, &mut rng)?.reps
                }
            };
            Ok(reps)
        })
        .collect()
}

fn write_csv(path: &Path, generator: Generator, sets: &[Array2<f64>]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(CliError::file(path))?;
    let mut w = std::io::BufWriter::new(file);
    let width = sets.first().map_or(0, |s| s.ncols());
    let mut header = String::from("source_id,rep_id,generator");
    for j in 0..width {
        header.push_str(&format!(",h{j}"));
    }
    let io = CliError::file(path);
    let mut body = header + "\n";
    for (i, set) in sets.iter().enumerate() {
        for (r, row) in set.outer_iter().enumerate() {
            body.push_str(&format!("{i},{r},{}", generator.name()));
            for x in row {
                body.push_str(&format!(",{x}"));
            }
            body.push('\n');
        }
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io)
}

pub fn run(cfg: &RepresentConfig, out: &Path) -> CliResult<usize> {
    check(cfg.problems())?;
    let (model, _) = load_model(&cfg.model)?;
    let data = cfg.data.load()?;
    if data.visible() != model.visible() {
        return Err(CliError::Validation(format!(
            "data has {} columns but the model has {} visible units",
            data.visible(),
            model.visible()
        )));
    }
    freeze(cfg, out)?;
    let sets = represent(cfg, &model, &data.examples)?;
    write_csv(&out.join("representations.csv"), cfg.generator, &sets)?;
    Ok(sets.iter().map(|s| s.nrows()).sum())
}
