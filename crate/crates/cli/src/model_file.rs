//! Model persistence.
//!
//! A model file is pretty-printed JSON with a trailing newline:
//!
//! ```text
//! {
//!   "format": "rbse-model",
//!   "version": 1,
//!   "kind": "rbm" | "rbse-bernoulli" | "rbse-gaussian",
//!   "visible": D,
//!   "hidden": K,
//!   "arrays": [ { "name": "w", "shape": [D, K], "data": "<base64>" }, ... ],
//!   "provenance": { "command": ..., "config_hash": ..., "seed": ..., "epochs": ... }
//! }
//! ```
//!
//! `data` is standard base64 of little-endian `f64` values, row-major. An RBM
//! stores `w`, `b`, `c`; an ensemble stores `loc.w`, `loc.b`, `loc.c`,
//! `spread.w`, `spread.b`, `spread.c`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use rbse::{EnsembleParams, Family, ParamSet, RbmParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "rbse-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Rbm,
    RbseBernoulli,
    RbseGaussian,
}

impl ModelKind {
    pub fn family(self) -> Option<Family> {
        match self {
            ModelKind::Rbm => None,
            ModelKind::RbseBernoulli => Some(Family::Bernoulli),
            ModelKind::RbseGaussian => Some(Family::Gaussian),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub visible: usize,
    pub hidden: usize,
    pub arrays: Vec<NamedArray>,
    pub provenance: Provenance,
}

/// A loaded model.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Rbm(RbmParams<f64>),
    Rbse(EnsembleParams<f64>),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Rbm(_) => ModelKind::Rbm,
            Model::Rbse(e) => match e.family() {
                Family::Bernoulli => ModelKind::RbseBernoulli,
                Family::Gaussian => ModelKind::RbseGaussian,
            },
        }
    }

    pub fn visible(&self) -> usize {
        match self {
            Model::Rbm(p) => p.visible(),
            Model::Rbse(e) => e.visible(),
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Model::Rbm(p) => p.hidden(),
            Model::Rbse(e) => e.hidden(),
        }
    }

    /// The plain RBM, or the ensemble's mean model.
    pub fn mean_rbm(&self) -> RbmParams<f64> {
        match self {
            Model::Rbm(p) => p.clone(),
            Model::Rbse(e) => rbse::ensemble::mean_model(e),
        }
    }
}

fn encode(values: impl Iterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values.flat_map(f64::to_le_bytes).collect();
    STANDARD.encode(bytes)
}

fn decode(arr: &NamedArray) -> CliResult<Vec<f64>> {
    let bytes = STANDARD
        .decode(&arr.data)
        .map_err(|e| CliError::Format(format!("array `{}`: bad base64: {e}", arr.name)))?;
    let expected: usize = arr.shape.iter().product();
    if bytes.len() != expected * 8 {
        return Err(CliError::Format(format!(
            "array `{}`: {} bytes for shape {:?}",
            arr.name,
            bytes.len(),
            arr.shape
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}

fn push_set(arrays: &mut Vec<NamedArray>, prefix: &str, set: &ParamSet<f64>) {
    let (d, k) = set.w.dim();
    for (name, shape, data) in [
        ("w", vec![d, k], encode(set.w.iter().copied())),
        ("b", vec![d], encode(set.b.iter().copied())),
        ("c", vec![k], encode(set.c.iter().copied())),
    ] {
        arrays.push(NamedArray {
            name: format!("{prefix}{name}"),
            shape,
            data,
        });
    }
}

impl ModelFile {
    pub fn from_model(model: &Model, provenance: Provenance) -> Self {
        let mut arrays = Vec::new();
        match model {
            Model::Rbm(p) => push_set(&mut arrays, "", p),
            Model::Rbse(e) => {
                push_set(&mut arrays, "loc.", &e.loc);
                push_set(&mut arrays, "spread.", &e.spread);
            }
        }
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: model.kind(),
            visible: model.visible(),
            hidden: model.hidden(),
            arrays,
            provenance,
        }
    }

    fn array(&self, name: &str) -> CliResult<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| CliError::Format(format!("model file lacks array `{name}`")))
    }

    fn read_set(&self, prefix: &str) -> CliResult<ParamSet<f64>> {
        let (d, k) = (self.visible, self.hidden);
        let get = |name: &str, shape: &[usize]| -> CliResult<Vec<f64>> {
            let arr = self.array(&format!("{prefix}{name}"))?;
            if arr.shape != shape {
                return Err(CliError::Format(format!(
                    "array `{}` has shape {:?}, expected {:?}",
                    arr.name, arr.shape, shape
                )));
            }
            decode(arr)
        };
        let w = Array2::from_shape_vec((d, k), get("w", &[d, k])?).expect("shape checked");
        let b = Array1::from(get("b", &[d])?);
        let c = Array1::from(get("c", &[k])?);
        Ok(ParamSet::new(w, b, c)?)
    }

    pub fn to_model(&self) -> CliResult<Model> {
        if self.format != FORMAT {
            return Err(CliError::Format(format!("not a model file (format `{}`)", self.format)));
        }
        if self.version != VERSION {
            return Err(CliError::Format(format!(
                "model file version {} is not supported (expected {VERSION})",
                self.version
            )));
        }
        let expected = if self.kind == ModelKind::Rbm { 3 } else { 6 };
        if self.arrays.len() != expected {
            return Err(CliError::Format(format!(
                "{:?} model needs {expected} arrays, found {}",
                self.kind,
                self.arrays.len()
            )));
        }
        match self.kind.family() {
            None => Ok(Model::Rbm(self.read_set("")?)),
            Some(family) => Ok(Model::Rbse(EnsembleParams::new(
                family,
                self.read_set("loc.")?,
                self.read_set("spread.")?,
            )?)),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Format(format!("malformed model file: {e}")))
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_json()).map_err(CliError::file(path))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(CliError::file(path))?;
        Self::from_json(&text)
    }
}

pub fn load_model(path: &Path) -> CliResult<(Model, Provenance)> {
    let file = ModelFile::load(path)?;
    Ok((file.to_model()?, file.provenance))
}
