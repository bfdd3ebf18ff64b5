//! `inspect`: filter and probability tiles as PGM grids.

use std::path::{Path, PathBuf};

use rbse::Family;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::model_file::{load_model, Model};
use crate::pgm::{gray_level, tile_grid};

#[derive(Clone, Debug, Serialize)]
pub struct InspectReport {
    pub tiles: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub files: Vec<PathBuf>,
}

/// Tile shape for `visible` pixels: `shape` if given, else the square root
/// when `visible` is a perfect square, else a single row.
pub fn tile_shape(visible: usize, shape: Option<(usize, usize)>) -> CliResult<(usize, usize)> {
    match shape {
        Some((r, c)) if r * c == visible => Ok((r, c)),
        Some((r, c)) => Err(CliError::Validation(format!(
            "tile shape {r}x{c} does not cover {visible} visible units"
        ))),
        None => {
            let s = (visible as f64).sqrt().round() as usize;
            Ok(if s * s == visible { (s, s) } else { (1, visible) })
        }
    }
}

/// Each hidden unit's weight column, min-max scaled per tile.
fn filter_tiles(w: &ndarray::Array2<f64>) -> Vec<Vec<u8>> {
    w.columns()
        .into_iter()
        .map(|col| {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            col.iter().map(|&x| gray_level(x, lo, hi)).collect()
        })
        .collect()
}

/// Connection probabilities mapped linearly from `[ε, 1 − ε]` to gray levels.
fn probability_tiles(p: &ndarray::Array2<f64>, epsilon: f64) -> Vec<Vec<u8>> {
    p.columns()
        .into_iter()
        .map(|col| col.iter().map(|&x| gray_level(x, epsilon, 1.0 - epsilon)).collect())
        .collect()
}

pub fn run(model_path: &Path, out: &Path, shape: Option<(usize, usize)>, epsilon: f64) -> CliResult<InspectReport> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(CliError::Validation(format!("epsilon must lie in [0, 0.5), got {epsilon}")));
    }
    let (model, _) = load_model(model_path)?;
    let (rows, cols) = tile_shape(model.visible(), shape)?;
    std::fs::create_dir_all(out).map_err(CliError::file(out))?;
    let mut files = Vec::new();
    let filters = match &model {
        Model::Rbm(p) => &p.w,
        Model::Rbse(e) => &e.loc.w,
    };
    let path = out.join("filters.pgm");
    tile_grid(&filter_tiles(filters), rows, cols).save(&path)?;
    files.push(path);
    if let Model::Rbse(e) = &model {
        if e.family() == Family::Bernoulli {
            let path = out.join("probabilities.pgm");
            tile_grid(&probability_tiles(&e.spread.w, epsilon), rows, cols).save(&path)?;
            files.push(path);
        }
    }
    Ok(InspectReport {
        tiles: model.hidden(),
        tile_rows: rows,
        tile_cols: cols,
        files,
    })
}
