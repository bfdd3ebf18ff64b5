//! Binary PGM (P5) tile grids.

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Gray {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_pgm()).map_err(CliError::file(path))
    }
}

/// Parses a P5 image with maxval 255.
pub fn parse_pgm(bytes: &[u8]) -> Option<Gray> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).ok()?.to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (width, height) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let pixels = bytes.get(i + 1..)?.to_vec();
    (pixels.len() == width * height).then_some(Gray { width, height, pixels })
}

/// Maps `x ∈ [lo, hi]` linearly onto `0..=255`.
pub fn gray_level(x: f64, lo: f64, hi: f64) -> u8 {
    if hi <= lo {
        return 128;
    }
    ((x - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Lays out equally sized tiles in a near-square grid separated by a
/// one-pixel black border.
pub fn tile_grid(tiles: &[Vec<u8>], tile_rows: usize, tile_cols: usize) -> Gray {
    let n = tiles.len();
    let grid_cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let grid_rows = n.div_ceil(grid_cols).max(1);
    let width = grid_cols * (tile_cols + 1) + 1;
    let height = grid_rows * (tile_rows + 1) + 1;
    let mut pixels = vec![0u8; width * height];
    for (t, tile) in tiles.iter().enumerate() {
        let (gr, gc) = (t / grid_cols, t % grid_cols);
        let (y0, x0) = (gr * (tile_rows + 1) + 1, gc * (tile_cols + 1) + 1);
        for r in 0..tile_rows {
            let row = &tile[r * tile_cols..(r + 1) * tile_cols];
            let start = (y0 + r) * width + x0;
            pixels[start..start + tile_cols].copy_from_slice(row);
        }
    }
    Gray { width, height, pixels }
}
