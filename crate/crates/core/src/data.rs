//! Datasets: synthetic 2-D manifolds, IDX (MNIST) files and one-shot splits.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 0.5;

/// Examples per class in a one-shot split, and how many of them are for training.
pub const ONE_SHOT_PER_CLASS: usize = 100;
pub const ONE_SHOT_TRAIN_PER_CLASS: usize = 1;

/// A set of visible vectors with entries in `[0, 1]`, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub examples: Array2<T>,
    pub labels: Option<Vec<usize>>,
    pub name: String,
    pub seed: Option<u64>,
    /// `(rows, cols)` when the examples are images.
    pub image_shape: Option<(usize, usize)>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: impl Into<String>, examples: Array2<T>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(bad) = examples.iter().find(|&&x| !(x >= T::zero() && x <= T::one())) {
            return Err(Error::InvalidParameter(format!("dataset entry {bad} outside [0, 1]")));
        }
        if let Some(l) = &labels {
            if l.len() != examples.nrows() {
                return Err(Error::CountMismatch {
                    images: examples.nrows(),
                    labels: l.len(),
                });
            }
        }
        Ok(Self {
            examples,
            labels,
            name: name.into(),
            seed: None,
            image_shape: None,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.nrows() == 0
    }

    pub fn visible(&self) -> usize {
        self.examples.ncols()
    }

    /// `1 + max label`, or 0 when unlabeled.
    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m + 1)
    }

    /// Rows `indices` in order, keeping metadata.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            examples: self.examples.select(Axis(0), indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
            seed: self.seed,
            image_shape: self.image_shape,
        }
    }

    /// The first `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            examples: self.examples.mapv(|x| U::of(x.as_f64())),
            labels: self.labels.clone(),
            name: self.name.clone(),
            seed: self.seed,
            image_shape: self.image_shape,
        }
    }

    /// Rows of `self` followed by rows of `other`; both must be labeled alike.
    pub fn concat(&self, other: &Self, name: impl Into<String>) -> Result<Self> {
        if self.visible() != other.visible() {
            return Err(Error::DimensionMismatch {
                what: "dataset width",
                expected: self.visible(),
                got: other.visible(),
            });
        }
        let examples = ndarray::concatenate(Axis(0), &[self.examples.view(), other.examples.view()])
            .expect("widths checked");
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => return Err(Error::MissingLabels),
        };
        Ok(Self {
            examples,
            labels,
            name: name.into(),
            seed: None,
            image_shape: self.image_shape,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Upper half circle around (0.5, 0.3) with radius 0.35.
    Arc,
    /// Full circle around (0.5, 0.5) with radius 0.3.
    Ring,
    /// Horizontal segments at y = 0.3 and y = 0.7 for x in [0.2, 0.8].
    Segments,
    /// Both diagonals of [0.15, 0.85]².
    Cross,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Arc => "arc",
            Shape::Ring => "ring",
            Shape::Segments => "segments",
            Shape::Cross => "cross",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arc" => Ok(Shape::Arc),
            "ring" => Ok(Shape::Ring),
            "segments" => Ok(Shape::Segments),
            "cross" => Ok(Shape::Cross),
            other => Err(Error::UnknownShape(other.to_string())),
        }
    }
}

pub const RING_CENTER: (f64, f64) = (0.5, 0.5);
pub const RING_RADIUS: f64 = 0.3;

fn shape_point<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> (f64, f64) {
    use std::f64::consts::PI;
    match shape {
        Shape::Arc => {
            let t = rng.random_range(0.0..PI);
            (0.5 + 0.35 * t.cos(), 0.3 + 0.35 * t.sin())
        }
        Shape::Ring => {
            let t = rng.random_range(0.0..2.0 * PI);
            (RING_CENTER.0 + RING_RADIUS * t.cos(), RING_CENTER.1 + RING_RADIUS * t.sin())
        }
        Shape::Segments => {
            let x = rng.random_range(0.2..=0.8);
            let y = if rng.random::<bool>() { 0.7 } else { 0.3 };
            (x, y)
        }
        Shape::Cross => {
            let t = rng.random_range(0.15..=0.85);
            if rng.random::<bool>() {
                (t, t)
            } else {
                (t, 1.0 - t)
            }
        }
    }
}

/// `n` points on `shape` with Gaussian jitter, clipped to the unit square.
pub fn generate_synthetic<T: Scalar>(shape: Shape, n: usize, noise_std: f64, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise_std must be non-negative, got {noise_std}")));
    }
    let mut rng = derive_rng(seed, &[shape as u64]);
    let noise = Normal::new(0.0, noise_std).expect("checked std");
    let mut examples = Array2::zeros((n, 2));
    for mut row in examples.rows_mut() {
        let (x, y) = shape_point(shape, &mut rng);
        let (dx, dy) = if noise_std > 0.0 {
            (noise.sample(&mut rng), noise.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        row[0] = T::of((x + dx).clamp(0.0, 1.0));
        row[1] = T::of((y + dy).clamp(0.0, 1.0));
    }
    let mut ds = Dataset::new(shape.name(), examples, None)?;
    ds.seed = Some(seed);
    Ok(ds)
}

/// Entries `≥ threshold` become 1, the rest 0.
pub fn binarize<T: Scalar>(ds: &Dataset<T>, threshold: f64) -> Dataset<T> {
    let t = T::of(threshold);
    Dataset {
        examples: ds.examples.mapv(|x| if x >= t { T::one() } else { T::zero() }),
        ..ds.clone()
    }
}

/// Raw contents of an IDX image file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(out)
            }
            None => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                offset: self.bytes.len(),
                needed: self.offset + n - self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let found = self.u32()?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.to_path_buf(),
                expected,
                found,
            });
        }
        Ok(())
    }
}

pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    let mut c = Cursor { path, bytes, offset: 0 };
    c.magic(IDX_IMAGES_MAGIC)?;
    let count = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let pixels = c.take(count * rows * cols)?.to_vec();
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut c = Cursor { path, bytes, offset: 0 };
    c.magic(IDX_LABELS_MAGIC)?;
    let count = c.u32()? as usize;
    Ok(c.take(count)?.to_vec())
}

pub fn idx_images_bytes(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for x in [IDX_IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&x.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn idx_labels_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads an IDX image/label pair; pixels are scaled to `[0, 1]` by `/ 255`.
pub fn load_idx<T: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let images = parse_idx_images(images_path, &fs::read(images_path)?)?;
    let labels = parse_idx_labels(labels_path, &fs::read(labels_path)?)?;
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let d = images.rows * images.cols;
    let examples = Array2::from_shape_fn((images.count, d), |(n, i)| T::of(images.pixels[n * d + i] as f64 / 255.0));
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    let mut ds = Dataset::new(name, examples, Some(labels.into_iter().map(usize::from).collect()))?;
    ds.image_shape = Some((images.rows, images.cols));
    Ok(ds)
}

/// Inverse of [`load_idx`]: pixels are `round(255 x)`.
pub fn dataset_to_idx<T: Scalar>(ds: &Dataset<T>) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = ds.image_shape.unwrap_or((1, ds.visible()));
    let pixels = ds.examples.iter().map(|x| (x.as_f64() * 255.0).round() as u8).collect();
    let images = IdxImages {
        count: ds.len(),
        rows,
        cols,
        pixels,
    };
    let labels = ds.labels.as_ref().ok_or(Error::MissingLabels)?;
    let label_bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    Ok((idx_images_bytes(&images), idx_labels_bytes(&label_bytes)))
}

pub fn write_idx<T: Scalar>(ds: &Dataset<T>, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (images, labels) = dataset_to_idx(ds)?;
    fs::write(images_path, images)?;
    fs::write(labels_path, labels)?;
    Ok(())
}

/// One-shot split as indices into the source dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotSplit {
    /// One index per class, ordered by class.
    pub train: Vec<usize>,
    /// 99 indices per class, grouped by class.
    pub test: Vec<usize>,
    pub seed: u64,
}

impl OneShotSplit {
    pub fn train_set<T: Scalar>(&self, ds: &Dataset<T>) -> Dataset<T> {
        ds.subset(&self.train)
    }

    pub fn test_set<T: Scalar>(&self, ds: &Dataset<T>) -> Dataset<T> {
        ds.subset(&self.test)
    }
}

/// Samples 100 examples per class without replacement; the first of each
/// class is for training and the other 99 for testing.
pub fn one_shot_split<T: Scalar>(ds: &Dataset<T>, seed: u64) -> Result<OneShotSplit> {
    let labels = ds.labels.as_ref().ok_or(Error::MissingLabels)?;
    let classes = ds.num_classes();
    if classes < 2 {
        return Err(Error::DegenerateLabels);
    }
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = derive_rng(seed, &[]);
    let mut split = OneShotSplit {
        train: Vec::with_capacity(classes),
        test: Vec::with_capacity(classes * (ONE_SHOT_PER_CLASS - ONE_SHOT_TRAIN_PER_CLASS)),
        seed,
    };
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < ONE_SHOT_PER_CLASS {
            return Err(Error::InsufficientClass {
                class,
                available: members.len(),
                required: ONE_SHOT_PER_CLASS,
            });
        }
        let (chosen, _) = members.partial_shuffle(&mut rng, ONE_SHOT_PER_CLASS);
        split.train.extend_from_slice(&chosen[..ONE_SHOT_TRAIN_PER_CLASS]);
        split.test.extend_from_slice(&chosen[ONE_SHOT_TRAIN_PER_CLASS..]);
    }
    Ok(split)
}

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// SHA-256 of the uncompressed standard MNIST files.
pub const MNIST_SHA256: [(&str, &str); 4] = [
    (MNIST_TRAIN_IMAGES, "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"),
    (MNIST_TRAIN_LABELS, "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"),
    (MNIST_TEST_IMAGES, "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"),
    (MNIST_TEST_LABELS, "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"),
];

/// Training images used as the unlabeled pool; the rest join the one-shot pool.
pub const MNIST_UNLABELED: usize = 50_000;

/// `$RBSE_DATA_DIR`, else `$HOME/.cache/rbse`.
pub fn data_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("RBSE_DATA_DIR") {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map_or_else(|| PathBuf::from("."), PathBuf::from);
    home.join(".cache").join("rbse")
}

/// Default location of the four MNIST files.
pub fn mnist_dir() -> PathBuf {
    data_dir().join("mnist")
}

pub fn mnist_available(dir: &Path) -> bool {
    MNIST_SHA256.iter().all(|(name, _)| dir.join(name).is_file())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

pub fn verify_sha256(path: &Path, expected: &str) -> Result<()> {
    let actual = sha256_file(path)?;
    if actual != expected {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            actual,
        });
    }
    Ok(())
}

/// Checks every MNIST file in `dir` against its known digest.
pub fn verify_mnist(dir: &Path) -> Result<()> {
    for (name, digest) in MNIST_SHA256 {
        verify_sha256(&dir.join(name), digest)?;
    }
    Ok(())
}

pub fn load_mnist_train<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    load_idx(&dir.join(MNIST_TRAIN_IMAGES), &dir.join(MNIST_TRAIN_LABELS))
}

pub fn load_mnist_test<T: Scalar>(dir: &Path) -> Result<Dataset<T>> {
    load_idx(&dir.join(MNIST_TEST_IMAGES), &dir.join(MNIST_TEST_LABELS))
}

/// The unlabeled pool (first 50,000 training images) and the one-shot pool
/// (remaining 10,000 training images followed by the 10,000 test images).
pub fn mnist_pools<T: Scalar>(dir: &Path) -> Result<(Dataset<T>, Dataset<T>)> {
    let train = load_mnist_train::<T>(dir)?;
    let test = load_mnist_test::<T>(dir)?;
    let n = train.len();
    let split = MNIST_UNLABELED.min(n);
    let mut unlabeled = train.subset(&(0..split).collect::<Vec<_>>());
    unlabeled.name = "mnist-unlabeled".into();
    unlabeled.labels = None;
    let rest = train.subset(&(split..n).collect::<Vec<_>>());
    let pool = rest.concat(&test, "mnist-one-shot-pool")?;
    Ok((unlabeled, pool))
}

/// Sidecar describing a cached dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub name: String,
    pub visible: usize,
    pub count: usize,
    pub seed: Option<u64>,
    pub labeled: bool,
    pub image_shape: Option<(usize, usize)>,
    /// SHA-256 of the binary payload.
    pub checksum: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes examples as little-endian `f64` rows followed by `u32` labels, plus
/// a JSON sidecar at `<path>.json`.
pub fn write_cache<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(ds.examples.len() * 8);
    for x in ds.examples.iter() {
        payload.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    if let Some(labels) = &ds.labels {
        for &l in labels {
            payload.extend_from_slice(&(l as u32).to_le_bytes());
        }
    }
    let meta = CacheMeta {
        name: ds.name.clone(),
        visible: ds.visible(),
        count: ds.len(),
        seed: ds.seed,
        labeled: ds.labels.is_some(),
        image_shape: ds.image_shape,
        checksum: sha256_hex(&payload),
    };
    fs::write(path, &payload)?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_cache<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let meta: CacheMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let payload = fs::read(path)?;
    let actual = sha256_hex(&payload);
    if actual != meta.checksum {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: meta.checksum,
            actual,
        });
    }
    let mut c = Cursor {
        path,
        bytes: &payload,
        offset: 0,
    };
    let cells = meta.count * meta.visible;
    let raw = c.take(cells * 8)?;
    let values: Vec<T> = raw
        .chunks_exact(8)
        .map(|b| T::of(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
        .collect();
    let examples = Array2::from_shape_vec((meta.count, meta.visible), values).expect("sized from metadata");
    let labels = if meta.labeled {
        let raw = c.take(meta.count * 4)?;
        Some(
            raw.chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte chunk")) as usize)
                .collect(),
        )
    } else {
        None
    };
    let mut ds = Dataset::new(meta.name, examples, labels)?;
    ds.seed = meta.seed;
    ds.image_shape = meta.image_shape;
    Ok(ds)
}
