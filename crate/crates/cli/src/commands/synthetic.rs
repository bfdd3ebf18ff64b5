//! Two-dimensional manifold demo: deterministic round trips, stochastic
//! clouds, outlier attraction and a few-point manifold.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::Rng;
use rbse::data::{generate_synthetic, Shape};
use rbse::representation::{
    attraction, cloud_records, deterministic_roundtrip, mean_displacement, nearest_distance, point_records,
    roundtrip_cloud, write_points_csv, Attraction, Cloud, PointRecord, DEFAULT_BURN_IN,
};
use rbse::training::{train, train_rbm, TrainConfig};
use rbse::{derive_rng, derive_seed, EnsembleParams, Family, RbmParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub shape: Shape,
    pub n_train: usize,
    pub noise_std: f64,
    pub hidden: usize,
    pub family: Family,
    /// Shared by the RBM and the ensemble; `seed` is replaced per model.
    pub train: TrainConfig,
    pub m_rep: usize,
    pub burn_in: usize,
    /// Fresh on-manifold points whose clouds are drawn.
    pub n_test: usize,
    pub n_outliers: usize,
    /// Outliers are at least this far from every training point.
    pub outlier_min_distance: f64,
    /// Training points for the few-point run.
    pub n_few: usize,
    /// Bound on the RBM's mean round-trip displacement.
    pub roundtrip_threshold: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            shape: Shape::Ring,
            n_train: 500,
            noise_std: 0.02,
            hidden: 8,
            family: Family::Bernoulli,
            train: TrainConfig {
                learning_rate: 0.1,
                batch_size: 20,
                epochs: 200,
                ..TrainConfig::default()
            },
            m_rep: 100,
            burn_in: DEFAULT_BURN_IN,
            n_test: 20,
            n_outliers: 5,
            outlier_min_distance: 0.15,
            n_few: 5,
            roundtrip_threshold: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for (name, v) in [
            ("n_train", self.n_train),
            ("hidden", self.hidden),
            ("m_rep", self.m_rep),
            ("n_test", self.n_test),
            ("n_outliers", self.n_outliers),
            ("n_few", self.n_few),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be at least 1"));
            }
        }
        if !(self.noise_std >= 0.0) {
            bad.push(format!("noise_std must be non-negative, got {}", self.noise_std));
        }
        if !(self.outlier_min_distance > 0.0 && self.outlier_min_distance < 0.5) {
            bad.push(format!(
                "outlier_min_distance must lie in (0, 0.5), got {}",
                self.outlier_min_distance
            ));
        }
        if !(self.roundtrip_threshold > 0.0) {
            bad.push(format!("roundtrip_threshold must be positive, got {}", self.roundtrip_threshold));
        }
        crate::config::collect(&mut bad, "train", self.train.validate());
        bad
    }
}

/// Everything the demo computes; the CSVs are views of this.
#[derive(Clone, Debug)]
pub struct SyntheticOutcome {
    pub train: Array2<f64>,
    pub rbm: RbmParams<f64>,
    pub ensemble: EnsembleParams<f64>,
    pub roundtrip: Array2<f64>,
    pub roundtrip_displacement: f64,
    pub test_clouds: Vec<Cloud<f64>>,
    pub outlier_clouds: Vec<Cloud<f64>>,
    pub attractions: Vec<Attraction>,
    pub few_train: Array2<f64>,
    pub few_clouds: Vec<Cloud<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub seed: u64,
    pub shape: Shape,
    pub roundtrip_displacement: f64,
    pub roundtrip_threshold: f64,
    pub roundtrip_within_threshold: bool,
    /// Mean over test clouds of the summed coordinate variance.
    pub cloud_variance: f64,
    pub mean_cloud_distance: f64,
    pub mean_outlier_distance: f64,
    pub outliers_attracted: usize,
    pub outliers: usize,
    /// Mean cloud distance is below mean outlier distance.
    pub attraction_holds: bool,
}

// Stream ids under the run seed.
const DATA: u64 = 0;
const RBM_INIT: u64 = 1;
const RBM_TRAIN: u64 = 2;
const ENS_INIT: u64 = 3;
const ENS_TRAIN: u64 = 4;
const TEST: u64 = 5;
const OUTLIERS: u64 = 6;
const CLOUDS: u64 = 7;
const FEW: u64 = 8;

/// Uniform points in the unit square at least `min_distance` from `train`.
pub fn sample_outliers(train: &Array2<f64>, n: usize, min_distance: f64, seed: u64) -> Array2<f64> {
    let mut rng = derive_rng(seed, &[]);
    let mut out = Array2::zeros((n, 2));
    let mut filled = 0;
    while filled < n {
        let p = ndarray::arr1(&[rng.random::<f64>(), rng.random::<f64>()]);
        if nearest_distance(p.view(), train.view()) >= min_distance {
            out.row_mut(filled).assign(&p);
            filled += 1;
        }
    }
    out
}

fn cloud_variance(cloud: &Cloud<f64>) -> f64 {
    let n = cloud.points.nrows();
    if n < 2 {
        return 0.0;
    }
    cloud.points.var_axis(Axis(0), 1.0).sum()
}

fn train_ensemble(cfg: &SyntheticConfig, data: &Array2<f64>, init: u64, seed: u64) -> CliResult<EnsembleParams<f64>> {
    let ens0 = EnsembleParams::init(cfg.family, 2, cfg.hidden, &mut derive_rng(cfg.seed, &[init]));
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    Ok(train(&ens0, data.view(), &tc, |_| {})?.0)
}

pub fn run(cfg: &SyntheticConfig) -> CliResult<SyntheticOutcome> {
    crate::config::check(cfg.problems())?;
    let s = |id: u64| derive_seed(cfg.seed, &[id]);
    let data = generate_synthetic::<f64>(cfg.shape, cfg.n_train, cfg.noise_std, s(DATA))?.examples;

    let rbm0 = rbse::rbm::init_params(2, cfg.hidden, &mut derive_rng(cfg.seed, &[RBM_INIT]));
    let rbm_cfg = TrainConfig {
        seed: s(RBM_TRAIN),
        ..cfg.train.clone()
    };
    let (rbm, _) = train_rbm(&rbm0, data.view(), &rbm_cfg, |_| {})?;
    let roundtrip = deterministic_roundtrip(&rbm, data.view())?;
    let roundtrip_displacement = mean_displacement(data.view(), roundtrip.view());

    let ensemble = train_ensemble(cfg, &data, ENS_INIT, s(ENS_TRAIN))?;
    let test = generate_synthetic::<f64>(cfg.shape, cfg.n_test, cfg.noise_std, s(TEST))?.examples;
    let test_clouds = roundtrip_cloud(&ensemble, test.view(), cfg.m_rep, cfg.burn_in, derive_seed(s(CLOUDS), &[0]))?;

    let outliers = sample_outliers(&data, cfg.n_outliers, cfg.outlier_min_distance, s(OUTLIERS));
    let outlier_clouds =
        roundtrip_cloud(&ensemble, outliers.view(), cfg.m_rep, cfg.burn_in, derive_seed(s(CLOUDS), &[1]))?;
    let attractions = outlier_clouds.iter().map(|c| attraction(c, data.view())).collect();

    let few_train = data.slice(ndarray::s![..cfg.n_few.min(data.nrows()), ..]).to_owned();
    let few_ens = train_ensemble(cfg, &few_train, ENS_INIT, derive_seed(s(FEW), &[0]))?;
    let few_clouds = roundtrip_cloud(&few_ens, few_train.view(), cfg.m_rep, cfg.burn_in, derive_seed(s(FEW), &[1]))?;

    Ok(SyntheticOutcome {
        train: data,
        rbm,
        ensemble,
        roundtrip,
        roundtrip_displacement,
        test_clouds,
        outlier_clouds,
        attractions,
        few_train,
        few_clouds,
    })
}

impl SyntheticOutcome {
    pub fn summary(&self, cfg: &SyntheticConfig) -> SyntheticSummary {
        let n = self.attractions.len().max(1) as f64;
        let mean_cloud_distance = self.attractions.iter().map(|a| a.cloud_distance).sum::<f64>() / n;
        let mean_outlier_distance = self.attractions.iter().map(|a| a.source_distance).sum::<f64>() / n;
        let cloud_variance =
            self.test_clouds.iter().map(cloud_variance).sum::<f64>() / self.test_clouds.len().max(1) as f64;
        SyntheticSummary {
            seed: cfg.seed,
            shape: cfg.shape,
            roundtrip_displacement: self.roundtrip_displacement,
            roundtrip_threshold: cfg.roundtrip_threshold,
            roundtrip_within_threshold: self.roundtrip_displacement < cfg.roundtrip_threshold,
            cloud_variance,
            mean_cloud_distance,
            mean_outlier_distance,
            outliers_attracted: self.attractions.iter().filter(|a| a.attracted()).count(),
            outliers: self.attractions.len(),
            attraction_holds: mean_cloud_distance < mean_outlier_distance,
        }
    }

    /// The four panel CSVs, in order: round trip, test clouds, outliers, few points.
    pub fn panels(&self) -> CliResult<[(&'static str, Vec<PointRecord>); 4]> {
        let mut roundtrip = point_records(self.train.view(), "train", true)?;
        roundtrip.extend(point_records(self.roundtrip.view(), "reconstruction", true)?);

        let sources = |clouds: &[Cloud<f64>], kind: &str| -> CliResult<Vec<PointRecord>> {
            let mut out = Vec::new();
            for (i, c) in clouds.iter().enumerate() {
                out.push(PointRecord::from_point(c.source.view(), Some(i), kind)?);
            }
            Ok(out)
        };
        let mut clouds = point_records(self.train.view(), "train", false)?;
        clouds.extend(sources(&self.test_clouds, "source")?);
        clouds.extend(cloud_records(&self.test_clouds, "cloud")?);

        let mut outliers = point_records(self.train.view(), "train", false)?;
        outliers.extend(sources(&self.outlier_clouds, "outlier")?);
        outliers.extend(cloud_records(&self.outlier_clouds, "cloud")?);

        let mut few = point_records(self.few_train.view(), "train", true)?;
        few.extend(cloud_records(&self.few_clouds, "cloud")?);

        Ok([
            ("roundtrip.csv", roundtrip),
            ("clouds.csv", clouds),
            ("outliers.csv", outliers),
            ("few_points.csv", few),
        ])
    }

    pub fn write(&self, cfg: &SyntheticConfig, dir: &Path) -> CliResult<SyntheticSummary> {
        for (name, records) in self.panels()? {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(CliError::file(&path))?;
            write_points_csv(std::io::BufWriter::new(file), &records)?;
        }
        let summary = self.summary(cfg);
        let path = dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(&summary).map_err(rbse::Error::from)?;
        text.push('\n');
        fs::write(&path, text).map_err(CliError::file(&path))?;
        Ok(summary)
    }
}
