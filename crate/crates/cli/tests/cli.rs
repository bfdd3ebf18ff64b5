//! Drives the `rbse` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rbse::data::{idx_images_bytes, idx_labels_bytes, IdxImages};
use rbse::{derive_rng, EnsembleParams, Family};
use rbse_cli::model_file::{Model, ModelFile, Provenance};
use rbse_cli::pgm::parse_pgm;

fn rbse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gradcheck_exit_codes_and_json() {
    let ok = rbse(&["gradcheck", "--trials", "5"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 7);

    let bad = rbse(&["gradcheck", "--trials", "5", "--corrupt-gradient"]);
    assert_eq!(bad.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn training_is_reproducible_and_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, cmd: &str| {
        let out = dir.path().join(name);
        let o = rbse(&[
            "-q", cmd, "--out", p(&out), "--seed", "11",
            "--set", "train.epochs=2", "--set", "data.n=60", "--set", "hidden=3",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    for cmd in ["train-rbm", "train-rbse"] {
        let (a, b) = (run(&format!("{cmd}-a"), cmd), run(&format!("{cmd}-b"), cmd));
        for file in ["model.json", "history.csv", "config.toml"] {
            assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{cmd} {file}");
        }
        let text = fs::read_to_string(a.join("model.json")).unwrap();
        let file = ModelFile::from_json(&text).unwrap();
        assert_eq!(file.provenance.seed, 11);
        assert_eq!(file.provenance.epochs, 2);
        let again = ModelFile::from_model(&file.to_model().unwrap(), file.provenance.clone());
        assert_eq!(again.to_json(), text);
        let frozen = fs::read_to_string(a.join("config.toml")).unwrap();
        assert!(frozen.contains("seed = 11"));
    }
}

#[test]
fn zero_epochs_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = rbse(&["-q", "train-rbse", "--out", p(&out), "--set", "train.epochs=0", "--set", "hidden=2"]);
    assert_eq!(o.status.code(), Some(0));
    let (model, _) = rbse_cli::model_file::load_model(&out.join("model.json")).unwrap();
    let init = EnsembleParams::<f64>::init(
        Family::Bernoulli,
        2,
        2,
        &mut derive_rng(0, &[rbse_cli::commands::train::INIT_STREAM]),
    );
    assert_eq!(model, Model::Rbse(init));
}

#[test]
fn validation_and_io_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = rbse(&[
        "train-rbm", "--out", p(&dir.path().join("x")),
        "--set", "train.k=0", "--set", "train.learning_rate=-1", "--set", "hidden=0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("train.k") && err.contains("learning_rate") && err.contains("hidden"), "{err}");

    let o = rbse(&["train-rbm", "--out", p(&dir.path().join("x")), "--set", "nonsense=1"]);
    assert_eq!(o.status.code(), Some(1));

    let o = rbse(&["inspect", "--model", p(&dir.path().join("missing.json")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3));

    let bad = dir.path().join("bad.json");
    let mut file = ModelFile::from_model(&Model::Rbm(rbse::RbmParams::zeros(1, 1)), Provenance::default());
    file.version = 99;
    file.save(&bad).unwrap();
    let o = rbse(&["inspect", "--model", p(&bad), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}

#[test]
fn synthetic_demo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rbse(&[
            "synthetic-demo", "--out", p(&out), "--seed", "2",
            "--set", "train.epochs=2", "--set", "n_train=50", "--set", "m_rep=5",
            "--set", "n_test=3", "--set", "n_outliers=2", "--set", "n_few=3",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["roundtrip.csv", "clouds.csv", "outliers.csv", "few_points.csv", "summary.json"] {
        let bytes = fs::read(a.join(file)).unwrap();
        assert_eq!(bytes, fs::read(b.join(file)).unwrap(), "{file}");
        assert!(String::from_utf8(bytes).unwrap().starts_with(if file.ends_with("csv") { "x,y,source_id,kind" } else { "{" }));
    }
    let clouds = fs::read_to_string(a.join("clouds.csv")).unwrap();
    assert_eq!(clouds.lines().filter(|l| l.ends_with(",cloud")).count(), 15);
}

#[test]
fn inspect_writes_one_tile_per_hidden_unit() {
    let dir = tempfile::tempdir().unwrap();
    let ens = EnsembleParams::<f64>::init_bernoulli(784, 400, &mut derive_rng(0, &[]));
    let path = dir.path().join("m.json");
    ModelFile::from_model(&Model::Rbse(ens), Provenance::default()).save(&path).unwrap();
    let out = dir.path().join("tiles");
    let o = rbse(&["inspect", "--model", p(&path), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    for name in ["filters.pgm", "probabilities.pgm"] {
        let img = parse_pgm(&fs::read(out.join(name)).unwrap()).unwrap();
        // 20 x 20 tiles of 28 x 28 with one-pixel borders.
        assert_eq!((img.width, img.height), (20 * 29 + 1, 20 * 29 + 1));
    }
    let probs = parse_pgm(&fs::read(out.join("probabilities.pgm")).unwrap()).unwrap();
    // p = 0.5 everywhere sits mid-range.
    assert_eq!(probs.pixels[probs.width + 1], 128);
}

fn write_idx_pool(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let (classes, per_class, side) = (3usize, 100usize, 3usize);
    let n = classes * per_class;
    let labels: Vec<u8> = (0..n).map(|i| (i % classes) as u8).collect();
    let mut rng = derive_rng(4, &[]);
    let mut pixels = Vec::with_capacity(n * side * side);
    for &l in &labels {
        for j in 0..side * side {
            use rand::Rng;
            let on = j / side == l as usize;
            let flip = rng.random::<f64>() < 0.1;
            pixels.push(if on != flip { 255 } else { 0 });
        }
    }
    let images = IdxImages { count: n, rows: side, cols: side, pixels };
    let (ip, lp) = (dir.join("images"), dir.join("labels"));
    fs::write(&ip, idx_images_bytes(&images)).unwrap();
    fs::write(&lp, idx_labels_bytes(&labels)).unwrap();
    (ip, lp)
}

#[test]
fn oneshot_and_represent_on_idx_data() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_idx_pool(dir.path());
    let data = [
        "--set".to_string(), "data.source=idx".to_string(),
        "--set".to_string(), format!("data.images=\"{}\"", p(&ip)),
        "--set".to_string(), format!("data.labels=\"{}\"", p(&lp)),
        "--set".to_string(), "data.binarize=0.5".to_string(),
    ];
    let train = |cmd: &str, name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["-q", cmd, "--out", p(&out), "--set", "train.epochs=2", "--set", "hidden=4"];
        args.extend(data.iter().map(String::as_str));
        let o = rbse(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out.join("model.json")
    };
    let rbm = train("train-rbm", "rbm");
    let ens = train("train-rbse", "rbse");

    let out = dir.path().join("oneshot");
    let rbm_set = format!("rbm_model=\"{}\"", p(&rbm));
    let ens_set = format!("rbse_model=\"{}\"", p(&ens));
    let mut args = vec![
        "oneshot", "--out", p(&out), "--set", &rbm_set, "--set", &ens_set,
        "--set", "oneshot.splits=2", "--set", "oneshot.m_rep=3", "--set", "oneshot.fit.max_iters=100",
    ];
    args.extend(data.iter().map(String::as_str));
    let o = rbse(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("oneshot.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("oneshot_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["split_seeds"].as_array().unwrap().len(), 2);

    let out = dir.path().join("rep");
    let model_set = format!("model=\"{}\"", p(&ens));
    let mut args = vec!["represent", "--out", p(&out), "--set", &model_set, "--set", "m_rep=4", "--set", "data.limit=5"];
    args.extend(data.iter().map(String::as_str));
    let o = rbse(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let reps = fs::read_to_string(out.join("representations.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 5 * 4);
    assert!(reps.starts_with("source_id,rep_id,generator,h0,h1,h2,h3\n"));
}

#[test]
fn shipped_configs_resolve() {
    use rbse_cli::commands::{oneshot::OneShotRunConfig, synthetic::SyntheticConfig, train};
    use rbse_cli::config::resolve;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let rbm: train::RbmRunConfig = resolve(Some(&dir.join("mnist_rbm.toml")), &[]).unwrap();
    let ens: train::RbseRunConfig = resolve(Some(&dir.join("mnist_rbse.toml")), &[]).unwrap();
    assert_eq!((rbm.hidden, rbm.train.epochs, rbm.data.limit), (100, 20, Some(10_000)));
    assert_eq!(rbm.train, ens.train);
    let one: OneShotRunConfig = resolve(Some(&dir.join("oneshot.toml")), &[]).unwrap();
    // Only the not-yet-trained model paths are reported.
    assert!(one.problems().iter().all(|p| p.contains("_model")), "{:?}", one.problems());
    let syn: SyntheticConfig = resolve(Some(&dir.join("synthetic.toml")), &[]).unwrap();
    assert_eq!(syn, SyntheticConfig::default());
}
