use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gravcomp::features::normalize_dataset;
use gravcomp::learning::{load_model, masked_loss, Dataset, Provenance};

const SMALL: &str = r#"
format_version = 1
seed = 21
output_dir = "out"

[sampling]
train_count = 150
val_count = 120
test_count = 40

[train]
max_steps = 240
check_interval = 40
teacher_samples = 1500

[evaluate]
drift_points = 4
curve_ts = [10, 30]
curve_seeds = 2
"#;

fn gravcomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gravcomp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gravcomp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn full_pipeline(cfg: &str, jobs: &str) {
    ok(&["sample", "--config", cfg, "--jobs", jobs]);
    ok(&["train", "--config", cfg, "--method", "lfs", "--jobs", jobs]);
    ok(&["train", "--config", cfg, "--method", "pkd", "--jobs", jobs]);
    for mode in ["offline", "drift", "curve"] {
        ok(&["evaluate", "--config", cfg, "--mode", mode, "--jobs", jobs]);
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    v.sort();
    v
}

#[test]
fn pipeline_outputs_are_complete_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = write_config(a.path(), SMALL);
    let cfg_b = write_config(b.path(), SMALL);
    full_pipeline(&cfg_a, "1");
    full_pipeline(&cfg_b, "2");
    let out_a = a.path().join("out");
    let out_b = b.path().join("out");
    let names: Vec<String> = files(&out_a)
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for expected in [
        "manifest.toml",
        "train.csv",
        "val.csv",
        "test.csv",
        "teacher_low.toml",
        "teacher_high.toml",
        "model_lfs.txt",
        "model_pkd.txt",
        "train_log_lfs.csv",
        "train_log_pkd.csv",
        "offline.csv",
        "drift.csv",
        "drift_summary.csv",
        "curve.csv",
        "curve_summary.csv",
    ] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing");
    }
    for (fa, fb) in files(&out_a).iter().zip(files(&out_b)) {
        assert_eq!(
            std::fs::read(fa).unwrap(),
            std::fs::read(&fb).unwrap(),
            "{} differs between runs",
            fa.display()
        );
    }

    // Manifest mirrors the config.
    let manifest: gravcomp_cli::Manifest =
        toml::from_str(&std::fs::read_to_string(out_a.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(
        (manifest.seed, manifest.train_count, manifest.val_count, manifest.test_count),
        (21, 150, 120, 40)
    );
    assert_eq!(csv_rows(&out_a.join("train.csv")).len(), 150);

    // Training logs: PKD anneals λ linearly to 0, LfS keeps it at 0.
    let pkd_log = csv_rows(&out_a.join("train_log_pkd.csv"));
    let lambdas: Vec<f64> = pkd_log.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(lambdas.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(*lambdas.last().unwrap(), 0.0);
    for r in &pkd_log {
        let step: f64 = r[0].parse().unwrap();
        let lambda: f64 = r[3].parse().unwrap();
        assert!((lambda - (1.0 - (step - 1.0) / 239.0)).abs() < 1e-12);
    }
    let lfs_log = csv_rows(&out_a.join("train_log_lfs.csv"));
    assert!(lfs_log.iter().all(|r| r[3].parse::<f64>().unwrap() == 0.0));

    // The saved model reproduces its best validation loss.
    let model = load_model(&out_a.join("model_lfs.txt")).unwrap();
    let val = Dataset::load_csv(&out_a.join("val.csv"), Provenance::System).unwrap();
    let loss = masked_loss(&model, &normalize_dataset(&val, &model.norm).unwrap()).unwrap();
    let best = lfs_log
        .iter()
        .map(|r| r[2].parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!((loss - best).abs() <= 1e-12 * best.max(1.0));

    // Report schemas.
    let offline = csv_rows(&out_a.join("offline.csv"));
    let oracle = offline.iter().find(|r| r[0] == "oracle").unwrap();
    // Positions are stored encoded, so decoding leaves round-off only.
    assert!(oracle[1..].iter().all(|v| v.parse::<f64>().unwrap() <= 1e-9));
    let drift = csv_rows(&out_a.join("drift.csv"));
    for controller in ["oracle", "zero", "teacher_low", "lfs", "pkd"] {
        assert_eq!(drift.iter().filter(|r| r[0] == controller).count(), 4 * 6);
    }
    assert!(drift
        .iter()
        .filter(|r| r[0] == "oracle")
        .all(|r| r[3].parse::<f64>().unwrap() <= 1e-9));
    assert_eq!(csv_rows(&out_a.join("curve.csv")).len(), 2 * 2 * 2);
}

#[test]
fn grid_sampling_yields_the_full_product() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "format_version = 1\nseed = 1\noutput_dir = \"g\"\n[sampling]\nmode = \"grid\"\ngrid_points = 4\nval_count = 10\ntest_count = 10\n",
    );
    ok(&["sample", "--config", &cfg]);
    assert_eq!(csv_rows(&dir.path().join("g/train.csv")).len(), 8192);
}

#[test]
fn seed_and_out_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "format_version = 1\nseed = 1\noutput_dir = \"a\"\n[sampling]\ntrain_count = 5\nval_count = 5\ntest_count = 5\n",
    );
    let other = dir.path().join("b");
    ok(&["sample", "--config", &cfg, "--seed", "2", "--out", other.to_str().unwrap()]);
    ok(&["sample", "--config", &cfg]);
    assert_ne!(
        std::fs::read(dir.path().join("a/train.csv")).unwrap(),
        std::fs::read(other.join("train.csv")).unwrap()
    );
    let manifest = std::fs::read_to_string(other.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 2"));
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| gravcomp(args).status.code().unwrap();

    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&["sample", "--config", missing.to_str().unwrap()]), 2);
    let bad = write_config(dir.path(), "format_version = 9\nseed = 1\n");
    assert_eq!(code(&["sample", "--config", &bad]), 2);
    assert_eq!(code(&["train", "--config", &bad, "--method", "nonsense"]), 2);

    let cfg = write_config(
        dir.path(),
        "format_version = 1\nseed = 1\noutput_dir = \"o\"\n[sampling]\ntrain_count = 20\nval_count = 20\ntest_count = 20\n[train]\nmax_steps = 50\n[train.adam]\nlr = 1e200\n",
    );
    assert_eq!(code(&["train", "--config", &cfg, "--method", "lfs"]), 4);
    assert_eq!(code(&["evaluate", "--config", &cfg, "--mode", "offline"]), 4);
    ok(&["sample", "--config", &cfg]);
    assert_eq!(code(&["train", "--config", &cfg, "--method", "lfs"]), 3);
    let absent_model = dir.path().join("o/absent.txt");
    assert_eq!(
        code(&["evaluate", "--config", &cfg, "--mode", "drift", "--model", absent_model.to_str().unwrap()]),
        4
    );
}
