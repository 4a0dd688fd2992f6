//! The `sample`, `train` and `evaluate` pipelines.
//!
//! Artifacts live in the experiment's output directory:
//!
//! | file | written by |
//! |---|---|
//! | `manifest.toml`, `train.csv`, `val.csv`, `test.csv`, `teacher_low.toml`, `teacher_high.toml` | `sample` |
//! | `model_<method>.txt`, `train_log_<method>.csv` | `train` |
//! | `offline.csv`, `drift.csv`, `drift_summary.csv`, `curve.csv`, `curve_summary.csv` | `evaluate` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gravcomp::controller::{GccController, OracleController, TeacherController, ZeroController};
use gravcomp::evaluation::{
    curve_csv, drift_csv, drift_test, learning_curve, offline_csv, offline_eval, CurvePoint,
    DriftReport, Method, RrmseReport,
};
use gravcomp::learning::{
    collect_dataset, load_model, random_sample_states, save_model, systematic_sample_grid,
    train_lfs, train_pkd, CompensationModel, Dataset, LogRow, Provenance, GRID_CAP,
};
use gravcomp::plant::TorquePolicy;
use gravcomp::seed::{self, stream};
use gravcomp::teacher::TeacherModel;
use serde::{Deserialize, Serialize};

use crate::config::{BiasLevel, Experiment, SamplingMode};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.toml";
pub const TRAIN_CSV: &str = "train.csv";
pub const VAL_CSV: &str = "val.csv";
pub const TEST_CSV: &str = "test.csv";

pub fn teacher_file(level: BiasLevel) -> String {
    format!("teacher_{}.toml", level.name())
}

pub fn model_file(method: Method) -> String {
    format!("model_{method}.txt")
}

pub fn log_file(method: Method) -> String {
    format!("train_log_{method}.csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Offline,
    Drift,
    Curve,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "offline" => Ok(EvalMode::Offline),
            "drift" => Ok(EvalMode::Drift),
            "curve" => Ok(EvalMode::Curve),
            other => Err(format!("unknown mode `{other}` (offline, drift, curve)")),
        }
    }
}

/// Record of what `sample` produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub robot: String,
    pub dof: usize,
    pub sampling_mode: SamplingMode,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub low_bias: f64,
    pub high_bias: f64,
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| {
        gravcomp::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        gravcomp::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn require(path: PathBuf, producer: &'static str) -> CliResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, producer })
    }
}

fn load_dataset(exp: &Experiment, name: &str) -> CliResult<Dataset> {
    let path = require(exp.out_dir.join(name), "sample")?;
    Ok(Dataset::load_csv(&path, Provenance::System)?)
}

fn load_teacher(exp: &Experiment, level: BiasLevel) -> CliResult<TeacherModel> {
    let path = require(exp.out_dir.join(teacher_file(level)), "sample")?;
    Ok(TeacherModel::load(&path)?)
}

/// Draws training, validation and test data and the two biased teachers.
pub fn cmd_sample(exp: &Experiment) -> CliResult<String> {
    ensure_dir(&exp.out_dir)?;
    let p = &exp.plant;
    let limits = &p.robot.joint_limits;
    let sm = &exp.sampling;
    let train_states = match sm.mode {
        SamplingMode::Random => random_sample_states(
            limits,
            sm.train_count,
            &mut seed::rng_for(exp.seed, &[stream::TRAIN_STATES]),
        )?,
        SamplingMode::Grid => systematic_sample_grid(limits, sm.grid_points, sm.grid_dq, GRID_CAP)?,
    };
    let train = collect_dataset(p, &train_states, &mut seed::rng_for(exp.seed, &[stream::TRAIN_NOISE]))?;
    let val_states = random_sample_states(
        limits,
        sm.val_count,
        &mut seed::rng_for(exp.seed, &[stream::VAL_STATES]),
    )?;
    let val = collect_dataset(p, &val_states, &mut seed::rng_for(exp.seed, &[stream::VAL_NOISE]))?;
    let test = exp.curve_setup().test_set(p)?;
    train.save_csv(&exp.out_dir.join(TRAIN_CSV))?;
    val.save_csv(&exp.out_dir.join(VAL_CSV))?;
    test.save_csv(&exp.out_dir.join(TEST_CSV))?;
    for level in BiasLevel::all() {
        exp.build_teacher(level)?
            .save(&exp.out_dir.join(teacher_file(level)))?;
    }
    let manifest = Manifest {
        format_version: crate::config::CONFIG_FORMAT_VERSION,
        seed: exp.seed,
        robot: p.robot.name.clone(),
        dof: p.dof(),
        sampling_mode: sm.mode,
        train_count: train.len(),
        val_count: val.len(),
        test_count: test.len(),
        low_bias: exp.teacher.low_bias,
        high_bias: exp.teacher.high_bias,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&exp.out_dir.join(MANIFEST), &text)?;
    Ok(format!(
        "sampled {} training, {} validation and {} test records into {}\n",
        manifest.train_count,
        manifest.val_count,
        manifest.test_count,
        exp.out_dir.display()
    ))
}

/// `step,train_loss,val_loss,lambda`.
pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("step,train_loss,val_loss,lambda\n");
    for r in rows {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", r.step, r.train_loss, r.val_loss, r.lambda);
    }
    s
}

/// Trains one model on the sampled data and saves it with its log.
pub fn cmd_train(exp: &Experiment, method: Method) -> CliResult<String> {
    let train = load_dataset(exp, TRAIN_CSV)?;
    let val = load_dataset(exp, VAL_CSV)?;
    let p = &exp.plant;
    let out = match method {
        Method::Lfs => train_lfs(&train, &val, &p.robot.joint_kinds(), &p.robot.name, &exp.hyper)?,
        Method::Pkd => {
            let teacher = load_teacher(exp, exp.teacher.level)?;
            train_pkd(&train, &val, &teacher, &exp.hyper)?
        }
    };
    let model_path = exp.out_dir.join(model_file(method));
    save_model(&out.model, &model_path)?;
    write_file(&exp.out_dir.join(log_file(method)), &log_csv(&out.log))?;
    Ok(format!(
        "{method}: best validation loss {:.6e} at step {}{}; model written to {}\n",
        out.best_val_loss,
        out.best_step,
        if out.stopped_early { " (stopped early)" } else { "" },
        model_path.display()
    ))
}

/// Models to evaluate: the explicit list, or whichever trained models exist.
fn models(exp: &Experiment, explicit: &[PathBuf]) -> CliResult<Vec<(String, CompensationModel)>> {
    let paths: Vec<PathBuf> = if explicit.is_empty() {
        [Method::Lfs, Method::Pkd]
            .iter()
            .map(|m| exp.out_dir.join(model_file(*m)))
            .filter(|p| p.is_file())
            .collect()
    } else {
        explicit
            .iter()
            .map(|p| require(p.clone(), "train"))
            .collect::<CliResult<_>>()?
    };
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().trim_start_matches("model_").to_string())
                .unwrap_or_else(|| "model".into());
            Ok((name, load_model(&p)?))
        })
        .collect()
}

fn rrmse_table(rows: &[(String, RrmseReport)]) -> String {
    let n = rows.first().map_or(0, |(_, r)| r.per_joint.len());
    let mut s = format!("{:<14}", "model");
    for j in 0..n {
        let _ = write!(s, " {:>9}", format!("j{j} [%]"));
    }
    let _ = writeln!(s, " {:>9}", "avg [%]");
    for (name, r) in rows {
        let _ = write!(s, "{name:<14}");
        for v in &r.per_joint {
            let _ = write!(s, " {v:>9.3}");
        }
        let _ = writeln!(s, " {:>9.3}", r.average);
    }
    s
}

fn drift_summary_csv(rows: &[(String, DriftReport)]) -> String {
    let n = rows.first().map_or(0, |(_, r)| r.joint_mean_deg.len());
    let mut s = String::from("controller,n_points,n_failed,avg_mean_deg,avg_std_deg,cart_mean_mm,cart_std_mm");
    for j in 0..n {
        let _ = write!(s, ",j{j}_mean_deg,j{j}_std_deg");
    }
    s.push('\n');
    for (name, r) in rows {
        let _ = write!(
            s,
            "{name},{},{},{:?},{:?},{:?},{:?}",
            r.n_points, r.n_failed, r.average_mean_deg, r.average_std_deg, r.cart_mean_mm, r.cart_std_mm
        );
        for (m, sd) in r.joint_mean_deg.iter().zip(&r.joint_std_deg) {
            let _ = write!(s, ",{m:?},{sd:?}");
        }
        s.push('\n');
    }
    s
}

fn drift_table(rows: &[(String, DriftReport)]) -> String {
    let mut s = format!(
        "{:<14} {:>18} {:>20} {:>7}\n",
        "controller", "joint drift [deg]", "cartesian drift [mm]", "failed"
    );
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{name:<14} {:>9.4} ± {:<6.4} {:>10.3} ± {:<7.3} {:>7}",
            r.average_mean_deg, r.average_std_deg, r.cart_mean_mm, r.cart_std_mm, r.n_failed
        );
    }
    s
}

fn curve_summary_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("method,T_s,n_seeds,failures,mean_rrmse,std_rrmse\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{:?},{:?}",
            p.method,
            p.ts,
            p.per_seed.len(),
            p.failures,
            p.mean,
            p.std
        );
    }
    s
}

fn curve_table(points: &[CurvePoint]) -> String {
    let mut s = format!("{:<6} {:>7} {:>20} {:>8}\n", "method", "T_s", "RRMSE [%]", "failed");
    for p in points {
        let _ = writeln!(
            s,
            "{:<6} {:>7} {:>9.3} ± {:<8.3} {:>8}",
            p.method.to_string(),
            p.ts,
            p.mean,
            p.std,
            p.failures
        );
    }
    s
}

/// Runs one evaluation protocol and writes its CSVs.
pub fn cmd_evaluate(exp: &Experiment, mode: EvalMode, model_paths: &[PathBuf]) -> CliResult<String> {
    let p = &exp.plant;
    match mode {
        EvalMode::Offline => {
            let test = load_dataset(exp, TEST_CSV)?;
            let kinds = p.robot.joint_kinds();
            let mut rows = vec![("oracle".to_string(), offline_eval(p, &kinds, &test)?)];
            for level in BiasLevel::all() {
                let t = load_teacher(exp, level)?;
                rows.push((format!("teacher_{}", level.name()), offline_eval(&t, &kinds, &test)?));
            }
            for (name, m) in models(exp, model_paths)? {
                rows.push((name, offline_eval(&m, &kinds, &test)?));
            }
            let refs: Vec<(&str, &RrmseReport)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
            ensure_dir(&exp.out_dir)?;
            write_file(&exp.out_dir.join("offline.csv"), &offline_csv(&refs))?;
            Ok(rrmse_table(&rows))
        }
        EvalMode::Drift => {
            let teacher = load_teacher(exp, exp.teacher.level)?;
            let mut controllers: Vec<(String, Box<dyn TorquePolicy + Sync>)> = vec![
                ("oracle".into(), Box::new(OracleController { plant: p.clone() })),
                ("zero".into(), Box::new(ZeroController { dof: p.dof() })),
                (
                    format!("teacher_{}", exp.teacher.level.name()),
                    Box::new(TeacherController::new(teacher, exp.gcc.clone())?),
                ),
            ];
            for (name, m) in models(exp, model_paths)? {
                controllers.push((name, Box::new(GccController::new(m, exp.gcc.clone())?)));
            }
            let rows = controllers
                .iter()
                .map(|(name, c)| {
                    // Every controller is released from the same points.
                    let mut rng = seed::rng_for(exp.seed, &[stream::DRIFT_POINTS]);
                    Ok((name.clone(), drift_test(p, c.as_ref(), exp.evaluate.drift_points, &mut rng)?))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let refs: Vec<(&str, &DriftReport)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
            ensure_dir(&exp.out_dir)?;
            write_file(&exp.out_dir.join("drift.csv"), &drift_csv(&refs))?;
            write_file(&exp.out_dir.join("drift_summary.csv"), &drift_summary_csv(&rows))?;
            Ok(drift_table(&rows))
        }
        EvalMode::Curve => {
            let teacher = exp.build_teacher(exp.teacher.level)?;
            let ev = &exp.evaluate;
            let (points, cells) = learning_curve(
                p,
                &teacher,
                &ev.curve_ts,
                ev.curve_seeds,
                &ev.curve_methods,
                &exp.hyper,
                &exp.curve_setup(),
            )?;
            ensure_dir(&exp.out_dir)?;
            write_file(&exp.out_dir.join("curve.csv"), &curve_csv(&cells, p.dof()))?;
            write_file(&exp.out_dir.join("curve_summary.csv"), &curve_summary_csv(&points))?;
            Ok(curve_table(&points))
        }
    }
}
