//! Offline accuracy, release-drift statistics and learning-curve sweeps.

use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::features::trig_decode;
use crate::learning::{
    collect_dataset, random_sample_states, train_lfs, train_pkd, CompensationModel, Dataset,
    Provenance, Sample, TrainHyper,
};
use crate::plant::{DriftResult, Plant, TorquePolicy};
use crate::robot::JointKind;
use crate::seed::{self, stream, Rng};
use crate::teacher::TeacherModel;

/// Targets with smaller magnitude are left out of the relative error.
pub const RRMSE_MIN_TARGET: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RrmseReport {
    /// Per-joint relative RMS error, percent.
    pub per_joint: Vec<f64>,
    /// Mean of `per_joint`.
    pub average: f64,
    pub n_samples: usize,
    /// Per-joint count of samples skipped for near-zero targets.
    pub excluded: Vec<usize>,
}

/// `100 · sqrt(mean((τ - τ̂)² / τ²))` per joint.
pub fn rrmse(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<RrmseReport> {
    check_len("prediction count", target.len(), pred.len())?;
    let first = target
        .first()
        .ok_or(Error::EmptyDataset("relative error needs at least one sample"))?;
    let n = first.len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for (p, t) in pred.iter().zip(target) {
        check_len("prediction width", n, p.len())?;
        check_len("target width", n, t.len())?;
        for j in 0..n {
            if t[j].abs() < RRMSE_MIN_TARGET {
                continue;
            }
            let rel = (t[j] - p[j]) / t[j];
            sums[j] += rel * rel;
            counts[j] += 1;
        }
    }
    let excluded: Vec<usize> = counts.iter().map(|c| target.len() - c).collect();
    for (j, &e) in excluded.iter().enumerate() {
        if e > 0 {
            log::warn!("relative error: excluded {e} near-zero targets on joint {j}");
        }
    }
    let per_joint = (0..n)
        .map(|j| {
            if counts[j] == 0 {
                Err(Error::NoAdmissibleSamples { joint: j })
            } else {
                Ok(100.0 * (sums[j] / counts[j] as f64).sqrt())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RrmseReport {
        average: per_joint.iter().sum::<f64>() / n as f64,
        per_joint,
        n_samples: target.len(),
        excluded,
    })
}

/// Anything that predicts a compensation torque from a static state.
pub trait CompensationPredictor: Sync {
    fn predict_torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>>;
}

impl CompensationPredictor for CompensationModel {
    fn predict_torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self.predict(q, dq)
    }
}

impl CompensationPredictor for TeacherModel {
    fn predict_torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self.predict(q, dq)
    }
}

/// The plant itself, noiseless.
impl CompensationPredictor for Plant {
    fn predict_torque(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        self.true_compensation_torque(q, dq)
    }
}

/// Evaluates `model` on every record of a raw (unnormalized) test set.
pub fn offline_eval(
    model: &dyn CompensationPredictor,
    kinds: &[JointKind],
    d_test: &Dataset,
) -> Result<RrmseReport> {
    if d_test.is_empty() {
        return Err(Error::EmptyDataset("test data"));
    }
    let pred = d_test
        .samples
        .iter()
        .map(|s| model.predict_torque(&trig_decode(&s.x1, kinds)?, &s.x2))
        .collect::<Result<Vec<_>>>()?;
    let target: Vec<Vec<f64>> = d_test.samples.iter().map(|s| s.y.clone()).collect();
    rrmse(&pred, &target)
}

/// Noiseless test set on random in-limit states.
pub fn clean_test_set(p: &Plant, count: usize, rng: &mut Rng) -> Result<Dataset> {
    let kinds = p.robot.joint_kinds();
    let samples = random_sample_states(&p.robot.joint_limits, count, rng)?
        .into_iter()
        .map(|(q, dq)| {
            Ok(Sample {
                x1: crate::features::trig_encode(&q, &kinds)?,
                y: p.true_compensation_torque(&q, &dq)?,
                x2: dq,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        provenance: Provenance::System,
        samples,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// Per-joint mean and std of `|drift|` over test points, degrees.
    pub joint_mean_deg: Vec<f64>,
    pub joint_std_deg: Vec<f64>,
    /// Mean and std over points of the per-point average joint drift.
    pub average_mean_deg: f64,
    pub average_std_deg: f64,
    pub cart_mean_mm: f64,
    pub cart_std_mm: f64,
    pub n_points: usize,
    pub n_failed: usize,
    /// Successful runs with their test-point index.
    pub points: Vec<(usize, DriftResult)>,
}

/// Releases the arm at `n_points` random in-limit states under
/// `controller` and aggregates the drift.
///
/// Points are drawn from `rng` up front; the runs themselves are
/// independent and evaluated in parallel.
pub fn drift_test(
    p: &Plant,
    controller: &(dyn TorquePolicy + Sync),
    n_points: usize,
    rng: &mut Rng,
) -> Result<DriftReport> {
    if n_points == 0 {
        return Err(Error::InvalidParameter("drift test needs >= 1 point".into()));
    }
    let states = random_sample_states(&p.robot.joint_limits, n_points, rng)?;
    let runs: Vec<(usize, Result<DriftResult>)> = states
        .par_iter()
        .enumerate()
        .map(|(i, (q0, dq0))| (i, p.simulate_drift(controller, q0, dq0)))
        .collect();
    let mut points = Vec::with_capacity(n_points);
    let mut n_failed = 0;
    for (i, r) in runs {
        match r {
            Ok(res) => points.push((i, res)),
            Err(Error::NonFiniteState { .. }) => {
                log::warn!("drift point {i} aborted with a non-finite state; excluded");
                n_failed += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(summarize_drift(points, p.dof(), n_failed))
}

fn summarize_drift(points: Vec<(usize, DriftResult)>, n: usize, n_failed: usize) -> DriftReport {
    let (joint_mean_deg, joint_std_deg) = (0..n)
        .map(|j| {
            let v: Vec<f64> = points.iter().map(|(_, r)| r.joint_drift_deg[j]).collect();
            mean_std(&v)
        })
        .unzip();
    let avg: Vec<f64> = points.iter().map(|(_, r)| r.mean_joint_drift_deg()).collect();
    let cart: Vec<f64> = points.iter().map(|(_, r)| r.cart_drift_mm).collect();
    let (average_mean_deg, average_std_deg) = mean_std(&avg);
    let (cart_mean_mm, cart_std_mm) = mean_std(&cart);
    DriftReport {
        joint_mean_deg,
        joint_std_deg,
        average_mean_deg,
        average_std_deg,
        cart_mean_mm,
        cart_std_mm,
        n_points: points.len(),
        n_failed,
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lfs,
    Pkd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lfs => "lfs",
            Method::Pkd => "pkd",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lfs" => Ok(Method::Lfs),
            "pkd" => Ok(Method::Pkd),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// Fixed inputs of a learning-curve sweep.
#[derive(Debug, Clone)]
pub struct CurveSetup {
    pub master_seed: u64,
    /// Validation samples per cell.
    pub val_count: usize,
    /// Size of the shared noiseless test set.
    pub test_count: usize,
}

impl Default for CurveSetup {
    fn default() -> Self {
        CurveSetup {
            master_seed: 0,
            val_count: 2000,
            test_count: 300,
        }
    }
}

impl CurveSetup {
    pub fn test_set(&self, plant: &Plant) -> Result<Dataset> {
        let mut rng = seed::rng_for(self.master_seed, &[stream::TEST_STATES]);
        clean_test_set(plant, self.test_count, &mut rng)
    }
}

/// Result of one `(method, T_s, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveCell {
    pub method: Method,
    pub ts: usize,
    pub seed_index: usize,
    /// `None` when training diverged.
    pub report: Option<RrmseReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub ts: usize,
    pub method: Method,
    /// Average RRMSE of each successful seed.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub failures: usize,
}

/// Trains and evaluates one sweep cell from scratch.
///
/// Training data, noise and network seeds depend only on
/// `(master_seed, T_s, seed_index)`, so both methods see identical
/// measurements and any cell can be recomputed in isolation.
pub fn run_curve_cell(
    plant: &Plant,
    teacher: &TeacherModel,
    test: &Dataset,
    setup: &CurveSetup,
    hyper: &TrainHyper,
    method: Method,
    ts: usize,
    seed_index: usize,
) -> Result<CurveCell> {
    let path = |s: u64| [s, ts as u64, seed_index as u64];
    let m = setup.master_seed;
    let limits = &plant.robot.joint_limits;
    let train_states = random_sample_states(limits, ts, &mut seed::rng_for(m, &path(stream::TRAIN_STATES)))?;
    let train = collect_dataset(plant, &train_states, &mut seed::rng_for(m, &path(stream::TRAIN_NOISE)))?;
    let val_states =
        random_sample_states(limits, setup.val_count, &mut seed::rng_for(m, &path(stream::VAL_STATES)))?;
    let val = collect_dataset(plant, &val_states, &mut seed::rng_for(m, &path(stream::VAL_NOISE)))?;
    let mut h = hyper.clone();
    h.seed = seed::derive(m, &path(stream::TRAINING));
    let kinds = plant.robot.joint_kinds();
    let trained = match method {
        Method::Lfs => train_lfs(&train, &val, &kinds, &plant.robot.name, &h),
        Method::Pkd => train_pkd(&train, &val, teacher, &h),
    };
    let report = match trained {
        Ok(out) => Some(offline_eval(&out.model, &kinds, test)?),
        Err(Error::Divergence { step, what }) => {
            log::warn!("{method} T_s={ts} seed {seed_index}: diverged at step {step} ({what})");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(CurveCell {
        method,
        ts,
        seed_index,
        report,
    })
}

/// Runs every `(method, T_s, seed)` cell and aggregates per `(method, T_s)`.
pub fn learning_curve(
    plant: &Plant,
    teacher: &TeacherModel,
    ts_list: &[usize],
    seeds: usize,
    methods: &[Method],
    hyper: &TrainHyper,
    setup: &CurveSetup,
) -> Result<(Vec<CurvePoint>, Vec<CurveCell>)> {
    if seeds == 0 || ts_list.contains(&0) {
        return Err(Error::InvalidParameter(
            "learning curve needs >= 1 seed and positive T_s values".into(),
        ));
    }
    let test = setup.test_set(plant)?;
    let jobs: Vec<(Method, usize, usize)> = methods
        .iter()
        .flat_map(|&m| ts_list.iter().flat_map(move |&t| (0..seeds).map(move |s| (m, t, s))))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(m, t, s)| run_curve_cell(plant, teacher, &test, setup, hyper, m, t, s))
        .collect::<Result<Vec<_>>>()?;
    let points = cells
        .chunks(seeds)
        .map(|chunk| {
            let per_seed: Vec<f64> = chunk
                .iter()
                .filter_map(|c| c.report.as_ref().map(|r| r.average))
                .collect();
            let (mean, std) = mean_std(&per_seed);
            CurvePoint {
                ts: chunk[0].ts,
                method: chunk[0].method,
                failures: chunk.len() - per_seed.len(),
                per_seed,
                mean,
                std,
            }
        })
        .collect();
    Ok((points, cells))
}

/// `method,T_s,seed,rrmse_avg,rrmse_j0,..`; diverged cells leave values empty.
pub fn curve_csv(cells: &[CurveCell], n: usize) -> String {
    let mut s = String::from("method,T_s,seed,rrmse_avg");
    for j in 0..n {
        let _ = write!(s, ",rrmse_j{j}");
    }
    s.push('\n');
    for c in cells {
        let _ = write!(s, "{},{},{}", c.method, c.ts, c.seed_index);
        match &c.report {
            Some(r) => {
                let _ = write!(s, ",{:?}", r.average);
                for v in &r.per_joint {
                    let _ = write!(s, ",{v:?}");
                }
            }
            None => s.push_str(&",".repeat(n + 1)),
        }
        s.push('\n');
    }
    s
}

/// `controller,point,joint,drift_deg,cart_drift_mm`; one row per joint.
pub fn drift_csv(rows: &[(&str, &DriftReport)]) -> String {
    let mut s = String::from("controller,point,joint,drift_deg,cart_drift_mm\n");
    for (name, report) in rows {
        for (i, r) in &report.points {
            for (j, d) in r.joint_drift_deg.iter().enumerate() {
                let _ = writeln!(s, "{name},{i},{j},{d:?},{:?}", r.cart_drift_mm);
            }
        }
    }
    s
}

/// `model,rrmse_j0,..,average`.
pub fn offline_csv(rows: &[(&str, &RrmseReport)]) -> String {
    let n = rows.first().map_or(0, |(_, r)| r.per_joint.len());
    let mut s = String::from("model");
    for j in 0..n {
        let _ = write!(s, ",rrmse_j{j}");
    }
    s.push_str(",average\n");
    for (name, r) in rows {
        s.push_str(name);
        for v in &r.per_joint {
            let _ = write!(s, ",{v:?}");
        }
        let _ = writeln!(s, ",{:?}", r.average);
    }
    s
}
